#include "gammasense/build_info.hpp"

#include <cblas.h>
#include <png.h>

#include "gammasense/version.hpp"

namespace gammasense {

nlohmann::json build_info() {
  return {{"gammasense", kVersion},
          {"compiler", __VERSION__},
          {"cxx_standard", __cplusplus},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"libpng", PNG_LIBPNG_VER_STRING},
          {"openblas", openblas_get_config()},
          {"openblas_core", openblas_get_corename()}};
}

}  // namespace gammasense
