#pragma once

#include <nlohmann/json.hpp>

namespace gammasense {

/// Library, compiler and dependency versions for provenance records.
nlohmann::json build_info();

}  // namespace gammasense
