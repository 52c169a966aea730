#pragma once

#include <filesystem>
#include <string>

#include "gammasense/array2d.hpp"

namespace gammasense {

/// Single-channel PFM ("Pf"), little-endian (scale -1.0), rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Array2D<float>& values);

/// Accepts either endianness. Throws FormatError mentioning `field` on any
/// malformed header or short payload.
Array2D<float> read_pfm(const std::filesystem::path& path, const std::string& field = "depth");

}  // namespace gammasense
