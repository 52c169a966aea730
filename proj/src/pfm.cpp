#include "gammasense/pfm.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "gammasense/errors.hpp"

namespace gammasense {

namespace {

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0x0000FF00u) | ((x << 8) & 0x00FF0000u) | (x << 24);
}

float from_file_order(const unsigned char* bytes, bool little_endian_file) {
  std::uint32_t bits;
  std::memcpy(&bits, bytes, sizeof(bits));
  const bool host_little = std::endian::native == std::endian::little;
  if (host_little != little_endian_file) bits = byteswap32(bits);
  return std::bit_cast<float>(bits);
}

// Reads one whitespace-delimited header token; PFM headers end with a single
// whitespace byte after the scale token.
std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch) && std::isspace(static_cast<unsigned char>(ch))) {
  }
  if (!in) return tok;
  tok.push_back(ch);
  while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) tok.push_back(ch);
  return tok;
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const Array2D<float>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_pfm: cannot open " + path.string());
  out << "Pf\n" << values.cols() << " " << values.rows() << "\n-1.0\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(values.cols()) * 4);
  for (int r = values.rows() - 1; r >= 0; --r) {
    for (int c = 0; c < values.cols(); ++c) {
      auto bits = std::bit_cast<std::uint32_t>(values(r, c));
      if constexpr (std::endian::native != std::endian::little) bits = byteswap32(bits);
      std::memcpy(row.data() + 4 * c, &bits, 4);
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("write_pfm: write failed for " + path.string());
}

Array2D<float> read_pfm(const std::filesystem::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(field + ": cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "Pf") throw FormatError(field + ": not a single-channel PFM (magic '" + magic + "')");
  int width = 0;
  int height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(next_token(in));
    height = std::stoi(next_token(in));
    scale = std::stod(next_token(in));
  } catch (const std::exception&) {
    throw FormatError(field + ": malformed PFM header in " + path.string());
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw FormatError(field + ": invalid PFM dimensions or scale");

  const auto bytes = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4;
  std::vector<unsigned char> payload(bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes)
    throw FormatError(field + ": truncated PFM payload (" + std::to_string(in.gcount()) + " of " +
                      std::to_string(bytes) + " bytes) in " + path.string());

  const bool little = scale < 0.0;
  Array2D<float> values(height, width);
  for (int r = 0; r < height; ++r) {
    const unsigned char* src = payload.data() + static_cast<std::size_t>(height - 1 - r) * width * 4;
    for (int c = 0; c < width; ++c) values(r, c) = from_file_order(src + 4 * c, little);
  }
  return values;
}

}  // namespace gammasense
