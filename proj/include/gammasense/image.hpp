#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gammasense/array2d.hpp"
#include "gammasense/errors.hpp"

namespace gammasense {

/// Interleaved 8-bit image, row-major H x W x channels.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int r, int c, int ch) { return pixels_[offset(r, c, ch)]; }
  std::uint8_t at(int r, int c, int ch) const { return pixels_[offset(r, c, ch)]; }

  std::vector<std::uint8_t>& pixels() { return pixels_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t offset(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width_ + c) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// 8-bit PNG, gray (1 channel) or RGB (3 channels). Throws FormatError.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

Image mask_to_image(const Array2D<std::uint8_t>& mask);
Array2D<std::uint8_t> image_to_mask(const Image& image);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
};

/// Filled disc; pixels outside the image are skipped.
void draw_disc(Image& image, double u, double v, double radius, Rgb color);

}  // namespace gammasense
