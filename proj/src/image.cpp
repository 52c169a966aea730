#include "gammasense/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace gammasense {

Image::Image(int height, int width, int channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1 || channels > 4) throw ContractViolation("Image: bad dimensions");
  pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) throw ContractViolation("write_png: only gray or RGB supported");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("write_png: libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(image.width()) * image.channels();
  for (int r = 0; r < image.height(); ++r)
    png_write_row(png, const_cast<png_bytep>(image.pixels().data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("read_png: cannot open " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
    throw FormatError("read_png: " + path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: libpng initialisation failed");
  }
  Image image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: corrupt PNG data in " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: " + path.string() + " must be 8-bit gray or RGB");
  }
  image = Image(height, width, color == PNG_COLOR_TYPE_RGB ? 3 : 1);
  const auto stride = static_cast<std::size_t>(width) * image.channels();
  for (int r = 0; r < height; ++r) png_read_row(png, image.pixels().data() + r * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

Image mask_to_image(const Array2D<std::uint8_t>& mask) {
  Image img(mask.rows(), mask.cols(), 1);
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) img.at(r, c, 0) = mask(r, c) ? 255 : 0;
  return img;
}

Array2D<std::uint8_t> image_to_mask(const Image& image) {
  if (image.channels() != 1) throw FormatError("mask: expected a single-channel PNG");
  Array2D<std::uint8_t> mask(image.height(), image.width());
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c) mask(r, c) = image.at(r, c, 0) >= 128 ? 1 : 0;
  return mask;
}

void draw_disc(Image& image, double u, double v, double radius, Rgb color) {
  if (image.channels() != 3) throw ContractViolation("draw_disc: RGB image required");
  const int r0 = static_cast<int>(std::floor(v - radius));
  const int r1 = static_cast<int>(std::ceil(v + radius));
  const int c0 = static_cast<int>(std::floor(u - radius));
  const int c1 = static_cast<int>(std::ceil(u + radius));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      if (r < 0 || c < 0 || r >= image.height() || c >= image.width()) continue;
      if ((c - u) * (c - u) + (r - v) * (r - v) > radius * radius) continue;
      image.at(r, c, 0) = color.r;
      image.at(r, c, 1) = color.g;
      image.at(r, c, 2) = color.b;
    }
}

}  // namespace gammasense
