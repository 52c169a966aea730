#pragma once

#include <optional>

#include "gammasense/array2d.hpp"
#include "gammasense/geometry.hpp"

namespace gammasense {

struct Extent {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  bool operator==(const Extent&) const = default;
};

/// Tissue surface: camera-frame depth Z as a bilinear function of (X, Y)
/// sampled on a regular grid. Grid row j is Y, column i is X.
class HeightField {
 public:
  HeightField(Array2D<double> grid, Extent extent);

  const Array2D<double>& grid() const { return grid_; }
  const Extent& extent() const { return extent_; }
  double min_height() const { return min_height_; }
  double max_height() const { return max_height_; }

  bool contains(double x, double y) const;
  /// Bilinear height; nullopt outside the extent.
  std::optional<double> height(double x, double y) const;
  /// Unit normal pointing towards the camera side (-Z), nullopt outside.
  std::optional<Vec3> normal(double x, double y) const;

 private:
  Array2D<double> grid_;
  Extent extent_;
  double min_height_ = 0.0;
  double max_height_ = 0.0;
  double dx_ = 0.0;
  double dy_ = 0.0;
};

}  // namespace gammasense
