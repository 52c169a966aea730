#pragma once

#include <cstdint>
#include <vector>

#include "gammasense/array2d.hpp"
#include "gammasense/geometry.hpp"

namespace gammasense {

/// Binary probe silhouette, nonzero = probe.
using ProbeMask = Array2D<std::uint8_t>;

inline constexpr int kMinMaskPixels = 100;
inline constexpr double kMinEigenRatio = 1.05;
inline constexpr int kAxisPointCount = 50;

struct Direction2D {
  double u = 1.0;
  double v = 0.0;
  bool operator==(const Direction2D&) const = default;
};

struct ProbeAxis {
  Point2D centroid;
  Direction2D direction;  // unit, canonical sign: u >= 0, ties broken by v >= 0
  double major_variance = 0.0;
  double minor_variance = 0.0;
};

struct AxisSample {
  std::vector<Point2D> points;  // sorted by axis parameter
  Direction2D direction;
  Point2D centroid;
};

/// First principal component of the foreground pixel coordinates.
/// Throws InvalidMaskError (< kMinMaskPixels) or AmbiguousAxisError.
ProbeAxis extract_axis(const ProbeMask& mask);

/// Seeded uniform draw of `n` points on the axis segment covered by the mask's
/// axial extent, clipped to the image rectangle.
AxisSample sample_axis_points(const ProbeAxis& axis, const ProbeMask& mask, int n, std::uint64_t seed);

/// Perpendicular distance from p to the infinite axis line.
double distance_to_axis(const Point2D& p, const Point2D& centroid, const Direction2D& direction);

}  // namespace gammasense
