#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "gammasense/array2d.hpp"

namespace gammasense {

struct Point2D {
  double u = 0.0;
  double v = 0.0;
  bool operator==(const Point2D&) const = default;
};

/// Camera-frame point in millimetres. The camera looks along +Z.
struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Point3D&) const = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 normalized() const;
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline Vec3 to_vec(const Point3D& p) { return {p.x, p.y, p.z}; }
inline Point3D to_point(const Vec3& v) { return {v.x, v.y, v.z}; }

/// Rectified stereo rig. The right camera sits `baseline_mm` along +X of the left.
struct CameraRig {
  double focal_px = 280.0;
  double baseline_mm = 5.0;
  double alpha = 280.0;  // x scaling (pixels)
  double beta = 280.0;   // y scaling (pixels)
  double cx = 127.5;     // principal point u
  double cy = 95.5;      // principal point v
  int height = 192;
  int width = 256;

  /// Throws ContractViolation when an invariant is broken.
  void validate() const;
  bool operator==(const CameraRig&) const = default;
};

/// Depth in millimetres; 0 marks an invalid pixel.
using DepthMap = Array2D<float>;

inline constexpr float kInvalidDepth = 0.0f;
inline constexpr double kDisparityEpsilon = 1e-6;

DepthMap disparity_to_depth(const Array2D<float>& disparity, const CameraRig& rig);

/// Nearest-pixel depth lookup. Throws BoundsError / MissingDepthError.
double depth_at(const Point2D& p, const DepthMap& depth);

Point3D back_project(const Point2D& p, double depth_mm, const CameraRig& rig);
Point3D back_project(const Point2D& p, const DepthMap& depth, const CameraRig& rig);
Point2D project(const Point3D& q, const CameraRig& rig);

double error_2d(const Point2D& pred, const Point2D& gt);
double error_3d(const Point3D& pred, const Point3D& gt);

class HeightField;

inline constexpr double kMarchStepMm = 0.25;
inline constexpr double kBisectionToleranceMm = 1e-6;

/// First crossing of the ray origin + t*direction (t >= 0) with the surface
/// Z = h(X, Y). Coarse fixed-step march, then bisection until |Z - h| is below
/// kBisectionToleranceMm. Throws NoIntersectionError when the ray leaves the
/// surface extent without crossing.
Point3D ray_surface_intersection(const Point3D& origin, const Vec3& direction, const HeightField& surface);

/// Same as above but returns the ray parameter (mm along the unit direction).
double ray_surface_parameter(const Point3D& origin, const Vec3& direction, const HeightField& surface);

/// Non-throwing variant for renderers; nullopt when there is no crossing.
std::optional<double> find_surface_crossing(const Point3D& origin, const Vec3& direction, const HeightField& surface);

}  // namespace gammasense
