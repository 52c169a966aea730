#include "gammasense/geometry.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "gammasense/heightfield.hpp"

namespace gammasense {

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw ContractViolation("Vec3::normalized: zero or non-finite vector");
  return {x / n, y / n, z / n};
}

void CameraRig::validate() const {
  if (!(focal_px > 0.0) || !(baseline_mm > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
    throw ContractViolation("CameraRig: focal_px, baseline_mm, alpha and beta must be positive");
  if (width <= 0 || height <= 0) throw ContractViolation("CameraRig: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw ContractViolation("CameraRig: principal point outside the image");
}

DepthMap disparity_to_depth(const Array2D<float>& disparity, const CameraRig& rig) {
  if (disparity.rows() != rig.height || disparity.cols() != rig.width) {
    std::ostringstream msg;
    msg << "disparity_to_depth: disparity is " << disparity.rows() << "x" << disparity.cols() << ", rig expects "
        << rig.height << "x" << rig.width;
    throw ContractViolation(msg.str());
  }
  const double fb = rig.focal_px * rig.baseline_mm;
  DepthMap depth(disparity.rows(), disparity.cols(), kInvalidDepth);
  auto in = disparity.values();
  auto out = depth.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double d = in[i];
    if (d > kDisparityEpsilon) out[i] = static_cast<float>(fb / d);
  }
  return depth;
}

double depth_at(const Point2D& p, const DepthMap& depth) {
  if (!std::isfinite(p.u) || !std::isfinite(p.v)) throw BoundsError("depth_at: non-finite pixel coordinate");
  const auto c = static_cast<long>(std::lround(p.u));
  const auto r = static_cast<long>(std::lround(p.v));
  if (r < 0 || c < 0 || r >= depth.rows() || c >= depth.cols()) {
    std::ostringstream msg;
    msg << "depth_at: pixel (" << p.u << ", " << p.v << ") outside " << depth.cols() << "x" << depth.rows()
        << " image";
    throw BoundsError(msg.str());
  }
  const double z = depth(static_cast<int>(r), static_cast<int>(c));
  if (!(z > 0.0) || !std::isfinite(z)) {
    std::ostringstream msg;
    msg << "depth_at: no valid depth at pixel (" << c << ", " << r << ")";
    throw MissingDepthError(msg.str());
  }
  return z;
}

Point3D back_project(const Point2D& p, double depth_mm, const CameraRig& rig) {
  return {(p.u - rig.cx) * depth_mm / rig.alpha, (p.v - rig.cy) * depth_mm / rig.beta, depth_mm};
}

Point3D back_project(const Point2D& p, const DepthMap& depth, const CameraRig& rig) {
  return back_project(p, depth_at(p, depth), rig);
}

Point2D project(const Point3D& q, const CameraRig& rig) {
  if (!(q.z > 0.0)) throw ContractViolation("project: point must lie in front of the camera (Z > 0)");
  return {rig.alpha * q.x / q.z + rig.cx, rig.beta * q.y / q.z + rig.cy};
}

double error_2d(const Point2D& pred, const Point2D& gt) {
  const double du = pred.u - gt.u;
  const double dv = pred.v - gt.v;
  return std::sqrt(du * du + dv * dv);
}

double error_3d(const Point3D& pred, const Point3D& gt) {
  const double dx = pred.x - gt.x;
  const double dy = pred.y - gt.y;
  const double dz = pred.z - gt.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace {

// Signed gap between the ray point and the surface; negative on the camera side.
class RayGap {
 public:
  RayGap(const Point3D& o, const Vec3& d, const HeightField& s) : o_(o), d_(d), s_(s) {}

  double operator()(double t) const {
    const Extent& e = s_.extent();
    const double x = std::clamp(o_.x + t * d_.x, e.x_min, e.x_max);
    const double y = std::clamp(o_.y + t * d_.y, e.y_min, e.y_max);
    return o_.z + t * d_.z - *s_.height(x, y);
  }

 private:
  Point3D o_;
  Vec3 d_;
  const HeightField& s_;
};

// Narrows [lo, hi] to the parameters where origin + t*dir stays inside [a, b] on one axis.
bool clip_slab(double origin, double dir, double a, double b, double& lo, double& hi) {
  if (std::abs(dir) < 1e-15) return origin >= a && origin <= b;
  double t1 = (a - origin) / dir;
  double t2 = (b - origin) / dir;
  if (t1 > t2) std::swap(t1, t2);
  lo = std::max(lo, t1);
  hi = std::min(hi, t2);
  return lo <= hi;
}

}  // namespace

std::optional<double> find_surface_crossing(const Point3D& origin, const Vec3& direction, const HeightField& surface) {
  if (std::abs(direction.norm() - 1.0) > 1e-6)
    throw ContractViolation("ray_surface_intersection: direction must be a unit vector");

  const Extent& e = surface.extent();
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  const bool inside = clip_slab(origin.x, direction.x, e.x_min, e.x_max, lo, hi) &&
                      clip_slab(origin.y, direction.y, e.y_min, e.y_max, lo, hi) &&
                      clip_slab(origin.z, direction.z, surface.min_height(), surface.max_height(), lo, hi);
  if (!inside || !std::isfinite(hi)) return std::nullopt;

  const RayGap gap(origin, direction, surface);
  double t_prev = lo;
  double f_prev = gap(t_prev);
  if (std::abs(f_prev) < kBisectionToleranceMm) return t_prev;
  // Already behind the surface where the search starts: no forward crossing.
  if (f_prev > 0.0) return std::nullopt;

  while (t_prev < hi) {
    const double t = std::min(t_prev + kMarchStepMm, hi);
    const double f = gap(t);
    if (f >= 0.0) {
      double a = t_prev;
      double b = t;
      if (std::abs(f) < kBisectionToleranceMm) return b;
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = gap(m);
        if (std::abs(fm) < kBisectionToleranceMm) return m;
        if (fm < 0.0) {
          a = m;
        } else {
          b = m;
        }
        if (b - a <= 1e-15 * std::max(1.0, b)) break;
      }
      return b;
    }
    t_prev = t;
  }
  return std::nullopt;
}

double ray_surface_parameter(const Point3D& origin, const Vec3& direction, const HeightField& surface) {
  const auto t = find_surface_crossing(origin, direction, surface);
  if (!t) throw NoIntersectionError("ray_surface_intersection: no crossing inside the surface bounds");
  return *t;
}

Point3D ray_surface_intersection(const Point3D& origin, const Vec3& direction, const HeightField& surface) {
  const double t = ray_surface_parameter(origin, direction, surface);
  return to_point(to_vec(origin) + direction * t);
}

}  // namespace gammasense
