#include "gammasense/axis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gammasense {

namespace {

Direction2D canonical(double u, double v) {
  const double n = std::hypot(u, v);
  u /= n;
  v /= n;
  if (u < 0.0 || (u == 0.0 && v < 0.0)) {
    u = -u;
    v = -v;
  }
  // Normalize signed zero so equal directions compare equal.
  return {u + 0.0, v + 0.0};
}

}  // namespace

ProbeAxis extract_axis(const ProbeMask& mask) {
  long count = 0;
  double su = 0.0;
  double sv = 0.0;
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) {
        ++count;
        su += c;
        sv += r;
      }
  if (count < kMinMaskPixels)
    throw InvalidMaskError("extract_axis: mask has " + std::to_string(count) + " foreground pixels, need " +
                           std::to_string(kMinMaskPixels));

  const Point2D centroid{su / count, sv / count};
  double cuu = 0.0;
  double cuv = 0.0;
  double cvv = 0.0;
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) {
        const double du = c - centroid.u;
        const double dv = r - centroid.v;
        cuu += du * du;
        cuv += du * dv;
        cvv += dv * dv;
      }
  cuu /= count;
  cuv /= count;
  cvv /= count;

  // Closed-form eigen-decomposition of the symmetric 2x2 covariance.
  const double mean = 0.5 * (cuu + cvv);
  const double radius = std::hypot(0.5 * (cuu - cvv), cuv);
  const double major = mean + radius;
  const double minor = mean - radius;
  if (!(minor > 0.0 ? major / minor >= kMinEigenRatio : major > 0.0))
    throw AmbiguousAxisError("extract_axis: principal axes are indistinguishable (eigenvalue ratio below " +
                             std::to_string(kMinEigenRatio) + ")");

  Direction2D dir;
  if (std::abs(cuv) > 1e-12 * std::max(1.0, major)) {
    dir = canonical(major - cvv, cuv);
  } else {
    dir = cuu >= cvv ? Direction2D{1.0, 0.0} : Direction2D{0.0, 1.0};
  }
  return {centroid, dir, major, minor};
}

AxisSample sample_axis_points(const ProbeAxis& axis, const ProbeMask& mask, int n, std::uint64_t seed) {
  if (n < 1) throw ContractViolation("sample_axis_points: n must be positive");
  const auto& c = axis.centroid;
  const auto& d = axis.direction;

  double s_min = std::numeric_limits<double>::infinity();
  double s_max = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < mask.rows(); ++r)
    for (int col = 0; col < mask.cols(); ++col)
      if (mask(r, col)) {
        const double s = (col - c.u) * d.u + (r - c.v) * d.v;
        s_min = std::min(s_min, s);
        s_max = std::max(s_max, s);
      }
  if (!(s_min <= s_max)) throw InvalidMaskError("sample_axis_points: empty mask");

  // Keep the segment inside [0, W-1] x [0, H-1].
  auto clip = [&](double origin, double dir, double hi) {
    if (std::abs(dir) < 1e-12) return;
    double t1 = (0.0 - origin) / dir;
    double t2 = (hi - origin) / dir;
    if (t1 > t2) std::swap(t1, t2);
    s_min = std::max(s_min, t1);
    s_max = std::min(s_max, t2);
  };
  clip(c.u, d.u, mask.cols() - 1.0);
  clip(c.v, d.v, mask.rows() - 1.0);
  if (s_min > s_max) s_min = s_max = 0.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(s_min, s_max);
  std::vector<double> params(static_cast<std::size_t>(n));
  for (auto& s : params) s = s_min < s_max ? uniform(rng) : s_min;
  std::sort(params.begin(), params.end());

  AxisSample out;
  out.direction = d;
  out.centroid = c;
  out.points.reserve(params.size());
  for (double s : params) {
    Point2D p{c.u + s * d.u, c.v + s * d.v};
    // Guard against the last ulp pushing a clipped endpoint outside the image.
    p.u = std::clamp(p.u, 0.0, mask.cols() - 1.0);
    p.v = std::clamp(p.v, 0.0, mask.rows() - 1.0);
    out.points.push_back(p);
  }
  return out;
}

double distance_to_axis(const Point2D& p, const Point2D& centroid, const Direction2D& direction) {
  return std::abs((p.u - centroid.u) * direction.v - (p.v - centroid.v) * direction.u);
}

}  // namespace gammasense
