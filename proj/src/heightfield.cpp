#include "gammasense/heightfield.hpp"

#include <algorithm>
#include <cmath>

namespace gammasense {

HeightField::HeightField(Array2D<double> grid, Extent extent) : grid_(std::move(grid)), extent_(extent) {
  if (grid_.rows() < 2 || grid_.cols() < 2) throw ContractViolation("HeightField: grid needs at least 2x2 samples");
  if (!(extent_.x_min < extent_.x_max) || !(extent_.y_min < extent_.y_max))
    throw ContractViolation("HeightField: extent must be strictly ordered");
  auto v = grid_.values();
  if (!std::all_of(v.begin(), v.end(), [](double h) { return std::isfinite(h); }))
    throw ContractViolation("HeightField: heights must be finite");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  min_height_ = *lo;
  max_height_ = *hi;
  dx_ = (extent_.x_max - extent_.x_min) / (grid_.cols() - 1);
  dy_ = (extent_.y_max - extent_.y_min) / (grid_.rows() - 1);
}

bool HeightField::contains(double x, double y) const {
  return x >= extent_.x_min && x <= extent_.x_max && y >= extent_.y_min && y <= extent_.y_max;
}

std::optional<double> HeightField::height(double x, double y) const {
  if (!contains(x, y)) return std::nullopt;
  const double fx = (x - extent_.x_min) / dx_;
  const double fy = (y - extent_.y_min) / dy_;
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, grid_.cols() - 2);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, grid_.rows() - 2);
  const double tx = fx - i;
  const double ty = fy - j;
  const double h00 = grid_(j, i);
  const double h10 = grid_(j, i + 1);
  const double h01 = grid_(j + 1, i);
  const double h11 = grid_(j + 1, i + 1);
  return (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11);
}

std::optional<Vec3> HeightField::normal(double x, double y) const {
  if (!contains(x, y)) return std::nullopt;
  const double fx = (x - extent_.x_min) / dx_;
  const double fy = (y - extent_.y_min) / dy_;
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, grid_.cols() - 2);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, grid_.rows() - 2);
  const double tx = fx - i;
  const double ty = fy - j;
  const double h00 = grid_(j, i);
  const double h10 = grid_(j, i + 1);
  const double h01 = grid_(j + 1, i);
  const double h11 = grid_(j + 1, i + 1);
  const double hx = ((1.0 - ty) * (h10 - h00) + ty * (h11 - h01)) / dx_;
  const double hy = ((1.0 - tx) * (h01 - h00) + tx * (h11 - h10)) / dy_;
  return Vec3{hx, hy, -1.0}.normalized();
}

}  // namespace gammasense
