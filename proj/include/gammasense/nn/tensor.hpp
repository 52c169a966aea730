#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gammasense/errors.hpp"

namespace gammasense::nn {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Feature maps are N x C x H x W, feature vectors N x F.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    data_.assign(element_count(shape_), fill);
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h, int w) { return data_[offset4(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset4(n, c, h, w)]; }
  T& at(int n, int f) { return data_[static_cast<std::size_t>(n) * shape_[1] + f]; }
  const T& at(int n, int f) const { return data_[static_cast<std::size_t>(n) * shape_[1] + f]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  /// Resets to `shape`, zero-filled. Reuses storage.
  void reset(const Shape& shape) {
    shape_ = shape;
    data_.assign(element_count(shape_), T(0));
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  void require_same_shape(const Tensor& o, const char* where) const {
    if (shape_ != o.shape_)
      throw ContractViolation(std::string(where) + ": shape mismatch " + shape_string(shape_) + " vs " +
                              shape_string(o.shape_));
  }

  bool operator==(const Tensor&) const = default;

  static std::size_t element_count(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw ContractViolation("Tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  std::size_t offset4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& in) {
  Tensor<To> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<To>(in[i]);
  return out;
}

/// Declared channel/spatial layout of an N x C x H x W feature map.
struct FeatureSpec {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const FeatureSpec&) const = default;
};

std::string spec_string(const FeatureSpec& spec);

template <typename T>
FeatureSpec spec_of(const Tensor<T>& t) {
  if (t.rank() != 4) throw ContractViolation("spec_of: expected a 4-D feature map, got " + shape_string(t.shape()));
  return {t.dim(1), t.dim(2), t.dim(3)};
}

/// Throws ContractViolation unless `t` is N x spec.channels x spec.height x spec.width.
template <typename T>
void require_spec(const Tensor<T>& t, const FeatureSpec& spec, const char* where) {
  if (t.rank() != 4 || spec_of(t) != spec)
    throw ContractViolation(std::string(where) + ": feature map " + shape_string(t.shape()) + " does not match " +
                            spec_string(spec));
}

}  // namespace gammasense::nn
