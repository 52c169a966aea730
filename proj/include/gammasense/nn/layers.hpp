#pragma once

#include <random>
#include <string>
#include <vector>

#include "gammasense/nn/tensor.hpp"

namespace gammasense::nn {

/// Named view of a parameter (grad != nullptr) or a persistent buffer such as
/// batch-norm running statistics (grad == nullptr).
template <typename T>
struct ParamSlot {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;

  bool trainable() const { return grad != nullptr; }
};

template <typename T>
using ParamList = std::vector<ParamSlot<T>>;

using InitRng = std::mt19937_64;

/// Layers keep whatever they need from forward() for the next backward().
/// backward() accumulates parameter gradients and returns the input gradient.

template <typename T>
class Conv2d {
 public:
  struct Options {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    bool bias = false;
  };

  Conv2d() = default;
  Conv2d(const Options& options, InitRng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, ParamList<T>& out);

  FeatureSpec output_spec(const FeatureSpec& in) const;
  const Options& options() const { return opt_; }
  Tensor<T>& weight() { return weight_; }

 private:
  void im2col(const T* x, int h, int w, T* col) const;
  void col2im(const T* col, int h, int w, T* x) const;

  Options opt_;
  Tensor<T> weight_, weight_grad_;  // out x in x k x k
  Tensor<T> bias_, bias_grad_;
  Tensor<T> input_;
  std::vector<T> col_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, T initial_scale = T(1));

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, ParamList<T>& out);

  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

 private:
  int channels_ = 0;
  Tensor<T> gamma_, gamma_grad_, beta_, beta_grad_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
  bool training_ = true;
};

template <typename T>
class Elu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Tensor<T> output_;
};

/// Square max pooling with -inf padding.
template <typename T>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), padding_(padding) {}

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  FeatureSpec output_spec(const FeatureSpec& in) const;

 private:
  int kernel_ = 3;
  int stride_ = 1;
  int padding_ = 1;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

/// Nearest-neighbour x2 upsampling.
template <typename T>
class Upsample2x {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
};

/// Averages over the bins [floor(i*in/out), ceil((i+1)*in/out)).
template <typename T>
class AdaptiveAvgPool2d {
 public:
  AdaptiveAvgPool2d() = default;
  AdaptiveAvgPool2d(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  int out_h_ = 1;
  int out_w_ = 1;
  Shape input_shape_;
};

/// N x C x H x W -> N x C.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Shape input_shape_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, InitRng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, ParamList<T>& out);
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor<T> weight_, weight_grad_;  // out x in
  Tensor<T> bias_, bias_grad_;
  Tensor<T> input_;
};

/// Linear layers with ELU between them (none after the last).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& widths, InitRng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(const std::string& prefix, ParamList<T>& out);
  int out_features() const { return layers_.empty() ? 0 : layers_.back().out_features(); }

 private:
  std::vector<Linear<T>> layers_;
  std::vector<Elu<T>> activations_;
};

}  // namespace gammasense::nn
