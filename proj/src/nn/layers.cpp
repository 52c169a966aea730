#include "gammasense/nn/layers.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "blas.hpp"

namespace gammasense::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream s;
  s << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "x" : "") << shape[i];
  s << "]";
  return s.str();
}

std::string spec_string(const FeatureSpec& spec) {
  std::ostringstream s;
  s << spec.channels << "x" << spec.height << "x" << spec.width;
  return s.str();
}

namespace {

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* where) {
  if (x.rank() != rank)
    throw ContractViolation(std::string(where) + ": expected rank " + std::to_string(rank) + " input, got " +
                            shape_string(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(const Options& options, InitRng& rng) : opt_(options) {
  if (opt_.in_channels <= 0 || opt_.out_channels <= 0 || opt_.kernel <= 0 || opt_.stride <= 0 || opt_.padding < 0)
    throw ContractViolation("Conv2d: invalid options");
  weight_ = Tensor<T>({opt_.out_channels, opt_.in_channels, opt_.kernel, opt_.kernel});
  weight_grad_ = Tensor<T>(weight_.shape());
  // Kaiming normal, fan-out mode.
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (opt_.out_channels * opt_.kernel * opt_.kernel)));
  for (auto& w : weight_.values()) w = static_cast<T>(normal(rng));
  if (opt_.bias) {
    bias_ = Tensor<T>({opt_.out_channels});
    bias_grad_ = Tensor<T>({opt_.out_channels});
  }
}

template <typename T>
FeatureSpec Conv2d<T>::output_spec(const FeatureSpec& in) const {
  if (in.channels != opt_.in_channels)
    throw ContractViolation("Conv2d: expected " + std::to_string(opt_.in_channels) + " input channels, got " +
                            std::to_string(in.channels));
  const int oh = (in.height + 2 * opt_.padding - opt_.kernel) / opt_.stride + 1;
  const int ow = (in.width + 2 * opt_.padding - opt_.kernel) / opt_.stride + 1;
  if (oh <= 0 || ow <= 0) throw ContractViolation("Conv2d: input " + spec_string(in) + " too small for the kernel");
  return {opt_.out_channels, oh, ow};
}

template <typename T>
void Conv2d<T>::im2col(const T* x, int h, int w, T* col) const {
  const int k = opt_.kernel;
  const int s = opt_.stride;
  const int p = opt_.padding;
  const int oh = (h + 2 * p - k) / s + 1;
  const int ow = (w + 2 * p - k) / s + 1;
  for (int c = 0; c < opt_.in_channels; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + static_cast<std::size_t>((c * k + kh) * k + kw) * oh * ow;
        const T* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s - p + kh;
          T* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * s - p + kw;
            dst[xo] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, int h, int w, T* x) const {
  const int k = opt_.kernel;
  const int s = opt_.stride;
  const int p = opt_.padding;
  const int oh = (h + 2 * p - k) / s + 1;
  const int ow = (w + 2 * p - k) / s + 1;
  for (int c = 0; c < opt_.in_channels; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + static_cast<std::size_t>((c * k + kh) * k + kw) * oh * ow;
        T* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s - p + kh;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * s - p + kw;
            if (ix >= 0 && ix < w) dst[ix] += src[xo];
          }
        }
      }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "Conv2d");
  const FeatureSpec out_spec = output_spec(spec_of(x));
  const int n = x.dim(0);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int k_dim = opt_.in_channels * opt_.kernel * opt_.kernel;
  const int p_dim = out_spec.height * out_spec.width;
  const bool direct = opt_.kernel == 1 && opt_.stride == 1 && opt_.padding == 0;

  input_ = x;
  Tensor<T> y({n, out_spec.channels, out_spec.height, out_spec.width});
  if (!direct) col_.resize(static_cast<std::size_t>(k_dim) * p_dim);
  for (int i = 0; i < n; ++i) {
    const T* xi = x.data() + static_cast<std::size_t>(i) * opt_.in_channels * h * w;
    const T* col = xi;
    if (!direct) {
      im2col(xi, h, w, col_.data());
      col = col_.data();
    }
    T* yi = y.data() + static_cast<std::size_t>(i) * out_spec.channels * p_dim;
    gemm(false, false, opt_.out_channels, p_dim, k_dim, T(1), weight_.data(), k_dim, col, p_dim, T(0), yi, p_dim);
    if (opt_.bias)
      for (int c = 0; c < opt_.out_channels; ++c) {
        T* plane = yi + static_cast<std::size_t>(c) * p_dim;
        for (int j = 0; j < p_dim; ++j) plane[j] += bias_[c];
      }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.dim(0);
  const int h = input_.dim(2);
  const int w = input_.dim(3);
  const int oh = grad_out.dim(2);
  const int ow = grad_out.dim(3);
  const int k_dim = opt_.in_channels * opt_.kernel * opt_.kernel;
  const int p_dim = oh * ow;
  const bool direct = opt_.kernel == 1 && opt_.stride == 1 && opt_.padding == 0;

  Tensor<T> dx(input_.shape());
  std::vector<T> dcol;
  if (!direct) {
    col_.resize(static_cast<std::size_t>(k_dim) * p_dim);
    dcol.resize(col_.size());
  }
  for (int i = 0; i < n; ++i) {
    const T* xi = input_.data() + static_cast<std::size_t>(i) * opt_.in_channels * h * w;
    const T* gi = grad_out.data() + static_cast<std::size_t>(i) * opt_.out_channels * p_dim;
    T* dxi = dx.data() + static_cast<std::size_t>(i) * opt_.in_channels * h * w;
    const T* col = xi;
    if (!direct) {
      im2col(xi, h, w, col_.data());
      col = col_.data();
    }
    gemm(false, true, opt_.out_channels, k_dim, p_dim, T(1), gi, p_dim, col, p_dim, T(1), weight_grad_.data(), k_dim);
    if (direct) {
      gemm(true, false, k_dim, p_dim, opt_.out_channels, T(1), weight_.data(), k_dim, gi, p_dim, T(0), dxi, p_dim);
    } else {
      gemm(true, false, k_dim, p_dim, opt_.out_channels, T(1), weight_.data(), k_dim, gi, p_dim, T(0), dcol.data(),
           p_dim);
      col2im(dcol.data(), h, w, dxi);
    }
    if (opt_.bias)
      for (int c = 0; c < opt_.out_channels; ++c) {
        const T* plane = gi + static_cast<std::size_t>(c) * p_dim;
        T acc = T(0);
        for (int j = 0; j < p_dim; ++j) acc += plane[j];
        bias_grad_[c] += acc;
      }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".weight", &weight_, &weight_grad_});
  if (opt_.bias) out.push_back({prefix + ".bias", &bias_, &bias_grad_});
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, T initial_scale)
    : channels_(channels),
      gamma_({channels}, initial_scale),
      gamma_grad_({channels}),
      beta_({channels}),
      beta_grad_({channels}),
      running_mean_({channels}),
      running_var_({channels}, T(1)) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  require_rank(x, 4, "BatchNorm2d");
  if (x.dim(1) != channels_) throw ContractViolation("BatchNorm2d: channel mismatch");
  const int n = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double m = static_cast<double>(n) * plane;
  training_ = training;
  normalized_ = Tensor<T>(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), T(0));
  Tensor<T> y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    double mean;
    double var;
    if (training) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) sum += p[j];
      }
      mean = sum / m;
      double sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
      }
      var = sq / m;
      const double unbiased = m > 1.0 ? sq / (m - 1.0) : var;
      running_mean_[c] = static_cast<T>((1.0 - kMomentum) * running_mean_[c] + kMomentum * mean);
      running_var_[c] = static_cast<T>((1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
    inv_std_[static_cast<std::size_t>(c)] = inv;
    const T mu = static_cast<T>(mean);
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const T xh = (x[off + j] - mu) * inv;
        normalized_[off + j] = xh;
        y[off + j] = gamma_[c] * xh + beta_[c];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.dim(0);
  const std::size_t plane = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
  const double m = static_cast<double>(n) * plane;
  Tensor<T> dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += grad_out[off + j];
        sum_dy_xhat += grad_out[off + j] * normalized_[off + j];
      }
    }
    gamma_grad_[c] += static_cast<T>(sum_dy_xhat);
    beta_grad_[c] += static_cast<T>(sum_dy);
    const double scale = static_cast<double>(gamma_[c]) * inv_std_[static_cast<std::size_t>(c)];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        if (training_) {
          dx[off + j] = static_cast<T>(scale / m *
                                       (m * grad_out[off + j] - sum_dy - normalized_[off + j] * sum_dy_xhat));
        } else {
          dx[off + j] = static_cast<T>(scale * grad_out[off + j]);
        }
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".weight", &gamma_, &gamma_grad_});
  out.push_back({prefix + ".bias", &beta_, &beta_grad_});
  out.push_back({prefix + ".running_mean", &running_mean_, nullptr});
  out.push_back({prefix + ".running_var", &running_var_, nullptr});
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> Elu<T>::forward(const Tensor<T>& x) {
  output_ = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) output_[i] = x[i] > T(0) ? x[i] : std::expm1(x[i]);
  return output_;
}

template <typename T>
Tensor<T> Elu<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx[i] = output_[i] > T(0) ? grad_out[i] : grad_out[i] * (output_[i] + T(1));
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  output_ = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) output_[i] = T(1) / (T(1) + std::exp(-x[i]));
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * output_[i] * (T(1) - output_[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling / resampling

template <typename T>
FeatureSpec MaxPool2d<T>::output_spec(const FeatureSpec& in) const {
  return {in.channels, (in.height + 2 * padding_ - kernel_) / stride_ + 1,
          (in.width + 2 * padding_ - kernel_) / stride_ + 1};
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "MaxPool2d");
  const auto spec = output_spec(spec_of(x));
  const int n = x.dim(0);
  const int c = x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  input_shape_ = x.shape();
  Tensor<T> y({n, c, spec.height, spec.width});
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < n * c; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * h * w;
    for (int oy = 0; oy < spec.height; ++oy)
      for (int ox = 0; ox < spec.width; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        y[o] = best;
        argmax_[o] = best_idx;
      }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

template <typename T>
Tensor<T> Upsample2x<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "Upsample2x");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  Tensor<T> y({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n * c; ++i) {
    const T* src = x.data() + static_cast<std::size_t>(i) * h * w;
    T* dst = y.data() + static_cast<std::size_t>(i) * 4 * h * w;
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx) dst[static_cast<std::size_t>(yy) * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
  }
  return y;
}

template <typename T>
Tensor<T> Upsample2x<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.dim(0);
  const int c = grad_out.dim(1);
  const int h = grad_out.dim(2) / 2;
  const int w = grad_out.dim(3) / 2;
  Tensor<T> dx({n, c, h, w});
  for (int i = 0; i < n * c; ++i) {
    const T* src = grad_out.data() + static_cast<std::size_t>(i) * 4 * h * w;
    T* dst = dx.data() + static_cast<std::size_t>(i) * h * w;
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx) dst[(yy / 2) * w + xx / 2] += src[static_cast<std::size_t>(yy) * 2 * w + xx];
  }
  return dx;
}

namespace {

struct Bin {
  int begin;
  int end;
};

Bin adaptive_bin(int i, int in, int out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

}  // namespace

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "AdaptiveAvgPool2d");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  input_shape_ = x.shape();
  if (h == out_h_ && w == out_w_) return x;
  Tensor<T> y({n, c, out_h_, out_w_});
  for (int i = 0; i < n * c; ++i) {
    const T* src = x.data() + static_cast<std::size_t>(i) * h * w;
    T* dst = y.data() + static_cast<std::size_t>(i) * out_h_ * out_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
      const Bin by = adaptive_bin(oy, h, out_h_);
      for (int ox = 0; ox < out_w_; ++ox) {
        const Bin bx = adaptive_bin(ox, w, out_w_);
        T acc = T(0);
        for (int yy = by.begin; yy < by.end; ++yy)
          for (int xx = bx.begin; xx < bx.end; ++xx) acc += src[yy * w + xx];
        dst[oy * out_w_ + ox] = acc / static_cast<T>((by.end - by.begin) * (bx.end - bx.begin));
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  const int h = input_shape_[2];
  const int w = input_shape_[3];
  if (h == out_h_ && w == out_w_) return grad_out;
  const int nc = input_shape_[0] * input_shape_[1];
  Tensor<T> dx(input_shape_);
  for (int i = 0; i < nc; ++i) {
    const T* src = grad_out.data() + static_cast<std::size_t>(i) * out_h_ * out_w_;
    T* dst = dx.data() + static_cast<std::size_t>(i) * h * w;
    for (int oy = 0; oy < out_h_; ++oy) {
      const Bin by = adaptive_bin(oy, h, out_h_);
      for (int ox = 0; ox < out_w_; ++ox) {
        const Bin bx = adaptive_bin(ox, w, out_w_);
        const T g = src[oy * out_w_ + ox] / static_cast<T>((by.end - by.begin) * (bx.end - bx.begin));
        for (int yy = by.begin; yy < by.end; ++yy)
          for (int xx = bx.begin; xx < bx.end; ++xx) dst[yy * w + xx] += g;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "GlobalAvgPool");
  input_shape_ = x.shape();
  const int n = x.dim(0);
  const int c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y({n, c});
  for (int i = 0; i < n * c; ++i) {
    const T* p = x.data() + static_cast<std::size_t>(i) * plane;
    double acc = 0.0;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    y[static_cast<std::size_t>(i)] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape_);
  const std::size_t plane = static_cast<std::size_t>(input_shape_[2]) * input_shape_[3];
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const T g = grad_out[i] / static_cast<T>(plane);
    std::fill(dx.data() + i * plane, dx.data() + (i + 1) * plane, g);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear / MLP

template <typename T>
Linear<T>::Linear(int in_features, int out_features, InitRng& rng)
    : in_(in_features),
      out_(out_features),
      weight_({out_features, in_features}),
      weight_grad_({out_features, in_features}),
      bias_({out_features}),
      bias_grad_({out_features}) {
  if (in_ <= 0 || out_ <= 0) throw ContractViolation("Linear: feature counts must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (auto& w : weight_.values()) w = static_cast<T>(uniform(rng));
  for (auto& b : bias_.values()) b = static_cast<T>(uniform(rng));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  require_rank(x, 2, "Linear");
  if (x.dim(1) != in_)
    throw ContractViolation("Linear: expected " + std::to_string(in_) + " input features, got " +
                            std::to_string(x.dim(1)));
  const int n = x.dim(0);
  input_ = x;
  Tensor<T> y({n, out_});
  for (int i = 0; i < n; ++i) std::copy(bias_.data(), bias_.data() + out_, y.data() + static_cast<std::size_t>(i) * out_);
  gemm(false, true, n, out_, in_, T(1), x.data(), in_, weight_.data(), in_, T(1), y.data(), out_);
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.dim(0);
  gemm(true, false, out_, in_, n, T(1), grad_out.data(), out_, input_.data(), in_, T(1), weight_grad_.data(), in_);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) bias_grad_[o] += grad_out.at(i, o);
  Tensor<T> dx({n, in_});
  gemm(false, false, n, in_, out_, T(1), grad_out.data(), out_, weight_.data(), in_, T(0), dx.data(), in_);
  return dx;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".weight", &weight_, &weight_grad_});
  out.push_back({prefix + ".bias", &bias_, &bias_grad_});
}

template <typename T>
Mlp<T>::Mlp(const std::vector<int>& widths, InitRng& rng) {
  if (widths.size() < 2) throw ContractViolation("Mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers_.emplace_back(widths[i], widths[i + 1], rng);
  activations_.resize(layers_.size() - 1);
}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i < activations_.size()) h = activations_[i].forward(h);
  }
  return h;
}

template <typename T>
Tensor<T> Mlp<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i < activations_.size()) g = activations_[i].backward(g);
    g = layers_[i].backward(g);
  }
  return g;
}

template <typename T>
void Mlp<T>::collect(const std::string& prefix, ParamList<T>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + "." + std::to_string(i), out);
}

#define GAMMASENSE_INSTANTIATE(T)         \
  template class Conv2d<T>;               \
  template class BatchNorm2d<T>;          \
  template class Elu<T>;                  \
  template class Sigmoid<T>;              \
  template class MaxPool2d<T>;            \
  template class Upsample2x<T>;           \
  template class AdaptiveAvgPool2d<T>;    \
  template class GlobalAvgPool<T>;        \
  template class Linear<T>;               \
  template class Mlp<T>;

GAMMASENSE_INSTANTIATE(float)
GAMMASENSE_INSTANTIATE(double)

#undef GAMMASENSE_INSTANTIATE

}  // namespace gammasense::nn
