#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "gammasense/nn/layers.hpp"
#include "nn/blas.hpp"
#include "oracles.hpp"

using namespace gammasense;
using namespace gammasense::nn;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : t.values()) x = d(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Compares backward(w) with central differences of <forward(x), w> for `probes`
// input entries.
double input_gradient_error(const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                            const std::function<Tensor<double>(const Tensor<double>&)>& backward, Tensor<double> x,
                            std::uint64_t seed, int probes = 40) {
  std::mt19937_64 rng(seed);
  const auto y = forward(x);
  const auto w = random_tensor(y.shape(), rng);
  const auto gx = backward(w);
  REQUIRE(gx.shape() == x.shape());
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const std::size_t i = pick(rng);
    const double numeric = oracle::central_difference<double>([&] { return dot(forward(x), w); }, x[i], 1e-6);
    worst = std::max(worst, oracle::relative_error(gx[i], numeric, 1e-6));
  }
  return worst;
}

void naive_gemm(bool ta, bool tb, int m, int n, int k, double alpha, const std::vector<double>& a,
                const std::vector<double>& b, double beta, std::vector<double>& c) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const double bv = tb ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        s += av * bv;
      }
      auto& cv = c[static_cast<std::size_t>(i) * n + j];
      cv = alpha * s + beta * cv;
    }
}

}  // namespace

TEST_CASE("gemm agrees with a triple loop in both precisions") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (const auto [m, n, k] : {std::array{3, 5, 7}, {128, 4, 576}, {64, 100, 33}, {1, 257, 19}})
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n),
            c(static_cast<std::size_t>(m) * n);
        for (auto& x : a) x = d(rng);
        for (auto& x : b) x = d(rng);
        for (auto& x : c) x = d(rng);
        auto ref = c;
        naive_gemm(ta, tb, m, n, k, 0.7, a, b, 0.3, ref);

        auto cd = c;
        gemm(ta, tb, m, n, k, 0.7, a.data(), ta ? m : k, b.data(), tb ? k : n, 0.3, cd.data(), n);
        std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end()), cf(c.begin(), c.end());
        gemm(ta, tb, m, n, k, 0.7f, af.data(), ta ? m : k, bf.data(), tb ? k : n, 0.3f, cf.data(), n);
        double worst_d = 0.0, worst_f = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
          worst_d = std::max(worst_d, std::abs(cd[i] - ref[i]));
          worst_f = std::max(worst_f, std::abs(cf[i] - ref[i]));
        }
        CAPTURE(m);
        CAPTURE(k);
        CHECK(worst_d < 1e-11);
        CHECK(worst_f < 1e-3);
      }
}

TEST_CASE("convolution matches direct summation") {
  std::mt19937_64 rng(2);
  InitRng init(3);
  for (const auto [k, s, p] : {std::array{3, 1, 1}, {3, 2, 1}, {1, 2, 0}, {7, 2, 3}}) {
    Conv2d<double> conv({3, 4, k, s, p, true}, init);
    ParamList<double> params;
    conv.collect("c", params);
    auto& bias = *params[1].value;
    for (auto& b : bias.values()) b = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto x = random_tensor({2, 3, 9, 8}, rng);
    const auto y = conv.forward(x);
    const int oh = (9 + 2 * p - k) / s + 1, ow = (8 + 2 * p - k) / s + 1;
    REQUIRE(y.shape() == Shape{2, 4, oh, ow});
    CHECK(conv.output_spec({3, 9, 8}) == FeatureSpec{4, oh, ow});
    const auto& w = conv.weight();
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) {
            double acc = bias[static_cast<std::size_t>(o)];
            for (int c = 0; c < 3; ++c)
              for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) {
                  const int r = i * s - p + a, q = j * s - p + b;
                  if (r < 0 || r >= 9 || q < 0 || q >= 8) continue;
                  acc += w[((static_cast<std::size_t>(o) * 3 + c) * k + a) * k + b] * x.at(n, c, r, q);
                }
            worst = std::max(worst, std::abs(acc - y.at(n, o, i, j)));
          }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("convolution gradients") {
  std::mt19937_64 rng(4);
  InitRng init(5);
  Conv2d<double> conv({3, 5, 3, 2, 1, true}, init);
  const auto x = random_tensor({2, 3, 7, 6}, rng);
  CHECK(input_gradient_error([&](const auto& in) { return conv.forward(in); },
                             [&](const auto& g) { return conv.backward(g); }, x, 6) < 1e-6);

  ParamList<double> params;
  conv.collect("conv", params);
  REQUIRE(params.size() == 2);
  const auto w = random_tensor(conv.forward(x).shape(), rng);
  for (auto& p : params) p.grad->fill(0.0);
  conv.forward(x);
  conv.backward(w);
  const auto r = oracle::check_parameter_gradients<double>(params, [&] { return dot(conv.forward(x), w); }, 40, 7);
  CHECK_MESSAGE(r.max_relative_error < 1e-6, r.worst);
}

TEST_CASE("batch norm statistics and gradients") {
  std::mt19937_64 rng(8);
  BatchNorm2d<double> bn(3);
  ParamList<double> params;
  bn.collect("bn", params);
  // gamma, beta, running_mean, running_var
  REQUIRE(params.size() == 4);
  CHECK(params[0].trainable());
  CHECK_FALSE(params[2].trainable());
  for (auto& g : params[0].value->values()) g = std::uniform_real_distribution<double>(0.5, 1.5)(rng);

  const auto x = random_tensor({4, 3, 5, 5}, rng, 2.0, 6.0);
  const auto y = bn.forward(x, true);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> in, out;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        in.push_back(x[(static_cast<std::size_t>(n) * 3 + c) * 25 + i]);
        out.push_back(y[(static_cast<std::size_t>(n) * 3 + c) * 25 + i]);
      }
    const auto si = oracle::scalar_stats(in), so = oracle::scalar_stats(out);
    const double gamma = (*params[0].value)[static_cast<std::size_t>(c)];
    CHECK(so.mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(so.std == doctest::Approx(gamma * si.std / std::sqrt(si.std * si.std + 1e-5)).epsilon(1e-9));
    // Running stats use the unbiased variance with momentum 0.1.
    CHECK((*params[2].value)[static_cast<std::size_t>(c)] == doctest::Approx(0.1 * si.mean));
    CHECK((*params[3].value)[static_cast<std::size_t>(c)] ==
          doctest::Approx(0.9 + 0.1 * si.std * si.std * 100.0 / 99.0));
  }

  // Eval mode uses the running statistics.
  const auto e = bn.forward(x, false);
  const double rm = (*params[2].value)[0], rv = (*params[3].value)[0], g0 = (*params[0].value)[0];
  CHECK(e[0] == doctest::Approx((x[0] - rm) / std::sqrt(rv + 1e-5) * g0));

  BatchNorm2d<double> fresh(3);
  ParamList<double> fp;
  fresh.collect("bn", fp);
  for (auto& g : fp[0].value->values()) g = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  for (auto& b : fp[1].value->values()) b = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  CHECK(input_gradient_error([&](const auto& in) { return fresh.forward(in, true); },
                             [&](const auto& g) { return fresh.backward(g); }, x, 9) < 1e-5);
  const auto w = random_tensor(x.shape(), rng);
  for (auto& p : fp)
    if (p.trainable()) p.grad->fill(0.0);
  fresh.forward(x, true);
  fresh.backward(w);
  const auto r =
      oracle::check_parameter_gradients<double>(fp, [&] { return dot(fresh.forward(x, true), w); }, 12, 10);
  CHECK_MESSAGE(r.max_relative_error < 1e-6, r.worst);
}

TEST_CASE("pooling layers") {
  std::mt19937_64 rng(11);
  const auto x = random_tensor({2, 3, 6, 5}, rng);

  MaxPool2d<double> mp(3, 2, 1);
  const auto y = mp.forward(x);
  REQUIRE(y.shape() == Shape{2, 3, 3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const int r = 2 * i - 1 + a, c = 2 * j - 1 + b;
          if (r >= 0 && r < 6 && c >= 0 && c < 5) m = std::max(m, x.at(1, 2, r, c));
        }
      CHECK(y.at(1, 2, i, j) == m);
    }
  MaxPool2d<double> same(3, 1, 1);
  CHECK(same.forward(x).shape() == x.shape());
  CHECK(input_gradient_error([&](const auto& in) { return same.forward(in); },
                             [&](const auto& g) { return same.backward(g); }, x, 12) < 1e-6);

  Upsample2x<double> up;
  const auto u = up.forward(x);
  REQUIRE(u.shape() == Shape{2, 3, 12, 10});
  CHECK(u.at(0, 1, 5, 3) == x.at(0, 1, 2, 1));
  CHECK(input_gradient_error([&](const auto& in) { return up.forward(in); },
                             [&](const auto& g) { return up.backward(g); }, x, 13) < 1e-6);

  // 5 -> 3 bins: [0,2), [1,4), [3,5).
  AdaptiveAvgPool2d<double> ap(3, 3);
  const auto z = random_tensor({1, 2, 5, 5}, rng);
  const auto a = ap.forward(z);
  REQUIRE(a.shape() == Shape{1, 2, 3, 3});
  const int lo[3] = {0, 1, 3}, hi[3] = {2, 4, 5};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int r = lo[i]; r < hi[i]; ++r)
        for (int c = lo[j]; c < hi[j]; ++c) s += z.at(0, 1, r, c);
      CHECK(a.at(0, 1, i, j) == doctest::Approx(s / ((hi[i] - lo[i]) * (hi[j] - lo[j]))));
    }
  CHECK(input_gradient_error([&](const auto& in) { return ap.forward(in); },
                             [&](const auto& g) { return ap.backward(g); }, z, 14) < 1e-6);

  GlobalAvgPool<double> gap;
  const auto g = gap.forward(x);
  REQUIRE(g.shape() == Shape{2, 3});
  double s = 0.0;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 5; ++c) s += x.at(1, 0, r, c);
  CHECK(g.at(1, 0) == doctest::Approx(s / 30.0));
  CHECK(input_gradient_error([&](const auto& in) { return gap.forward(in); },
                             [&](const auto& g2) { return gap.backward(g2); }, x, 15) < 1e-6);
}

TEST_CASE("activations") {
  std::mt19937_64 rng(16);
  const auto x = random_tensor({3, 7}, rng, -3.0, 3.0);
  Elu<double> elu;
  const auto e = elu.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(e[i] == doctest::Approx(x[i] > 0 ? x[i] : std::expm1(x[i])));
  CHECK(input_gradient_error([&](const auto& in) { return elu.forward(in); },
                             [&](const auto& g) { return elu.backward(g); }, x, 17) < 1e-6);
  Sigmoid<double> sig;
  const auto s = sig.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(s[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x[i]))));
  CHECK(input_gradient_error([&](const auto& in) { return sig.forward(in); },
                             [&](const auto& g) { return sig.backward(g); }, x, 18) < 1e-6);
}

TEST_CASE("linear and mlp") {
  InitRng init(19);
  Linear<double> lin(40, 6, init);
  ParamList<double> params;
  lin.collect("fc", params);
  REQUIRE(params.size() == 2);
  const double bound = 1.0 / std::sqrt(40.0);
  for (const auto& p : params)
    for (double v : p.value->values()) {
      CHECK(v >= -bound);
      CHECK(v <= bound);
    }
  std::mt19937_64 rng(20);
  const auto x = random_tensor({3, 40}, rng);
  const auto y = lin.forward(x);
  double ref = (*params[1].value)[2];
  for (int i = 0; i < 40; ++i) ref += (*params[0].value)[2 * 40 + static_cast<std::size_t>(i)] * x.at(1, i);
  CHECK(y.at(1, 2) == doctest::Approx(ref));

  Mlp<double> mlp({40, 16, 8, 2}, init);
  CHECK(mlp.out_features() == 2);
  CHECK(input_gradient_error([&](const auto& in) { return mlp.forward(in); },
                             [&](const auto& g) { return mlp.backward(g); }, x, 21) < 1e-6);
  ParamList<double> mp;
  mlp.collect("mlp", mp);
  CHECK(mp.size() == 6);
  const auto w = random_tensor({3, 2}, rng);
  for (auto& p : mp) p.grad->fill(0.0);
  mlp.forward(x);
  mlp.backward(w);
  const auto r = oracle::check_parameter_gradients<double>(mp, [&] { return dot(mlp.forward(x), w); }, 30, 22);
  CHECK_MESSAGE(r.max_relative_error < 1e-6, r.worst);
}
