#include <doctest.h>

#include <cmath>
#include <random>

#include "gammasense/model.hpp"
#include "gammasense/training.hpp"
#include "oracles.hpp"

using namespace gammasense;
using nn::FeatureSpec;
using nn::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(nn::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.values()) x = static_cast<T>(u(rng));
  return t;
}

/// Sum of all outputs times fixed random weights, so every output element
/// receives a distinct upstream gradient.
template <typename T>
double weighted_sum(const Tensor<T>& y, const Tensor<T>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * static_cast<double>(w[i]);
  return s;
}

template <typename T>
void randomize_bn_scales(nn::ParamList<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& p : params)
    if (p.name.find("bn") != std::string::npos && p.name.ends_with(".weight"))
      for (auto& x : p.value->values()) x = static_cast<T>(u(rng));
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.base_channels = 8;
  c.block_counts = {1, 1, 1, 1};
  return c;
}

}  // namespace

TEST_CASE("encoder stage trace for the 256 input, base 16, expansion 4") {
  ModelConfig c;
  const auto specs = encoder_stage_specs(c, 256, 256);
  const std::vector<FeatureSpec> expected{{16, 128, 128}, {64, 64, 64}, {256, 32, 32}, {1024, 16, 16}, {4096, 8, 8}};
  CHECK(specs == expected);
  const auto dec = decoder_stage_specs(c, 256, 256);
  REQUIRE(dec.size() == 2);
  CHECK(dec[0] == FeatureSpec{2048, 16, 16});
  CHECK(dec[1] == FeatureSpec{1024, 32, 32});
  CHECK(image_feature_length(c) == 1024);
  CHECK(head_input_length(c) == 1024 + 64 + 64);
}

TEST_CASE("config errors") {
  ModelConfig c;
  CHECK_THROWS_AS(encoder_stage_specs(c, 100, 256), ConfigError);
  c.decoder_stages = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.ebn_expansion = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.block_counts = {1, 0, 1, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.branches = {false, false, false};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(BranchFlags::parse("image,colour"), ConfigError);
  CHECK(BranchFlags::parse("axis,image") == BranchFlags{true, false, true});
  nn::InitRng rng(1);
  CHECK_THROWS_AS(StandardBottleneck<float>(18, rng), ConfigError);
  CHECK_THROWS_AS(ExpandedBottleneck<float>(7, 2, 4, rng), ConfigError);
}

TEST_CASE("model config JSON round trip") {
  ModelConfig c;
  c.base_channels = 8;
  c.ebn_expansion = 2;
  c.branches = BranchFlags::parse("image,axis");
  c.head_hidden_sizes = {64, 32};
  CHECK(ModelConfig::from_json(c.to_json()) == c);
}

TEST_CASE("standard bottleneck preserves shape and reduces to ELU of the input with zero weights") {
  nn::InitRng rng(3);
  StandardBottleneck<double> block(16, rng);
  const auto x = random_tensor<double>({2, 16, 8, 8}, 5, -2.0, 2.0);
  const auto y = block.forward(x, true);
  CHECK(y.shape() == x.shape());

  nn::ParamList<double> params;
  block.collect("b", params);
  for (auto& p : params) {
    if (p.name.find("conv") != std::string::npos) p.value->fill(0.0);
    if (p.name.find("bn") != std::string::npos && p.name.ends_with(".weight")) p.value->fill(1.0);
  }
  const auto z = block.forward(x, true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = x[i] > 0 ? x[i] : std::expm1(x[i]);
    CHECK(z[i] == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("expanded bottleneck output shapes") {
  nn::InitRng rng(4);
  ExpandedBottleneck<float> strided(16, 2, 4, rng);
  CHECK(nn::spec_of(strided.forward(random_tensor<float>({1, 16, 32, 32}, 1), true)) == FeatureSpec{64, 16, 16});
  ExpandedBottleneck<float> flat(16, 1, 4, rng);
  CHECK(nn::spec_of(flat.forward(random_tensor<float>({1, 16, 32, 32}, 1), true)) == FeatureSpec{64, 32, 32});
  ExpandedBottleneck<float> half(16, 2, 2, rng);
  CHECK(nn::spec_of(half.forward(random_tensor<float>({1, 16, 32, 32}, 1), true)) == FeatureSpec{32, 16, 16});
}

TEST_CASE("block input gradients match central differences") {
  nn::InitRng rng(11);
  auto check_block = [](auto& block, Tensor<double> x, std::uint64_t seed) {
    nn::ParamList<double> params;
    block.collect("blk", params);
    randomize_bn_scales(params, seed);
    const auto y0 = block.forward(x, true);
    const auto w = random_tensor<double>(y0.shape(), seed + 1);
    block.forward(x, true);
    const auto gx = block.backward(w);
    std::function<double()> f = [&] { return weighted_sum(block.forward(x, true), w); };
    std::mt19937_64 pick_rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    double worst = 0.0;
    for (int k = 0; k < 40; ++k) {
      const auto i = pick(pick_rng);
      worst = std::max(worst, oracle::relative_error(gx[i], oracle::central_difference<double>(f, x[i], 1e-6)));
    }
    CHECK(worst < 1e-4);
  };
  StandardBottleneck<double> sbn(16, rng);
  check_block(sbn, random_tensor<double>({2, 16, 6, 6}, 21), 31);
  ExpandedBottleneck<double> ebn(8, 2, 4, rng);
  check_block(ebn, random_tensor<double>({2, 8, 6, 6}, 22), 32);
}

TEST_CASE("depth and axis branch output lengths and degenerate inputs") {
  nn::InitRng rng(5);
  DepthBranch<float> depth(rng);
  const auto d = depth.forward(Tensor<float>({2, 1, 64, 64}), true);
  CHECK(d.shape() == nn::Shape{2, 64});
  for (float v : d.values()) CHECK(std::isfinite(v));

  AxisBranch<double> axis(rng);
  const auto pts = random_tensor<double>({3, 100}, 9, 0.0, 1.0);
  const auto out = axis.forward(pts);
  CHECK(out.shape() == nn::Shape{3, 64});
  // Swapping two samples swaps their features.
  Tensor<double> swapped = pts;
  for (int f = 0; f < 100; ++f) std::swap(swapped.at(0, f), swapped.at(2, f));
  const auto out2 = axis.forward(swapped);
  for (int f = 0; f < 64; ++f) {
    CHECK(out2.at(0, f) == out.at(2, f));
    CHECK(out2.at(2, f) == out.at(0, f));
    CHECK(out2.at(1, f) == out.at(1, f));
  }
}

TEST_CASE("fusion head widths follow the enabled branches") {
  nn::InitRng rng(6);
  FusionHead<float> head({1024}, {128}, rng);
  CHECK(head.input_features() == 1024);
  FusionHead<float> three({1024, 64, 64}, {128}, rng);
  CHECK(three.input_features() == 1152);
  CHECK_THROWS_AS(three.forward({Tensor<float>({1, 1024})}), ContractViolation);
  CHECK_THROWS_AS(three.forward({Tensor<float>({1, 1024}), Tensor<float>({1, 60}), Tensor<float>({1, 64})}),
                  ContractViolation);
}

TEST_CASE("full model forward: shapes, output range and determinism") {
  ModelConfig c = tiny_config();
  c.ebn_expansion = 2;
  SensingNet<float> a(c, 42), b(c, 42);
  const auto img = random_tensor<float>({2, 6, 64, 64}, 1);
  const auto dep = random_tensor<float>({2, 1, 64, 64}, 2, 0.0, 1.0);
  const auto ax = random_tensor<float>({2, 100}, 3, 0.0, 1.0);
  const auto pa = a.forward(img, dep, ax, true);
  const auto pb = b.forward(img, dep, ax, true);
  CHECK(pa == pb);
  CHECK(pa.shape() == nn::Shape{2, 2});
  for (float v : pa.values()) CHECK((v >= 0.0f && v <= 1.0f));

  const auto specs = encoder_stage_specs(c, 64, 64);
  REQUIRE(a.last_encoder_shapes().size() == 5);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(a.last_encoder_shapes()[i] == nn::Shape{2, specs[i].channels, specs[i].height, specs[i].width});
  const auto dec = decoder_stage_specs(c, 64, 64);
  REQUIRE(a.last_decoder_shapes().size() == dec.size());
  for (std::size_t i = 0; i < dec.size(); ++i)
    CHECK(a.last_decoder_shapes()[i] == nn::Shape{2, dec[i].channels, dec[i].height, dec[i].width});

  auto pa_params = a.parameters();
  auto pb_params = b.parameters();
  REQUIRE(pa_params.size() == pb_params.size());
  for (std::size_t i = 0; i < pa_params.size(); ++i) CHECK(*pa_params[i].value == *pb_params[i].value);
}

TEST_CASE("decoder_stages = 0 pools the deepest encoder stage") {
  ModelConfig c = tiny_config();
  c.decoder_stages = 0;
  c.ebn_expansion = 2;
  c.branches = BranchFlags::parse("image");
  SensingNet<float> net(c, 1);
  CHECK(image_feature_length(c) == 8 * 16);
  net.forward(random_tensor<float>({1, 6, 32, 32}, 1), {}, {}, false);
  CHECK(net.last_decoder_shapes().empty());
}

TEST_CASE("disabled branches own no parameters") {
  ModelConfig c = tiny_config();
  c.ebn_expansion = 2;
  c.branches = BranchFlags::parse("image,axis");
  SensingNet<float> net(c, 1);
  for (const auto& p : net.parameters()) CHECK(p.name.rfind("depth.", 0) != 0);
  c.branches = BranchFlags::parse("depth");
  SensingNet<float> depth_only(c, 1);
  for (const auto& p : depth_only.parameters()) {
    CHECK(p.name.rfind("image.", 0) != 0);
    CHECK(p.name.rfind("axis.", 0) != 0);
  }
}

TEST_CASE("global skips carry gradient back to the stem") {
  ModelConfig c = tiny_config();
  c.ebn_expansion = 2;
  c.branches = BranchFlags::parse("image");
  SensingNet<float> net(c, 8);
  const auto img = random_tensor<float>({2, 6, 32, 32}, 4);
  net.zero_grad();
  const auto pred = net.forward(img, {}, {}, true);
  Tensor<float> g({2, 2}, 1.0f);
  net.backward(g);
  double norm = 0.0;
  for (const auto& p : net.parameters())
    if (p.name == "image.encoder.stem.conv.weight")
      for (float v : p.grad->values()) norm += static_cast<double>(v) * v;
  CHECK(norm > 0.0);
}

TEST_CASE("full three-branch gradients match central differences (tiny double config, expansion 2)") {
  // Expansion 2 keeps the unit run short; the acceptance gate uses the literal x4 rule.
  ModelConfig c = tiny_config();
  c.ebn_expansion = 2;
  SensingNet<double> net(c, 2024);
  auto params = net.parameters();
  randomize_bn_scales(params, 77);
  const auto img = random_tensor<double>({3, 6, 32, 32}, 1);
  const auto dep = random_tensor<double>({3, 1, 32, 32}, 2, 0.0, 1.5);
  const auto ax = random_tensor<double>({3, 100}, 3, 0.0, 1.0);
  const auto target = random_tensor<double>({3, 2}, 4, 0.0, 1.0);
  const std::vector<double> scales(3, 1.0);
  auto loss = [&] { return batch_loss(net.forward(img, dep, ax, true), target, scales).value; };

  net.zero_grad();
  const auto l = batch_loss(net.forward(img, dep, ax, true), target, scales);
  net.backward(l.grad);
  const auto r = oracle::check_parameter_gradients<double>(params, loss, 120, 99);
  INFO(r.worst);
  CHECK(r.checked == 120);
  CHECK(r.max_relative_error < 1e-4);
}
