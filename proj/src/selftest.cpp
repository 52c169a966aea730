#include "gammasense/selftest.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <unistd.h>

#include "gammasense/errors.hpp"
#include "gammasense/heightfield.hpp"
#include "gammasense/model.hpp"
#include "gammasense/scenegen.hpp"
#include "gammasense/training.hpp"

namespace gammasense {

namespace fs = std::filesystem;

namespace {

template <typename T>
nn::Tensor<T> uniform_tensor(const nn::Shape& shape, std::uint64_t seed, double lo, double hi) {
  nn::Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : t.values()) x = static_cast<T>(d(rng));
  return t;
}

ModelConfig tiny_config(int expansion) {
  ModelConfig c;
  c.base_channels = 8;
  c.block_counts = {1, 1, 1, 1};
  c.ebn_expansion = expansion;
  return c;
}

std::string gradient_check() {
  SensingNet<double> net(tiny_config(2), 7);
  auto params = net.parameters();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  for (auto& p : params)
    if (p.trainable() && p.name.find("bn") != std::string::npos && p.name.ends_with(".weight"))
      for (auto& g : p.value->values()) g = scale(rng);

  const auto img = uniform_tensor<double>({2, 6, 32, 32}, 1, -1.0, 1.0);
  const auto dep = uniform_tensor<double>({2, 1, 32, 32}, 2, 0.0, 1.5);
  const auto ax = uniform_tensor<double>({2, 100}, 3, 0.0, 1.0);
  const auto target = uniform_tensor<double>({2, 2}, 4, 0.0, 1.0);
  const std::vector<double> scales(2, 1.0);
  auto loss = [&] { return batch_loss(net.forward(img, dep, ax, true), target, scales).value; };

  net.zero_grad();
  net.backward(batch_loss(net.forward(img, dep, ax, true), target, scales).grad);

  std::vector<nn::ParamSlot<double>*> trainable;
  for (auto& p : params)
    if (p.trainable()) trainable.push_back(&p);
  double worst = 0.0;
  std::string worst_name;
  const int probes = 60;
  for (int k = 0; k < probes; ++k) {
    auto& slot = *trainable[static_cast<std::size_t>(k) % trainable.size()];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, slot.value->size() - 1)(rng);
    double& x = (*slot.value)[i];
    const double saved = x, h = 1e-5;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = (*slot.grad)[i];
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    if (err > worst) {
      worst = err;
      worst_name = slot.name;
    }
  }
  std::ostringstream out;
  out << probes << " probes, max relative error " << worst << " (" << worst_name << ")";
  if (!(worst < 1e-4)) throw NumericError(out.str());
  return out.str();
}

std::string shape_audit() {
  int checked = 0;
  for (int expansion : {2, 4})
    for (int stages : {0, 1, 2}) {
      ModelConfig c = tiny_config(expansion);
      c.decoder_stages = stages;
      SensingNet<float> net(c, 1);
      const auto out = net.forward(uniform_tensor<float>({1, 6, 64, 64}, 1, -1.0, 1.0),
                                   uniform_tensor<float>({1, 1, 64, 64}, 2, 0.0, 1.0),
                                   uniform_tensor<float>({1, 100}, 3, 0.0, 1.0), false);
      const auto enc = encoder_stage_specs(c, 64, 64);
      const auto dec = decoder_stage_specs(c, 64, 64);
      auto mismatch = [&](const std::string& where) {
        throw ContractViolation("shape audit: " + where + " differs from its declared spec (expansion " +
                                std::to_string(expansion) + ", decoder stages " + std::to_string(stages) + ")");
      };
      if (net.last_encoder_shapes().size() != enc.size()) mismatch("encoder stage count");
      for (std::size_t k = 0; k < enc.size(); ++k)
        if (nn::spec_of(nn::Tensor<float>(net.last_encoder_shapes()[k])) != enc[k]) mismatch("encoder stage");
      if (net.last_decoder_shapes().size() != dec.size()) mismatch("decoder stage count");
      for (std::size_t k = 0; k < dec.size(); ++k)
        if (nn::spec_of(nn::Tensor<float>(net.last_decoder_shapes()[k])) != dec[k]) mismatch("decoder stage");
      if (out.shape() != nn::Shape{1, 2}) mismatch("prediction");
      for (float v : out.values())
        if (!(v > 0.0f && v < 1.0f)) mismatch("prediction range");
      ++checked;
    }
  return std::to_string(checked) + " configurations at 64x64";
}

std::string geometry_round_trip() {
  CameraRig rig;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> xy(-60.0, 60.0), z(5.0, 300.0);
  double worst = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const Point3D q{xy(rng), xy(rng), z(rng)};
    const auto back = back_project(project(q, rig), q.z, rig);
    worst = std::max(worst, error_3d(back, q) / std::hypot(q.x, q.y, q.z));
  }
  std::ostringstream out;
  out << n << " points, max relative error " << worst;
  if (!(worst < 1e-6)) throw NumericError(out.str());
  return out.str();
}

std::string ray_oracle() {
  const double a = 0.3, b = -0.2, c = 70.0;
  Array2D<double> grid(9, 9);
  for (int j = 0; j < 9; ++j)
    for (int i = 0; i < 9; ++i) grid(j, i) = c + a * (-100.0 + 25.0 * i) + b * (-100.0 + 25.0 * j);
  const HeightField plane(grid, Extent{-100.0, 100.0, -100.0, 100.0});
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ang(-0.5, 0.5);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vec3 d = Vec3{ang(rng), ang(rng), 1.0}.normalized();
    const double t = c / (d.z - a * d.x - b * d.y);
    const auto hit = ray_surface_intersection({0.0, 0.0, 0.0}, d, plane);
    worst = std::max(worst, error_3d(hit, Point3D{t * d.x, t * d.y, t * d.z}));
  }
  std::ostringstream out;
  out << "tilted plane, max deviation " << worst << " mm";
  if (!(worst < 1e-4)) throw NumericError(out.str());
  return out.str();
}

fs::path scratch_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("gammasense_selftest_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SceneSpec small_spec() {
  SceneSpec spec;
  spec.rig.focal_px = spec.rig.alpha = spec.rig.beta = 140.0;
  spec.rig.width = 128;
  spec.rig.height = 96;
  spec.rig.cx = 63.5;
  spec.rig.cy = 47.5;
  return spec;
}

std::string sample_round_trip() {
  const auto dir = scratch_dir("sample");
  const auto s = generate_sample(small_spec(), 3, "selftest");
  save_sample(s, dir);
  const auto back = load_sample(dir);
  fs::remove_all(dir);
  if (!(back.left == s.left && back.right == s.right && back.depth == s.depth && back.mask == s.mask &&
        back.gt_2d == s.gt_2d && back.gt_3d == s.gt_3d && back.axis.points == s.axis.points && back.rig == s.rig))
    throw FormatError("sample round trip changed a field");
  return "128x96 sample, all fields identical";
}

std::string checkpoint_round_trip() {
  const auto dir = scratch_dir("ckpt");
  NormalizationStats stats;
  TrainConfig tc;
  tc.target_size = 32;
  Trainer a(tiny_config(2), tc, stats);
  a.save(dir / "a.ckpt");
  Trainer b(tiny_config(2), tc, stats);
  auto pa = a.model().parameters();
  for (auto& p : b.model().parameters()) p.value->fill(0.0f);
  b.restore(dir / "a.ckpt");
  auto pb = b.model().parameters();
  fs::remove_all(dir);
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i].value == *pb[i].value)) throw FormatError("checkpoint round trip changed " + pa[i].name);
  return std::to_string(pa.size()) + " tensors identical";
}

}  // namespace

std::vector<SelftestResult> run_selftests(const std::function<void(const SelftestResult&)>& progress) {
  const std::vector<std::pair<std::string, std::function<std::string()>>> suites = {
      {"gradient_check", gradient_check},       {"shape_audit", shape_audit},
      {"geometry_round_trip", geometry_round_trip}, {"ray_oracle", ray_oracle},
      {"sample_round_trip", sample_round_trip}, {"checkpoint_round_trip", checkpoint_round_trip}};
  std::vector<SelftestResult> results;
  for (const auto& [name, fn] : suites) {
    SelftestResult r;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    try {
      r.detail = fn();
      r.passed = true;
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) progress(r);
    results.push_back(r);
  }
  return results;
}

}  // namespace gammasense
