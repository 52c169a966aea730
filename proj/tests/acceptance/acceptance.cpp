// Acceptance gate: one line per criterion, exit status 1 if any fails.
//
//   acceptance [--only N]... [--full]
//
// Without --full, the overfit probe runs only when its projected time fits the
// budget, and the ablation runs at reduced scale.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gammasense/axis.hpp"
#include "gammasense/errors.hpp"
#include "gammasense/evaluation.hpp"
#include "gammasense/geometry.hpp"
#include "gammasense/heightfield.hpp"
#include "gammasense/model.hpp"
#include "gammasense/scenegen.hpp"
#include "gammasense/training.hpp"
#include "oracles.hpp"

using namespace gammasense;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Options {
  bool full = false;
};

template <typename... Args>
std::string str(const Args&... args) {
  std::ostringstream out;
  out << std::setprecision(4);
  (out << ... << args);
  return out.str();
}

template <typename T>
nn::Tensor<T> uniform_tensor(const nn::Shape& shape, std::uint64_t seed, double lo, double hi) {
  nn::Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : t.values()) x = static_cast<T>(d(rng));
  return t;
}

// 1 -------------------------------------------------------------------------

// Stage layout written out from the architecture rules, independent of the
// library's spec functions.
std::vector<nn::FeatureSpec> expected_encoder(int base, int expansion, int size) {
  std::vector<nn::FeatureSpec> out;
  int c = base;
  for (int k = 0; k < 5; ++k) {
    out.push_back({c, size >> (k + 1), size >> (k + 1)});
    c *= expansion;
  }
  return out;
}

std::vector<nn::FeatureSpec> expected_decoder(int base, int expansion, int stages, int size) {
  std::vector<nn::FeatureSpec> out;
  int c = base * expansion * expansion * expansion * expansion;
  int s = size >> 5;
  for (int k = 0; k < stages; ++k) {
    c /= 2;
    s *= 2;
    out.push_back({c, s, s});
  }
  return out;
}

Outcome shape_audit(const Options&) {
  int configs = 0;
  for (int size : {64, 256})
    for (int base : {8, 16})
      for (int expansion : {2, 4})
        for (int stages : {0, 1, 2}) {
          ModelConfig c;
          c.base_channels = base;
          c.ebn_expansion = expansion;
          c.decoder_stages = stages;
          const auto enc = expected_encoder(base, expansion, size);
          const auto dec = expected_decoder(base, expansion, stages, size);
          const std::string where = str("size ", size, " base ", base, " expansion ", expansion, " stages ", stages);
          if (encoder_stage_specs(c, size, size) != enc || decoder_stage_specs(c, size, size) != dec)
            return {false, "declared specs differ from the architecture rules at " + where};
          SensingNet<float> net(c, 1);
          const auto out = net.forward(uniform_tensor<float>({1, 6, size, size}, 1, -1.0, 1.0),
                                       uniform_tensor<float>({1, 1, size, size}, 2, 0.0, 1.0),
                                       uniform_tensor<float>({1, 100}, 3, 0.0, 1.0), false);
          const auto& es = net.last_encoder_shapes();
          const auto& ds = net.last_decoder_shapes();
          if (es.size() != enc.size() || ds.size() != dec.size()) return {false, "stage count differs at " + where};
          for (std::size_t k = 0; k < enc.size(); ++k)
            if (es[k] != nn::Shape{1, enc[k].channels, enc[k].height, enc[k].width})
              return {false, str("encoder stage ", k, " differs at ", where)};
          for (std::size_t k = 0; k < dec.size(); ++k)
            if (ds[k] != nn::Shape{1, dec[k].channels, dec[k].height, dec[k].width})
              return {false, str("decoder stage ", k, " differs at ", where)};
          if (out.shape() != nn::Shape{1, 2}) return {false, "prediction shape differs at " + where};
          ++configs;
        }
  const std::vector<nn::FeatureSpec> literal{{16, 128, 128}, {64, 64, 64}, {256, 32, 32}, {1024, 16, 16}, {4096, 8, 8}};
  if (encoder_stage_specs(ModelConfig{}, 256, 256) != literal) return {false, "256 / base 16 / x4 trace differs"};
  return {true, str(configs, " configurations, every stage exact")};
}

// 2 -------------------------------------------------------------------------

Outcome gradient_oracle(const Options&) {
  ModelConfig c;
  c.base_channels = 8;
  c.block_counts = {1, 1, 1, 1};
  c.ebn_expansion = 4;
  SensingNet<double> net(c, 2024);
  auto params = net.parameters();
  // Unit BN scales would hide scale-gradient errors.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& p : params)
    if (p.trainable() && p.name.find("bn") != std::string::npos && p.name.ends_with(".weight"))
      for (auto& x : p.value->values()) x = u(rng);
  const auto img = uniform_tensor<double>({2, 6, 32, 32}, 1, -1.0, 1.0);
  const auto dep = uniform_tensor<double>({2, 1, 32, 32}, 2, 0.0, 1.5);
  const auto ax = uniform_tensor<double>({2, 100}, 3, 0.0, 1.0);
  const auto target = uniform_tensor<double>({2, 2}, 4, 0.0, 1.0);
  const std::vector<double> scales(2, 1.0);
  auto loss = [&] { return batch_loss(net.forward(img, dep, ax, true), target, scales).value; };
  net.zero_grad();
  net.backward(batch_loss(net.forward(img, dep, ax, true), target, scales).grad);
  // h = 1e-5 is biased by pooling and ELU kinks in the x4 net; 1e-6 is not,
  // and round-off stays near 1e-10.
  const auto r = oracle::check_parameter_gradients<double>(params, loss, 240, 99, 1e-6);
  return {r.checked >= 200 && r.max_relative_error < 1e-4,
          str(r.checked, " parameters, max relative error ", r.max_relative_error, " (", r.worst, ")")};
}

// 3 -------------------------------------------------------------------------

Outcome geometry_round_trips(const Options&) {
  CameraRig rig;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> xy(-80.0, 80.0), z(5.0, 400.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Point3D q{xy(rng), xy(rng), z(rng)};
    const auto back = back_project(project(q, rig), q.z, rig);
    worst = std::max(worst, std::hypot(back.x - q.x, back.y - q.y, back.z - q.z) / std::hypot(q.x, q.y, q.z));
  }
  if (!(worst < 1e-6)) return {false, str("round trip relative error ", worst)};

  Array2D<float> disp(rig.height, rig.width);
  std::uniform_real_distribution<float> dd(-2.0f, 120.0f);
  for (auto& x : disp.values()) x = dd(rng);
  disp(0, 0) = 0.0f;
  const auto depth = disparity_to_depth(disp, rig);
  for (int r = 0; r < disp.rows(); ++r)
    for (int c = 0; c < disp.cols(); ++c) {
      const double d = disp(r, c);
      const float expected = d > 1e-6 ? static_cast<float>(rig.focal_px * rig.baseline_mm / d) : 0.0f;
      if (depth(r, c) != expected) return {false, str("disparity_to_depth differs at (", r, ",", c, ")")};
    }

  std::uniform_real_distribution<double> pt(-300.0, 300.0);
  for (int k = 0; k < 10000; ++k) {
    const Point2D a{pt(rng), pt(rng)}, b{pt(rng), pt(rng)};
    const double du = a.u - b.u, dv = a.v - b.v;
    if (error_2d(a, b) != std::sqrt(du * du + dv * dv)) return {false, "2D error differs from the scalar oracle"};
    const Point3D p{pt(rng), pt(rng), pt(rng)}, q{pt(rng), pt(rng), pt(rng)};
    const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    if (error_3d(p, q) != std::sqrt(dx * dx + dy * dy + dz * dz)) return {false, "3D error differs from the scalar oracle"};
  }
  return {true, str("10000 round trips, max relative error ", worst, "; disparity and error metrics exact")};
}

// 4 -------------------------------------------------------------------------

Outcome ray_oracle(const Options&) {
  const Extent e{-120.0, 120.0, -120.0, 120.0};
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> phase(0.0, 6.28), amp(1.0, 5.0), freq(0.04, 0.15), ang(-0.45, 0.45),
      off(-20.0, 20.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    oracle::Sinusoid s;
    s.ax = amp(rng);
    s.ay = amp(rng);
    s.kx = freq(rng);
    s.ky = freq(rng);
    s.px = phase(rng);
    s.py = phase(rng);
    const int n = 241;
    Array2D<double> grid(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        grid(j, i) = s(e.x_min + (e.x_max - e.x_min) * i / (n - 1), e.y_min + (e.y_max - e.y_min) * j / (n - 1));
    const HeightField surface(std::move(grid), e);
    const Point3D o{off(rng), off(rng), 0.0};
    const Vec3 d = Vec3{ang(rng), ang(rng), 1.0}.normalized();
    const auto hit = ray_surface_intersection(o, d, surface);
    const auto ref = oracle::exhaustive_march([&](double x, double y) { return surface.height(x, y); },
                                              {o.x, o.y, o.z}, {d.x, d.y, d.z}, 400.0, kMarchStepMm / 10.0);
    if (!ref) return {false, str("scene ", k, ": reference march found no crossing")};
    worst = std::max(worst, error_3d(hit, Point3D{o.x + *ref * d.x, o.y + *ref * d.y, o.z + *ref * d.z}));
  }
  return {worst < 1e-3, str("100 scenes, max deviation ", worst, " mm")};
}

// 5 -------------------------------------------------------------------------

Outcome pca_axis(const Options&) {
  double worst = 0.0;
  for (int deg = 0; deg <= 75; deg += 15) {
    const double theta = deg * std::numbers::pi / 180.0;
    ProbeMask m(240, 240);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int r = 0; r < 240; ++r)
      for (int col = 0; col < 240; ++col) {
        const double du = col - 119.5, dv = r - 119.5;
        if (std::abs(du * c + dv * s) <= 70.0 && std::abs(-du * s + dv * c) <= 9.0) m(r, col) = 1;
      }
    const auto axis = extract_axis(m);
    const double dot = std::abs(axis.direction.u * c + axis.direction.v * s);
    worst = std::max(worst, std::acos(std::min(1.0, dot)) * 180.0 / std::numbers::pi);
  }
  ProbeMask disc(121, 121);
  for (int r = 0; r < 121; ++r)
    for (int col = 0; col < 121; ++col)
      if (std::hypot(r - 60.0, col - 60.0) <= 40.0) disc(r, col) = 1;
  bool ambiguous = false;
  try {
    extract_axis(disc);
  } catch (const AmbiguousAxisError&) {
    ambiguous = true;
  }
  return {worst < 1.0 && ambiguous,
          str("max angle error ", worst, " deg over 0..75; disc ", ambiguous ? "rejected as ambiguous" : "accepted")};
}

// 6 -------------------------------------------------------------------------

Outcome overfit(const Options& opt) {
  const int steps = 300;
  const double budget = 15.0 * 60.0;
  fixtures::TempDir dir("acceptance_overfit");
  generate_dataset(SceneSpec{}, SplitCounts{8, 0, 0}, dir.path(), 0);
  const auto samples = load_split(dir.path(), read_manifest(dir.path()), "train");
  ModelConfig model;  // base 16, blocks 3,4,6,3, expansion 4, all branches
  TrainConfig train;
  train.batch_size = 8;
  train.target_size = 256;
  train.seed = 0;

  const auto t0 = std::chrono::steady_clock::now();
  if (!opt.full) {
    const int probe_steps = 2;
    const auto r = overfit_probe(model, train, samples, probe_steps);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double per_step = r.seconds / r.steps_run;
    const double projected = (total - r.seconds) + steps * per_step;
    if (projected > budget)
      return {false, str("projected ", projected / 60.0, " min for ", steps, " steps (", per_step,
                         " s/step measured over ", probe_steps, ") exceeds the 15 min budget; not run to completion")};
  }
  const auto r = overfit_probe(model, train, samples, steps, [&](int s, double loss, double elapsed) {
    if (opt.full && (s + 1) % 10 == 0)
      std::cerr << "  overfit step " << s + 1 << "/" << steps << " loss " << loss << " (" << elapsed << " s)\n";
    return true;
  });
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.final_error_2d < 10.0 && total <= budget,
          str("mean train 2D error ", r.initial_error_2d, " -> ", r.final_error_2d, " px (batch-statistics ",
              r.final_train_mode_error_2d, " px) in ", total / 60.0, " min")};
}

// 7 -------------------------------------------------------------------------

bool same_losses(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].epoch != b[i].epoch || a[i].lr != b[i].lr || a[i].train_loss != b[i].train_loss ||
        a[i].val_2d_mean != b[i].val_2d_mean || a[i].val_3d_mean != b[i].val_3d_mean)
      return false;
  return true;
}

Outcome determinism(const Options&) {
  const auto& root = fixtures::shared_dataset();
  fixtures::TempDir a("acc_det_a"), b("acc_det_b"), part("acc_det_part");
  const auto model = fixtures::tiny_model();
  const auto cfg = fixtures::tiny_train(4);
  const auto ra = train(model, cfg, root, a.path());
  const auto rb = train(model, cfg, root, b.path());
  if (!same_losses(ra.log, rb.log)) return {false, "identical runs produced different logs"};
  TrainOptions stop;
  stop.stop_after_epochs = 2;
  train(model, cfg, root, part.path(), stop);
  TrainOptions resume;
  resume.resume = part / "last.ckpt";
  const auto rc = train(model, cfg, root, part.path(), resume);
  if (!same_losses(ra.log, rc.log)) return {false, "resumed run diverged from the uninterrupted one"};
  return {true, str(ra.log.size(), " epochs identical across two runs and across a resume after epoch 2")};
}

// 8 -------------------------------------------------------------------------

EvalReport report_with(double mean_2d, double mean_3d) {
  EvalRow r;
  r.sample_id = "s";
  r.err_2d_px = mean_2d;
  r.err_3d_mm = mean_3d;
  return build_report({r}, "test", {});
}

Outcome report_arithmetic(const Options&) {
  const auto deltas = compare_reports(report_with(55.2, 6.0), report_with(43.0, 3.5));
  double d2 = NAN, d3 = NAN;
  for (const auto& d : deltas) {
    if (d.metric == "2d_mean") d2 = d.change_pct;
    if (d.metric == "3d_mean") d3 = d.change_pct;
  }
  const bool ok = std::abs(d2 - (-22.10)) <= 0.01 && std::abs(d3 - (-41.67)) <= 0.01;
  return {ok, str("2D mean ", std::fixed, std::setprecision(2), d2, "%, 3D mean ", d3, "%")};
}

// 9 -------------------------------------------------------------------------

Outcome ablation(const Options& opt) {
  fixtures::TempDir dir("acceptance_ablation");
  SceneSpec spec = opt.full ? SceneSpec{} : fixtures::small_spec();
  const SplitCounts counts = opt.full ? SplitCounts{200, 50, 50} : SplitCounts{40, 10, 10};
  generate_dataset(spec, counts, dir.path(), 0);

  ModelConfig fused = opt.full ? ModelConfig{} : fixtures::tiny_model();
  TrainConfig cfg = opt.full ? TrainConfig{} : fixtures::tiny_train(50);
  cfg.epochs = 50;
  cfg.seed = 0;
  if (!opt.full) cfg.target_size = 64;
  ModelConfig image_only = fused;
  image_only.branches = BranchFlags::parse("image");

  std::vector<std::pair<std::string, EvalReport>> reports;
  std::vector<double> best_val;
  for (const auto& [label, model] : {std::pair{"image-only", image_only}, std::pair{"image+depth+axis", fused}}) {
    fixtures::TempDir run("acceptance_ablation_run");
    const auto result = train(model, cfg, dir.path(), run.path());
    EvaluateOptions eo;
    eo.report_dir = run / "eval";
    reports.emplace_back(label, evaluate(result.best_checkpoint, dir.path(), "test", eo));
    best_val.push_back(result.best_val_2d);
    std::cout << "  " << label << ": best val 2D " << result.best_val_2d << " px\n";
  }
  std::cout << metrics_table({{reports[0].first, &reports[0].second}, {reports[1].first, &reports[1].second}});
  std::cout << delta_table(compare_reports(reports[0].second, reports[1].second), reports[0].first,
                           reports[1].first);
  auto seen = [](bool b) { return b ? "observed" : "not observed"; };
  return {true, str(opt.full ? "200/50/50" : "reduced 40/10/10 at 128x96", "; fusion <= image-only 2D error: val ",
                    best_val[0], " vs ", best_val[1], " px ", seen(best_val[1] <= best_val[0]), ", test ",
                    reports[0].second.metrics_2d.mean, " vs ", reports[1].second.metrics_2d.mean, " px ",
                    seen(reports[1].second.metrics_2d.mean <= reports[0].second.metrics_2d.mean),
                    " (logged, not asserted)")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options opt;
  std::vector<int> only;
  app.add_flag("--full", opt.full, "Run the overfit probe and the ablation at full scale regardless of time");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    std::string name;
    std::function<Outcome(const Options&)> run;
    double budget_s;  // 0: none
  };
  const std::vector<Criterion> criteria = {
      {"shape audit", shape_audit, 60.0},
      {"gradient oracle", gradient_oracle, 300.0},
      {"geometry round trips", geometry_round_trips, 60.0},
      {"ray-intersection oracle", ray_oracle, 120.0},
      {"PCA axis recovery", pca_axis, 60.0},
      {"overfit probe", overfit, 0.0},  // budget is checked inside, against the projected time
      {"determinism", determinism, 0.0},
      {"report arithmetic", report_arithmetic, 0.0},
      {"scaled ablation", ablation, 0.0},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double budget = criteria[i].budget_s;
    if (budget > 0.0 && secs > budget) {
      o.passed = false;
      o.detail += str("; over the ", budget, " s budget");
    }
    std::cout << (o.passed ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].name << "): " << o.detail
              << "  [" << std::fixed << std::setprecision(1) << secs << " s";
    if (budget > 0.0) std::cout << " of " << budget << " s";
    std::cout << "]" << std::defaultfloat << std::endl;
    if (!o.passed) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
