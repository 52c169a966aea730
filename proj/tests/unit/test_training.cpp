#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "gammasense/errors.hpp"
#include "gammasense/training.hpp"
#include "oracles.hpp"

using namespace gammasense;
namespace fs = std::filesystem;

namespace {

const std::vector<StereoSample>& train_samples() {
  static const std::vector<StereoSample> s = [] {
    const auto& root = fixtures::shared_dataset();
    return load_split(root, read_manifest(root), "train");
  }();
  return s;
}

std::vector<std::vector<float>> trainable_values(SensingNet<float>& model) {
  std::vector<std::vector<float>> out;
  for (const auto& p : model.parameters())
    if (p.trainable()) out.emplace_back(p.value->values().begin(), p.value->values().end());
  return out;
}

std::vector<std::vector<float>> all_values(SensingNet<float>& model) {
  std::vector<std::vector<float>> out;
  for (const auto& p : model.parameters()) out.emplace_back(p.value->values().begin(), p.value->values().end());
  return out;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("point loss and its gradient") {
  CHECK(point_loss({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(point_loss({0.5, 0.5}, {0.25, 0.5}) == doctest::Approx(0.0625));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    Point2D p{d(rng), d(rng)};
    const Point2D g{d(rng), d(rng)};
    CHECK(point_loss(p, g) >= 0.0);
    const auto grad = point_loss_gradient(p, g);
    CHECK(grad.u == 2.0 * (p.u - g.u));
    CHECK(grad.v == 2.0 * (p.v - g.v));
    const double nu = oracle::central_difference<double>([&] { return point_loss(p, g); }, p.u, 1e-6);
    const double nv = oracle::central_difference<double>([&] { return point_loss(p, g); }, p.v, 1e-6);
    CHECK(oracle::relative_error(grad.u, nu) < 1e-7);
    CHECK(oracle::relative_error(grad.v, nv) < 1e-7);
  }
}

TEST_CASE("batch loss is the mean scaled squared distance") {
  std::mt19937_64 rng(2);
  nn::Tensor<double> pred({3, 2}), target({3, 2});
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (auto& x : pred.values()) x = d(rng);
  for (auto& x : target.values()) x = d(rng);
  const std::vector<double> scales{1.0, 128.0, 7.5};
  const auto loss = batch_loss<double>(pred, target, scales);
  double ref = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double s = scales[static_cast<std::size_t>(i)];
    const double l = point_loss({s * pred.at(i, 0), s * pred.at(i, 1)}, {s * target.at(i, 0), s * target.at(i, 1)});
    CHECK(loss.per_sample[static_cast<std::size_t>(i)] == doctest::Approx(l));
    ref += l / 3.0;
  }
  CHECK(loss.value == doctest::Approx(ref));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double numeric =
        oracle::central_difference<double>([&] { return batch_loss<double>(pred, target, scales).value; }, pred[i], 1e-7);
    CHECK(oracle::relative_error(loss.grad[i], numeric, 1e-6) < 1e-5);
  }
  const std::vector<double> short_scales{1.0};
  CHECK_THROWS_AS(batch_loss<double>(pred, target, short_scales), ContractViolation);
}

TEST_CASE("pixel loss equals the squared 2D error") {
  const auto& samples = train_samples();
  const auto stats = compute_normalization(samples);
  const auto batch = make_batch({samples[0], samples[1]}, 32, stats);
  nn::Tensor<float> pred({2, 2});
  pred.at(0, 0) = 0.3f;
  pred.at(0, 1) = 0.6f;
  pred.at(1, 0) = 0.9f;
  pred.at(1, 1) = 0.15f;
  const auto loss = batch_loss<float>(pred, batch.targets, loss_scales(batch, LossSpace::pixel));
  for (int i = 0; i < 2; ++i) {
    const auto& t = batch.transforms[static_cast<std::size_t>(i)];
    const auto px = t.from_normalized({pred.at(i, 0), pred.at(i, 1)});
    const double err = error_2d(px, samples[static_cast<std::size_t>(i)].gt_2d);
    CHECK(std::sqrt(loss.per_sample[static_cast<std::size_t>(i)]) == doctest::Approx(err).epsilon(1e-5));
  }
  for (double s : loss_scales(batch, LossSpace::normalized)) CHECK(s == 1.0);
}

TEST_CASE("learning-rate schedule and config validation") {
  TrainConfig c;
  CHECK(learning_rate(c, 0) == 1e-4);
  CHECK(learning_rate(c, 49) == doctest::Approx(8e-5).epsilon(1e-12));
  CHECK(learning_rate(c, 10) == doctest::Approx(1e-4 + (8e-5 - 1e-4) * 10.0 / 49.0).epsilon(1e-12));
  for (int e = 1; e < 50; ++e) CHECK(learning_rate(c, e) < learning_rate(c, e - 1));
  c.epochs = 1;
  CHECK(learning_rate(c, 0) == 1e-4);

  TrainConfig bad;
  bad.lr_final = 2e-4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.target_size = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_loss_space("pixel") == LossSpace::pixel);
  CHECK_THROWS_AS(parse_loss_space("meters"), ConfigError);
  TrainConfig round = TrainConfig::from_json(fixtures::tiny_train().to_json());
  CHECK(round == fixtures::tiny_train());
}

TEST_CASE("a zero learning rate leaves weights bit-identical") {
  const auto& samples = train_samples();
  const auto stats = compute_normalization(samples);
  Trainer t(fixtures::tiny_model(), fixtures::tiny_train(), stats);
  const auto batch = make_batch({samples[0], samples[1], samples[2]}, 32, stats);
  const auto before = trainable_values(t.model());
  t.train_step(batch, 0.0);
  t.train_step(batch, 0.0);
  CHECK(trainable_values(t.model()) == before);
  t.train_step(batch, 1e-3);
  CHECK(trainable_values(t.model()) != before);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const auto& samples = train_samples();
  const auto stats = compute_normalization(samples);
  Trainer t(fixtures::tiny_model(), fixtures::tiny_train(), stats);
  auto batch = make_batch({samples[0], samples[1]}, 32, stats);
  batch.images[5] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.train_step(batch, 1e-4);
    FAIL("NaN accepted");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("training is deterministic per seed") {
  const auto& samples = train_samples();
  const auto stats = compute_normalization(samples);
  const auto prepared = prepare_samples(samples, 32, stats);
  Trainer a(fixtures::tiny_model(), fixtures::tiny_train(), stats);
  Trainer b(fixtures::tiny_model(), fixtures::tiny_train(), stats);
  CHECK(all_values(a.model()) == all_values(b.model()));
  for (int e = 0; e < 2; ++e) CHECK(a.train_epoch(prepared) == b.train_epoch(prepared));
  CHECK(all_values(a.model()) == all_values(b.model()));

  auto other = fixtures::tiny_train();
  other.seed = 4;
  Trainer c(fixtures::tiny_model(), other, stats);
  CHECK(all_values(c.model()) != all_values(a.model()));
}

TEST_CASE("checkpoint round trip") {
  const auto& samples = train_samples();
  const auto stats = compute_normalization(samples);
  const auto prepared = prepare_samples(samples, 32, stats);
  fixtures::TempDir dir("ckpt");
  Trainer a(fixtures::tiny_model(), fixtures::tiny_train(3), stats);
  a.train_epoch(prepared);
  a.set_best_val_2d(12.5);
  a.save(dir / "a.ckpt");

  Trainer b(fixtures::tiny_model(), fixtures::tiny_train(3), stats);
  b.restore(dir / "a.ckpt");
  CHECK(all_values(b.model()) == all_values(a.model()));
  CHECK(b.step() == a.step());
  CHECK(b.epoch() == 1);
  CHECK(b.best_val_2d() == 12.5);
  CHECK(b.optimizer().steps() == a.optimizer().steps());
  CHECK(b.optimizer().first_moments() == a.optimizer().first_moments());
  CHECK(b.optimizer().second_moments() == a.optimizer().second_moments());
  // Subsequent epochs agree exactly, so the shuffle RNG came back too.
  CHECK(a.train_epoch(prepared) == b.train_epoch(prepared));

  const auto meta = read_checkpoint_meta(dir / "a.ckpt");
  CHECK(meta.model == fixtures::tiny_model());
  CHECK(meta.epochs_completed == 1);
  CHECK(meta.normalization == stats);
  CHECK(meta.tensors.size() > 10);

  const auto loaded = load_model(dir / "a.ckpt");
  CHECK(loaded.model->config() == fixtures::tiny_model());

  auto other_model = fixtures::tiny_model();
  other_model.head_hidden_sizes = {16};
  Trainer c(other_model, fixtures::tiny_train(3), stats);
  CHECK_THROWS_AS(c.restore(dir / "a.ckpt"), ConfigError);
  Trainer d(fixtures::tiny_model(), fixtures::tiny_train(5), stats);
  CHECK_THROWS_AS(d.restore(dir / "a.ckpt"), ConfigError);

  const auto bytes = fixtures::read_bytes(dir / "a.ckpt");
  {
    std::ofstream out(dir / "short.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 100));
  }
  CHECK_THROWS_AS(load_model(dir / "short.ckpt"), FormatError);
  {
    std::ofstream out(dir / "magic.ckpt", std::ios::binary);
    out << "NOTACKPT" << bytes.substr(8);
  }
  CHECK_THROWS_AS(read_checkpoint_meta(dir / "magic.ckpt"), FormatError);
  CHECK_THROWS_AS(read_checkpoint_meta(dir / "none.ckpt"), FormatError);
}

TEST_CASE("train writes logs and checkpoints, and resumes exactly") {
  const auto& root = fixtures::shared_dataset();
  fixtures::TempDir full("full"), part("part");
  const auto cfg = fixtures::tiny_train(3);
  const auto r = train(fixtures::tiny_model(), cfg, root, full.path());
  CHECK(r.log.size() == 3);
  CHECK(fs::exists(full / "best.ckpt"));
  CHECK(fs::exists(full / "last.ckpt"));
  const auto log = read_jsonl(full / "train_log.jsonl");
  REQUIRE(log.size() == 3);
  for (int e = 0; e < 3; ++e) {
    const auto& rec = log[static_cast<std::size_t>(e)];
    CHECK(rec.at("epoch") == e);
    for (const char* k : {"lr", "train_loss", "val_2d_mean", "val_3d_mean", "wall_time"}) CHECK(rec.contains(k));
    CHECK(rec.at("lr").get<double>() == doctest::Approx(learning_rate(cfg, e)));
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.log) best = std::min(best, rec.val_2d_mean);
  CHECK(r.best_val_2d == best);
  CHECK(read_checkpoint_meta(full / "last.ckpt").epochs_completed == 3);

  TrainOptions stop;
  stop.stop_after_epochs = 1;
  const auto first = train(fixtures::tiny_model(), cfg, root, part.path(), stop);
  CHECK(first.log.size() == 1);
  TrainOptions resume;
  resume.resume = part / "last.ckpt";
  const auto rest = train(fixtures::tiny_model(), cfg, root, part.path(), resume);
  REQUIRE(rest.log.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(rest.log[e].train_loss == r.log[e].train_loss);
    CHECK(rest.log[e].val_2d_mean == r.log[e].val_2d_mean);
    CHECK(rest.log[e].val_3d_mean == r.log[e].val_3d_mean);
  }
  CHECK(read_jsonl(part / "train_log.jsonl").size() == 3);
}

TEST_CASE("train rejects unusable datasets") {
  fixtures::TempDir dir("noval");
  generate_dataset(fixtures::small_spec(), SplitCounts{2, 0, 1}, dir.path(), 3);
  fixtures::TempDir out("noval_out");
  CHECK_THROWS_AS(train(fixtures::tiny_model(), fixtures::tiny_train(1), dir.path(), out.path()), ConfigError);
  CHECK_THROWS(train(fixtures::tiny_model(), fixtures::tiny_train(1), dir / "missing", out.path()));
}

TEST_CASE("overfit probe") {
  const auto& samples = train_samples();
  const auto none = overfit_probe(fixtures::tiny_model(), fixtures::tiny_train(), samples, 0);
  CHECK(none.steps_run == 0);
  CHECK(none.final_error_2d == none.initial_error_2d);

  auto cfg = fixtures::tiny_train();
  cfg.lr_initial = cfg.lr_final = 1e-3;
  cfg.batch_size = 8;
  auto image_only = fixtures::tiny_model();
  image_only.branches = BranchFlags::parse("image");
  const auto r = overfit_probe(image_only, cfg, samples, 30);
  REQUIRE(r.losses.size() == 30);
  // Five-step moving average falls from start to end.
  auto smoothed = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + 5; ++k) s += r.losses[k];
    return s / 5.0;
  };
  CHECK(smoothed(25) < smoothed(0));

  int calls = 0;
  const auto early = overfit_probe(fixtures::tiny_model(), fixtures::tiny_train(), samples, 10,
                                   [&](int, double, double) { return ++calls < 3; });
  CHECK(early.steps_run == 3);
}
