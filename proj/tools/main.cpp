// gammasense command-line tool: gen, train, eval, predict, selftest.
//
// Configuration precedence: built-in defaults < --config JSON file < flags.
// Every run leaves a run.json (resolved config, seed, versions, timing) in its
// output directory. Exit codes: 0 success, 1 internal failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gammasense/build_info.hpp"
#include "gammasense/dataio.hpp"
#include "gammasense/errors.hpp"
#include "gammasense/evaluation.hpp"
#include "gammasense/scenegen.hpp"
#include "gammasense/selftest.hpp"
#include "gammasense/training.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace gs = gammasense;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags of one subcommand, each mirrored as a config-file key.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    auto* opt = app_->add_option("--" + name, var, help)->capture_default_str();
    entries_.push_back({name, opt,
                        [&var, name](const json& j) {
                          try {
                            var = j.get<T>();
                          } catch (const json::exception&) {
                            throw UsageError("config key '" + name + "' has the wrong type");
                          }
                        },
                        [&var] { return json(var); }});
    return opt;
  }

  /// Optional path: empty means unset, shown as "none".
  CLI::Option* add_path(const std::string& name, std::string& var, const std::string& help) {
    auto* opt = add(name, var, help);
    if (var.empty()) opt->default_str("none");
    return opt;
  }

  void apply_config_file(const std::string& path) {
    if (path.empty()) return;
    json j;
    try {
      j = gs::read_json_file(path, "config");
    } catch (const gs::FormatError& e) {
      throw UsageError(e.what());
    }
    // A previous run.json can be replayed directly.
    if (j.is_object() && j.contains("config") && j.contains("command")) j = j.at("config");
    if (!j.is_object()) throw UsageError("config file " + path + " must hold a flat JSON object");
    for (const auto& [raw_key, value] : j.items()) {
      std::string key = raw_key;
      std::replace(key.begin(), key.end(), '_', '-');
      if (key == "config") continue;
      auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == key; });
      if (it == entries_.end()) throw UsageError("config file " + path + ": unknown key '" + raw_key + "'");
      if (it->option->count() == 0) it->from_json(value);
    }
  }

  json resolved() const {
    json out = json::object();
    for (const auto& e : entries_) out[e.name] = e.to_json();
    return out;
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* option;
    std::function<void(const json&)> from_json;
    std::function<json()> to_json;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--" + flag + ": '" + text + "' is not a comma-separated list of integers");
    }
  }
  return out;
}

void require_value(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError("--" + flag + " is required");
}

void require_exists(const fs::path& p, const std::string& flag) {
  if (!fs::exists(p)) throw UsageError("--" + flag + ": " + p.string() + " does not exist");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  int train = 8;
  int val = 2;
  int test = 2;
  std::uint64_t seed = 0;
  int width = 256;
  int height = 192;
  double focal = 280.0;
  double baseline = 5.0;
  int max_attempts = 100;
};

struct TrainArgs {
  std::string data;
  std::string out;
  int epochs = 50;
  int batch_size = 8;
  int target_size = 256;
  double lr_initial = 1e-4;
  double lr_final = 8e-5;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;
  std::string loss_space = "normalized";
  std::string branches = "image,depth,axis";
  int base_channels = 16;
  std::string blocks = "3,4,6,3";
  int ebn_expansion = 4;
  int decoder_stages = 2;
  std::string head_hidden = "128";
  std::string resume;
  int stop_after = 0;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
  int batch_size = 8;
};

struct PredictArgs {
  std::string checkpoint;
  std::string sample;
  std::string overlay;
  std::string out = ".";
};

struct SelftestArgs {
  std::string out = ".";
};

// Filled by the running command so the error path can still leave a run.json.
struct RunRecord {
  std::string command;
  json config;
  std::optional<std::uint64_t> seed;
  fs::path out_dir;
  json result = json::object();
};

int run_gen(const GenArgs& a, RunRecord& rec) {
  require_value(a.out, "out");
  rec.out_dir = a.out;
  rec.seed = a.seed;
  gs::SceneSpec spec;
  spec.rig.width = a.width;
  spec.rig.height = a.height;
  spec.rig.focal_px = spec.rig.alpha = spec.rig.beta = a.focal;
  spec.rig.baseline_mm = a.baseline;
  spec.rig.cx = (a.width - 1) / 2.0;
  spec.rig.cy = (a.height - 1) / 2.0;
  spec.max_attempts = a.max_attempts;
  try {
    spec.rig.validate();
  } catch (const gs::ContractViolation& e) {
    throw UsageError(e.what());
  }
  const auto manifest = gs::generate_dataset(spec, {a.train, a.val, a.test}, a.out, a.seed);
  std::size_t total = 0;
  for (const auto& [name, ids] : manifest.splits) total += ids.size();
  std::cout << "generated " << total << " samples in " << a.out << " (train " << a.train << ", val " << a.val
            << ", test " << a.test << ")\n";
  rec.result = {{"samples", total}};
  return 0;
}

int run_train(const TrainArgs& a, RunRecord& rec) {
  require_value(a.data, "data");
  require_value(a.out, "out");
  require_exists(fs::path(a.data) / "manifest.json", "data");
  if (!a.resume.empty()) require_exists(a.resume, "resume");
  if (a.stop_after < 0) throw UsageError("--stop-after must be >= 0");
  rec.out_dir = a.out;
  rec.seed = a.seed;

  gs::ModelConfig model;
  model.base_channels = a.base_channels;
  const auto blocks = parse_int_list(a.blocks, "blocks");
  if (blocks.size() != 4) throw UsageError("--blocks needs four comma-separated counts");
  std::copy(blocks.begin(), blocks.end(), model.block_counts.begin());
  model.ebn_expansion = a.ebn_expansion;
  model.branches = gs::BranchFlags::parse(a.branches);
  model.decoder_stages = a.decoder_stages;
  model.head_hidden_sizes = parse_int_list(a.head_hidden, "head-hidden");
  model.validate();

  gs::TrainConfig train;
  train.batch_size = a.batch_size;
  train.epochs = a.epochs;
  train.lr_initial = a.lr_initial;
  train.lr_final = a.lr_final;
  train.seed = a.seed;
  train.checkpoint_every = a.checkpoint_every;
  train.target_size = a.target_size;
  train.loss_space = gs::parse_loss_space(a.loss_space);
  train.validate();

  gs::TrainOptions options;
  if (!a.resume.empty()) options.resume = fs::path(a.resume);
  if (a.stop_after > 0) options.stop_after_epochs = a.stop_after;
  options.on_epoch = [&](const gs::EpochRecord& r) {
    std::cout << "epoch " << r.epoch + 1 << "/" << a.epochs << "  lr " << std::scientific << std::setprecision(3) << r.lr
              << std::defaultfloat << "  train_loss " << fixed(r.train_loss, 6) << "  val_2d " << fixed(r.val_2d_mean, 2)
              << " px  val_3d " << fixed(r.val_3d_mean, 2) << " mm  (" << fixed(r.wall_time, 1) << " s)" << std::endl;
  };
  const auto result = gs::train(model, train, a.data, a.out, options);
  std::cout << "best val 2D " << fixed(result.best_val_2d, 2) << " px; checkpoints in " << a.out << "\n";
  rec.result = {{"epochs_logged", result.log.size()},
                {"best_val_2d", result.best_val_2d},
                {"best_checkpoint", result.best_checkpoint.string()},
                {"last_checkpoint", result.last_checkpoint.string()}};
  return 0;
}

int run_eval(const EvalArgs& a, RunRecord& rec) {
  require_value(a.checkpoint, "checkpoint");
  require_value(a.data, "data");
  require_exists(a.checkpoint, "checkpoint");
  require_exists(fs::path(a.data) / "manifest.json", "data");
  if (a.split != "train" && a.split != "val" && a.split != "test")
    throw UsageError("--split must be one of train, val, test");
  const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / ("eval_" + a.split) : fs::path(a.out);
  rec.out_dir = out;
  gs::EvaluateOptions options;
  options.batch_size = a.batch_size;
  options.report_dir = out;
  const auto report = gs::evaluate(a.checkpoint, a.data, a.split, options);
  std::cout << report.to_table(fs::path(a.checkpoint).stem().string());
  std::cout << "excluded from 3D: " << report.excluded_3d << "\nreport written to " << out.string() << "\n";
  rec.result = {{"rows", report.rows.size()},
                {"mean_2d_px", report.metrics_2d.mean},
                {"mean_3d_mm", report.metrics_3d.mean},
                {"report", (out / "report.json").string()}};
  return 0;
}

int run_predict(const PredictArgs& a, RunRecord& rec) {
  require_value(a.checkpoint, "checkpoint");
  require_value(a.sample, "sample");
  require_exists(a.checkpoint, "checkpoint");
  require_exists(fs::path(a.sample) / "label.json", "sample");
  rec.out_dir = a.out;
  auto loaded = gs::load_model(a.checkpoint);
  const auto sample = gs::load_sample(a.sample);
  const auto prepared = gs::prepare_sample(sample, loaded.meta.train.target_size, loaded.meta.normalization);
  const auto pred_n = gs::predict_normalized(*loaded.model, {prepared}, 1).front();
  const auto pred = prepared.transform.from_normalized(pred_n);
  const auto row = gs::score_prediction(sample, pred);
  if (!a.overlay.empty()) {
    bool clamped = false;
    gs::write_png(a.overlay, gs::render_overlay(sample, pred, &clamped));
  }
  rec.result = row.to_json();
  std::cout << rec.result.dump() << "\n";
  return 0;
}

int run_selftest(const SelftestArgs& a, RunRecord& rec) {
  rec.out_dir = a.out;
  bool all = true;
  json suites = json::array();
  gs::run_selftests([&](const gs::SelftestResult& r) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "  [" << fixed(r.seconds, 1)
              << " s]" << std::endl;
    all = all && r.passed;
    suites.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}});
  });
  rec.result = {{"suites", suites}, {"all_passed", all}};
  return all ? 0 : 1;
}

void write_run_json(const RunRecord& rec, const std::string& started, double seconds, int exit_code,
                    const std::string& error, const std::vector<std::string>& argv) {
  if (rec.out_dir.empty()) return;
  json j = {{"command", rec.command},
            {"argv", argv},
            {"config", rec.config},
            {"seed", rec.seed ? json(*rec.seed) : json(nullptr)},
            {"versions", gs::build_info()},
            {"timing", {{"started_utc", started}, {"seconds", seconds}}},
            {"exit_code", exit_code},
            {"result", rec.result}};
  if (!error.empty()) j["error"] = error;
  std::error_code ec;
  fs::create_directories(rec.out_dir, ec);
  try {
    gs::write_json_file(rec.out_dir / "run.json", j);
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write run.json: " << e.what() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensing-area prediction for a drop-in gamma probe: synthetic data, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gs::build_info().at("gammasense").get<std::string>());

  GenArgs gen_args;
  TrainArgs train_args;
  EvalArgs eval_args;
  PredictArgs predict_args;
  SelftestArgs selftest_args;
  std::string config_path;

  struct Command {
    CLI::App* app;
    std::unique_ptr<FlagSet> flags;
    std::function<int(RunRecord&)> run;
  };
  std::vector<Command> commands;
  auto add_command = [&](const std::string& name, const std::string& help) -> Command& {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Flat JSON file of flag values (or a previous run.json)")
        ->default_str("none");
    commands.push_back({sub, std::make_unique<FlagSet>(sub), {}});
    return commands.back();
  };

  {
    auto& c = add_command("gen", "Generate a synthetic stereo dataset");
    auto& f = *c.flags;
    f.add_path("out", gen_args.out, "Output dataset directory (required)");
    f.add("train", gen_args.train, "Training samples");
    f.add("val", gen_args.val, "Validation samples");
    f.add("test", gen_args.test, "Test samples");
    f.add("seed", gen_args.seed, "Dataset seed");
    f.add("width", gen_args.width, "Image width (px)");
    f.add("height", gen_args.height, "Image height (px)");
    f.add("focal", gen_args.focal, "Focal length and pixel scaling (px)");
    f.add("baseline", gen_args.baseline, "Stereo baseline (mm)");
    f.add("max-attempts", gen_args.max_attempts, "Pose draws per sample before giving up");
    c.run = [&](RunRecord& r) { return run_gen(gen_args, r); };
  }
  {
    auto& c = add_command("train", "Train the three-branch network");
    auto& f = *c.flags;
    f.add_path("data", train_args.data, "Dataset directory (required)");
    f.add_path("out", train_args.out, "Run directory for checkpoints and train_log.jsonl (required)");
    f.add("epochs", train_args.epochs, "Training epochs");
    f.add("batch-size", train_args.batch_size, "Mini-batch size");
    f.add("target-size", train_args.target_size, "Network input size (multiple of 32)");
    f.add("lr-initial", train_args.lr_initial, "Learning rate at the first epoch");
    f.add("lr-final", train_args.lr_final, "Learning rate at the last epoch (linear decay)");
    f.add("seed", train_args.seed, "Initialization and shuffle seed");
    f.add("checkpoint-every", train_args.checkpoint_every, "Epochs between last.ckpt writes");
    f.add("loss-space", train_args.loss_space, "Loss coordinates: normalized or pixel");
    f.add("branches", train_args.branches, "Enabled branches: image[,depth][,axis]");
    f.add("base-channels", train_args.base_channels, "Stem output channels");
    f.add("blocks", train_args.blocks, "Blocks per encoder module");
    f.add("ebn-expansion", train_args.ebn_expansion, "Channel expansion of each expanded bottleneck (2 or 4)");
    f.add("decoder-stages", train_args.decoder_stages, "Decoder upsampling stages (0-4)");
    f.add("head-hidden", train_args.head_hidden, "Hidden widths of the fusion head");
    f.add_path("resume", train_args.resume, "Checkpoint to continue from");
    f.add("stop-after", train_args.stop_after, "Stop after this many epochs in this invocation (0 = run to the end)");
    c.run = [&](RunRecord& r) { return run_train(train_args, r); };
  }
  {
    auto& c = add_command("eval", "Evaluate a checkpoint on a dataset split");
    auto& f = *c.flags;
    f.add_path("checkpoint", eval_args.checkpoint, "Checkpoint file (required)");
    f.add_path("data", eval_args.data, "Dataset directory (required)");
    f.add("split", eval_args.split, "Split to evaluate: train, val or test");
    f.add_path("out", eval_args.out, "Report directory (default: eval_<split> next to the checkpoint)");
    f.add("batch-size", eval_args.batch_size, "Inference batch size");
    c.run = [&](RunRecord& r) { return run_eval(eval_args, r); };
  }
  {
    auto& c = add_command("predict", "Predict the sensing point of one sample");
    auto& f = *c.flags;
    f.add_path("checkpoint", predict_args.checkpoint, "Checkpoint file (required)");
    f.add_path("sample", predict_args.sample, "Sample directory (required)");
    f.add_path("overlay", predict_args.overlay, "Write an overlay PNG here");
    f.add("out", predict_args.out, "Directory for run.json");
    c.run = [&](RunRecord& r) { return run_predict(predict_args, r); };
  }
  {
    auto& c = add_command("selftest", "Run the built-in oracle suites");
    c.flags->add("out", selftest_args.out, "Directory for run.json");
    c.run = [&](RunRecord& r) { return run_selftest(selftest_args, r); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::string> args(argv, argv + argc);
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  RunRecord rec;
  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    rec.command = c.app->get_name();
    int code = 0;
    std::string error;
    try {
      c.flags->apply_config_file(config_path);
      rec.config = c.flags->resolved();
      code = c.run(rec);
    } catch (const UsageError& e) {
      error = e.what();
      code = 2;
    } catch (const gs::ConfigError& e) {
      error = e.what();
      code = 2;
    } catch (const std::exception& e) {
      error = e.what();
      code = 1;
    }
    if (!error.empty()) std::cerr << "error: " << error << "\n";
    write_run_json(rec, started, elapsed(), code, error, args);
    return code;
  }
  return 2;
}
