#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gammasense/dataio.hpp"
#include "gammasense/model.hpp"

namespace gammasense {

enum class LossSpace { normalized, pixel };

std::string to_string(LossSpace space);
LossSpace parse_loss_space(const std::string& name);

struct TrainConfig {
  int batch_size = 8;
  int epochs = 50;
  double lr_initial = 1e-4;
  double lr_final = 8e-5;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;  // epochs between "last" checkpoint writes
  int target_size = 256;
  LossSpace loss_space = LossSpace::normalized;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kAdamEps = 1e-8;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

/// Linear decay from lr_initial at epoch 0 to lr_final at epoch epochs-1.
double learning_rate(const TrainConfig& config, int epoch);

// ---------------------------------------------------------------------------
// Loss

/// Squared Euclidean distance.
double point_loss(const Point2D& pred, const Point2D& gt);
/// d loss / d pred = 2 (pred - gt).
Point2D point_loss_gradient(const Point2D& pred, const Point2D& gt);

template <typename T>
struct BatchLoss {
  double value = 0.0;             // mean over the batch
  std::vector<double> per_sample;  // in the chosen space
  nn::Tensor<T> grad;              // d value / d pred, N x 2
};

/// pred and target are N x 2 normalized coordinates. `scales` (one per sample)
/// multiplies the residual before squaring: 1 for normalized loss, the padded
/// square size S for pixel loss.
template <typename T>
BatchLoss<T> batch_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, std::span<const double> scales);

std::vector<double> loss_scales(const Batch& batch, LossSpace space);

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
class Adam {
 public:
  Adam(nn::ParamList<T> params, double beta1 = TrainConfig::kBeta1, double beta2 = TrainConfig::kBeta2,
       double eps = TrainConfig::kAdamEps);

  void step(double lr);
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }
  /// First / second moments, aligned with the trainable entries of the parameter list.
  std::vector<nn::Tensor<T>>& first_moments() { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() { return v_; }
  const nn::ParamList<T>& trainable() const { return params_; }

 private:
  nn::ParamList<T> params_;
  std::vector<nn::Tensor<T>> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_2d_mean = 0.0;
  double val_3d_mean = 0.0;
  double wall_time = 0.0;  // seconds since the start of the (possibly resumed) run

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
};

struct CheckpointMeta {
  ModelConfig model;
  TrainConfig train;
  NormalizationStats normalization;
  int epochs_completed = 0;
  std::int64_t step = 0;
  double best_val_2d = 0.0;  // +inf encoded as null
  std::string rng_state;
  std::vector<EpochRecord> history;
  nlohmann::json tensors;  // manifest of names / shapes, filled on read
};

inline constexpr const char* kCheckpointMagic = "GSCKPT01";

/// Binary layout: 8-byte magic, little-endian uint64 header length, JSON header
/// (metadata plus a manifest of every tensor with shape and offset), then the
/// raw little-endian float32 payload.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const nn::ParamList<float>& params,
                     Adam<float>* optimizer);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Loads tensors into `params` (and optimizer moments when given). Throws
/// FormatError on a corrupt file and ConfigError on a name or shape mismatch.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, const nn::ParamList<float>& params,
                               Adam<float>* optimizer);

struct LoadedModel {
  CheckpointMeta meta;
  std::unique_ptr<SensingNet<float>> model;
};
LoadedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training

/// Network inputs as tensors; one entry per sample.
std::vector<PreparedSample> prepare_samples(const std::vector<StereoSample>& samples, int target_size,
                                            const NormalizationStats& stats);

/// Predictions in normalized coordinates (N x 2), inference mode, in batches.
std::vector<Point2D> predict_normalized(SensingNet<float>& model, const std::vector<PreparedSample>& samples,
                                        int batch_size);

/// Mean 2D (px, original resolution) and 3D (mm, valid-depth rows only) errors.
struct ValidationErrors {
  double mean_2d = 0.0;
  double mean_3d = 0.0;
  int depth_missing = 0;
};
ValidationErrors validation_errors(SensingNet<float>& model, const std::vector<StereoSample>& samples,
                                   const std::vector<PreparedSample>& prepared, int batch_size);

/// Owns the model, optimizer and shuffle RNG; one instance drives a run.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& train_config, const NormalizationStats& stats);

  /// One optimizer step on a batch; returns the batch loss. Throws NumericError on NaN.
  double train_step(const Batch& batch, double lr);
  /// Shuffled pass over the samples at the current epoch's learning rate;
  /// returns the mean loss and advances the epoch counter.
  double train_epoch(const std::vector<PreparedSample>& samples);

  SensingNet<float>& model() { return *model_; }
  Adam<float>& optimizer() { return *optimizer_; }
  const TrainConfig& config() const { return train_config_; }
  const NormalizationStats& normalization() const { return stats_; }
  std::int64_t step() const { return step_; }
  int epoch() const { return epoch_; }

  CheckpointMeta snapshot_meta() const;
  void save(const std::filesystem::path& path) const;
  void restore(const std::filesystem::path& path);

  std::vector<EpochRecord>& history() { return history_; }
  double best_val_2d() const { return best_val_2d_; }
  void set_best_val_2d(double v) { best_val_2d_ = v; }

 private:
  ModelConfig model_config_;
  TrainConfig train_config_;
  NormalizationStats stats_;
  std::unique_ptr<SensingNet<float>> model_;
  std::unique_ptr<Adam<float>> optimizer_;
  std::mt19937_64 shuffle_rng_;
  std::int64_t step_ = 0;
  int epoch_ = 0;  // epochs completed
  double best_val_2d_;
  std::vector<EpochRecord> history_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::optional<int> stop_after_epochs;          // simulate an interruption
  std::function<void(const EpochRecord&)> on_epoch;  // called after each logged epoch
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log_path;
  double best_val_2d = 0.0;
};

/// Trains on data_root's train split, validates on val, writes
/// out_dir/{train_log.jsonl,best.ckpt,last.ckpt}.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::filesystem::path& data_root, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

struct OverfitResult {
  double initial_error_2d = 0.0;
  double final_error_2d = 0.0;        // inference mode
  double final_train_mode_error_2d = 0.0;  // batch statistics
  std::vector<double> losses;         // one per step
  double seconds = 0.0;
  int steps_run = 0;
};

/// Trains on the given samples with validation = training set. Steps are
/// full passes (batch = all samples up to batch_size). `step_callback`, when
/// set, is invoked after every step with (step, loss, elapsed seconds) and may
/// return false to stop early.
OverfitResult overfit_probe(const ModelConfig& model_config, const TrainConfig& train_config,
                            const std::vector<StereoSample>& samples, int steps,
                            const std::function<bool(int, double, double)>& step_callback = {});

}  // namespace gammasense
