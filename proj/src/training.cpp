#include "gammasense/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "gammasense/evaluation.hpp"

namespace gammasense {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string to_string(LossSpace space) { return space == LossSpace::pixel ? "pixel" : "normalized"; }

LossSpace parse_loss_space(const std::string& name) {
  if (name == "normalized") return LossSpace::normalized;
  if (name == "pixel") return LossSpace::pixel;
  throw ConfigError("loss_space must be 'normalized' or 'pixel', got '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr_initial >= 0.0) || !(lr_final >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (lr_final > lr_initial) throw ConfigError("lr_final must not exceed lr_initial");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (target_size < 32 || target_size % 32 != 0) throw ConfigError("target_size must be a positive multiple of 32");
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"lr_initial", lr_initial},
          {"lr_final", lr_final},
          {"lr_schedule", "linear"},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"target_size", target_size},
          {"loss_space", to_string(loss_space)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.lr_initial = j.at("lr_initial").get<double>();
    c.lr_final = j.at("lr_final").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.target_size = j.at("target_size").get<int>();
    c.loss_space = parse_loss_space(j.at("loss_space").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs) throw ContractViolation("learning_rate: epoch out of range");
  if (config.epochs == 1) return config.lr_initial;
  const double t = static_cast<double>(epoch) / (config.epochs - 1);
  return config.lr_initial + (config.lr_final - config.lr_initial) * t;
}

// ---------------------------------------------------------------------------
// Loss

double point_loss(const Point2D& pred, const Point2D& gt) {
  const double du = pred.u - gt.u;
  const double dv = pred.v - gt.v;
  return du * du + dv * dv;
}

Point2D point_loss_gradient(const Point2D& pred, const Point2D& gt) {
  return {2.0 * (pred.u - gt.u), 2.0 * (pred.v - gt.v)};
}

template <typename T>
BatchLoss<T> batch_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, std::span<const double> scales) {
  pred.require_same_shape(target, "batch_loss");
  if (pred.rank() != 2 || pred.dim(1) != 2) throw ContractViolation("batch_loss: expected N x 2 predictions");
  const int n = pred.dim(0);
  if (n == 0 || static_cast<int>(scales.size()) != n) throw ContractViolation("batch_loss: one scale per sample required");
  BatchLoss<T> out;
  out.grad = nn::Tensor<T>({n, 2});
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = scales[static_cast<std::size_t>(i)];
    const Point2D p{s * pred.at(i, 0), s * pred.at(i, 1)};
    const Point2D g{s * target.at(i, 0), s * target.at(i, 1)};
    const double l = point_loss(p, g);
    out.per_sample.push_back(l);
    total += l;
    const Point2D d = point_loss_gradient(p, g);
    out.grad.at(i, 0) = static_cast<T>(d.u * s / n);
    out.grad.at(i, 1) = static_cast<T>(d.v * s / n);
  }
  out.value = total / n;
  return out;
}

template BatchLoss<float> batch_loss(const nn::Tensor<float>&, const nn::Tensor<float>&, std::span<const double>);
template BatchLoss<double> batch_loss(const nn::Tensor<double>&, const nn::Tensor<double>&, std::span<const double>);

std::vector<double> loss_scales(const Batch& batch, LossSpace space) {
  std::vector<double> scales;
  for (const auto& t : batch.transforms) scales.push_back(space == LossSpace::pixel ? t.layout.size : 1.0);
  return scales;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(nn::ParamList<T> params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& p : params) {
    if (!p.trainable()) continue;
    m_.emplace_back(p.value->shape());
    v_.emplace_back(p.value->shape());
    params_.push_back(p);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_), eps = static_cast<T>(eps_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    T* w = params_[k].value->data();
    const T* g = params_[k].grad->data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    const std::size_t n = params_[k].value->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------
// Checkpoints

json EpochRecord::to_json() const {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"epoch", epoch},
          {"lr", lr},
          {"train_loss", num(train_loss)},
          {"val_2d_mean", num(val_2d_mean)},
          {"val_3d_mean", num(val_3d_mean)},
          {"wall_time", wall_time}};
}

EpochRecord EpochRecord::from_json(const json& j) {
  auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = num("train_loss");
  r.val_2d_mean = num("val_2d_mean");
  r.val_3d_mean = num("val_3d_mean");
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

namespace {

constexpr std::size_t kMagicSize = 8;

struct TensorEntry {
  std::string name;
  std::string role;
  nn::Shape shape;
  std::size_t offset = 0;  // in float elements from the payload start
  std::size_t count = 0;
};

std::string key_of(const std::string& name, const std::string& role) { return role + ":" + name; }

void write_floats(std::ofstream& out, const nn::Tensor<float>& t) {
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

struct ParsedHeader {
  json header;
  std::uint64_t payload_start = 0;
  std::map<std::string, TensorEntry> entries;
};

ParsedHeader parse_header(std::ifstream& in, const fs::path& path) {
  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  if (!in || std::memcmp(magic, kCheckpointMagic, kMagicSize) != 0)
    throw FormatError("checkpoint " + path.string() + ": bad magic (not a checkpoint file)");
  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof(header_size));
  if (!in || header_size == 0 || header_size > (1u << 30))
    throw FormatError("checkpoint " + path.string() + ": bad header length");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw FormatError("checkpoint " + path.string() + ": truncated header");
  ParsedHeader out;
  try {
    out.header = json::parse(text);
    for (const auto& t : out.header.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.role = t.at("role").get<std::string>();
      e.shape = t.at("shape").get<nn::Shape>();
      e.offset = t.at("offset").get<std::size_t>();
      e.count = t.at("count").get<std::size_t>();
      if (e.count != nn::Tensor<float>::element_count(e.shape))
        throw FormatError("checkpoint " + path.string() + ": tensor '" + e.name + "' count does not match its shape");
      out.entries[key_of(e.name, e.role)] = e;
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": corrupt header (" + e.what() + ")");
  }
  out.payload_start = kMagicSize + sizeof(header_size) + header_size;
  return out;
}

CheckpointMeta meta_from_header(const json& h) {
  CheckpointMeta meta;
  meta.model = ModelConfig::from_json(h.at("model"));
  meta.train = TrainConfig::from_json(h.at("train"));
  meta.normalization = NormalizationStats::from_json(h.at("normalization"));
  meta.epochs_completed = h.at("epochs_completed").get<int>();
  meta.step = h.at("step").get<std::int64_t>();
  meta.best_val_2d = h.at("best_val_2d").is_null() ? std::numeric_limits<double>::infinity()
                                                    : h.at("best_val_2d").get<double>();
  meta.rng_state = h.at("rng_state").get<std::string>();
  for (const auto& r : h.at("history")) meta.history.push_back(EpochRecord::from_json(r));
  meta.tensors = h.at("tensors");
  return meta;
}

void read_into(std::ifstream& in, const ParsedHeader& parsed, const fs::path& path, const std::string& name,
               const std::string& role, nn::Tensor<float>& dst) {
  const auto it = parsed.entries.find(key_of(name, role));
  if (it == parsed.entries.end())
    throw ConfigError("checkpoint " + path.string() + ": missing tensor '" + name + "' (" + role + ")");
  const auto& e = it->second;
  if (e.shape != dst.shape())
    throw ConfigError("checkpoint " + path.string() + ": tensor '" + name + "' has shape " + nn::shape_string(e.shape) +
                      ", model expects " + nn::shape_string(dst.shape()));
  in.seekg(static_cast<std::streamoff>(parsed.payload_start + e.offset * sizeof(float)));
  in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(e.count * sizeof(float)));
  if (!in) throw FormatError("checkpoint " + path.string() + ": truncated payload at tensor '" + name + "'");
}

}  // namespace

void save_checkpoint(const fs::path& path, const CheckpointMeta& meta, const nn::ParamList<float>& params,
                     Adam<float>* optimizer) {
  std::vector<std::pair<TensorEntry, const nn::Tensor<float>*>> items;
  std::size_t offset = 0;
  auto add = [&](const std::string& name, const std::string& role, const nn::Tensor<float>& t) {
    items.push_back({TensorEntry{name, role, t.shape(), offset, t.size()}, &t});
    offset += t.size();
  };
  for (const auto& p : params) add(p.name, p.trainable() ? "param" : "buffer", *p.value);
  if (optimizer) {
    const auto& tp = optimizer->trainable();
    for (std::size_t k = 0; k < tp.size(); ++k) {
      add(tp[k].name, "adam_m", optimizer->first_moments()[k]);
      add(tp[k].name, "adam_v", optimizer->second_moments()[k]);
    }
  }

  json tensors = json::array();
  for (const auto& [e, t] : items)
    tensors.push_back({{"name", e.name}, {"role", e.role}, {"shape", e.shape}, {"offset", e.offset}, {"count", e.count}});
  json history = json::array();
  for (const auto& r : meta.history) history.push_back(r.to_json());
  json header = {{"format", "gammasense-checkpoint"},
                 {"format_version", 1},
                 {"dtype", "float32"},
                 {"model", meta.model.to_json()},
                 {"train", meta.train.to_json()},
                 {"seed", meta.train.seed},
                 {"normalization", meta.normalization.to_json()},
                 {"epochs_completed", meta.epochs_completed},
                 {"step", meta.step},
                 {"best_val_2d", std::isfinite(meta.best_val_2d) ? json(meta.best_val_2d) : json(nullptr)},
                 {"rng_state", meta.rng_state},
                 {"adam", optimizer ? json{{"steps", optimizer->steps()},
                                           {"beta1", TrainConfig::kBeta1},
                                           {"beta2", TrainConfig::kBeta2},
                                           {"eps", TrainConfig::kAdamEps}}
                                    : json(nullptr)},
                 {"history", history},
                 {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, kMagicSize);
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& item : items) write_floats(out, *item.second);
    if (!out) throw FormatError("failed while writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const auto parsed = parse_header(in, path);
  try {
    return meta_from_header(parsed.header);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": corrupt header (" + e.what() + ")");
  }
}

CheckpointMeta load_checkpoint(const fs::path& path, const nn::ParamList<float>& params, Adam<float>* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const auto parsed = parse_header(in, path);
  CheckpointMeta meta;
  try {
    meta = meta_from_header(parsed.header);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": corrupt header (" + e.what() + ")");
  }
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  std::size_t payload = 0;
  for (const auto& [k, e] : parsed.entries) payload = std::max(payload, e.offset + e.count);
  if (file_size < parsed.payload_start + payload * sizeof(float))
    throw FormatError("checkpoint " + path.string() + ": truncated payload");

  for (const auto& p : params) read_into(in, parsed, path, p.name, p.trainable() ? "param" : "buffer", *p.value);
  if (optimizer) {
    const auto& h = parsed.header.at("adam");
    if (h.is_null()) throw ConfigError("checkpoint " + path.string() + " has no optimizer state");
    const auto& tp = optimizer->trainable();
    for (std::size_t k = 0; k < tp.size(); ++k) {
      read_into(in, parsed, path, tp[k].name, "adam_m", optimizer->first_moments()[k]);
      read_into(in, parsed, path, tp[k].name, "adam_v", optimizer->second_moments()[k]);
    }
    optimizer->set_steps(h.at("steps").get<std::int64_t>());
  }
  return meta;
}

LoadedModel load_model(const fs::path& path) {
  LoadedModel out;
  out.meta = read_checkpoint_meta(path);
  out.model = std::make_unique<SensingNet<float>>(out.meta.model, out.meta.train.seed);
  load_checkpoint(path, out.model->parameters(), nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Inference helpers

std::vector<PreparedSample> prepare_samples(const std::vector<StereoSample>& samples, int target_size,
                                            const NormalizationStats& stats) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_sample(s, target_size, stats));
  return out;
}

std::vector<Point2D> predict_normalized(SensingNet<float>& model, const std::vector<PreparedSample>& samples,
                                        int batch_size) {
  if (batch_size < 1) throw ContractViolation("predict: batch_size must be >= 1");
  std::vector<Point2D> out;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const PreparedSample*> chunk;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) chunk.push_back(&samples[i]);
    const Batch batch = stack_batch(chunk);
    const auto pred = model.forward(batch.images, batch.depths, batch.axis_points, false);
    for (int i = 0; i < pred.dim(0); ++i) out.push_back({pred.at(i, 0), pred.at(i, 1)});
  }
  return out;
}

ValidationErrors validation_errors(SensingNet<float>& model, const std::vector<StereoSample>& samples,
                                   const std::vector<PreparedSample>& prepared, int batch_size) {
  if (samples.size() != prepared.size()) throw ContractViolation("validation_errors: sample count mismatch");
  ValidationErrors out;
  if (samples.empty()) {
    out.mean_2d = out.mean_3d = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const auto preds = predict_normalized(model, prepared, batch_size);
  double sum_2d = 0.0, sum_3d = 0.0;
  int n_3d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = score_prediction(samples[i], prepared[i].transform.from_normalized(preds[i]));
    sum_2d += row.err_2d_px;
    if (row.err_3d_mm) {
      sum_3d += *row.err_3d_mm;
      ++n_3d;
    } else {
      ++out.depth_missing;
    }
  }
  out.mean_2d = sum_2d / static_cast<double>(samples.size());
  out.mean_3d = n_3d > 0 ? sum_3d / n_3d : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {
constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ULL;
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& train_config, const NormalizationStats& stats)
    : model_config_(model_config),
      train_config_(train_config),
      stats_(stats),
      shuffle_rng_(train_config.seed ^ kShuffleSalt),
      best_val_2d_(std::numeric_limits<double>::infinity()) {
  model_config_.validate();
  train_config_.validate();
  model_ = std::make_unique<SensingNet<float>>(model_config_, train_config_.seed);
  optimizer_ = std::make_unique<Adam<float>>(model_->parameters());
}

double Trainer::train_step(const Batch& batch, double lr) {
  model_->zero_grad();
  const auto pred = model_->forward(batch.images, batch.depths, batch.axis_points, true);
  const auto scales = loss_scales(batch, train_config_.loss_space);
  const auto loss = batch_loss(pred, batch.targets, scales);
  if (!std::isfinite(loss.value)) {
    std::ostringstream msg;
    msg << "non-finite training loss at epoch " << epoch_ << ", step " << step_ << " (lr " << lr << ")";
    throw NumericError(msg.str());
  }
  model_->backward(loss.grad);
  optimizer_->step(lr);
  ++step_;
  return loss.value;
}

double Trainer::train_epoch(const std::vector<PreparedSample>& samples) {
  if (samples.empty()) throw ContractViolation("train_epoch: no training samples");
  const double lr = learning_rate(train_config_, epoch_);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), shuffle_rng_);
  double total = 0.0;
  const auto bs = static_cast<std::size_t>(train_config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const PreparedSample*> chunk;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) chunk.push_back(&samples[order[i]]);
    total += train_step(stack_batch(chunk), lr) * static_cast<double>(chunk.size());
  }
  ++epoch_;
  return total / static_cast<double>(samples.size());
}

CheckpointMeta Trainer::snapshot_meta() const {
  CheckpointMeta meta;
  meta.model = model_config_;
  meta.train = train_config_;
  meta.normalization = stats_;
  meta.epochs_completed = epoch_;
  meta.step = step_;
  meta.best_val_2d = best_val_2d_;
  std::ostringstream rng;
  rng << shuffle_rng_;
  meta.rng_state = rng.str();
  meta.history = history_;
  return meta;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, snapshot_meta(), model_->parameters(), optimizer_.get()); }

void Trainer::restore(const fs::path& path) {
  const auto header = read_checkpoint_meta(path);
  if (!(header.model == model_config_))
    throw ConfigError("checkpoint " + path.string() + " was written for a different model configuration");
  if (!(header.train == train_config_))
    throw ConfigError("checkpoint " + path.string() + " was written for a different training configuration");
  const auto meta = load_checkpoint(path, model_->parameters(), optimizer_.get());
  stats_ = meta.normalization;
  epoch_ = meta.epochs_completed;
  step_ = meta.step;
  best_val_2d_ = meta.best_val_2d;
  history_ = meta.history;
  std::istringstream rng(meta.rng_state);
  rng >> shuffle_rng_;
  if (!rng) throw FormatError("checkpoint " + path.string() + ": corrupt RNG state");
}

// ---------------------------------------------------------------------------
// Training driver

namespace {

void write_log(const fs::path& path, const std::vector<EpochRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write training log " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

void append_log(const fs::path& path, const EpochRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot append to training log " + path.string());
  out << record.to_json().dump() << '\n';
}

void require_rig(const std::vector<StereoSample>& samples, const CameraRig& rig, const std::string& split) {
  for (const auto& s : samples)
    if (!(s.rig == rig))
      throw ConfigError("dataset/manifest mismatch: sample '" + s.sample_id + "' in split '" + split +
                        "' does not use the manifest camera rig");
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, const fs::path& data_root,
                  const fs::path& out_dir, const TrainOptions& options) {
  model_config.validate();
  train_config.validate();
  const auto manifest = read_manifest(data_root);
  manifest.validate(data_root);
  const auto train_samples = load_split(data_root, manifest, "train");
  const auto val_samples = load_split(data_root, manifest, "val");
  if (train_samples.empty()) throw ConfigError("dataset " + data_root.string() + " has an empty train split");
  if (val_samples.empty()) throw ConfigError("dataset " + data_root.string() + " has an empty val split");
  require_rig(train_samples, manifest.rig, "train");
  require_rig(val_samples, manifest.rig, "val");

  Trainer trainer(model_config, train_config, manifest.normalization);
  if (options.resume) {
    trainer.restore(*options.resume);
    if (!(trainer.normalization() == manifest.normalization))
      throw ConfigError("checkpoint normalization statistics do not match dataset " + data_root.string());
  }
  const auto train_prepared = prepare_samples(train_samples, train_config.target_size, manifest.normalization);
  const auto val_prepared = prepare_samples(val_samples, train_config.target_size, manifest.normalization);

  fs::create_directories(out_dir);
  TrainResult result;
  result.log_path = out_dir / "train_log.jsonl";
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  write_log(result.log_path, trainer.history());

  const double time_offset = trainer.history().empty() ? 0.0 : trainer.history().back().wall_time;
  const auto start = std::chrono::steady_clock::now();
  int run_here = 0;
  while (trainer.epoch() < train_config.epochs) {
    if (options.stop_after_epochs && run_here >= *options.stop_after_epochs) break;
    EpochRecord record;
    record.epoch = trainer.epoch();
    record.lr = learning_rate(train_config, record.epoch);
    record.train_loss = trainer.train_epoch(train_prepared);
    const auto val = validation_errors(trainer.model(), val_samples, val_prepared, train_config.batch_size);
    record.val_2d_mean = val.mean_2d;
    record.val_3d_mean = val.mean_3d;
    record.wall_time =
        time_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trainer.history().push_back(record);
    append_log(result.log_path, record);
    if (options.on_epoch) options.on_epoch(record);
    ++run_here;

    const bool improved = val.mean_2d < trainer.best_val_2d();
    if (improved) trainer.set_best_val_2d(val.mean_2d);
    const bool final_epoch = trainer.epoch() == train_config.epochs;
    const bool stopping = options.stop_after_epochs && run_here >= *options.stop_after_epochs;
    if (improved) trainer.save(result.best_checkpoint);
    if (final_epoch || stopping || trainer.epoch() % train_config.checkpoint_every == 0)
      trainer.save(result.last_checkpoint);
  }
  if (!fs::exists(result.last_checkpoint)) trainer.save(result.last_checkpoint);
  if (!fs::exists(result.best_checkpoint)) trainer.save(result.best_checkpoint);
  result.log = trainer.history();
  result.best_val_2d = trainer.best_val_2d();
  return result;
}

OverfitResult overfit_probe(const ModelConfig& model_config, const TrainConfig& train_config,
                            const std::vector<StereoSample>& samples, int steps,
                            const std::function<bool(int, double, double)>& step_callback) {
  if (samples.empty()) throw ContractViolation("overfit_probe: no samples");
  if (steps < 0) throw ContractViolation("overfit_probe: negative step count");
  TrainConfig config = train_config;
  config.epochs = std::max(steps, 1);
  const auto stats = compute_normalization(samples);
  const auto prepared = prepare_samples(samples, config.target_size, stats);
  Trainer trainer(model_config, config, stats);

  OverfitResult result;
  result.initial_error_2d = validation_errors(trainer.model(), samples, prepared, config.batch_size).mean_2d;
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) {
    const double loss = trainer.train_epoch(prepared);
    result.losses.push_back(loss);
    ++result.steps_run;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (step_callback && !step_callback(s, loss, elapsed)) break;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.final_error_2d = validation_errors(trainer.model(), samples, prepared, config.batch_size).mean_2d;

  // Same metric with batch statistics, as seen by the optimizer.
  double sum = 0.0;
  for (std::size_t start_i = 0; start_i < prepared.size(); start_i += static_cast<std::size_t>(config.batch_size)) {
    std::vector<const PreparedSample*> chunk;
    for (std::size_t i = start_i; i < std::min(prepared.size(), start_i + config.batch_size); ++i)
      chunk.push_back(&prepared[i]);
    const Batch batch = stack_batch(chunk);
    const auto pred = trainer.model().forward(batch.images, batch.depths, batch.axis_points, true);
    for (int i = 0; i < pred.dim(0); ++i) {
      const auto& p = *chunk[static_cast<std::size_t>(i)];
      sum += error_2d(p.transform.from_normalized({pred.at(i, 0), pred.at(i, 1)}), p.pixel_target);
    }
  }
  result.final_train_mode_error_2d = sum / static_cast<double>(prepared.size());
  return result;
}

}  // namespace gammasense
