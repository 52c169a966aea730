#include "gammasense/model.hpp"

#include <sstream>

namespace gammasense {

using nn::FeatureSpec;
using nn::Tensor;

// ---------------------------------------------------------------------------
// Configuration

BranchFlags BranchFlags::parse(const std::string& list) {
  BranchFlags flags{false, false, false};
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "image") {
      flags.image = true;
    } else if (item == "depth") {
      flags.depth = true;
    } else if (item == "axis") {
      flags.axis = true;
    } else if (!item.empty()) {
      throw ConfigError("unknown branch '" + item + "' (expected image, depth or axis)");
    }
  }
  if (!flags.image && !flags.depth && !flags.axis) throw ConfigError("at least one branch must be enabled");
  return flags;
}

std::string BranchFlags::to_string() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(image, "image");
  add(depth, "depth");
  add(axis, "axis");
  return s;
}

void ModelConfig::validate() const {
  if (base_channels < 2 || base_channels % 2 != 0) throw ConfigError("base_channels must be an even number >= 2");
  for (int b : block_counts)
    if (b < 1) throw ConfigError("block_counts entries must be >= 1");
  if (ebn_expansion != 2 && ebn_expansion != 4) throw ConfigError("ebn_expansion must be 2 or 4");
  if (!branches.image && !branches.depth && !branches.axis) throw ConfigError("at least one branch must be enabled");
  if (decoder_stages < 0 || decoder_stages > kMaxDecoderStages)
    throw ConfigError("decoder_stages must be within [0, " + std::to_string(kMaxDecoderStages) + "]");
  for (int h : head_hidden_sizes)
    if (h < 1) throw ConfigError("head_hidden_sizes entries must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"base_channels", base_channels},
          {"block_counts", block_counts},
          {"ebn_expansion", ebn_expansion},
          {"branches", branches.to_string()},
          {"decoder_stages", decoder_stages},
          {"head_hidden_sizes", head_hidden_sizes},
          {"activation", "elu"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.base_channels = j.at("base_channels").get<int>();
    c.block_counts = j.at("block_counts").get<std::array<int, 4>>();
    c.ebn_expansion = j.at("ebn_expansion").get<int>();
    c.branches = BranchFlags::parse(j.at("branches").get<std::string>());
    c.decoder_stages = j.at("decoder_stages").get<int>();
    c.head_hidden_sizes = j.at("head_hidden_sizes").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<FeatureSpec> encoder_stage_specs(const ModelConfig& config, int height, int width) {
  config.validate();
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0)
    throw ConfigError("image height and width must be positive multiples of 32, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  std::vector<FeatureSpec> specs{{config.base_channels, height / 2, width / 2}};
  for (int m = 0; m < 4; ++m) {
    const auto& prev = specs.back();
    specs.push_back({prev.channels * config.ebn_expansion, prev.height / 2, prev.width / 2});
  }
  return specs;
}

std::vector<FeatureSpec> decoder_stage_specs(const ModelConfig& config, int height, int width) {
  auto spec = encoder_stage_specs(config, height, width).back();
  std::vector<FeatureSpec> out;
  for (int k = 0; k < config.decoder_stages; ++k) {
    spec = {spec.channels / 2, spec.height * 2, spec.width * 2};
    out.push_back(spec);
  }
  return out;
}

int image_feature_length(const ModelConfig& config) {
  int c = config.base_channels;
  for (int m = 0; m < 4; ++m) c *= config.ebn_expansion;
  return c >> config.decoder_stages;
}

int head_input_length(const ModelConfig& config) {
  return (config.branches.image ? image_feature_length(config) : 0) +
         (config.branches.depth ? ModelConfig::kDepthFeatures : 0) +
         (config.branches.axis ? ModelConfig::kAxisFeatures : 0);
}

// ---------------------------------------------------------------------------
// Residual blocks

namespace {

template <typename T>
nn::Conv2d<T> conv(int in, int out, int kernel, int stride, int padding, nn::InitRng& rng, bool bias = false) {
  return nn::Conv2d<T>({in, out, kernel, stride, padding, bias}, rng);
}

}  // namespace

template <typename T>
StandardBottleneck<T>::StandardBottleneck(int channels, nn::InitRng& rng)
    : channels_(channels),
      conv1_(channels % 4 == 0 && channels > 0 ? conv<T>(channels, channels / 4, 1, 1, 0, rng)
                                               : throw ConfigError("standard bottleneck: channel count " +
                                                                   std::to_string(channels) + " not divisible by 4")),
      conv2_(conv<T>(channels / 4, channels / 4, 3, 1, 1, rng)),
      conv3_(conv<T>(channels / 4, channels, 1, 1, 0, rng)),
      bn1_(channels / 4),
      bn2_(channels / 4),
      bn3_(channels, T(0)) {}

template <typename T>
FeatureSpec StandardBottleneck<T>::output_spec(const FeatureSpec& in) const {
  if (in.channels != channels_) throw ContractViolation("standard bottleneck: channel mismatch");
  return in;
}

template <typename T>
Tensor<T> StandardBottleneck<T>::forward(const Tensor<T>& x, bool training) {
  const FeatureSpec out_spec = output_spec(nn::spec_of(x));
  Tensor<T> h = act1_.forward(bn1_.forward(conv1_.forward(x), training));
  h = act2_.forward(bn2_.forward(conv2_.forward(h), training));
  h = bn3_.forward(conv3_.forward(h), training);
  h += x;
  Tensor<T> y = act_out_.forward(h);
  nn::require_spec(y, out_spec, "standard bottleneck");
  return y;
}

template <typename T>
Tensor<T> StandardBottleneck<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = act_out_.backward(grad_out);
  Tensor<T> h = conv3_.backward(bn3_.backward(g));
  h = conv2_.backward(bn2_.backward(act2_.backward(h)));
  Tensor<T> dx = conv1_.backward(bn1_.backward(act1_.backward(h)));
  dx += g;
  return dx;
}

template <typename T>
void StandardBottleneck<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  conv3_.collect(prefix + ".conv3", out);
  bn3_.collect(prefix + ".bn3", out);
}

template <typename T>
ExpandedBottleneck<T>::ExpandedBottleneck(int channels, int stride, int expansion, nn::InitRng& rng)
    : channels_(channels),
      stride_(stride),
      expansion_(expansion),
      conv1_(channels % 2 == 0 && channels > 0
                 ? conv<T>(channels, channels / 2, 1, 1, 0, rng)
                 : throw ConfigError("expanded bottleneck: channel count " + std::to_string(channels) + " is odd")),
      conv2_(conv<T>(channels / 2, channels / 2, 3, stride, 1, rng)),
      conv3_(conv<T>(channels / 2, expansion * channels, 1, 1, 0, rng)),
      skip_conv_(conv<T>(channels, expansion * channels, 1, stride, 0, rng)),
      bn1_(channels / 2),
      bn2_(channels / 2),
      bn3_(expansion * channels, T(0)),
      skip_bn_(expansion * channels) {
  if (stride != 1 && stride != 2) throw ConfigError("expanded bottleneck: stride must be 1 or 2");
  if (expansion != 2 && expansion != 4) throw ConfigError("expanded bottleneck: expansion must be 2 or 4");
}

template <typename T>
FeatureSpec ExpandedBottleneck<T>::output_spec(const FeatureSpec& in) const {
  if (in.channels != channels_) throw ContractViolation("expanded bottleneck: channel mismatch");
  return {channels_ * expansion_, (in.height - 1) / stride_ + 1, (in.width - 1) / stride_ + 1};
}

template <typename T>
Tensor<T> ExpandedBottleneck<T>::forward(const Tensor<T>& x, bool training) {
  const FeatureSpec out_spec = output_spec(nn::spec_of(x));
  Tensor<T> h = act1_.forward(bn1_.forward(conv1_.forward(x), training));
  h = act2_.forward(bn2_.forward(conv2_.forward(h), training));
  h = bn3_.forward(conv3_.forward(h), training);
  h += skip_bn_.forward(skip_conv_.forward(x), training);
  Tensor<T> y = act_out_.forward(h);
  nn::require_spec(y, out_spec, "expanded bottleneck");
  return y;
}

template <typename T>
Tensor<T> ExpandedBottleneck<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = act_out_.backward(grad_out);
  Tensor<T> h = conv3_.backward(bn3_.backward(g));
  h = conv2_.backward(bn2_.backward(act2_.backward(h)));
  Tensor<T> dx = conv1_.backward(bn1_.backward(act1_.backward(h)));
  dx += skip_conv_.backward(skip_bn_.backward(g));
  return dx;
}

template <typename T>
void ExpandedBottleneck<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  conv3_.collect(prefix + ".conv3", out);
  bn3_.collect(prefix + ".bn3", out);
  skip_conv_.collect(prefix + ".skip_conv", out);
  skip_bn_.collect(prefix + ".skip_bn", out);
}

// ---------------------------------------------------------------------------
// Encoder

template <typename T>
NestedResNetEncoder<T>::NestedResNetEncoder(const ModelConfig& config, nn::InitRng& rng)
    : config_(config),
      stem_conv_(conv<T>(ModelConfig::kImageChannels, config.base_channels, 7, 2, 3, rng)),
      stem_bn_(config.base_channels),
      stem_pool_(3, 1, 1) {
  int channels = config.base_channels;
  for (int m = 0; m < 4; ++m) {
    Module module;
    module.expanded = std::make_unique<ExpandedBottleneck<T>>(channels, 2, config.ebn_expansion, rng);
    channels *= config.ebn_expansion;
    for (int b = 1; b < config.block_counts[static_cast<std::size_t>(m)]; ++b) module.standard.emplace_back(channels, rng);
    modules_.push_back(std::move(module));
  }
}

template <typename T>
std::vector<int> NestedResNetEncoder<T>::stage_channels() const {
  std::vector<int> out{config_.base_channels};
  for (int m = 0; m < 4; ++m) out.push_back(out.back() * config_.ebn_expansion);
  return out;
}

template <typename T>
std::vector<Tensor<T>> NestedResNetEncoder<T>::forward(const Tensor<T>& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != ModelConfig::kImageChannels)
    throw ContractViolation("encoder: expected N x 6 x H x W images, got " + nn::shape_string(images.shape()));
  const auto specs = encoder_stage_specs(config_, images.dim(2), images.dim(3));
  std::vector<Tensor<T>> stages;
  stages.push_back(stem_pool_.forward(stem_act_.forward(stem_bn_.forward(stem_conv_.forward(images), training))));
  nn::require_spec(stages.back(), specs[0], "encoder stem");
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    Tensor<T> h = modules_[m].expanded->forward(stages.back(), training);
    for (auto& block : modules_[m].standard) h = block.forward(h, training);
    nn::require_spec(h, specs[m + 1], "encoder module");
    stages.push_back(std::move(h));
  }
  return stages;
}

template <typename T>
void NestedResNetEncoder<T>::backward(std::vector<Tensor<T>> grads) {
  if (grads.size() != 5) throw ContractViolation("encoder backward: expected 5 stage gradients");
  Tensor<T> g = std::move(grads[4]);
  for (std::size_t m = modules_.size(); m-- > 0;) {
    if (!g.empty()) {
      for (auto it = modules_[m].standard.rbegin(); it != modules_[m].standard.rend(); ++it) g = it->backward(g);
      g = modules_[m].expanded->backward(g);
    }
    if (!grads[m].empty()) {
      if (g.empty()) {
        g = std::move(grads[m]);
      } else {
        g += grads[m];
      }
    }
  }
  if (!g.empty()) stem_conv_.backward(stem_bn_.backward(stem_act_.backward(stem_pool_.backward(g))));
}

template <typename T>
void NestedResNetEncoder<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  stem_conv_.collect(prefix + ".stem.conv", out);
  stem_bn_.collect(prefix + ".stem.bn", out);
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    const std::string mp = prefix + ".module" + std::to_string(m + 1);
    modules_[m].expanded->collect(mp + ".block0", out);
    for (std::size_t b = 0; b < modules_[m].standard.size(); ++b)
      modules_[m].standard[b].collect(mp + ".block" + std::to_string(b + 1), out);
  }
}

// ---------------------------------------------------------------------------
// Decoder

template <typename T>
NestedResNetDecoder<T>::NestedResNetDecoder(const ModelConfig& config, const std::vector<int>& encoder_channels,
                                            nn::InitRng& rng) {
  if (config.decoder_stages > ModelConfig::kMaxDecoderStages || config.decoder_stages < 0)
    throw ConfigError("decoder_stages must be within [0, 4]");
  int channels = encoder_channels.back();
  for (int k = 0; k < config.decoder_stages; ++k) {
    if (channels < 2 || channels % 2 != 0) throw ConfigError("decoder: cannot halve " + std::to_string(channels) + " channels");
    Stage stage;
    stage.skip_source = 3 - k;
    stage.conv = conv<T>(channels, channels / 2, 3, 1, 1, rng);
    stage.bn = nn::BatchNorm2d<T>(channels / 2);
    stage.skip_conv = conv<T>(encoder_channels[static_cast<std::size_t>(stage.skip_source)], channels / 2, 1, 1, 0, rng,
                              /*bias=*/true);
    channels /= 2;
    stages_.push_back(std::move(stage));
  }
  output_features_ = channels;
}

template <typename T>
Tensor<T> NestedResNetDecoder<T>::forward(const std::vector<Tensor<T>>& stages, bool training) {
  if (stages.size() != 5) throw ContractViolation("decoder: expected 5 encoder stages");
  encoder_shapes_.clear();
  for (const auto& s : stages) encoder_shapes_.push_back(s.shape());
  stage_shapes_.clear();
  Tensor<T> h = stages.back();
  for (auto& stage : stages_) {
    h = stage.act.forward(stage.bn.forward(stage.conv.forward(stage.upsample.forward(h)), training));
    stage.skip_pool = nn::AdaptiveAvgPool2d<T>(h.dim(2), h.dim(3));
    h += stage.skip_pool.forward(stage.skip_conv.forward(stages[static_cast<std::size_t>(stage.skip_source)]));
    stage_shapes_.push_back(h.shape());
  }
  return pool_.forward(h);
}

template <typename T>
std::vector<Tensor<T>> NestedResNetDecoder<T>::backward(const Tensor<T>& grad_out) {
  std::vector<Tensor<T>> grads(5);
  Tensor<T> g = pool_.backward(grad_out);
  for (std::size_t k = stages_.size(); k-- > 0;) {
    auto& stage = stages_[k];
    Tensor<T> skip = stage.skip_conv.backward(stage.skip_pool.backward(g));
    auto& slot = grads[static_cast<std::size_t>(stage.skip_source)];
    if (slot.empty()) {
      slot = std::move(skip);
    } else {
      slot += skip;
    }
    g = stage.upsample.backward(stage.conv.backward(stage.bn.backward(stage.act.backward(g))));
  }
  grads[4] = std::move(g);
  return grads;
}

template <typename T>
void NestedResNetDecoder<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const std::string sp = prefix + ".stage" + std::to_string(k + 1);
    stages_[k].conv.collect(sp + ".conv", out);
    stages_[k].bn.collect(sp + ".bn", out);
    stages_[k].skip_conv.collect(sp + ".skip_conv", out);
  }
}

// ---------------------------------------------------------------------------
// Depth / axis branches and head

template <typename T>
DepthBranch<T>::DepthBranch(nn::InitRng& rng) {
  const int widths[5] = {1, 16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    convs_.push_back(conv<T>(widths[i], widths[i + 1], 3, 2, 1, rng));
    bns_.emplace_back(widths[i + 1]);
  }
  acts_.resize(4);
  mlp_ = nn::Mlp<T>({128, 128, ModelConfig::kDepthFeatures}, rng);
}

template <typename T>
Tensor<T> DepthBranch<T>::forward(const Tensor<T>& depth, bool training) {
  if (depth.rank() != 4 || depth.dim(1) != 1)
    throw ContractViolation("depth branch: expected N x 1 x H x W, got " + nn::shape_string(depth.shape()));
  Tensor<T> h = depth;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = acts_[i].forward(bns_[i].forward(convs_[i].forward(h), training));
  return mlp_.forward(pool_.forward(h));
}

template <typename T>
void DepthBranch<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = pool_.backward(mlp_.backward(grad_out));
  for (std::size_t i = convs_.size(); i-- > 0;) g = convs_[i].backward(bns_[i].backward(acts_[i].backward(g)));
}

template <typename T>
void DepthBranch<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(prefix + ".conv" + std::to_string(i + 1), out);
    bns_[i].collect(prefix + ".bn" + std::to_string(i + 1), out);
  }
  mlp_.collect(prefix + ".mlp", out);
}

template <typename T>
AxisBranch<T>::AxisBranch(nn::InitRng& rng)
    : mlp_({ModelConfig::kAxisInputs, 128, 128, ModelConfig::kAxisFeatures}, rng) {}

template <typename T>
Tensor<T> AxisBranch<T>::forward(const Tensor<T>& points) {
  if (points.rank() != 2 || points.dim(1) != ModelConfig::kAxisInputs)
    throw ContractViolation("axis branch: expected N x 100, got " + nn::shape_string(points.shape()));
  return mlp_.forward(points);
}

template <typename T>
void AxisBranch<T>::backward(const Tensor<T>& grad_out) {
  mlp_.backward(grad_out);
}

template <typename T>
void AxisBranch<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  mlp_.collect(prefix + ".mlp", out);
}

namespace {

std::vector<int> head_widths(int in, const std::vector<int>& hidden) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(2);
  return w;
}

int sum_of(const std::vector<int>& v) {
  int s = 0;
  for (int x : v) s += x;
  return s;
}

}  // namespace

template <typename T>
FusionHead<T>::FusionHead(std::vector<int> feature_lengths, const std::vector<int>& hidden, nn::InitRng& rng)
    : lengths_(std::move(feature_lengths)), mlp_(head_widths(sum_of(lengths_), hidden), rng) {
  if (lengths_.empty()) throw ConfigError("fusion head: no branch features");
}

template <typename T>
int FusionHead<T>::input_features() const {
  return sum_of(lengths_);
}

template <typename T>
Tensor<T> FusionHead<T>::forward(const std::vector<Tensor<T>>& features) {
  if (features.size() != lengths_.size())
    throw ContractViolation("fusion head: expected " + std::to_string(lengths_.size()) + " branch features, got " +
                            std::to_string(features.size()));
  const int n = features.front().dim(0);
  for (std::size_t b = 0; b < features.size(); ++b)
    if (features[b].rank() != 2 || features[b].dim(0) != n || features[b].dim(1) != lengths_[b])
      throw ContractViolation("fusion head: branch " + std::to_string(b) + " feature shape " +
                              nn::shape_string(features[b].shape()) + " does not match its declared length " +
                              std::to_string(lengths_[b]));
  const int total = input_features();
  Tensor<T> concat({n, total});
  for (int i = 0; i < n; ++i) {
    int offset = 0;
    for (std::size_t b = 0; b < features.size(); ++b) {
      for (int f = 0; f < lengths_[b]; ++f) concat.at(i, offset + f) = features[b].at(i, f);
      offset += lengths_[b];
    }
  }
  return sigmoid_.forward(mlp_.forward(concat));
}

template <typename T>
std::vector<Tensor<T>> FusionHead<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = mlp_.backward(sigmoid_.backward(grad_out));
  const int n = g.dim(0);
  std::vector<Tensor<T>> out;
  int offset = 0;
  for (int len : lengths_) {
    Tensor<T> part({n, len});
    for (int i = 0; i < n; ++i)
      for (int f = 0; f < len; ++f) part.at(i, f) = g.at(i, offset + f);
    out.push_back(std::move(part));
    offset += len;
  }
  return out;
}

template <typename T>
void FusionHead<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  mlp_.collect(prefix + ".mlp", out);
}

// ---------------------------------------------------------------------------
// Full model

template <typename T>
SensingNet<T>::SensingNet(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  nn::InitRng rng(seed);
  std::vector<int> lengths;
  if (config_.branches.image) {
    encoder_ = std::make_unique<NestedResNetEncoder<T>>(config_, rng);
    decoder_ = std::make_unique<NestedResNetDecoder<T>>(config_, encoder_->stage_channels(), rng);
    lengths.push_back(decoder_->output_features());
  }
  if (config_.branches.depth) {
    depth_ = std::make_unique<DepthBranch<T>>(rng);
    lengths.push_back(ModelConfig::kDepthFeatures);
  }
  if (config_.branches.axis) {
    axis_ = std::make_unique<AxisBranch<T>>(rng);
    lengths.push_back(ModelConfig::kAxisFeatures);
  }
  head_ = std::make_unique<FusionHead<T>>(lengths, config_.head_hidden_sizes, rng);
}

template <typename T>
Tensor<T> SensingNet<T>::forward(const Tensor<T>& images, const Tensor<T>& depths, const Tensor<T>& axis,
                                 bool training) {
  std::vector<Tensor<T>> features;
  int n = -1;
  auto check_batch = [&](const Tensor<T>& t, const char* what) {
    if (t.rank() < 1) throw ContractViolation(std::string("model: missing ") + what + " input");
    if (n >= 0 && t.dim(0) != n) throw ContractViolation("model: inconsistent batch sizes across branch inputs");
    n = t.dim(0);
  };
  encoder_shapes_.clear();
  if (encoder_) {
    check_batch(images, "image");
    auto stages = encoder_->forward(images, training);
    for (const auto& s : stages) encoder_shapes_.push_back(s.shape());
    features.push_back(decoder_->forward(stages, training));
  }
  if (depth_) {
    check_batch(depths, "depth");
    features.push_back(depth_->forward(depths, training));
  }
  if (axis_) {
    check_batch(axis, "axis");
    features.push_back(axis_->forward(axis));
  }
  return head_->forward(features);
}

template <typename T>
void SensingNet<T>::backward(const Tensor<T>& grad_pred) {
  auto grads = head_->backward(grad_pred);
  std::size_t k = 0;
  if (encoder_) encoder_->backward(decoder_->backward(grads[k++]));
  if (depth_) depth_->backward(grads[k++]);
  if (axis_) axis_->backward(grads[k++]);
}

template <typename T>
nn::ParamList<T> SensingNet<T>::parameters() {
  nn::ParamList<T> out;
  if (encoder_) {
    encoder_->collect("image.encoder", out);
    decoder_->collect("image.decoder", out);
  }
  if (depth_) depth_->collect("depth", out);
  if (axis_) axis_->collect("axis", out);
  head_->collect("head", out);
  return out;
}

template <typename T>
void SensingNet<T>::zero_grad() {
  for (auto& p : parameters())
    if (p.grad) p.grad->fill(T(0));
}

template <typename T>
const std::vector<nn::Shape>& SensingNet<T>::last_decoder_shapes() const {
  static const std::vector<nn::Shape> kNone;
  return decoder_ ? decoder_->last_stage_shapes() : kNone;
}

template class StandardBottleneck<float>;
template class StandardBottleneck<double>;
template class ExpandedBottleneck<float>;
template class ExpandedBottleneck<double>;
template class NestedResNetEncoder<float>;
template class NestedResNetEncoder<double>;
template class NestedResNetDecoder<float>;
template class NestedResNetDecoder<double>;
template class DepthBranch<float>;
template class DepthBranch<double>;
template class AxisBranch<float>;
template class AxisBranch<double>;
template class FusionHead<float>;
template class FusionHead<double>;
template class SensingNet<float>;
template class SensingNet<double>;

}  // namespace gammasense
