#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gammasense/nn/layers.hpp"

namespace gammasense {

struct BranchFlags {
  bool image = true;
  bool depth = true;
  bool axis = true;

  /// Parses "image[,depth][,axis]" in any order.
  static BranchFlags parse(const std::string& list);
  std::string to_string() const;
  bool operator==(const BranchFlags&) const = default;
};

struct ModelConfig {
  int base_channels = 16;  // stem output width (64 at full scale)
  std::array<int, 4> block_counts{3, 4, 6, 3};  // blocks per module: 1 expanded + (n-1) standard
  int ebn_expansion = 4;
  BranchFlags branches;
  int decoder_stages = 2;
  std::vector<int> head_hidden_sizes{128};

  static constexpr int kImageChannels = 6;
  static constexpr int kDepthFeatures = 64;
  static constexpr int kAxisFeatures = 64;
  static constexpr int kAxisInputs = 100;
  static constexpr int kMaxDecoderStages = 4;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Declared output layouts, derived from the configuration alone.
/// encoder: [stem, module1..module4]; decoder: one entry per upsampling stage.
std::vector<nn::FeatureSpec> encoder_stage_specs(const ModelConfig& config, int height, int width);
std::vector<nn::FeatureSpec> decoder_stage_specs(const ModelConfig& config, int height, int width);
int image_feature_length(const ModelConfig& config);
int head_input_length(const ModelConfig& config);

/// 1x1 reduce to C/4, 3x3, 1x1 restore to C, identity skip, ELU after the sum.
template <typename T>
class StandardBottleneck {
 public:
  StandardBottleneck(int channels, nn::InitRng& rng);

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool training);
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  nn::FeatureSpec output_spec(const nn::FeatureSpec& in) const;

 private:
  int channels_;
  nn::Conv2d<T> conv1_, conv2_, conv3_;
  nn::BatchNorm2d<T> bn1_, bn2_, bn3_;
  nn::Elu<T> act1_, act2_, act_out_;
};

/// 1x1 reduce to C/2, strided 3x3, 1x1 expand to expansion*C; the skip path is
/// a strided 1x1 conv + BN from C to expansion*C.
template <typename T>
class ExpandedBottleneck {
 public:
  ExpandedBottleneck(int channels, int stride, int expansion, nn::InitRng& rng);

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool training);
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  nn::FeatureSpec output_spec(const nn::FeatureSpec& in) const;

 private:
  int channels_;
  int stride_;
  int expansion_;
  nn::Conv2d<T> conv1_, conv2_, conv3_, skip_conv_;
  nn::BatchNorm2d<T> bn1_, bn2_, bn3_, skip_bn_;
  nn::Elu<T> act1_, act2_, act_out_;
};

template <typename T>
class NestedResNetEncoder {
 public:
  NestedResNetEncoder(const ModelConfig& config, nn::InitRng& rng);

  /// Returns [stem, module1, module2, module3, module4].
  std::vector<nn::Tensor<T>> forward(const nn::Tensor<T>& images, bool training);
  /// `grads` holds one entry per stage output; empty tensors mean no gradient.
  void backward(std::vector<nn::Tensor<T>> grads);
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  std::vector<int> stage_channels() const;

 private:
  struct Module {
    std::unique_ptr<ExpandedBottleneck<T>> expanded;
    std::vector<StandardBottleneck<T>> standard;
  };

  ModelConfig config_;
  nn::Conv2d<T> stem_conv_;
  nn::BatchNorm2d<T> stem_bn_;
  nn::Elu<T> stem_act_;
  nn::MaxPool2d<T> stem_pool_;
  std::vector<Module> modules_;
};

/// Partial upsampling with global skips from the same-resolution encoder stage,
/// then global average pooling.
template <typename T>
class NestedResNetDecoder {
 public:
  NestedResNetDecoder(const ModelConfig& config, const std::vector<int>& encoder_channels, nn::InitRng& rng);

  nn::Tensor<T> forward(const std::vector<nn::Tensor<T>>& stages, bool training);
  /// Returns gradients for each encoder stage (empty where unused).
  std::vector<nn::Tensor<T>> backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  int output_features() const { return output_features_; }
  /// Decoder feature maps from the last forward pass, one per stage.
  const std::vector<nn::Shape>& last_stage_shapes() const { return stage_shapes_; }

 private:
  struct Stage {
    int skip_source = 0;  // encoder stage index
    nn::Upsample2x<T> upsample;
    nn::Conv2d<T> conv;
    nn::BatchNorm2d<T> bn;
    nn::Elu<T> act;
    nn::Conv2d<T> skip_conv;
    nn::AdaptiveAvgPool2d<T> skip_pool;
  };

  std::vector<Stage> stages_;
  nn::GlobalAvgPool<T> pool_;
  int output_features_ = 0;
  std::vector<nn::Shape> stage_shapes_;
  std::vector<nn::Shape> encoder_shapes_;
};

template <typename T>
class DepthBranch {
 public:
  explicit DepthBranch(nn::InitRng& rng);

  nn::Tensor<T> forward(const nn::Tensor<T>& depth, bool training);
  void backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);

 private:
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::BatchNorm2d<T>> bns_;
  std::vector<nn::Elu<T>> acts_;
  nn::GlobalAvgPool<T> pool_;
  nn::Mlp<T> mlp_;
};

template <typename T>
class AxisBranch {
 public:
  explicit AxisBranch(nn::InitRng& rng);

  nn::Tensor<T> forward(const nn::Tensor<T>& points);
  void backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);

 private:
  nn::Mlp<T> mlp_;
};

/// Concatenation + MLP + sigmoid: normalized (u, v) in [0, 1]^2.
template <typename T>
class FusionHead {
 public:
  FusionHead(std::vector<int> feature_lengths, const std::vector<int>& hidden, nn::InitRng& rng);

  nn::Tensor<T> forward(const std::vector<nn::Tensor<T>>& features);
  std::vector<nn::Tensor<T>> backward(const nn::Tensor<T>& grad_out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  int input_features() const;

 private:
  std::vector<int> lengths_;
  nn::Mlp<T> mlp_;
  nn::Sigmoid<T> sigmoid_;
};

/// Full three-branch sensing-point regressor.
template <typename T>
class SensingNet {
 public:
  SensingNet(const ModelConfig& config, std::uint64_t seed);

  /// images N x 6 x H x W, depths N x 1 x H x W, axis N x 100; inputs of
  /// disabled branches are ignored. Returns N x 2 normalized predictions.
  nn::Tensor<T> forward(const nn::Tensor<T>& images, const nn::Tensor<T>& depths, const nn::Tensor<T>& axis,
                        bool training);
  void backward(const nn::Tensor<T>& grad_pred);

  /// Trainable parameters and buffers in a stable order.
  nn::ParamList<T> parameters();
  void zero_grad();

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  /// Encoder stage outputs of the last forward pass.
  const std::vector<nn::Shape>& last_encoder_shapes() const { return encoder_shapes_; }
  const std::vector<nn::Shape>& last_decoder_shapes() const;

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<NestedResNetEncoder<T>> encoder_;
  std::unique_ptr<NestedResNetDecoder<T>> decoder_;
  std::unique_ptr<DepthBranch<T>> depth_;
  std::unique_ptr<AxisBranch<T>> axis_;
  std::unique_ptr<FusionHead<T>> head_;
  std::vector<nn::Shape> encoder_shapes_;
};

}  // namespace gammasense
