#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gammasense/nn/tensor.hpp"
#include "gammasense/sample.hpp"

namespace gammasense {

inline constexpr const char* kDatasetFormatVersion = "1.0";
inline const std::array<std::string, 3> kSplitNames = {"train", "val", "test"};

// ---------------------------------------------------------------------------
// Label transforms

/// Placement of an H x W image inside its zero-padded S x S square.
struct SquareLayout {
  int height = 0;
  int width = 0;
  int size = 0;  // S = max(H, W)
  int top = 0;
  int left = 0;
};

SquareLayout square_layout(int height, int width);

struct PaddedImage {
  Image image;
  int top = 0;
  int left = 0;
};

/// Symmetric zero padding of the short dimension.
PaddedImage pad_to_square(const Image& image);
Array2D<float> pad_to_square(const Array2D<float>& plane);

/// Maps label coordinates between the original image, the padded square,
/// the resized network input (target x target) and the normalized [0,1] frame.
/// Normalized coordinates are padded-square pixels divided by S.
struct CoordinateTransform {
  SquareLayout layout;
  int target = 0;

  Point2D to_normalized(const Point2D& original) const;
  Point2D from_normalized(const Point2D& normalized) const;
  Point2D to_target(const Point2D& original) const;
  Point2D from_target(const Point2D& resized) const;
};

/// Bilinear resampling of a single plane (pixel-centre aligned).
Array2D<float> resize_bilinear(const Array2D<float>& src, int out_rows, int out_cols);

// ---------------------------------------------------------------------------
// Normalization statistics and batches

struct NormalizationStats {
  std::array<double, 6> mean{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};  // left RGB, right RGB, in [0,1] units
  std::array<double, 6> stddev{0.25, 0.25, 0.25, 0.25, 0.25, 0.25};
  double depth_scale = 100.0;  // depth (mm) is divided by this

  nlohmann::json to_json() const;
  static NormalizationStats from_json(const nlohmann::json& j);
  bool operator==(const NormalizationStats&) const = default;
};

/// Streaming per-channel mean / population std and mean valid depth.
class NormalizationAccumulator {
 public:
  void add(const StereoSample& sample);
  NormalizationStats finish() const;

 private:
  std::array<double, 6> sum_{};
  std::array<double, 6> sum_sq_{};
  double count_ = 0.0;
  double depth_sum_ = 0.0;
  double depth_count_ = 0.0;
};

NormalizationStats compute_normalization(const std::vector<StereoSample>& samples);

/// Network-ready view of one sample.
struct PreparedSample {
  std::string sample_id;
  nn::Tensor<float> image;  // 6 x T x T
  nn::Tensor<float> depth;  // 1 x T x T
  nn::Tensor<float> axis;   // 2 * kAxisPointCount, (u, v) pairs, normalized
  Point2D target;           // normalized gt_2d
  Point2D pixel_target;     // gt_2d in original pixels
  CoordinateTransform transform;
};

PreparedSample prepare_sample(const StereoSample& sample, int target_size, const NormalizationStats& stats);

struct Batch {
  nn::Tensor<float> images;         // N x 6 x T x T
  nn::Tensor<float> depths;         // N x 1 x T x T
  nn::Tensor<float> axis_points;    // N x 100
  nn::Tensor<float> targets;        // N x 2, normalized
  nn::Tensor<float> pixel_targets;  // N x 2, original pixels
  std::vector<CoordinateTransform> transforms;
  std::vector<std::string> sample_ids;

  int size() const { return images.empty() ? 0 : images.dim(0); }
};

Batch stack_batch(const std::vector<const PreparedSample*>& samples);
Batch make_batch(const std::vector<StereoSample>& samples, int target_size, const NormalizationStats& stats);

// ---------------------------------------------------------------------------
// On-disk format: root/manifest.json, root/samples/<id>/{left.png,right.png,
// depth.pfm,mask.png,label.json}

nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

nlohmann::json label_to_json(const StereoSample& sample);

void save_sample(const StereoSample& sample, const std::filesystem::path& dir);
/// Throws FormatError (missing / corrupt file, naming the field) or
/// ValidationError (label violates an invariant).
StereoSample load_sample(const std::filesystem::path& dir);

struct DatasetManifest {
  std::string version = kDatasetFormatVersion;
  nlohmann::json spec;  // generator configuration snapshot
  std::uint64_t seed = 0;
  CameraRig rig;
  std::map<std::string, std::vector<std::string>> splits;
  std::map<std::string, std::vector<std::uint64_t>> sample_seeds;
  NormalizationStats normalization;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  /// Splits disjoint and every id resolves to a directory under root.
  void validate(const std::filesystem::path& root) const;
  const std::vector<std::string>& split(const std::string& name) const;
};

std::filesystem::path sample_dir(const std::filesystem::path& root, const std::string& id);
void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);
std::vector<StereoSample> load_split(const std::filesystem::path& root, const DatasetManifest& manifest,
                                     const std::string& split);

/// Writes `j` with stable formatting and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path, const std::string& field);

}  // namespace gammasense
