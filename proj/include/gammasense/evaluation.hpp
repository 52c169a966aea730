#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gammasense/image.hpp"
#include "gammasense/sample.hpp"

namespace gammasense {

inline constexpr double kOverlayDotRadius = 5.0;
inline constexpr Rgb kGroundTruthColor{255, 0, 0};
inline constexpr Rgb kPredictionColor{0, 255, 0};

struct EvalRow {
  std::string sample_id;
  Point2D pred_2d;
  Point2D gt_2d;
  double err_2d_px = 0.0;
  std::optional<Point3D> pred_3d;
  std::optional<Point3D> gt_3d;
  std::optional<double> err_3d_mm;
  bool depth_missing = false;  // no valid depth at one of the two points; excluded from 3D aggregates
  bool out_of_bounds = false;  // prediction outside the original image

  nlohmann::json to_json() const;
  static EvalRow from_json(const nlohmann::json& j);
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
  int count = 0;

  nlohmann::json to_json() const;
  static Aggregate from_json(const nlohmann::json& j);
};

/// Mean, population standard deviation and median; zeros for an empty input.
Aggregate summarize(std::span<const double> values);

/// Scores one prediction (original pixels) against a sample: 2D error, and a 3D
/// error from back-projecting each point with the depth at its own pixel.
EvalRow score_prediction(const StereoSample& sample, const Point2D& pred_2d);

struct EvalReport {
  std::string split;
  std::vector<EvalRow> rows;  // ordered by sample_id
  Aggregate metrics_2d;
  Aggregate metrics_3d;
  int excluded_3d = 0;
  nlohmann::json config;  // checkpoint / dataset snapshot

  /// Sorts rows and recomputes the aggregates from them.
  void finalize();
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Plain-text table with the 2D and 3D Mean E. / STD / Median columns.
  std::string to_table(const std::string& label = "model") const;
};

/// One row per labelled report under grouped 2D / 3D headers.
std::string metrics_table(const std::vector<std::pair<std::string, const EvalReport*>>& rows);

EvalReport build_report(std::vector<EvalRow> rows, const std::string& split, nlohmann::json config);

/// Left image with a red ground-truth dot and a green prediction dot. A
/// prediction outside the image is clamped to the border and `clamped` set.
Image render_overlay(const StereoSample& sample, const Point2D& pred_2d, bool* clamped = nullptr);

/// 100 (b - a) / a: negative values are reductions from a to b.
double percentage_change(double a, double b);

struct MetricDelta {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double change_pct = 0.0;
};

/// Percentage change of each aggregate from report a to report b. Throws
/// ContractViolation when the reports cover different splits or samples.
std::vector<MetricDelta> compare_reports(const EvalReport& a, const EvalReport& b);
std::string delta_table(const std::vector<MetricDelta>& deltas, const std::string& label_a, const std::string& label_b);

struct EvaluateOptions {
  int batch_size = 8;
  std::optional<std::filesystem::path> report_dir;  // writes report.json, report.txt, overlays/
};

/// Runs a checkpoint over a dataset split. Throws ContractViolation for an empty split.
EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                    const std::string& split, const EvaluateOptions& options = {});

void write_report(const EvalReport& report, const std::filesystem::path& report_dir);

}  // namespace gammasense
