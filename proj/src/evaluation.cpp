#include "gammasense/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gammasense/dataio.hpp"
#include "gammasense/training.hpp"

namespace gammasense {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json point_json(const Point2D& p) { return json::array({p.u, p.v}); }
json point_json(const Point3D& p) { return json::array({p.x, p.y, p.z}); }

template <typename P>
json optional_json(const std::optional<P>& p) {
  return p ? point_json(*p) : json(nullptr);
}

Point2D point2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
Point3D point3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

bool inside_image(const Point2D& p, int height, int width) {
  return p.u >= -0.5 && p.u < width - 0.5 && p.v >= -0.5 && p.v < height - 0.5;
}

std::optional<Point3D> lift(const Point2D& p, const StereoSample& sample) {
  try {
    return back_project(p, sample.depth, sample.rig);
  } catch (const BoundsError&) {
    return std::nullopt;
  } catch (const MissingDepthError&) {
    return std::nullopt;
  }
}

}  // namespace

json EvalRow::to_json() const {
  return {{"sample_id", sample_id},
          {"pred_2d", point_json(pred_2d)},
          {"gt_2d", point_json(gt_2d)},
          {"err_2d_px", err_2d_px},
          {"pred_3d", optional_json(pred_3d)},
          {"gt_3d", optional_json(gt_3d)},
          {"err_3d_mm", err_3d_mm ? json(*err_3d_mm) : json(nullptr)},
          {"depth_missing", depth_missing},
          {"out_of_bounds", out_of_bounds}};
}

EvalRow EvalRow::from_json(const json& j) {
  EvalRow r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.pred_2d = point2_from(j.at("pred_2d"));
  r.gt_2d = point2_from(j.at("gt_2d"));
  r.err_2d_px = j.at("err_2d_px").get<double>();
  if (!j.at("pred_3d").is_null()) r.pred_3d = point3_from(j.at("pred_3d"));
  if (!j.at("gt_3d").is_null()) r.gt_3d = point3_from(j.at("gt_3d"));
  if (!j.at("err_3d_mm").is_null()) r.err_3d_mm = j.at("err_3d_mm").get<double>();
  r.depth_missing = j.at("depth_missing").get<bool>();
  r.out_of_bounds = j.at("out_of_bounds").get<bool>();
  return r;
}

json Aggregate::to_json() const { return {{"mean", mean}, {"std", std}, {"median", median}, {"count", count}}; }

Aggregate Aggregate::from_json(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("median").get<double>(),
          j.at("count").get<int>()};
}

Aggregate summarize(std::span<const double> values) {
  Aggregate a;
  a.count = static_cast<int>(values.size());
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(sq / static_cast<double>(values.size()));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  a.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return a;
}

EvalRow score_prediction(const StereoSample& sample, const Point2D& pred_2d) {
  EvalRow row;
  row.sample_id = sample.sample_id;
  row.pred_2d = pred_2d;
  row.gt_2d = sample.gt_2d;
  row.err_2d_px = error_2d(pred_2d, sample.gt_2d);
  row.out_of_bounds = !inside_image(pred_2d, sample.depth.rows(), sample.depth.cols());
  row.gt_3d = lift(sample.gt_2d, sample);
  row.pred_3d = lift(pred_2d, sample);
  if (row.gt_3d && row.pred_3d) {
    row.err_3d_mm = error_3d(*row.pred_3d, *row.gt_3d);
  } else {
    row.depth_missing = true;
  }
  return row;
}

void EvalReport::finalize() {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) { return a.sample_id < b.sample_id; });
  std::vector<double> e2, e3;
  excluded_3d = 0;
  for (const auto& r : rows) {
    e2.push_back(r.err_2d_px);
    if (r.err_3d_mm) {
      e3.push_back(*r.err_3d_mm);
    } else {
      ++excluded_3d;
    }
  }
  metrics_2d = summarize(e2);
  metrics_3d = summarize(e3);
}

json EvalReport::to_json() const {
  json r = json::array();
  for (const auto& row : rows) r.push_back(row.to_json());
  return {{"split", split},
          {"std_convention", "population"},
          {"units", {{"2d", "px"}, {"3d", "mm"}}},
          {"aggregates", {{"2d", metrics_2d.to_json()}, {"3d", metrics_3d.to_json()}}},
          {"excluded_3d", excluded_3d},
          {"config", config},
          {"per_sample", r}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport report;
  try {
    report.split = j.at("split").get<std::string>();
    for (const auto& r : j.at("per_sample")) report.rows.push_back(EvalRow::from_json(r));
    report.metrics_2d = Aggregate::from_json(j.at("aggregates").at("2d"));
    report.metrics_3d = Aggregate::from_json(j.at("aggregates").at("3d"));
    report.excluded_3d = j.at("excluded_3d").get<int>();
    report.config = j.value("config", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return report;
}

std::string metrics_table(const std::vector<std::pair<std::string, const EvalReport*>>& rows) {
  std::size_t label_width = 6;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%9.2f", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << pad("", label_width) << " | " << pad("2D Metrics (px)", 29) << " | 3D Metrics (mm)\n";
  out << pad("Method", label_width) << " |   Mean E.       STD    Median |   Mean E.       STD    Median\n";
  out << std::string(label_width, '-') << "-+-------------------------------+------------------------------\n";
  for (const auto& [label, r] : rows) {
    out << pad(label, label_width) << " | " << cell(r->metrics_2d.mean) << " " << cell(r->metrics_2d.std) << " "
        << cell(r->metrics_2d.median) << " | " << cell(r->metrics_3d.mean) << " " << cell(r->metrics_3d.std) << " "
        << cell(r->metrics_3d.median) << "\n";
  }
  return out.str();
}

std::string EvalReport::to_table(const std::string& label) const {
  std::ostringstream out;
  out << metrics_table({{label, this}});
  out << "split: " << split << ", samples: " << rows.size() << ", excluded from 3D (no valid depth): " << excluded_3d
      << ", std: population\n";
  return out.str();
}

EvalReport build_report(std::vector<EvalRow> rows, const std::string& split, json config) {
  EvalReport report;
  report.split = split;
  report.rows = std::move(rows);
  report.config = std::move(config);
  report.finalize();
  return report;
}

Image render_overlay(const StereoSample& sample, const Point2D& pred_2d, bool* clamped) {
  Image out = sample.left;
  const double max_u = out.width() - 1.0;
  const double max_v = out.height() - 1.0;
  const Point2D p{std::clamp(pred_2d.u, 0.0, max_u), std::clamp(pred_2d.v, 0.0, max_v)};
  if (clamped) *clamped = p.u != pred_2d.u || p.v != pred_2d.v;
  draw_disc(out, sample.gt_2d.u, sample.gt_2d.v, kOverlayDotRadius, kGroundTruthColor);
  draw_disc(out, p.u, p.v, kOverlayDotRadius, kPredictionColor);
  return out;
}

double percentage_change(double a, double b) {
  if (a == b) return 0.0;
  if (a == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (b - a) / a;
}

std::vector<MetricDelta> compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.split != b.split)
    throw ContractViolation("compare_reports: reports cover different splits ('" + a.split + "' vs '" + b.split + "')");
  if (a.rows.size() != b.rows.size())
    throw ContractViolation("compare_reports: reports cover different sample counts");
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    if (a.rows[i].sample_id != b.rows[i].sample_id)
      throw ContractViolation("compare_reports: sample '" + a.rows[i].sample_id + "' is not in both reports");
  auto delta = [](const char* name, double x, double y) { return MetricDelta{name, x, y, percentage_change(x, y)}; };
  return {delta("2d_mean", a.metrics_2d.mean, b.metrics_2d.mean),
          delta("2d_std", a.metrics_2d.std, b.metrics_2d.std),
          delta("2d_median", a.metrics_2d.median, b.metrics_2d.median),
          delta("3d_mean", a.metrics_3d.mean, b.metrics_3d.mean),
          delta("3d_std", a.metrics_3d.std, b.metrics_3d.std),
          delta("3d_median", a.metrics_3d.median, b.metrics_3d.median)};
}

std::string delta_table(const std::vector<MetricDelta>& deltas, const std::string& label_a, const std::string& label_b) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %14s %14s %10s\n", "metric", label_a.c_str(), label_b.c_str(), "change");
  out << buf;
  for (const auto& d : deltas) {
    std::snprintf(buf, sizeof buf, "%-10s %14.3f %14.3f %9.2f%%\n", d.metric.c_str(), d.a, d.b, d.change_pct);
    out << buf;
  }
  return out.str();
}

void write_report(const EvalReport& report, const fs::path& report_dir) {
  fs::create_directories(report_dir);
  write_json_file(report_dir / "report.json", report.to_json());
  std::ofstream txt(report_dir / "report.txt", std::ios::trunc);
  if (!txt) throw FormatError("cannot write " + (report_dir / "report.txt").string());
  txt << report.to_table();
}

EvalReport evaluate(const fs::path& checkpoint, const fs::path& data_root, const std::string& split,
                    const EvaluateOptions& options) {
  auto loaded = load_model(checkpoint);
  const auto manifest = read_manifest(data_root);
  const auto samples = load_split(data_root, manifest, split);
  if (samples.empty()) throw ContractViolation("evaluate: split '" + split + "' of " + data_root.string() + " is empty");
  const int target = loaded.meta.train.target_size;
  const auto prepared = prepare_samples(samples, target, loaded.meta.normalization);
  const auto preds = predict_normalized(*loaded.model, prepared, options.batch_size);

  std::vector<EvalRow> rows;
  std::vector<Point2D> pixel_preds;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pixel_preds.push_back(prepared[i].transform.from_normalized(preds[i]));
    rows.push_back(score_prediction(samples[i], pixel_preds.back()));
  }
  json config = {{"checkpoint", checkpoint.string()},
                 {"data", data_root.string()},
                 {"model", loaded.meta.model.to_json()},
                 {"train", loaded.meta.train.to_json()},
                 {"epochs_completed", loaded.meta.epochs_completed},
                 {"dataset_seed", manifest.seed}};
  auto report = build_report(std::move(rows), split, std::move(config));

  if (options.report_dir) {
    write_report(report, *options.report_dir);
    const fs::path overlays = *options.report_dir / "overlays";
    fs::create_directories(overlays);
    for (std::size_t i = 0; i < samples.size(); ++i)
      write_png(overlays / (samples[i].sample_id + ".png"), render_overlay(samples[i], pixel_preds[i]));
  }
  return report;
}

}  // namespace gammasense
