#include "gammasense/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gammasense/pfm.hpp"

namespace gammasense {

namespace fs = std::filesystem;
using nlohmann::json;

void StereoSample::validate() const {
  const int h = rig.height;
  const int w = rig.width;
  auto fail = [&](const std::string& what) { throw ValidationError("sample '" + sample_id + "': " + what); };
  if (left.height() != h || left.width() != w || left.channels() != 3) fail("left image size does not match rig");
  if (right.height() != h || right.width() != w || right.channels() != 3) fail("right image size does not match rig");
  if (depth.rows() != h || depth.cols() != w) fail("depth size does not match rig");
  if (mask.rows() != h || mask.cols() != w) fail("mask size does not match rig");
  if (!std::isfinite(gt_2d.u) || !std::isfinite(gt_2d.v) || gt_2d.u < -0.5 || gt_2d.v < -0.5 || gt_2d.u >= w - 0.5 ||
      gt_2d.v >= h - 0.5)
    fail("gt_2d out of image bounds");
  if (!(gt_3d.z > 0.0) || !std::isfinite(gt_3d.x) || !std::isfinite(gt_3d.y)) fail("gt_3d must have finite X, Y and Z > 0");
  for (const auto& p : axis.points)
    if (p.u < 0.0 || p.v < 0.0 || p.u > w - 1.0 || p.v > h - 1.0) fail("axis point out of image bounds");
}

// ---------------------------------------------------------------------------

SquareLayout square_layout(int height, int width) {
  if (height <= 0 || width <= 0) throw ContractViolation("square_layout: empty image");
  const int size = std::max(height, width);
  return {height, width, size, (size - height) / 2, (size - width) / 2};
}

PaddedImage pad_to_square(const Image& image) {
  const auto layout = square_layout(image.height(), image.width());
  PaddedImage out{Image(layout.size, layout.size, image.channels()), layout.top, layout.left};
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      for (int ch = 0; ch < image.channels(); ++ch) out.image.at(r + layout.top, c + layout.left, ch) = image.at(r, c, ch);
  return out;
}

Array2D<float> pad_to_square(const Array2D<float>& plane) {
  const auto layout = square_layout(plane.rows(), plane.cols());
  Array2D<float> out(layout.size, layout.size, 0.0f);
  for (int r = 0; r < plane.rows(); ++r)
    for (int c = 0; c < plane.cols(); ++c) out(r + layout.top, c + layout.left) = plane(r, c);
  return out;
}

Point2D CoordinateTransform::to_normalized(const Point2D& p) const {
  return {(p.u + layout.left) / layout.size, (p.v + layout.top) / layout.size};
}

Point2D CoordinateTransform::from_normalized(const Point2D& n) const {
  return {n.u * layout.size - layout.left, n.v * layout.size - layout.top};
}

Point2D CoordinateTransform::to_target(const Point2D& p) const {
  const double s = static_cast<double>(target) / layout.size;
  return {(p.u + layout.left + 0.5) * s - 0.5, (p.v + layout.top + 0.5) * s - 0.5};
}

Point2D CoordinateTransform::from_target(const Point2D& t) const {
  const double s = static_cast<double>(layout.size) / target;
  return {(t.u + 0.5) * s - 0.5 - layout.left, (t.v + 0.5) * s - 0.5 - layout.top};
}

Array2D<float> resize_bilinear(const Array2D<float>& src, int out_rows, int out_cols) {
  if (src.empty() || out_rows <= 0 || out_cols <= 0) throw ContractViolation("resize_bilinear: empty input or output");
  if (src.rows() == out_rows && src.cols() == out_cols) return src;
  Array2D<float> dst(out_rows, out_cols);
  const double sy = static_cast<double>(src.rows()) / out_rows;
  const double sx = static_cast<double>(src.cols()) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.rows() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.rows() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out_cols; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.cols() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.cols() - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src(y0, x0) + wx * src(y0, x1);
      const double bottom = (1.0 - wx) * src(y1, x0) + wx * src(y1, x1);
      dst(r, c) = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return dst;
}

// ---------------------------------------------------------------------------

json NormalizationStats::to_json() const {
  return {{"image_mean", mean}, {"image_std", stddev}, {"depth_scale", depth_scale}};
}

NormalizationStats NormalizationStats::from_json(const json& j) {
  NormalizationStats s;
  s.mean = j.at("image_mean").get<std::array<double, 6>>();
  s.stddev = j.at("image_std").get<std::array<double, 6>>();
  s.depth_scale = j.at("depth_scale").get<double>();
  for (double sd : s.stddev)
    if (!(sd > 0.0)) throw ValidationError("normalization: image_std entries must be positive");
  if (!(s.depth_scale > 0.0)) throw ValidationError("normalization: depth_scale must be positive");
  return s;
}

void NormalizationAccumulator::add(const StereoSample& s) {
  const Image* views[2] = {&s.left, &s.right};
  for (int view = 0; view < 2; ++view) {
    const auto& px = views[view]->pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double x = px[i] / 255.0;
      sum_[view * 3 + i % 3] += x;
      sum_sq_[view * 3 + i % 3] += x * x;
    }
  }
  count_ += static_cast<double>(s.left.height()) * s.left.width();
  for (float z : s.depth.values())
    if (z > 0.0f) {
      depth_sum_ += z;
      depth_count_ += 1.0;
    }
}

NormalizationStats NormalizationAccumulator::finish() const {
  if (!(count_ > 0.0)) throw ContractViolation("compute_normalization: no samples");
  NormalizationStats stats;
  for (int c = 0; c < 6; ++c) {
    stats.mean[c] = sum_[c] / count_;
    const double var = std::max(sum_sq_[c] / count_ - stats.mean[c] * stats.mean[c], 0.0);
    stats.stddev[c] = std::max(std::sqrt(var), 1e-3);
  }
  stats.depth_scale = depth_count_ > 0.0 ? depth_sum_ / depth_count_ : 100.0;
  return stats;
}

NormalizationStats compute_normalization(const std::vector<StereoSample>& samples) {
  NormalizationAccumulator acc;
  for (const auto& s : samples) acc.add(s);
  return acc.finish();
}

PreparedSample prepare_sample(const StereoSample& sample, int target_size, const NormalizationStats& stats) {
  if (target_size <= 0) throw ContractViolation("prepare_sample: target_size must be positive");
  if (static_cast<int>(sample.axis.points.size()) != kAxisPointCount)
    throw ContractViolation("prepare_sample: sample '" + sample.sample_id + "' needs " +
                            std::to_string(kAxisPointCount) + " axis points");
  const int h = sample.left.height();
  const int w = sample.left.width();
  PreparedSample out;
  out.sample_id = sample.sample_id;
  out.transform = {square_layout(h, w), target_size};
  const int t = target_size;

  out.image = nn::Tensor<float>({6, t, t});
  const std::size_t plane_size = static_cast<std::size_t>(t) * t;
  const Image* views[2] = {&sample.left, &sample.right};
  for (int ch = 0; ch < 6; ++ch) {
    const Image& img = *views[ch / 3];
    Array2D<float> plane(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        plane(r, c) = static_cast<float>((img.at(r, c, ch % 3) / 255.0 - stats.mean[ch]) / stats.stddev[ch]);
    const auto resized = resize_bilinear(pad_to_square(plane), t, t);
    std::copy(resized.values().begin(), resized.values().end(), out.image.data() + ch * plane_size);
  }

  Array2D<float> depth(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) depth(r, c) = static_cast<float>(sample.depth(r, c) / stats.depth_scale);
  const auto depth_resized = resize_bilinear(pad_to_square(depth), t, t);
  out.depth = nn::Tensor<float>({1, t, t});
  std::copy(depth_resized.values().begin(), depth_resized.values().end(), out.depth.data());

  out.axis = nn::Tensor<float>({2 * kAxisPointCount});
  for (int i = 0; i < kAxisPointCount; ++i) {
    const auto n = out.transform.to_normalized(sample.axis.points[static_cast<std::size_t>(i)]);
    out.axis[2 * i] = static_cast<float>(n.u);
    out.axis[2 * i + 1] = static_cast<float>(n.v);
  }
  out.target = out.transform.to_normalized(sample.gt_2d);
  out.pixel_target = sample.gt_2d;
  return out;
}

Batch stack_batch(const std::vector<const PreparedSample*>& samples) {
  if (samples.empty()) throw ContractViolation("make_batch: empty sample list");
  const int n = static_cast<int>(samples.size());
  const int t = samples.front()->transform.target;
  Batch b;
  b.images = nn::Tensor<float>({n, 6, t, t});
  b.depths = nn::Tensor<float>({n, 1, t, t});
  b.axis_points = nn::Tensor<float>({n, 2 * kAxisPointCount});
  b.targets = nn::Tensor<float>({n, 2});
  b.pixel_targets = nn::Tensor<float>({n, 2});
  for (int i = 0; i < n; ++i) {
    const auto& s = *samples[static_cast<std::size_t>(i)];
    if (s.transform.target != t) throw ContractViolation("make_batch: mixed target sizes");
    std::copy(s.image.values().begin(), s.image.values().end(), b.images.data() + i * s.image.size());
    std::copy(s.depth.values().begin(), s.depth.values().end(), b.depths.data() + i * s.depth.size());
    std::copy(s.axis.values().begin(), s.axis.values().end(), b.axis_points.data() + i * s.axis.size());
    b.targets.at(i, 0) = static_cast<float>(s.target.u);
    b.targets.at(i, 1) = static_cast<float>(s.target.v);
    b.pixel_targets.at(i, 0) = static_cast<float>(s.pixel_target.u);
    b.pixel_targets.at(i, 1) = static_cast<float>(s.pixel_target.v);
    b.transforms.push_back(s.transform);
    b.sample_ids.push_back(s.sample_id);
  }
  return b;
}

Batch make_batch(const std::vector<StereoSample>& samples, int target_size, const NormalizationStats& stats) {
  if (samples.empty()) throw ContractViolation("make_batch: empty sample list");
  for (const auto& s : samples)
    if (!(s.rig == samples.front().rig))
      throw ContractViolation("make_batch: samples '" + samples.front().sample_id + "' and '" + s.sample_id +
                              "' use different camera rigs");
  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(prepare_sample(s, target_size, stats));
  std::vector<const PreparedSample*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  return stack_batch(ptrs);
}

// ---------------------------------------------------------------------------

json rig_to_json(const CameraRig& rig) {
  return {{"focal_px", rig.focal_px}, {"baseline_mm", rig.baseline_mm}, {"alpha", rig.alpha},
          {"beta", rig.beta},         {"cx", rig.cx},                   {"cy", rig.cy},
          {"height", rig.height},     {"width", rig.width}};
}

CameraRig rig_from_json(const json& j) {
  CameraRig rig;
  rig.focal_px = j.at("focal_px").get<double>();
  rig.baseline_mm = j.at("baseline_mm").get<double>();
  rig.alpha = j.at("alpha").get<double>();
  rig.beta = j.at("beta").get<double>();
  rig.cx = j.at("cx").get<double>();
  rig.cy = j.at("cy").get<double>();
  rig.height = j.at("height").get<int>();
  rig.width = j.at("width").get<int>();
  return rig;
}

json label_to_json(const StereoSample& s) {
  json points = json::array();
  for (const auto& p : s.axis.points) points.push_back({p.u, p.v});
  return {{"sample_id", s.sample_id},
          {"seed", s.seed},
          {"u", s.gt_2d.u},
          {"v", s.gt_2d.v},
          {"X", s.gt_3d.x},
          {"Y", s.gt_3d.y},
          {"Z", s.gt_3d.z},
          {"axis_points", points},
          {"axis_centroid", {s.axis.centroid.u, s.axis.centroid.v}},
          {"axis_direction", {s.axis.direction.u, s.axis.direction.v}},
          {"visible_fraction", s.visible_fraction},
          {"rig", rig_to_json(s.rig)}};
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("write failed for " + path.string());
}

json read_json_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw FormatError(field + ": cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(field + ": malformed JSON in " + path.string() + " (" + e.what() + ")");
  }
}

void save_sample(const StereoSample& sample, const fs::path& dir) {
  fs::create_directories(dir);
  write_png(dir / "left.png", sample.left);
  write_png(dir / "right.png", sample.right);
  write_pfm(dir / "depth.pfm", sample.depth);
  write_png(dir / "mask.png", mask_to_image(sample.mask));
  write_json_file(dir / "label.json", label_to_json(sample));
}

StereoSample load_sample(const fs::path& dir) {
  const json label = read_json_file(dir / "label.json", "label");
  StereoSample s;
  try {
    s.sample_id = label.at("sample_id").get<std::string>();
    s.seed = label.at("seed").get<std::uint64_t>();
    s.gt_2d = {label.at("u").get<double>(), label.at("v").get<double>()};
    s.gt_3d = {label.at("X").get<double>(), label.at("Y").get<double>(), label.at("Z").get<double>()};
    for (const auto& p : label.at("axis_points")) s.axis.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    const auto& c = label.at("axis_centroid");
    s.axis.centroid = {c.at(0).get<double>(), c.at(1).get<double>()};
    const auto& d = label.at("axis_direction");
    s.axis.direction = {d.at(0).get<double>(), d.at(1).get<double>()};
    s.visible_fraction = label.at("visible_fraction").get<double>();
    s.rig = rig_from_json(label.at("rig"));
  } catch (const json::exception& e) {
    throw FormatError("label: missing or mistyped field in " + (dir / "label.json").string() + " (" + e.what() + ")");
  }
  try {
    s.rig.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError(std::string("label: rig ") + e.what());
  }
  s.left = read_png(dir / "left.png");
  s.right = read_png(dir / "right.png");
  s.depth = read_pfm(dir / "depth.pfm", "depth");
  s.mask = image_to_mask(read_png(dir / "mask.png"));
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

json DatasetManifest::to_json() const {
  json counts = json::object();
  for (const auto& [name, ids] : splits) counts[name] = ids.size();
  return {{"version", version},      {"seed", seed},
          {"rig", rig_to_json(rig)}, {"spec", spec},
          {"counts", counts},        {"splits", splits},
          {"sample_seeds", sample_seeds}, {"normalization", normalization.to_json()}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.rig = rig_from_json(j.at("rig"));
    m.spec = j.at("spec");
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    m.sample_seeds = j.at("sample_seeds").get<std::map<std::string, std::vector<std::uint64_t>>>();
    m.normalization = NormalizationStats::from_json(j.at("normalization"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: missing or mistyped field (") + e.what() + ")");
  }
  return m;
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("manifest has no split '" + name + "'");
  return it->second;
}

void DatasetManifest::validate(const fs::path& root) const {
  std::set<std::string> seen;
  for (const auto& [name, ids] : splits)
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw ValidationError("manifest: sample '" + id + "' appears in more than one split");
      if (!fs::is_directory(sample_dir(root, id)))
        throw ValidationError("manifest: sample '" + id + "' has no directory under " + root.string());
    }
}

fs::path sample_dir(const fs::path& root, const std::string& id) { return root / "samples" / id; }

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
  fs::create_directories(root);
  write_json_file(root / "manifest.json", manifest.to_json());
}

DatasetManifest read_manifest(const fs::path& root) {
  auto m = DatasetManifest::from_json(read_json_file(root / "manifest.json", "manifest"));
  if (m.version != kDatasetFormatVersion)
    throw FormatError("manifest: unsupported dataset version '" + m.version + "'");
  return m;
}

std::vector<StereoSample> load_split(const fs::path& root, const DatasetManifest& manifest, const std::string& split) {
  std::vector<StereoSample> out;
  for (const auto& id : manifest.split(split)) {
    out.push_back(load_sample(sample_dir(root, id)));
    if (!(out.back().rig == manifest.rig))
      throw ValidationError("sample '" + id + "': rig differs from the dataset manifest");
  }
  return out;
}

}  // namespace gammasense
