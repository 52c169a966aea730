#include "gammasense/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace gammasense {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Smooth lattice value noise in [0, 1).
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(splitmix64(seed)) {}

  double operator()(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const double tx = fade(x - fx);
    const double ty = fade(y - fy);
    const double a = lattice(ix, iy);
    const double b = lattice(ix + 1, iy);
    const double c = lattice(ix, iy + 1);
    const double d = lattice(ix + 1, iy + 1);
    return (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d);
  }

  double fbm(double x, double y, int octaves = 4) const {
    double sum = 0.0;
    double amp = 0.5;
    double norm = 0.0;
    for (int o = 0; o < octaves; ++o) {
      sum += amp * (*this)(x, y);
      norm += amp;
      x = 2.03 * x + 17.1;
      y = 2.03 * y - 9.7;
      amp *= 0.5;
    }
    return sum / norm;
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

  double lattice(std::int64_t ix, std::int64_t iy) const {
    const std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632BE59BD9B4E019ull +
                                                          static_cast<std::uint64_t>(iy)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
};

struct Rgbf {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

Rgbf mix(const Rgbf& a, const Rgbf& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Rgbf tissue_albedo(const ValueNoise& noise, double x, double y) {
  const Rgbf pale{0.86, 0.48, 0.44};
  const Rgbf deep{0.62, 0.22, 0.24};
  const double blotch = noise.fbm(x / 18.0, y / 18.0);
  const double grain = noise.fbm(x / 4.0 + 100.0, y / 4.0 - 50.0);
  Rgbf c = mix(pale, deep, std::clamp(1.6 * (blotch - 0.5) + 0.5, 0.0, 1.0));
  const double shade = 0.8 + 0.4 * (grain - 0.5);
  // Thin dark vessel-like contours.
  const double vessel = std::abs(noise.fbm(x / 14.0 - 31.0, y / 14.0 + 7.0) - 0.5);
  const double darken = vessel < 0.02 ? 0.55 + 22.5 * vessel : 1.0;
  return {c.r * shade * darken, c.g * shade * darken, c.b * shade * darken};
}

Rgbf probe_albedo(double distance_from_tip) {
  if (distance_from_tip < 6.0) return {0.12, 0.12, 0.14};  // detector window band
  if (std::fmod(distance_from_tip, 20.0) < 1.5) return {0.35, 0.36, 0.40};
  return {0.74, 0.76, 0.80};
}

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); }

Vec3 pixel_ray(const CameraRig& rig, double u, double v) {
  return Vec3{(u - rig.cx) / rig.alpha, (v - rig.cy) / rig.beta, 1.0}.normalized();
}

// Orthonormal pair perpendicular to `axis`.
std::pair<Vec3, Vec3> perpendicular_basis(const Vec3& axis) {
  const Vec3 helper = std::abs(axis.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  const Vec3 e1 = axis.cross(helper).normalized();
  const Vec3 e2 = axis.cross(e1).normalized();
  return {e1, e2};
}

json surface_to_json(const SurfaceParams& s) {
  return {{"base_depth_min", s.base_depth_min},
          {"base_depth_max", s.base_depth_max},
          {"tilt_max", s.tilt_max},
          {"amplitude_min", s.amplitude_min},
          {"amplitude_max", s.amplitude_max},
          {"wavelength_min", s.wavelength_min},
          {"wavelength_max", s.wavelength_max},
          {"noise_amplitude", s.noise_amplitude},
          {"noise_wavelength", s.noise_wavelength},
          {"grid_size", s.grid_size},
          {"extent", {s.extent.x_min, s.extent.x_max, s.extent.y_min, s.extent.y_max}}};
}

SurfaceParams surface_from_json(const json& j) {
  SurfaceParams s;
  s.base_depth_min = j.at("base_depth_min").get<double>();
  s.base_depth_max = j.at("base_depth_max").get<double>();
  s.tilt_max = j.at("tilt_max").get<double>();
  s.amplitude_min = j.at("amplitude_min").get<double>();
  s.amplitude_max = j.at("amplitude_max").get<double>();
  s.wavelength_min = j.at("wavelength_min").get<double>();
  s.wavelength_max = j.at("wavelength_max").get<double>();
  s.noise_amplitude = j.at("noise_amplitude").get<double>();
  s.noise_wavelength = j.at("noise_wavelength").get<double>();
  s.grid_size = j.at("grid_size").get<int>();
  const auto e = j.at("extent").get<std::array<double, 4>>();
  s.extent = {e[0], e[1], e[2], e[3]};
  return s;
}

json probe_to_json(const ProbeParams& p) {
  return {{"radius_min", p.radius_min}, {"radius_max", p.radius_max}, {"length_min", p.length_min},
          {"length_max", p.length_max}, {"gap_min", p.gap_min},       {"gap_max", p.gap_max},
          {"tilt_max_deg", p.tilt_max_deg}, {"min_depth", p.min_depth}};
}

ProbeParams probe_from_json(const json& j) {
  ProbeParams p;
  p.radius_min = j.at("radius_min").get<double>();
  p.radius_max = j.at("radius_max").get<double>();
  p.length_min = j.at("length_min").get<double>();
  p.length_max = j.at("length_max").get<double>();
  p.gap_min = j.at("gap_min").get<double>();
  p.gap_max = j.at("gap_max").get<double>();
  p.tilt_max_deg = j.at("tilt_max_deg").get<double>();
  p.min_depth = j.at("min_depth").get<double>();
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

void SceneSpec::validate() const {
  rig.validate();
  if (!(visible_min >= 0.5 && visible_max <= 1.0 && visible_min <= visible_max))
    throw ConfigError("SceneSpec: visible-fraction range must lie within [0.5, 1.0]");
  if (!(probe.tilt_max_deg >= 0.0 && probe.tilt_max_deg <= 60.0))
    throw ConfigError("SceneSpec: probe tilt must be within 60 degrees of the optical axis");
  if (!(probe.radius_min > 0.0 && probe.radius_min <= probe.radius_max))
    throw ConfigError("SceneSpec: probe radius range invalid");
  if (!(probe.length_min > 0.0 && probe.length_min <= probe.length_max))
    throw ConfigError("SceneSpec: probe length range invalid");
  if (!(probe.gap_min > 0.0 && probe.gap_min <= probe.gap_max)) throw ConfigError("SceneSpec: probe gap range invalid");
  if (!(surface.base_depth_min > 0.0 && surface.base_depth_min <= surface.base_depth_max))
    throw ConfigError("SceneSpec: surface depth range invalid");
  if (!(surface.wavelength_min > 0.0 && surface.wavelength_min <= surface.wavelength_max))
    throw ConfigError("SceneSpec: surface wavelength range invalid");
  if (surface.grid_size < 2) throw ConfigError("SceneSpec: surface grid_size must be >= 2");
  if (max_attempts < 1) throw ConfigError("SceneSpec: max_attempts must be >= 1");
}

json SceneSpec::to_json() const {
  return {{"rig", rig_to_json(rig)},
          {"surface", surface_to_json(surface)},
          {"probe", probe_to_json(probe)},
          {"lighting", {{"ambient", lighting.ambient}, {"diffuse", lighting.diffuse}}},
          {"visible_fraction_range", {visible_min, visible_max}},
          {"texture_seed", texture_seed},
          {"max_attempts", max_attempts}};
}

SceneSpec SceneSpec::from_json(const json& j) {
  SceneSpec s;
  try {
    s.rig = rig_from_json(j.at("rig"));
    s.surface = surface_from_json(j.at("surface"));
    s.probe = probe_from_json(j.at("probe"));
    s.lighting.ambient = j.at("lighting").at("ambient").get<double>();
    s.lighting.diffuse = j.at("lighting").at("diffuse").get<double>();
    const auto range = j.at("visible_fraction_range").get<std::array<double, 2>>();
    s.visible_min = range[0];
    s.visible_max = range[1];
    s.texture_seed = j.at("texture_seed").get<std::uint64_t>();
    s.max_attempts = j.at("max_attempts").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("SceneSpec: malformed generator configuration (") + e.what() + ")");
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

HeightField make_surface(const SurfaceParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const double base = uniform(params.base_depth_min, params.base_depth_max);
  const double gx = uniform(-params.tilt_max, params.tilt_max);
  const double gy = uniform(-params.tilt_max, params.tilt_max);
  struct Wave {
    double amplitude, kx, ky, phase;
  };
  std::array<Wave, 2> waves{};
  for (auto& w : waves) {
    const double theta = uniform(0.0, std::numbers::pi);
    const double k = 2.0 * std::numbers::pi / uniform(params.wavelength_min, params.wavelength_max);
    w = {0.5 * uniform(params.amplitude_min, params.amplitude_max), k * std::cos(theta), k * std::sin(theta),
         uniform(0.0, 2.0 * std::numbers::pi)};
  }
  const ValueNoise noise(rng());

  const int n = params.grid_size;
  const Extent& e = params.extent;
  Array2D<double> grid(n, n);
  for (int j = 0; j < n; ++j) {
    const double y = e.y_min + (e.y_max - e.y_min) * j / (n - 1);
    for (int i = 0; i < n; ++i) {
      const double x = e.x_min + (e.x_max - e.x_min) * i / (n - 1);
      double h = base + gx * x + gy * y;
      for (const auto& w : waves) h += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
      h += params.noise_amplitude * (2.0 * noise(x / params.noise_wavelength, y / params.noise_wavelength) - 1.0);
      grid(j, i) = h;
    }
  }
  return HeightField(std::move(grid), e);
}

std::optional<double> intersect_probe(const ProbePose& probe, const Point3D& origin, const Vec3& direction) {
  const Vec3& a = probe.axis;
  const Vec3 w = to_vec(origin) - to_vec(probe.tip);
  const double r_dot_a = direction.dot(a);
  const double w_dot_a = w.dot(a);
  const Vec3 r_perp = direction - a * r_dot_a;
  const Vec3 w_perp = w - a * w_dot_a;
  const double qa = r_perp.dot(r_perp);
  const double qb = 2.0 * r_perp.dot(w_perp);
  const double qc = w_perp.dot(w_perp) - probe.radius * probe.radius;

  constexpr double kEps = 1e-9;
  std::optional<double> best;
  auto consider = [&](double t) {
    if (t > kEps && (!best || t < *best)) best = t;
  };
  if (qa > 1e-14) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
        const double s = w_dot_a + t * r_dot_a;  // axial coordinate relative to the tip
        if (s <= 0.0 && s >= -probe.length) consider(t);
      }
    }
  }
  if (std::abs(r_dot_a) > 1e-14) {
    for (double cap : {0.0, -probe.length}) {
      const double t = (cap - w_dot_a) / r_dot_a;
      const Vec3 p = w + direction * t;
      const Vec3 radial = p - a * p.dot(a);
      if (radial.dot(radial) <= probe.radius * probe.radius) consider(t);
    }
  }
  return best;
}

RenderedView render_view(const Scene& scene, const CameraRig& rig, const LightingParams& lighting, double camera_x) {
  RenderedView view{Image(rig.height, rig.width, 3), DepthMap(rig.height, rig.width, kInvalidDepth),
                    ProbeMask(rig.height, rig.width, 0)};
  const ValueNoise noise(scene.texture_seed);
  const Point3D origin{camera_x, 0.0, 0.0};
  for (int r = 0; r < rig.height; ++r) {
    for (int c = 0; c < rig.width; ++c) {
      const Vec3 dir = pixel_ray(rig, c, r);
      const auto t_tissue = find_surface_crossing(origin, dir, scene.surface);
      const auto t_probe = intersect_probe(scene.probe, origin, dir);
      if (!t_tissue && !t_probe) continue;

      const bool probe_hit = t_probe && (!t_tissue || *t_probe < *t_tissue);
      const double t = probe_hit ? *t_probe : *t_tissue;
      const Vec3 p = to_vec(origin) + dir * t;
      Vec3 normal;
      Rgbf albedo;
      if (probe_hit) {
        const Vec3 rel = p - to_vec(scene.probe.tip);
        const double s = rel.dot(scene.probe.axis);
        if (s > -1e-6) {
          normal = scene.probe.axis;
        } else if (s < -scene.probe.length + 1e-6) {
          normal = scene.probe.axis * -1.0;
        } else {
          normal = (rel - scene.probe.axis * s).normalized();
        }
        albedo = probe_albedo(-s);
        view.mask(r, c) = 1;
      } else {
        normal = scene.surface.normal(p.x, p.y).value_or(Vec3{0.0, 0.0, -1.0});
        albedo = tissue_albedo(noise, p.x, p.y);
      }
      const double lambert = std::max(0.0, -dir.dot(normal));
      const double light = lighting.ambient + lighting.diffuse * lambert;
      view.image.at(r, c, 0) = to_byte(albedo.r * light);
      view.image.at(r, c, 1) = to_byte(albedo.g * light);
      view.image.at(r, c, 2) = to_byte(albedo.b * light);
      view.depth(r, c) = static_cast<float>(p.z);
    }
  }
  return view;
}

double visible_fraction(const ProbePose& probe, const CameraRig& rig) {
  const auto [e1, e2] = perpendicular_basis(probe.axis);
  double u_min = std::numeric_limits<double>::infinity();
  double u_max = -u_min;
  double v_min = u_min;
  double v_max = -u_min;
  constexpr int kRimSamples = 64;
  for (double s : {0.0, -probe.length}) {
    for (int k = 0; k < kRimSamples; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / kRimSamples;
      const Vec3 p = to_vec(probe.tip) + probe.axis * s + (e1 * std::cos(phi) + e2 * std::sin(phi)) * probe.radius;
      if (!(p.z > 1e-3)) return 0.0;
      const Point2D q = project(to_point(p), rig);
      u_min = std::min(u_min, q.u);
      u_max = std::max(u_max, q.u);
      v_min = std::min(v_min, q.v);
      v_max = std::max(v_max, q.v);
    }
  }
  // Canvas large enough for the whole silhouette; give up on absurd projections.
  const int c0 = static_cast<int>(std::floor(u_min)) - 2;
  const int c1 = static_cast<int>(std::ceil(u_max)) + 2;
  const int r0 = static_cast<int>(std::floor(v_min)) - 2;
  const int r1 = static_cast<int>(std::ceil(v_max)) + 2;
  if (c1 - c0 > 8 * rig.width || r1 - r0 > 8 * rig.height) return 0.0;

  long total = 0;
  long inside = 0;
  const Point3D origin{0.0, 0.0, 0.0};
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      if (!intersect_probe(probe, origin, pixel_ray(rig, c, r))) continue;
      ++total;
      if (r >= 0 && r < rig.height && c >= 0 && c < rig.width) ++inside;
    }
  return total > 0 ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
}

Point3D sensing_point(const Scene& scene) {
  return ray_surface_intersection(scene.probe.tip, scene.probe.axis, scene.surface);
}

StereoSample render_sample(const SceneSpec& spec, const Scene& scene, std::uint64_t seed, const std::string& sample_id) {
  StereoSample s;
  s.sample_id = sample_id;
  s.seed = seed;
  s.rig = spec.rig;
  s.gt_3d = sensing_point(scene);
  s.gt_2d = project(s.gt_3d, spec.rig);
  auto left = render_view(scene, spec.rig, spec.lighting, 0.0);
  auto right = render_view(scene, spec.rig, spec.lighting, spec.rig.baseline_mm);
  s.left = std::move(left.image);
  s.depth = std::move(left.depth);
  s.mask = std::move(left.mask);
  s.right = std::move(right.image);
  s.visible_fraction = visible_fraction(scene.probe, spec.rig);
  const ProbeAxis axis = extract_axis(s.mask);
  s.axis = sample_axis_points(axis, s.mask, kAxisPointCount, splitmix64(seed ^ 0xA515ull));
  return s;
}

namespace {

// Cheap geometric screening of a candidate pose; the rendered checks follow.
bool pose_is_plausible(const SceneSpec& spec, const Scene& scene) {
  const auto& probe = scene.probe;
  for (double s = 0.0; s <= probe.length; s += 2.0) {
    const Vec3 p = to_vec(probe.tip) - probe.axis * s;
    if (p.z < spec.probe.min_depth) return false;
    const auto h = scene.surface.height(p.x, p.y);
    if (!h || p.z > *h - 0.5 * probe.radius) return false;  // probe must float above the tissue
  }
  return true;
}

}  // namespace

namespace {
constexpr int kAttemptsPerSurface = 25;
}  // namespace

StereoSample generate_sample(const SceneSpec& spec, std::uint64_t seed, const std::string& sample_id) {
  spec.validate();
  std::mt19937_64 rng(splitmix64(seed));
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  Scene scene{make_surface(spec.surface, rng()), ProbePose{}, splitmix64(spec.texture_seed ^ seed)};
  const CameraRig& rig = spec.rig;
  const double cos_tilt_max = std::cos(spec.probe.tilt_max_deg * std::numbers::pi / 180.0);

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    // Some surfaces leave almost no valid pose; start over on a fresh one.
    if (attempt > 0 && attempt % kAttemptsPerSurface == 0) scene.surface = make_surface(spec.surface, rng());
    // Aim at a tissue point inside the central 80% of the image.
    const double u = uniform(0.1 * rig.width, 0.9 * rig.width);
    const double v = uniform(0.1 * rig.height, 0.9 * rig.height);
    const auto t_aim = find_surface_crossing({0.0, 0.0, 0.0}, pixel_ray(rig, u, v), scene.surface);
    if (!t_aim) continue;
    const Vec3 aim = pixel_ray(rig, u, v) * *t_aim;

    // Axis direction uniform on the spherical cap around +Z.
    const double cos_tilt = uniform(cos_tilt_max, 1.0);
    const double sin_tilt = std::sqrt(std::max(0.0, 1.0 - cos_tilt * cos_tilt));
    const double azimuth = uniform(0.0, 2.0 * std::numbers::pi);
    ProbePose& probe = scene.probe;
    probe.axis = Vec3{sin_tilt * std::cos(azimuth), sin_tilt * std::sin(azimuth), cos_tilt}.normalized();
    probe.radius = uniform(spec.probe.radius_min, spec.probe.radius_max);
    probe.length = uniform(spec.probe.length_min, spec.probe.length_max);
    probe.tip = to_point(aim - probe.axis * uniform(spec.probe.gap_min, spec.probe.gap_max));
    if (!pose_is_plausible(spec, scene)) continue;

    const auto t_gt = find_surface_crossing(probe.tip, probe.axis, scene.surface);
    if (!t_gt) continue;
    const Point3D gt3 = to_point(to_vec(probe.tip) + probe.axis * *t_gt);
    const Point2D gt2 = project(gt3, rig);
    if (gt2.u < 2.0 || gt2.v < 2.0 || gt2.u > rig.width - 3.0 || gt2.v > rig.height - 3.0) continue;

    const double fraction = visible_fraction(probe, rig);
    if (fraction < spec.visible_min || fraction > spec.visible_max) continue;

    const auto left = render_view(scene, rig, spec.lighting, 0.0);
    const int gr = static_cast<int>(std::lround(gt2.v));
    const int gc = static_cast<int>(std::lround(gt2.u));
    if (left.mask(gr, gc) || !(left.depth(gr, gc) > 0.0f)) continue;  // sensing point hidden by the probe
    try {
      extract_axis(left.mask);
    } catch (const Error&) {
      continue;
    }
    return render_sample(spec, scene, seed, sample_id);
  }
  throw GenerationFailure("generate_sample: no acceptable probe pose after " + std::to_string(spec.max_attempts) +
                          " draws (seed " + std::to_string(seed) + ")");
}

std::map<std::string, std::vector<std::uint64_t>> derive_split_seeds(const SplitCounts& counts, std::uint64_t seed) {
  std::map<std::string, std::vector<std::uint64_t>> out;
  std::set<std::uint64_t> used;
  const int sizes[3] = {counts.train, counts.val, counts.test};
  for (int k = 0; k < 3; ++k) {
    if (sizes[k] < 0) throw ConfigError("generate_dataset: split counts must be non-negative");
    auto& seeds = out[kSplitNames[static_cast<std::size_t>(k)]];
    std::uint64_t state = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k) + 1));
    while (static_cast<int>(seeds.size()) < sizes[k]) {
      state = splitmix64(state);
      if (used.insert(state).second) seeds.push_back(state);
    }
  }
  return out;
}

DatasetManifest generate_dataset(const SceneSpec& spec, const SplitCounts& counts, const fs::path& out_dir,
                                 std::uint64_t seed) {
  spec.validate();
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.rig = spec.rig;
  manifest.spec = spec.to_json();
  manifest.sample_seeds = derive_split_seeds(counts, seed);

  fs::create_directories(out_dir / "samples");
  NormalizationAccumulator train_stats;
  for (const auto& split : kSplitNames) {
    auto& ids = manifest.splits[split];
    const auto& seeds = manifest.sample_seeds.at(split);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      std::ostringstream id;
      id << split << "_" << std::setw(4) << std::setfill('0') << i;
      const StereoSample sample = generate_sample(spec, seeds[i], id.str());
      save_sample(sample, sample_dir(out_dir, id.str()));
      if (split == "train") train_stats.add(sample);
      ids.push_back(id.str());
    }
  }
  if (counts.train > 0) manifest.normalization = train_stats.finish();
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace gammasense
