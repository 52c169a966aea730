#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "gammasense/dataio.hpp"
#include "gammasense/heightfield.hpp"
#include "gammasense/sample.hpp"

namespace gammasense {

/// Tissue family: tilted plane + two sinusoids + smooth value noise.
struct SurfaceParams {
  double base_depth_min = 75.0;
  double base_depth_max = 100.0;
  double tilt_max = 0.25;  // |dZ/dX|, |dZ/dY| of the plane
  double amplitude_min = 1.0;
  double amplitude_max = 4.0;
  double wavelength_min = 40.0;
  double wavelength_max = 90.0;
  double noise_amplitude = 1.0;
  double noise_wavelength = 25.0;
  int grid_size = 257;
  Extent extent{-150.0, 150.0, -150.0, 150.0};
};

struct ProbeParams {
  double radius_min = 3.5;
  double radius_max = 4.5;
  double length_min = 40.0;
  double length_max = 80.0;
  double gap_min = 5.0;  // tip-to-tissue distance along the axis
  double gap_max = 25.0;
  double tilt_max_deg = 60.0;
  double min_depth = 10.0;  // every probe point stays this far in front of the camera
};

struct LightingParams {
  double ambient = 0.25;
  double diffuse = 0.75;
};

struct SceneSpec {
  CameraRig rig;
  SurfaceParams surface;
  ProbeParams probe;
  LightingParams lighting;
  double visible_min = 0.5;
  double visible_max = 1.0;
  std::uint64_t texture_seed = 0x5eed;
  int max_attempts = 100;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

/// Finite cylinder from `tip - length * axis` to `tip`; axis points from the
/// grasped end towards the tip and onwards to the tissue.
struct ProbePose {
  Point3D tip;
  Vec3 axis{0.0, 0.0, 1.0};
  double radius = 4.0;
  double length = 60.0;
};

struct Scene {
  HeightField surface;
  ProbePose probe;
  std::uint64_t texture_seed = 0;
};

struct RenderedView {
  Image image;
  DepthMap depth;
  ProbeMask mask;
};

HeightField make_surface(const SurfaceParams& params, std::uint64_t seed);

/// Nearest positive ray parameter hitting the probe cylinder (side or caps).
std::optional<double> intersect_probe(const ProbePose& probe, const Point3D& origin, const Vec3& direction);

/// Ray-casts the scene from a camera at (camera_x, 0, 0) with the rig's intrinsics.
RenderedView render_view(const Scene& scene, const CameraRig& rig, const LightingParams& lighting, double camera_x);

/// In-image share of the unoccluded probe silhouette.
double visible_fraction(const ProbePose& probe, const CameraRig& rig);

/// Sensing point: the probe axis ray from the tip meets the tissue.
Point3D sensing_point(const Scene& scene);

/// Renders both views and labels for a fixed scene, without pose rejection.
StereoSample render_sample(const SceneSpec& spec, const Scene& scene, std::uint64_t seed, const std::string& sample_id);

/// Draws a scene from `seed`, retrying rejected poses up to spec.max_attempts.
/// Throws GenerationFailure when no acceptable pose is found.
StereoSample generate_sample(const SceneSpec& spec, std::uint64_t seed, const std::string& sample_id = "sample");

struct SplitCounts {
  int train = 8;
  int val = 2;
  int test = 2;
};

/// Per-split sample seeds derived from the dataset seed; never shared across splits.
std::map<std::string, std::vector<std::uint64_t>> derive_split_seeds(const SplitCounts& counts, std::uint64_t seed);

DatasetManifest generate_dataset(const SceneSpec& spec, const SplitCounts& counts, const std::filesystem::path& out_dir,
                                 std::uint64_t seed);

}  // namespace gammasense
