#pragma once

#include <cstdint>
#include <string>

#include "gammasense/axis.hpp"
#include "gammasense/geometry.hpp"
#include "gammasense/image.hpp"

namespace gammasense {

/// One labelled stereo frame. The ground-truth sensing point is defined in
/// the left camera.
struct StereoSample {
  std::string sample_id;
  Image left;   // H x W x 3
  Image right;  // H x W x 3
  DepthMap depth;
  ProbeMask mask;
  AxisSample axis;
  Point2D gt_2d;
  Point3D gt_3d;
  CameraRig rig;
  double visible_fraction = 1.0;
  std::uint64_t seed = 0;

  /// Throws ValidationError naming the first broken invariant.
  void validate() const;
};

}  // namespace gammasense
