#pragma once

#include <cmath>

#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

struct P2VConfig {
  double scaling = 10.0;    // M
  int resolution = 128;     // r' = r/2
  double tolerance = 1e-6;  // values below this may be truncated to zero

  /// Truncation radius: exp(-M * rho^2) == tolerance.
  double truncation_radius() const { return std::sqrt(std::log(1.0 / tolerance) / scaling); }
};

/// Soft rasterization of a point set: each voxel within the truncation radius
/// of some point reads exp(-M * min_p ||c(i) - p||^2); all other voxels are 0.
VoxelGrid point2voxel_plain(const Points& pts, const P2VConfig& cfg);

/// Exact (untruncated) evaluation over the full grid; test oracle.
VoxelGrid point2voxel_exact(const Points& pts, const P2VConfig& cfg);

/// Differentiable version over a [N,3] point tensor: returns the voxel values
/// as a [r',r',r'] tensor wired into the tape via the cached nearest-point
/// assignment (min-envelope subgradient, lowest index on ties).
Tensor point2voxel(const Tensor& points, const P2VConfig& cfg);

}  // namespace skelforge
