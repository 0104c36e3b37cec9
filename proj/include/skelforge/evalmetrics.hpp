#pragma once

#include "skelforge/mesh.hpp"

namespace skelforge {

struct EvalResult {
  double cd = 0.0;   // mean-of-squared per direction, summed, x1000
  double iou = 0.0;  // at the voxelization resolution
};

/// Chamfer distance between surface samplings of two meshes, reported in the
/// x0.001 table convention (mean squared nearest-neighbor distance per
/// direction, summed over both directions, scaled by 1000).
double chamfer_metric(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t samples = 10000,
                      std::uint64_t seed = 17);

/// Volumetric IoU after voxelizing both meshes.
double iou_metric(const TriangleMesh& pred, const TriangleMesh& gt, int res = 64);

EvalResult evaluate_mesh(const TriangleMesh& pred, const TriangleMesh& gt,
                         std::size_t samples = 10000, int iou_res = 64, std::uint64_t seed = 17);

}  // namespace skelforge
