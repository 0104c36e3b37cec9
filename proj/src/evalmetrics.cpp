#include "skelforge/evalmetrics.hpp"

#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

double chamfer_metric(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t samples,
                      std::uint64_t seed) {
  // same sampling seed on both sides so identical meshes score exactly zero
  const Points a = sample_surface(pred, samples, seed).points.points;
  const Points b = sample_surface(gt, samples, seed).points.points;
  return 1000.0 * chamfer_plain(a, b, Reduction::Mean).value;
}

double iou_metric(const TriangleMesh& pred, const TriangleMesh& gt, int res) {
  return iou(voxelize_mesh(pred, res), voxelize_mesh(gt, res));
}

EvalResult evaluate_mesh(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t samples,
                         int iou_res, std::uint64_t seed) {
  EvalResult r;
  r.cd = chamfer_metric(pred, gt, samples, seed);
  r.iou = iou_metric(pred, gt, iou_res);
  return r;
}

}  // namespace skelforge
