#include "skelforge/point2voxel.hpp"

namespace skelforge {

namespace {

void check_points(const Points& pts, const P2VConfig& cfg) {
  if (pts.rows() == 0) throw TensorError("point2voxel: empty point set");
  if (cfg.resolution < 1) throw TensorError("point2voxel: bad resolution");
}

}  // namespace

VoxelGrid point2voxel_plain(const Points& pts, const P2VConfig& cfg) {
  check_points(pts, cfg);
  VoxelGrid g(cfg.resolution);
  const NearestNeighborIndex nn(pts);
  const double rho2 = cfg.truncation_radius() * cfg.truncation_radius();
  for (int z = 0; z < g.res; ++z)
    for (int y = 0; y < g.res; ++y)
      for (int x = 0; x < g.res; ++x) {
        const Eigen::Vector3d c = g.center(x, y, z);
        const int j = nn.nearest(c);
        const double d2 = (pts.row(j).transpose() - c).squaredNorm();
        if (d2 <= rho2) g.at(x, y, z) = std::exp(-cfg.scaling * d2);
      }
  return g;
}

VoxelGrid point2voxel_exact(const Points& pts, const P2VConfig& cfg) {
  check_points(pts, cfg);
  VoxelGrid g(cfg.resolution);
  for (int z = 0; z < g.res; ++z)
    for (int y = 0; y < g.res; ++y)
      for (int x = 0; x < g.res; ++x) {
        const Eigen::Vector3d c = g.center(x, y, z);
        double best = 1e30;
        for (Eigen::Index j = 0; j < pts.rows(); ++j)
          best = std::min(best, (pts.row(j).transpose() - c).squaredNorm());
        g.at(x, y, z) = std::exp(-cfg.scaling * best);
      }
  return g;
}

Tensor point2voxel(const Tensor& points, const P2VConfig& cfg) {
  if (points.ndim() != 2 || points.dim(1) != 3) throw TensorError("point2voxel: points must be [N,3]");
  const Points pts = tensor_to_points(points);
  check_points(pts, cfg);
  const std::size_t r = std::size_t(cfg.resolution);
  VoxelGrid g(cfg.resolution);
  const NearestNeighborIndex nn(pts);
  const double rho2 = cfg.truncation_radius() * cfg.truncation_radius();
  const double M = cfg.scaling;

  struct Active {
    std::size_t voxel;
    int point;
    Eigen::Vector3d delta;  // c(i) - p
    double value;
  };
  std::vector<Active> active;
  for (int z = 0; z < g.res; ++z)
    for (int y = 0; y < g.res; ++y)
      for (int x = 0; x < g.res; ++x) {
        const Eigen::Vector3d c = g.center(x, y, z);
        const int j = nn.nearest(c);
        const Eigen::Vector3d delta = c - pts.row(j).transpose();
        const double d2 = delta.squaredNorm();
        if (d2 > rho2) continue;
        const double v = std::exp(-M * d2);
        g.at(x, y, z) = v;
        active.push_back({g.index(x, y, z), j, delta, v});
      }

  return make_op({r, r, r}, g.values, {points},
                 [active, M, pn = points.node()](TensorNode& out) {
                   if (!pn->requires_grad) return;
                   auto& pg = pn->ensure_grad();
                   for (const Active& a : active) {
                     const double g_up = out.grad(Eigen::Index(a.voxel));
                     if (g_up == 0.0) continue;
                     // d exp(-M|c-p|^2) / dp = value * 2M (c - p)
                     const double s = g_up * a.value * 2.0 * M;
                     for (int k = 0; k < 3; ++k)
                       pg(Eigen::Index(std::size_t(a.point) * 3 + std::size_t(k))) += s * a.delta(k);
                   }
                 });
}

}  // namespace skelforge
