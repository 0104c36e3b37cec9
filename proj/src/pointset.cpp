#include "skelforge/pointset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skelforge {

void PointSet::require_nonempty(const char* op) const {
  if (points.rows() == 0) throw TensorError(std::string(op) + ": empty point set");
}

void PointSet::require_normals(const char* op) const {
  if (!normals || normals->rows() != points.rows())
    throw TensorError(std::string(op) + ": point set has no normals");
}

PointSet PointSet::subset(const std::vector<int>& idx) const {
  PointSet out;
  out.points.resize(Eigen::Index(idx.size()), 3);
  if (normals) out.normals.emplace(Eigen::Index(idx.size()), 3);
  if (labels) out.labels.emplace(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.points.row(Eigen::Index(i)) = points.row(idx[i]);
    if (normals) out.normals->row(Eigen::Index(i)) = normals->row(idx[i]);
    if (labels) (*out.labels)[i] = (*labels)[std::size_t(idx[i])];
  }
  return out;
}

PointSet PointSet::concat(const PointSet& a, const PointSet& b) {
  PointSet out;
  out.points.resize(a.points.rows() + b.points.rows(), 3);
  out.points << a.points, b.points;
  if (a.normals && b.normals) {
    out.normals.emplace(out.points.rows(), 3);
    *out.normals << *a.normals, *b.normals;
  }
  if (a.labels && b.labels) {
    out.labels.emplace();
    out.labels->insert(out.labels->end(), a.labels->begin(), a.labels->end());
    out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
  }
  return out;
}

int brute_force_nearest(const Points& pts, const Eigen::Vector3d& q) {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double d = (pts.row(i).transpose() - q).squaredNorm();
    if (d < bd) {
      bd = d;
      best = int(i);
    }
  }
  return best;
}

NearestNeighborIndex::NearestNeighborIndex(const Points& pts) : pts_(pts) {
  if (pts.rows() == 0) throw TensorError("NearestNeighborIndex: empty point set");
  Eigen::Vector3d lo = pts.colwise().minCoeff();
  Eigen::Vector3d hi = pts.colwise().maxCoeff();
  const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
  const double target = extent / std::max(1.0, std::cbrt(double(pts.rows())));
  cell_ = std::max(target, 1e-6);
  lo_ = lo;
  nx_ = std::max(1, int((hi.x() - lo.x()) / cell_) + 1);
  ny_ = std::max(1, int((hi.y() - lo.y()) / cell_) + 1);
  nz_ = std::max(1, int((hi.z() - lo.z()) / cell_) + 1);
  cells_.resize(std::size_t(nx_) * ny_ * nz_);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const int ix = std::clamp(int((pts(i, 0) - lo_.x()) / cell_), 0, nx_ - 1);
    const int iy = std::clamp(int((pts(i, 1) - lo_.y()) / cell_), 0, ny_ - 1);
    const int iz = std::clamp(int((pts(i, 2) - lo_.z()) / cell_), 0, nz_ - 1);
    cells_[std::size_t(cell_index(ix, iy, iz))].push_back(int(i));
  }
}

int NearestNeighborIndex::nearest(const Eigen::Vector3d& q) const {
  const int qx = std::clamp(int((q.x() - lo_.x()) / cell_), 0, nx_ - 1);
  const int qy = std::clamp(int((q.y() - lo_.y()) / cell_), 0, ny_ - 1);
  const int qz = std::clamp(int((q.z() - lo_.z()) / cell_), 0, nz_ - 1);
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  const int rmax = std::max({nx_, ny_, nz_});
  for (int radius = 0; radius <= rmax; ++radius) {
    // once a candidate exists, stop when the next shell cannot improve on it
    if (best >= 0) {
      const double shell_min = double(radius - 1) * cell_;
      if (shell_min > 0 && shell_min * shell_min > bd) break;
    }
    const int x0 = std::max(0, qx - radius), x1 = std::min(nx_ - 1, qx + radius);
    const int y0 = std::max(0, qy - radius), y1 = std::min(ny_ - 1, qy + radius);
    const int z0 = std::max(0, qz - radius), z1 = std::min(nz_ - 1, qz + radius);
    for (int iz = z0; iz <= z1; ++iz)
      for (int iy = y0; iy <= y1; ++iy)
        for (int ix = x0; ix <= x1; ++ix) {
          const bool on_shell = (ix == x0 || ix == x1 || iy == y0 || iy == y1 || iz == z0 || iz == z1) &&
                                (std::abs(ix - qx) == radius || std::abs(iy - qy) == radius ||
                                 std::abs(iz - qz) == radius);
          if (radius > 0 && !on_shell) continue;
          for (int pi : cells_[std::size_t(cell_index(ix, iy, iz))]) {
            const double d = (pts_.row(pi).transpose() - q).squaredNorm();
            if (d < bd || (d == bd && pi < best)) {
              bd = d;
              best = pi;
            }
          }
        }
  }
  return best;
}

double NearestNeighborIndex::nearest_sq_dist(const Eigen::Vector3d& q) const {
  const int i = nearest(q);
  return (pts_.row(i).transpose() - q).squaredNorm();
}

namespace {

// shared accumulation core so unit-weight weighted Chamfer is bitwise equal
// to the plain Sum reduction
double chamfer_core(const Points& a, const Points& b, const Eigen::VectorXd* kappa_on_b, Reduction red,
                    std::vector<int>& nn_ab, std::vector<int>& nn_ba) {
  if (a.rows() == 0 || b.rows() == 0) throw TensorError("chamfer: empty point set");
  NearestNeighborIndex ib(b);
  NearestNeighborIndex ia(a);
  nn_ab.resize(std::size_t(a.rows()));
  nn_ba.resize(std::size_t(b.rows()));
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int j = ib.nearest(a.row(i).transpose());
    nn_ab[std::size_t(i)] = j;
    double d = (a.row(i) - b.row(j)).squaredNorm();
    if (kappa_on_b) d *= (*kappa_on_b)(j);
    s1 += d;
  }
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const int i = ia.nearest(b.row(j).transpose());
    nn_ba[std::size_t(j)] = i;
    double d = (a.row(i) - b.row(j)).squaredNorm();
    if (kappa_on_b) d *= (*kappa_on_b)(j);
    s2 += d;
  }
  if (red == Reduction::Mean) return s1 / double(a.rows()) + s2 / double(b.rows());
  return s1 + s2;
}

}  // namespace

ChamferResult chamfer_plain(const Points& a, const Points& b, Reduction red) {
  ChamferResult r;
  r.value = chamfer_core(a, b, nullptr, red, r.nn_ab, r.nn_ba);
  return r;
}

double weighted_chamfer_plain(const Points& pred, const Points& gt, const Eigen::VectorXd& kappa,
                              ChamferResult* detail) {
  if (kappa.size() != gt.rows())
    throw TensorError("weighted_chamfer: kappa length " + std::to_string(kappa.size()) + " != |gt| " +
                      std::to_string(gt.rows()));
  ChamferResult r;
  r.value = chamfer_core(pred, gt, &kappa, Reduction::Sum, r.nn_ab, r.nn_ba);
  if (detail) *detail = r;
  return r.value;
}

double laplacian_plain(const Points& pts, const std::vector<std::vector<int>>& neighbors) {
  if (neighbors.size() != std::size_t(pts.rows())) throw TensorError("laplacian_reg: adjacency size mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto& nb = neighbors[std::size_t(i)];
    if (nb.empty()) throw TensorError("laplacian_reg: isolated point at index " + std::to_string(i));
    Eigen::RowVector3d c = Eigen::RowVector3d::Zero();
    for (int j : nb) c += pts.row(j);
    c /= double(nb.size());
    s += (pts.row(i) - c).squaredNorm();
  }
  return s;
}

Eigen::VectorXd curvature_weights(const PointSet& gt, int k, double angle_thresh_deg, double high_w) {
  gt.require_nonempty("curvature_weights");
  gt.require_normals("curvature_weights");
  const Eigen::Index n = gt.points.rows();
  if (k > n) throw TensorError("curvature_weights: k exceeds point count");
  const double cos_thresh = std::cos(angle_thresh_deg * M_PI / 180.0);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[std::size_t(j)] = {(gt.points.row(i) - gt.points.row(j)).squaredNorm(), int(j)};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double min_cos = 1.0;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        const double c = gt.normals->row(dist[std::size_t(a)].second)
                             .dot(gt.normals->row(dist[std::size_t(b)].second));
        min_cos = std::min(min_cos, c);
      }
    if (min_cos < cos_thresh) w(i) = high_w;
  }
  return w;
}

Points tensor_to_points(const Tensor& t) {
  if (t.ndim() != 2 || t.dim(1) != 3) throw TensorError("expected [N,3] tensor, got " + shape_str(t.shape()));
  Points p = Eigen::Map<const Points>(t.values().data(), Eigen::Index(t.dim(0)), 3);
  return p;
}

Tensor points_to_tensor(const Points& p) {
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
  return Tensor::from_vector({std::size_t(p.rows()), 3}, std::move(v));
}

Tensor chamfer(const Tensor& a, const Tensor& b, Reduction red) {
  Points pa = tensor_to_points(a), pb = tensor_to_points(b);
  ChamferResult r = chamfer_plain(pa, pb, red);
  Eigen::VectorXd y(1);
  y(0) = r.value;
  const double na = double(pa.rows()), nb = double(pb.rows());
  const double w1 = red == Reduction::Mean ? 1.0 / na : 1.0;
  const double w2 = red == Reduction::Mean ? 1.0 / nb : 1.0;
  return make_op({1}, std::move(y), {a, b}, [pa, pb, r, w1, w2](TensorNode& self) {
    const double g = self.grad(0);
    Eigen::VectorXd* ga = self.parents[0]->requires_grad ? &self.parents[0]->ensure_grad() : nullptr;
    Eigen::VectorXd* gb = self.parents[1]->requires_grad ? &self.parents[1]->ensure_grad() : nullptr;
    auto add3 = [](Eigen::VectorXd* gv, int row, const Eigen::RowVector3d& v) {
      if (!gv) return;
      (*gv)(3 * row + 0) += v(0);
      (*gv)(3 * row + 1) += v(1);
      (*gv)(3 * row + 2) += v(2);
    };
    for (Eigen::Index i = 0; i < pa.rows(); ++i) {
      const int j = r.nn_ab[std::size_t(i)];
      const Eigen::RowVector3d d = 2.0 * g * w1 * (pa.row(i) - pb.row(j));
      add3(ga, int(i), d);
      add3(gb, j, -d);
    }
    for (Eigen::Index j = 0; j < pb.rows(); ++j) {
      const int i = r.nn_ba[std::size_t(j)];
      const Eigen::RowVector3d d = 2.0 * g * w2 * (pa.row(i) - pb.row(j));
      add3(ga, i, d);
      add3(gb, int(j), -d);
    }
  });
}

Tensor weighted_chamfer(const Tensor& pred, const Tensor& gt, const Eigen::VectorXd& kappa) {
  Points pp = tensor_to_points(pred), pg = tensor_to_points(gt);
  ChamferResult r;
  const double value = weighted_chamfer_plain(pp, pg, kappa, &r);
  Eigen::VectorXd y(1);
  y(0) = value;
  return make_op({1}, std::move(y), {pred, gt}, [pp, pg, r, kappa](TensorNode& self) {
    const double g = self.grad(0);
    Eigen::VectorXd* ga = self.parents[0]->requires_grad ? &self.parents[0]->ensure_grad() : nullptr;
    Eigen::VectorXd* gb = self.parents[1]->requires_grad ? &self.parents[1]->ensure_grad() : nullptr;
    auto add3 = [](Eigen::VectorXd* gv, int row, const Eigen::RowVector3d& v) {
      if (!gv) return;
      (*gv)(3 * row + 0) += v(0);
      (*gv)(3 * row + 1) += v(1);
      (*gv)(3 * row + 2) += v(2);
    };
    for (Eigen::Index i = 0; i < pp.rows(); ++i) {
      const int j = r.nn_ab[std::size_t(i)];
      const Eigen::RowVector3d d = 2.0 * g * kappa(j) * (pp.row(i) - pg.row(j));
      add3(ga, int(i), d);
      add3(gb, j, -d);
    }
    for (Eigen::Index j = 0; j < pg.rows(); ++j) {
      const int i = r.nn_ba[std::size_t(j)];
      const Eigen::RowVector3d d = 2.0 * g * kappa(j) * (pp.row(i) - pg.row(j));
      add3(ga, i, d);
      add3(gb, int(j), -d);
    }
  });
}

Tensor laplacian_reg(const Tensor& pts, const std::vector<std::vector<int>>& neighbors) {
  Points p = tensor_to_points(pts);
  const double value = laplacian_plain(p, neighbors);
  Eigen::VectorXd y(1);
  y(0) = value;
  return make_op({1}, std::move(y), {pts}, [p, neighbors](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    const double g = self.grad(0);
    auto& gr = self.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const auto& nb = neighbors[std::size_t(i)];
      Eigen::RowVector3d c = Eigen::RowVector3d::Zero();
      for (int j : nb) c += p.row(j);
      c /= double(nb.size());
      const Eigen::RowVector3d diff = 2.0 * g * (p.row(i) - c);
      for (int k = 0; k < 3; ++k) gr(3 * i + k) += diff(k);
      const double inv = 1.0 / double(nb.size());
      for (int j : nb)
        for (int k = 0; k < 3; ++k) gr(3 * j + k) -= diff(k) * inv;
    }
  });
}

}  // namespace skelforge
