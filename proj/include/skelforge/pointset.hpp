#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "skelforge/tensor.hpp"

namespace skelforge {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class SkelLabel : std::uint8_t { Curve = 0, Sheet = 1 };

/// Ordered 3D point set in the canonical object cube [-0.5,0.5]^3.
struct PointSet {
  Points points;
  std::optional<Points> normals;            // unit length when present
  std::optional<std::vector<SkelLabel>> labels;

  std::size_t size() const { return std::size_t(points.rows()); }
  void require_nonempty(const char* op) const;
  void require_normals(const char* op) const;

  PointSet subset(const std::vector<int>& idx) const;
  static PointSet concat(const PointSet& a, const PointSet& b);
};

/// Uniform spatial hash grid for nearest-neighbor queries; brute force is the
/// test oracle. Ties break to the lowest point index.
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(const Points& pts);
  int nearest(const Eigen::Vector3d& q) const;
  double nearest_sq_dist(const Eigen::Vector3d& q) const;

 private:
  const Points pts_;
  Eigen::Vector3d lo_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<std::vector<int>> cells_;
  int cell_index(int ix, int iy, int iz) const { return (iz * ny_ + iy) * nx_ + ix; }
};

int brute_force_nearest(const Points& pts, const Eigen::Vector3d& q);

enum class Reduction { Sum, Mean };

struct ChamferResult {
  double value = 0.0;
  std::vector<int> nn_ab;  // for each a_i, index of nearest b
  std::vector<int> nn_ba;  // for each b_j, index of nearest a
};

/// Bidirectional squared-distance Chamfer between point matrices.
ChamferResult chamfer_plain(const Points& a, const Points& b, Reduction red);

/// Weighted Chamfer: weights indexed by ground-truth points (second set).
double weighted_chamfer_plain(const Points& pred, const Points& gt, const Eigen::VectorXd& kappa,
                              ChamferResult* detail = nullptr);

/// Sum over points of squared distance to the centroid of graph neighbors.
double laplacian_plain(const Points& pts, const std::vector<std::vector<int>>& neighbors);

/// Per-point weights from normal variation in k-NN neighborhoods: high_w where
/// the largest pairwise normal angle among the k nearest neighbors exceeds
/// angle_thresh_deg, else 1.
Eigen::VectorXd curvature_weights(const PointSet& gt, int k = 16, double angle_thresh_deg = 60.0,
                                  double high_w = 5.0);

// ---- differentiable versions over Tensor point matrices [N,3] ----
Tensor chamfer(const Tensor& a, const Tensor& b, Reduction red);
Tensor weighted_chamfer(const Tensor& pred, const Tensor& gt, const Eigen::VectorXd& kappa);
Tensor laplacian_reg(const Tensor& pts, const std::vector<std::vector<int>>& neighbors);

Points tensor_to_points(const Tensor& t);
Tensor points_to_tensor(const Points& p);

}  // namespace skelforge
