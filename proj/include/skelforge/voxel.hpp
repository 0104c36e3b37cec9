#pragma once

#include <Eigen/Core>
#include <string>

#include "skelforge/pointset.hpp"

namespace skelforge {

/// Cubic occupancy grid over the canonical cube [-0.5,0.5]^3.
/// Storage is x-fastest: index = (z*r + y)*r + x.
struct VoxelGrid {
  int res = 0;
  Eigen::VectorXd values;  // r^3 floats in [0,1]

  VoxelGrid() = default;
  explicit VoxelGrid(int r) : res(r), values(Eigen::VectorXd::Zero(std::size_t(r) * r * r)) {}

  std::size_t numel() const { return std::size_t(res) * res * res; }
  std::size_t index(int x, int y, int z) const { return (std::size_t(z) * res + y) * res + x; }
  double at(int x, int y, int z) const { return values(Eigen::Index(index(x, y, z))); }
  double& at(int x, int y, int z) { return values(Eigen::Index(index(x, y, z))); }
  bool inside(int x, int y, int z) const {
    return x >= 0 && x < res && y >= 0 && y < res && z >= 0 && z < res;
  }

  double voxel_size() const { return 1.0 / res; }
  /// World-space center of voxel (x,y,z).
  Eigen::Vector3d center(int x, int y, int z) const {
    const double s = voxel_size();
    return {-0.5 + (x + 0.5) * s, -0.5 + (y + 0.5) * s, -0.5 + (z + 0.5) * s};
  }
  /// Grid coordinates of a world point (may be out of range).
  Eigen::Vector3i grid_of(const Eigen::Vector3d& p) const {
    const double s = voxel_size();
    return {int(std::floor((p.x() + 0.5) / s)), int(std::floor((p.y() + 0.5) / s)),
            int(std::floor((p.z() + 0.5) / s))};
  }
};

enum class Connectivity { Six = 6, TwentySix = 26 };

double iou(const VoxelGrid& a, const VoxelGrid& b, double thresh = 0.5);
VoxelGrid dilate(const VoxelGrid& g, int radius, Connectivity conn);
VoxelGrid fill_interior(const VoxelGrid& g);
VoxelGrid binarize(const VoxelGrid& g, double thresh = 0.5);
/// 2x2x2 max-pool halving; resolution must be divisible by the factor.
VoxelGrid downsample_grid(const VoxelGrid& g, int factor = 2);

// SKV1 raw format: magic "SKV1", u32 resolution, 8 reserved bytes, then
// r^3 float32 little-endian values in x-fastest order.
void save_skv(const VoxelGrid& g, const std::string& path);
VoxelGrid load_skv(const std::string& path);

}  // namespace skelforge
