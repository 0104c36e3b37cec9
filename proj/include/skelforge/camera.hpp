#pragma once

#include <Eigen/Dense>

#include "skelforge/tensor.hpp"

namespace skelforge {

/// Pinhole camera mapping canonical object space to pixels.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();   // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal_px,
                        int width, int height);
};

struct Projection {
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> pixels;
  std::vector<bool> valid;  // false behind camera or outside image
};

Projection project_vertices(const Camera& cam,
                            const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>& verts);

/// Bilinear interpolation into a [C,H,W] feature map at pixel coordinates
/// [N,2] (x,y); coordinates clamped to the map, differentiable in both.
Tensor bilinear_sample(const Tensor& feature_map, const Tensor& pixel_coords);

}  // namespace skelforge
