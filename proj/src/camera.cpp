#include "skelforge/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace skelforge {

void Camera::validate() const {
  Eigen::Matrix3d should_be_identity = rotation * rotation.transpose();
  if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw TensorError("camera: rotation is not orthonormal");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal_px,
                       int width, int height) {
  Camera c;
  c.fx = c.fy = focal_px;
  c.cx = width * 0.5;
  c.cy = height * 0.5;
  c.width = width;
  c.height = height;
  Eigen::Vector3d forward = (target - eye).normalized();  // camera +z
  Eigen::Vector3d up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 0.99) up = Eigen::Vector3d(0, 1, 0);
  Eigen::Vector3d right = forward.cross(up).normalized();
  Eigen::Vector3d down = forward.cross(right).normalized();
  c.rotation.row(0) = right;
  c.rotation.row(1) = down;
  c.rotation.row(2) = forward;
  c.translation = -c.rotation * eye;
  return c;
}

Projection project_vertices(const Camera& cam,
                            const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>& verts) {
  cam.validate();
  Projection out;
  out.pixels.resize(verts.rows(), 2);
  out.valid.assign(std::size_t(verts.rows()), false);
  for (Eigen::Index i = 0; i < verts.rows(); ++i) {
    const Eigen::Vector3d pc = cam.to_camera(verts.row(i).transpose());
    if (pc.z() <= 1e-9) {
      out.pixels.row(i).setZero();
      continue;
    }
    const double px = cam.fx * pc.x() / pc.z() + cam.cx;
    const double py = cam.fy * pc.y() / pc.z() + cam.cy;
    out.pixels(i, 0) = px;
    out.pixels(i, 1) = py;
    out.valid[std::size_t(i)] = px >= 0 && px <= cam.width && py >= 0 && py <= cam.height;
  }
  return out;
}

Tensor bilinear_sample(const Tensor& feature_map, const Tensor& pixel_coords) {
  if (feature_map.ndim() != 3) throw TensorError("bilinear_sample: map must be [C,H,W]");
  if (pixel_coords.ndim() != 2 || pixel_coords.dim(1) != 2)
    throw TensorError("bilinear_sample: coords must be [N,2]");
  const std::size_t C = feature_map.dim(0), H = feature_map.dim(1), W = feature_map.dim(2);
  const std::size_t N = pixel_coords.dim(0);

  struct Tap {
    int x0, y0;
    double fx, fy;  // fractional parts after clamping
  };
  std::vector<Tap> taps(N);
  Eigen::VectorXd y(N * C);
  const double* map = feature_map.values().data();
  auto at = [&](std::size_t c, int yy, int xx) { return map[(c * H + yy) * W + xx]; };
  for (std::size_t i = 0; i < N; ++i) {
    double px = std::clamp(pixel_coords.value(i * 2 + 0), 0.0, double(W - 1));
    double py = std::clamp(pixel_coords.value(i * 2 + 1), 0.0, double(H - 1));
    const int x0 = std::min(int(px), int(W) - 2 >= 0 ? int(W) - 2 : 0);
    const int y0 = std::min(int(py), int(H) - 2 >= 0 ? int(H) - 2 : 0);
    const double fx = px - x0, fy = py - y0;
    taps[i] = {x0, y0, fx, fy};
    for (std::size_t c = 0; c < C; ++c) {
      const double v00 = at(c, y0, x0), v01 = at(c, y0, x0 + 1);
      const double v10 = at(c, y0 + 1, x0), v11 = at(c, y0 + 1, x0 + 1);
      y(i * C + c) = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
    }
  }
  return make_op({N, C}, std::move(y), {feature_map, pixel_coords},
                 [C, H, W, N, taps, fmv = feature_map.values()](TensorNode& self) {
                   const bool wm = self.parents[0]->requires_grad;
                   const bool wc = self.parents[1]->requires_grad;
                   Eigen::VectorXd* gm = wm ? &self.parents[0]->ensure_grad() : nullptr;
                   Eigen::VectorXd* gc = wc ? &self.parents[1]->ensure_grad() : nullptr;
                   auto idx = [&](std::size_t c, int yy, int xx) { return Eigen::Index((c * H + yy) * W + xx); };
                   for (std::size_t i = 0; i < N; ++i) {
                     const Tap& t = taps[i];
                     for (std::size_t c = 0; c < C; ++c) {
                       const double g = self.grad(Eigen::Index(i * C + c));
                       if (g == 0) continue;
                       if (gm) {
                         (*gm)(idx(c, t.y0, t.x0)) += g * (1 - t.fy) * (1 - t.fx);
                         (*gm)(idx(c, t.y0, t.x0 + 1)) += g * (1 - t.fy) * t.fx;
                         (*gm)(idx(c, t.y0 + 1, t.x0)) += g * t.fy * (1 - t.fx);
                         (*gm)(idx(c, t.y0 + 1, t.x0 + 1)) += g * t.fy * t.fx;
                       }
                       if (gc) {
                         const double v00 = fmv(idx(c, t.y0, t.x0)), v01 = fmv(idx(c, t.y0, t.x0 + 1));
                         const double v10 = fmv(idx(c, t.y0 + 1, t.x0)), v11 = fmv(idx(c, t.y0 + 1, t.x0 + 1));
                         const double ddx = (1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
                         const double ddy = (1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
                         (*gc)(Eigen::Index(i * 2 + 0)) += g * ddx;
                         (*gc)(Eigen::Index(i * 2 + 1)) += g * ddy;
                       }
                     }
                   }
                 });
}

}  // namespace skelforge
