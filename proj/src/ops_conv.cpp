#include <cmath>

#include "skelforge/ops.hpp"

namespace skelforge::ops {

namespace {

bool wants(const TensorNode& self, std::size_t i) { return self.parents[i]->requires_grad; }
Eigen::VectorXd& pgrad(TensorNode& self, std::size_t i) { return self.parents[i]->ensure_grad(); }

struct Vol {
  int c, d, h, w;
  std::size_t numel() const { return std::size_t(c) * d * h * w; }
  std::size_t at(int ci, int z, int y, int x) const { return ((std::size_t(ci) * d + z) * h + y) * w + x; }
};

Vol vol_of(const Shape& s, const char* op) {
  if (s.size() != 4) throw TensorError(std::string(op) + ": expected [C,D,H,W], got " + shape_str(s));
  return {int(s[0]), int(s[1]), int(s[2]), int(s[3])};
}

struct ConvGeom {
  Vol in, out;
  int co, kd, kh, kw;
  std::array<int, 3> stride, pad;
  std::size_t K() const { return std::size_t(in.c) * kd * kh * kw; }
  std::size_t N() const { return std::size_t(out.d) * out.h * out.w; }
};

// im2col: cols is K x N, row-major
void build_cols(const ConvGeom& g, const double* x, RowMat& cols) {
  cols.setZero(g.K(), g.N());
  std::size_t col = 0;
  for (int oz = 0; oz < g.out.d; ++oz)
    for (int oy = 0; oy < g.out.h; ++oy)
      for (int ox = 0; ox < g.out.w; ++ox, ++col) {
        const int z0 = oz * g.stride[0] - g.pad[0];
        const int y0 = oy * g.stride[1] - g.pad[1];
        const int x0 = ox * g.stride[2] - g.pad[2];
        std::size_t row = 0;
        for (int ci = 0; ci < g.in.c; ++ci)
          for (int kz = 0; kz < g.kd; ++kz) {
            const int z = z0 + kz;
            for (int ky = 0; ky < g.kh; ++ky) {
              const int y = y0 + ky;
              for (int kx = 0; kx < g.kw; ++kx, ++row) {
                const int xx = x0 + kx;
                if (z >= 0 && z < g.in.d && y >= 0 && y < g.in.h && xx >= 0 && xx < g.in.w)
                  cols(row, col) = x[g.in.at(ci, z, y, xx)];
              }
            }
          }
      }
}

void scatter_cols(const ConvGeom& g, const RowMat& cols, double* gx) {
  std::size_t col = 0;
  for (int oz = 0; oz < g.out.d; ++oz)
    for (int oy = 0; oy < g.out.h; ++oy)
      for (int ox = 0; ox < g.out.w; ++ox, ++col) {
        const int z0 = oz * g.stride[0] - g.pad[0];
        const int y0 = oy * g.stride[1] - g.pad[1];
        const int x0 = ox * g.stride[2] - g.pad[2];
        std::size_t row = 0;
        for (int ci = 0; ci < g.in.c; ++ci)
          for (int kz = 0; kz < g.kd; ++kz) {
            const int z = z0 + kz;
            for (int ky = 0; ky < g.kh; ++ky) {
              const int y = y0 + ky;
              for (int kx = 0; kx < g.kw; ++kx, ++row) {
                const int xx = x0 + kx;
                if (z >= 0 && z < g.in.d && y >= 0 && y < g.in.h && xx >= 0 && xx < g.in.w)
                  gx[g.in.at(ci, z, y, xx)] += cols(row, col);
              }
            }
          }
      }
}

// visits every (col-row, input-voxel, output-voxel) link of a transposed conv
template <class F>
void convT_links(const Vol& in, const Vol& out, int co, int kd, int kh, int kw, const ConvSpec& spec, F&& fn) {
  std::size_t col = 0;
  for (int iz = 0; iz < in.d; ++iz)
    for (int iy = 0; iy < in.h; ++iy)
      for (int ix = 0; ix < in.w; ++ix, ++col) {
        const int z0 = iz * spec.stride[0] - spec.pad[0];
        const int y0 = iy * spec.stride[1] - spec.pad[1];
        const int x0 = ix * spec.stride[2] - spec.pad[2];
        std::size_t row = 0;
        for (int c = 0; c < co; ++c)
          for (int kz = 0; kz < kd; ++kz) {
            const int z = z0 + kz;
            for (int ky = 0; ky < kh; ++ky) {
              const int yy = y0 + ky;
              for (int kx = 0; kx < kw; ++kx, ++row) {
                const int xx = x0 + kx;
                if (z >= 0 && z < out.d && yy >= 0 && yy < out.h && xx >= 0 && xx < out.w)
                  fn(row, col, out.at(c, z, yy, xx));
              }
            }
          }
      }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
  Vol in = vol_of(x.shape(), "conv3d");
  const Shape& ws = w.shape();
  if (ws.size() != 5 || int(ws[1]) != in.c)
    throw TensorError("conv3d: weight " + shape_str(ws) + " does not match input " + shape_str(x.shape()));
  ConvGeom g;
  g.in = in;
  g.co = int(ws[0]);
  g.kd = int(ws[2]);
  g.kh = int(ws[3]);
  g.kw = int(ws[4]);
  g.stride = spec.stride;
  g.pad = spec.pad;
  auto odim = [](int i, int k, int s, int p) { return (i + 2 * p - k) / s + 1; };
  g.out = {g.co, odim(in.d, g.kd, g.stride[0], g.pad[0]), odim(in.h, g.kh, g.stride[1], g.pad[1]),
           odim(in.w, g.kw, g.stride[2], g.pad[2])};
  if (g.out.d <= 0 || g.out.h <= 0 || g.out.w <= 0)
    throw TensorError("conv3d: non-positive output size for input " + shape_str(x.shape()));
  if (b.valid() && b.size() != std::size_t(g.co)) throw TensorError("conv3d: bias size mismatch");

  RowMat cols;
  build_cols(g, x.values().data(), cols);
  ConstMatMap wm(w.values().data(), g.co, g.K());
  Eigen::VectorXd y(g.out.numel());
  MatMap ym(y.data(), g.co, g.N());
  ym.noalias() = wm * cols;
  if (b.valid()) ym.colwise() += b.values();

  Shape oshape{std::size_t(g.out.c), std::size_t(g.out.d), std::size_t(g.out.h), std::size_t(g.out.w)};
  std::vector<Tensor> parents = b.valid() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(oshape, std::move(y), parents, [g, xv = x.values(), wv = w.values()](TensorNode& self) {
    ConstMatMap gy(self.grad.data(), g.co, g.N());
    if (wants(self, 1)) {
      RowMat cols;
      build_cols(g, xv.data(), cols);
      MatMap(pgrad(self, 1).data(), g.co, g.K()).noalias() += gy * cols.transpose();
    }
    if (wants(self, 0)) {
      ConstMatMap wm(wv.data(), g.co, g.K());
      RowMat gcols = wm.transpose() * gy;
      scatter_cols(g, gcols, pgrad(self, 0).data());
    }
    if (self.parents.size() > 2 && wants(self, 2)) pgrad(self, 2) += gy.rowwise().sum();
  });
}

Tensor conv3d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
  Vol in = vol_of(x.shape(), "conv3d_transpose");
  const Shape& ws = w.shape();
  if (ws.size() != 5 || int(ws[0]) != in.c)
    throw TensorError("conv3d_transpose: weight " + shape_str(ws) + " does not match input " + shape_str(x.shape()));
  const int co = int(ws[1]), kd = int(ws[2]), kh = int(ws[3]), kw = int(ws[4]);
  auto odim = [](int i, int k, int s, int p, int op) { return (i - 1) * s - 2 * p + k + op; };
  Vol out{co, odim(in.d, kd, spec.stride[0], spec.pad[0], spec.out_pad[0]),
          odim(in.h, kh, spec.stride[1], spec.pad[1], spec.out_pad[1]),
          odim(in.w, kw, spec.stride[2], spec.pad[2], spec.out_pad[2])};
  if (out.d <= 0 || out.h <= 0 || out.w <= 0) throw TensorError("conv3d_transpose: non-positive output size");
  if (b.valid() && b.size() != std::size_t(co)) throw TensorError("conv3d_transpose: bias size mismatch");

  const std::size_t kvol = std::size_t(kd) * kh * kw;
  const std::size_t K = std::size_t(co) * kvol;
  const std::size_t N = std::size_t(in.d) * in.h * in.w;
  ConstMatMap wm(w.values().data(), in.c, K);
  ConstMatMap xm(x.values().data(), in.c, N);
  RowMat cols = wm.transpose() * xm;  // K x N

  Eigen::VectorXd y = Eigen::VectorXd::Zero(out.numel());
  convT_links(in, out, co, kd, kh, kw, spec,
              [&](std::size_t r, std::size_t c, std::size_t oidx) { y(oidx) += cols(r, c); });
  if (b.valid()) {
    const std::size_t per = std::size_t(out.d) * out.h * out.w;
    for (int c = 0; c < co; ++c) y.segment(c * per, per).array() += b.values()(c);
  }

  Shape oshape{std::size_t(out.c), std::size_t(out.d), std::size_t(out.h), std::size_t(out.w)};
  std::vector<Tensor> parents = b.valid() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(oshape, std::move(y), parents,
                 [in, out, co, kd, kh, kw, spec, K, N, xv = x.values(), wv = w.values()](TensorNode& self) {
                   RowMat gcols = RowMat::Zero(K, N);
                   convT_links(in, out, co, kd, kh, kw, spec,
                               [&](std::size_t r, std::size_t c, std::size_t oidx) { gcols(r, c) += self.grad(oidx); });
                   if (wants(self, 0)) {
                     ConstMatMap wm(wv.data(), in.c, K);
                     MatMap(pgrad(self, 0).data(), in.c, N).noalias() += wm * gcols;
                   }
                   if (wants(self, 1)) {
                     ConstMatMap xm(xv.data(), in.c, N);
                     MatMap(pgrad(self, 1).data(), in.c, K).noalias() += xm * gcols.transpose();
                   }
                   if (self.parents.size() > 2 && wants(self, 2)) {
                     const std::size_t per = std::size_t(out.d) * out.h * out.w;
                     for (int c = 0; c < co; ++c) pgrad(self, 2)(c) += self.grad.segment(c * per, per).sum();
                   }
                 });
}

Tensor maxpool3d(const Tensor& x, int factor) {
  Vol in = vol_of(x.shape(), "maxpool3d");
  if (in.d % factor || in.h % factor || in.w % factor)
    throw TensorError("maxpool3d: dims " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor));
  Vol out{in.c, in.d / factor, in.h / factor, in.w / factor};
  Eigen::VectorXd y(out.numel());
  std::vector<std::size_t> argmax(out.numel());
  const double* xd = x.values().data();
  std::size_t o = 0;
  for (int c = 0; c < in.c; ++c)
    for (int z = 0; z < out.d; ++z)
      for (int yy = 0; yy < out.h; ++yy)
        for (int xx = 0; xx < out.w; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t bi = 0;
          for (int dz = 0; dz < factor; ++dz)
            for (int dy = 0; dy < factor; ++dy)
              for (int dx = 0; dx < factor; ++dx) {
                std::size_t i = in.at(c, z * factor + dz, yy * factor + dy, xx * factor + dx);
                if (xd[i] > best) {
                  best = xd[i];
                  bi = i;
                }
              }
          y(o) = best;
          argmax[o] = bi;
        }
  Shape oshape{std::size_t(out.c), std::size_t(out.d), std::size_t(out.h), std::size_t(out.w)};
  return make_op(oshape, std::move(y), {x}, [am = std::move(argmax)](TensorNode& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < am.size(); ++i) g(am[i]) += self.grad(i);
  });
}

Tensor upsample_nearest3d(const Tensor& x, int factor) {
  Vol in = vol_of(x.shape(), "upsample_nearest3d");
  Vol out{in.c, in.d * factor, in.h * factor, in.w * factor};
  Eigen::VectorXd y(out.numel());
  const double* xd = x.values().data();
  std::size_t o = 0;
  for (int c = 0; c < out.c; ++c)
    for (int z = 0; z < out.d; ++z)
      for (int yy = 0; yy < out.h; ++yy)
        for (int xx = 0; xx < out.w; ++xx, ++o) y(o) = xd[in.at(c, z / factor, yy / factor, xx / factor)];
  Shape oshape{std::size_t(out.c), std::size_t(out.d), std::size_t(out.h), std::size_t(out.w)};
  return make_op(oshape, std::move(y), {x}, [in, out, factor](TensorNode& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    std::size_t o = 0;
    for (int c = 0; c < out.c; ++c)
      for (int z = 0; z < out.d; ++z)
        for (int yy = 0; yy < out.h; ++yy)
          for (int xx = 0; xx < out.w; ++xx, ++o) g(in.at(c, z / factor, yy / factor, xx / factor)) += self.grad(o);
  });
}

Tensor crop3d(const Tensor& x, std::array<int, 3> offset, std::array<int, 3> size) {
  Vol in = vol_of(x.shape(), "crop3d");
  Vol out{in.c, size[0], size[1], size[2]};
  Eigen::VectorXd y = Eigen::VectorXd::Zero(out.numel());
  const double* xd = x.values().data();
  std::size_t o = 0;
  for (int c = 0; c < out.c; ++c)
    for (int z = 0; z < out.d; ++z)
      for (int yy = 0; yy < out.h; ++yy)
        for (int xx = 0; xx < out.w; ++xx, ++o) {
          const int sz = z + offset[0], sy = yy + offset[1], sx = xx + offset[2];
          if (sz >= 0 && sz < in.d && sy >= 0 && sy < in.h && sx >= 0 && sx < in.w) y(o) = xd[in.at(c, sz, sy, sx)];
        }
  Shape oshape{std::size_t(out.c), std::size_t(out.d), std::size_t(out.h), std::size_t(out.w)};
  return make_op(oshape, std::move(y), {x}, [in, out, offset](TensorNode& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    std::size_t o = 0;
    for (int c = 0; c < out.c; ++c)
      for (int z = 0; z < out.d; ++z)
        for (int yy = 0; yy < out.h; ++yy)
          for (int xx = 0; xx < out.w; ++xx, ++o) {
            const int sz = z + offset[0], sy = yy + offset[1], sx = xx + offset[2];
            if (sz >= 0 && sz < in.d && sy >= 0 && sy < in.h && sx >= 0 && sx < in.w)
              g(in.at(c, sz, sy, sx)) += self.grad(o);
          }
  });
}

}  // namespace skelforge::ops
