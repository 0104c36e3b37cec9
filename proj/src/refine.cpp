#include "skelforge/refine.hpp"

#include <algorithm>

#include "skelforge/ops.hpp"

namespace skelforge {

void RefinementConfig::validate() const {
  if (r < 32 || r % 8 != 0) throw TensorError("refinement: r must be >= 32 and divisible by 8");
  if ((r_half() / 4) % 4 != 0)
    throw TensorError("refinement: network sizing needs r divisible by 32 (got " + std::to_string(r) + ")");
  if (global_down.size() != 4 || global_up.size() != 4)
    throw TensorError("refinement: global channel plans must have 4 entries");
  if (local_down.size() != 4 || local_up.size() != 5)
    throw TensorError("refinement: local channel plans must have 4 and 5 entries");
  if (global_up.back() != 2 || local_up.back() != 2)
    throw TensorError("refinement: final up channels must be 2 (two-class logits)");
}

// ---- tiling ---------------------------------------------------------------

SubvolumeTiling plan_tiling(const RefinementConfig& cfg) {
  cfg.validate();
  SubvolumeTiling t;
  t.r = cfg.r;
  t.s_in = cfg.window_in();
  t.s_out = cfg.window_out();
  const int rp = cfg.r_half(), stride = cfg.stride();
  for (int o = 0;; o += stride) {
    const int clamped = std::min(o, rp - t.s_in);
    t.axis_offsets.push_back(clamped);
    if (o >= rp - t.s_in) break;
  }
  for (int ox : t.axis_offsets)
    for (int oy : t.axis_offsets)
      for (int oz : t.axis_offsets)
        t.windows.push_back({{ox, oy, oz}, {2 * ox, 2 * oy, 2 * oz}});
  t.axis_coverage.assign(std::size_t(t.r), 0);
  for (int o : t.axis_offsets)
    for (int i = 0; i < t.s_out; ++i) ++t.axis_coverage[std::size_t(2 * o + i)];
  for (int i = 0; i < t.r; ++i)
    if (t.axis_coverage[std::size_t(i)] == 0) throw TensorError("plan_tiling: uncovered voxel");
  return t;
}

int SubvolumeTiling::min_coverage() const {
  const int m = *std::min_element(axis_coverage.begin(), axis_coverage.end());
  return m * m * m;
}

int SubvolumeTiling::max_coverage() const {
  const int m = *std::max_element(axis_coverage.begin(), axis_coverage.end());
  return m * m * m;
}

// ---- networks -------------------------------------------------------------

namespace {

ops::ConvSpec conv_s1() { return {.stride = {1, 1, 1}, .pad = {1, 1, 1}}; }
ops::ConvSpec conv_s2() { return {.stride = {2, 2, 2}, .pad = {1, 1, 1}}; }
ops::ConvSpec deconv_s2() { return {.stride = {2, 2, 2}, .pad = {1, 1, 1}}; }

/// Probability of the "occupied" class from a [2,D,H,W] logit pair.
Tensor two_class_prob(const Tensor& logits) {
  Tensor l0 = ops::slice0(logits, 0, 1);
  Tensor l1 = ops::slice0(logits, 1, 1);
  Tensor p = ops::sigmoid(ops::sub(l1, l0));
  Shape s(logits.shape().begin() + 1, logits.shape().end());
  return ops::reshape(p, s);
}

}  // namespace

FeatureVolumeNet FeatureVolumeNet::create(ParamStore& ps, const std::string& prefix,
                                          std::size_t code_dim, const RefinementConfig& cfg,
                                          std::mt19937_64& rng) {
  FeatureVolumeNet fv;
  fv.res = cfg.feature_volume_res();
  fv.channels = cfg.feature_volume_channels;
  fv.map = Dense::create(ps, prefix + ".map", code_dim,
                         std::size_t(fv.channels) * fv.res * fv.res * fv.res, rng);
  return fv;
}

FeatureVolumeNet FeatureVolumeNet::fetch(ParamStore& ps, const std::string& prefix,
                                         const RefinementConfig& cfg) {
  FeatureVolumeNet fv;
  fv.res = cfg.feature_volume_res();
  fv.channels = cfg.feature_volume_channels;
  fv.map = Dense::fetch(ps, prefix + ".map");
  return fv;
}

Tensor FeatureVolumeNet::operator()(const Tensor& code) const {
  Tensor row = ops::reshape(code, {1, code.size()});
  Tensor flat = map(row);
  const std::size_t m = std::size_t(res);
  return ops::reshape(flat, {std::size_t(channels), m, m, m});
}

GlobalStream GlobalStream::create(ParamStore& ps, const std::string& prefix,
                                  const RefinementConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  GlobalStream g;
  const auto& d = cfg.global_down;
  const auto& u = cfg.global_up;
  const int C = cfg.feature_volume_channels;
  g.down.push_back(Conv3d::create(ps, prefix + ".d0", 1, std::size_t(d[0]), {3, 3, 3}, conv_s2(), rng));
  g.down.push_back(Conv3d::create(ps, prefix + ".d1", std::size_t(d[0] + C), std::size_t(d[1]),
                                  {3, 3, 3}, conv_s2(), rng));
  g.down.push_back(Conv3d::create(ps, prefix + ".d2", std::size_t(d[1]), std::size_t(d[2]), {3, 3, 3},
                                  conv_s2(), rng));
  g.down.push_back(Conv3d::create(ps, prefix + ".d3", std::size_t(d[2]), std::size_t(d[3]), {3, 3, 3},
                                  conv_s1(), rng));
  g.up.push_back(Conv3d::create(ps, prefix + ".u0", std::size_t(d[3]), std::size_t(u[0]), {4, 4, 4},
                                deconv_s2(), rng, true));
  g.up.push_back(Conv3d::create(ps, prefix + ".u1", std::size_t(u[0]), std::size_t(u[1]), {4, 4, 4},
                                deconv_s2(), rng, true));
  g.up.push_back(Conv3d::create(ps, prefix + ".u2", std::size_t(u[1]), std::size_t(u[2]), {4, 4, 4},
                                deconv_s2(), rng, true));
  g.up.push_back(Conv3d::create(ps, prefix + ".u3", std::size_t(u[2]), std::size_t(u[3]), {3, 3, 3},
                                conv_s1(), rng));
  return g;
}

GlobalStream GlobalStream::fetch(ParamStore& ps, const std::string& prefix,
                                 const RefinementConfig& cfg) {
  GlobalStream g;
  g.down.push_back(Conv3d::fetch(ps, prefix + ".d0", conv_s2()));
  g.down.push_back(Conv3d::fetch(ps, prefix + ".d1", conv_s2()));
  g.down.push_back(Conv3d::fetch(ps, prefix + ".d2", conv_s2()));
  g.down.push_back(Conv3d::fetch(ps, prefix + ".d3", conv_s1()));
  g.up.push_back(Conv3d::fetch(ps, prefix + ".u0", deconv_s2(), true));
  g.up.push_back(Conv3d::fetch(ps, prefix + ".u1", deconv_s2(), true));
  g.up.push_back(Conv3d::fetch(ps, prefix + ".u2", deconv_s2(), true));
  g.up.push_back(Conv3d::fetch(ps, prefix + ".u3", conv_s1()));
  (void)cfg;
  return g;
}

Tensor GlobalStream::operator()(const Tensor& u_down, const Tensor& feature_volume) const {
  if (u_down.ndim() != 4 || u_down.dim(0) != 1)
    throw TensorError("global_stream: input must be [1,n,n,n]");
  if (feature_volume.ndim() != 4 || feature_volume.dim(1) * 2 != u_down.dim(1))
    throw TensorError("global_stream: feature volume must sit at half the input resolution");
  Tensor h = ops::relu(down[0](u_down));
  h = ops::concat0({h, feature_volume});
  h = ops::relu(down[1](h));
  h = ops::relu(down[2](h));
  h = ops::relu(down[3](h));
  h = ops::relu(up[0](h));
  h = ops::relu(up[1](h));
  h = ops::relu(up[2](h));
  return two_class_prob(up[3](h));
}

LocalStream LocalStream::create(ParamStore& ps, const std::string& prefix,
                                const RefinementConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  LocalStream l;
  const auto& d = cfg.local_down;
  const auto& u = cfg.local_up;
  l.down.push_back(Conv3d::create(ps, prefix + ".d0", 2, std::size_t(d[0]), {3, 3, 3}, conv_s2(), rng));
  l.down.push_back(Conv3d::create(ps, prefix + ".d1", std::size_t(d[0]), std::size_t(d[1]), {3, 3, 3},
                                  conv_s2(), rng));
  l.down.push_back(Conv3d::create(ps, prefix + ".d2", std::size_t(d[1]), std::size_t(d[2]), {3, 3, 3},
                                  conv_s1(), rng));
  l.down.push_back(Conv3d::create(ps, prefix + ".d3", std::size_t(d[2]), std::size_t(d[3]), {3, 3, 3},
                                  conv_s1(), rng));
  l.up.push_back(Conv3d::create(ps, prefix + ".u0", std::size_t(d[3]), std::size_t(u[0]), {4, 4, 4},
                                deconv_s2(), rng, true));
  l.up.push_back(Conv3d::create(ps, prefix + ".u1", std::size_t(u[0]), std::size_t(u[1]), {4, 4, 4},
                                deconv_s2(), rng, true));
  l.up.push_back(Conv3d::create(ps, prefix + ".u2", std::size_t(u[1]), std::size_t(u[2]), {4, 4, 4},
                                deconv_s2(), rng, true));
  l.up.push_back(Conv3d::create(ps, prefix + ".u3", std::size_t(u[2]), std::size_t(u[3]), {3, 3, 3},
                                conv_s1(), rng));
  l.up.push_back(Conv3d::create(ps, prefix + ".u4", std::size_t(u[3]), std::size_t(u[4]), {3, 3, 3},
                                conv_s1(), rng));
  return l;
}

LocalStream LocalStream::fetch(ParamStore& ps, const std::string& prefix,
                               const RefinementConfig& cfg) {
  LocalStream l;
  l.down.push_back(Conv3d::fetch(ps, prefix + ".d0", conv_s2()));
  l.down.push_back(Conv3d::fetch(ps, prefix + ".d1", conv_s2()));
  l.down.push_back(Conv3d::fetch(ps, prefix + ".d2", conv_s1()));
  l.down.push_back(Conv3d::fetch(ps, prefix + ".d3", conv_s1()));
  l.up.push_back(Conv3d::fetch(ps, prefix + ".u0", deconv_s2(), true));
  l.up.push_back(Conv3d::fetch(ps, prefix + ".u1", deconv_s2(), true));
  l.up.push_back(Conv3d::fetch(ps, prefix + ".u2", deconv_s2(), true));
  l.up.push_back(Conv3d::fetch(ps, prefix + ".u3", conv_s1()));
  l.up.push_back(Conv3d::fetch(ps, prefix + ".u4", conv_s1()));
  (void)cfg;
  return l;
}

Tensor LocalStream::operator()(const Tensor& p_in, const Tensor& guidance) const {
  if (p_in.ndim() != 4 || p_in.dim(0) != 1) throw TensorError("local_stream: window must be [1,s',s',s']");
  if (guidance.ndim() != 4 || guidance.dim(1) * 2 != p_in.dim(1))
    throw TensorError("local_stream: guidance must sit at half the window resolution");
  Tensor h = ops::concat0({p_in, ops::upsample_nearest3d(guidance, 2)});
  h = ops::relu(down[0](h));
  h = ops::relu(down[1](h));
  h = ops::relu(down[2](h));
  h = ops::relu(down[3](h));
  h = ops::relu(up[0](h));
  h = ops::relu(up[1](h));
  h = ops::relu(up[2](h));
  h = ops::relu(up[3](h));
  return two_class_prob(up[4](h));
}

// ---- window plumbing ------------------------------------------------------

Tensor extract_window(const Tensor& grid, const SubvolumeTiling& tiling, std::size_t w) {
  if (w >= tiling.windows.size()) throw TensorError("extract_window: index out of range");
  if (grid.ndim() != 3) throw TensorError("extract_window: grid must be [n,n,n]");
  const auto& win = tiling.windows[w];
  Tensor g4 = ops::reshape(grid, {1, grid.dim(0), grid.dim(1), grid.dim(2)});
  // offsets stored x-fastest; crop order is (depth=z, height=y, width=x)
  return ops::crop3d(g4, {win.in_offset[2], win.in_offset[1], win.in_offset[0]},
                     {tiling.s_in, tiling.s_in, tiling.s_in});
}

Tensor extract_guidance(const Tensor& u_out_down, const SubvolumeTiling& tiling, std::size_t w) {
  if (w >= tiling.windows.size()) throw TensorError("extract_guidance: index out of range");
  if (u_out_down.ndim() != 3) throw TensorError("extract_guidance: grid must be [m,m,m]");
  const auto& win = tiling.windows[w];
  const int half = tiling.s_in / 2;
  Tensor g4 = ops::reshape(u_out_down, {1, u_out_down.dim(0), u_out_down.dim(1), u_out_down.dim(2)});
  return ops::crop3d(g4, {win.in_offset[2] / 2, win.in_offset[1] / 2, win.in_offset[0] / 2},
                     {half, half, half});
}

Tensor stitch(const SubvolumeTiling& tiling, const std::vector<std::pair<int, Tensor>>& windows) {
  const std::size_t nw = tiling.windows.size();
  if (windows.size() != nw) throw TensorError("stitch: expected " + std::to_string(nw) + " windows");
  std::vector<Tensor> by_id(nw);
  for (const auto& [id, t] : windows) {
    if (id < 0 || std::size_t(id) >= nw) throw TensorError("stitch: window id out of range");
    if (by_id[std::size_t(id)].valid()) throw TensorError("stitch: duplicate window id");
    if (t.size() != std::size_t(tiling.s_out) * tiling.s_out * tiling.s_out)
      throw TensorError("stitch: window has wrong size");
    by_id[std::size_t(id)] = t;
  }

  const std::size_t r = std::size_t(tiling.r);
  const int s = tiling.s_out;
  auto grid_index = [r, s](const std::array<int, 3>& off, int x, int y, int z) {
    return (std::size_t(off[2] + z) * r + std::size_t(off[1] + y)) * r + std::size_t(off[0] + x);
  };
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(Eigen::Index(r * r * r));
  for (std::size_t id = 0; id < nw; ++id) {
    const auto& off = tiling.windows[id].out_offset;
    std::size_t wi = 0;
    for (int z = 0; z < s; ++z)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) acc(Eigen::Index(grid_index(off, x, y, z))) += by_id[id].value(wi++);
  }
  Eigen::VectorXd inv_cov(Eigen::Index(r * r * r));
  for (int z = 0; z < tiling.r; ++z)
    for (int y = 0; y < tiling.r; ++y)
      for (int x = 0; x < tiling.r; ++x)
        inv_cov((Eigen::Index(z) * Eigen::Index(r) + y) * Eigen::Index(r) + x) =
            1.0 / tiling.coverage(x, y, z);
  acc = acc.cwiseProduct(inv_cov);

  std::vector<std::array<int, 3>> offsets;
  for (const auto& w : tiling.windows) offsets.push_back(w.out_offset);
  return make_op({r, r, r}, std::move(acc), by_id,
                 [offsets, inv_cov, grid_index, s](TensorNode& self) {
                   for (std::size_t id = 0; id < self.parents.size(); ++id) {
                     if (!self.parents[id]->requires_grad) continue;
                     auto& pg = self.parents[id]->ensure_grad();
                     std::size_t wi = 0;
                     for (int z = 0; z < s; ++z)
                       for (int y = 0; y < s; ++y)
                         for (int x = 0; x < s; ++x) {
                           const std::size_t gi = grid_index(offsets[id], x, y, z);
                           pg(Eigen::Index(wi++)) +=
                               self.grad(Eigen::Index(gi)) * inv_cov(Eigen::Index(gi));
                         }
                   }
                 });
}

Tensor stitch(const SubvolumeTiling& tiling, const std::vector<Tensor>& windows) {
  std::vector<std::pair<int, Tensor>> pairs;
  for (std::size_t i = 0; i < windows.size(); ++i) pairs.emplace_back(int(i), windows[i]);
  return stitch(tiling, pairs);
}

// ---- losses ---------------------------------------------------------------

Tensor refine_loss(const Tensor& v, const VoxelGrid& target) {
  if (v.size() != target.numel())
    throw TensorError("refine_loss: grid size mismatch (" + std::to_string(v.size()) + " vs " +
                      std::to_string(target.numel()) + ")");
  Tensor gt = Tensor::from_vector(v.shape(), target.values);
  Tensor one_minus_gt = ops::add_scalar(ops::neg(gt), 1.0);
  Tensor one_minus_v = ops::add_scalar(ops::neg(v), 1.0);
  Tensor ll = ops::add(ops::mul(gt, ops::log_op(v)), ops::mul(one_minus_gt, ops::log_op(one_minus_v)));
  return ops::neg(ops::mean_all(ll));
}

Tensor skeletonnet_loss(const Tensor& l_phi, const Tensor& l_psi, const Tensor& l_refine,
                        double beta) {
  Tensor total = ops::add(l_phi, l_psi);
  if (beta == 0.0) return total;
  return ops::add(total, ops::scale(l_refine, beta));
}

}  // namespace skelforge
