#include "skelforge/skedisn.hpp"

#include "skelforge/marching_cubes.hpp"
#include "skelforge/ops.hpp"

namespace skelforge {

LabeledPoints sample_training_points(const TriangleMesh& gt, std::size_t n, double epsilon,
                                     std::uint64_t seed) {
  if (!is_closed(gt)) throw TensorError("sample_training_points: mesh is not watertight");
  if (n == 0 || epsilon <= 0) throw TensorError("sample_training_points: need n>0 and epsilon>0");
  // generous surface pool; jittered points are rejected when the jitter alone
  // could push the distance past epsilon
  SurfaceSamples surf = sample_surface(gt, std::max<std::size_t>(n, 1024), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, epsilon / 2.0);
  std::uniform_int_distribution<std::size_t> pick(0, surf.points.size() - 1);
  LabeledPoints out;
  out.points.resize(Eigen::Index(n), 3);
  out.inside.resize(n);
  for (std::size_t k = 0; k < n;) {
    const Eigen::Vector3d base = surf.points.points.row(Eigen::Index(pick(rng)));
    const Eigen::Vector3d jitter(gauss(rng), gauss(rng), gauss(rng));
    if (jitter.norm() >= epsilon) continue;  // d(x) <= |jitter| < epsilon
    const Eigen::Vector3d p = base + jitter;
    out.points.row(Eigen::Index(k)) = p;
    out.inside[k] = point_inside_mesh(gt, p) ? 1 : 0;
    ++k;
  }
  return out;
}

SkeDisn SkeDisn::create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                        std::size_t lifted_width, const SkeDisnConfig& cfg, std::mt19937_64& rng) {
  SkeDisn d;
  d.cfg = cfg;
  d.fx1 = Dense::create(ps, prefix + ".fx1", 3, cfg.fx_widths[0], rng);
  d.fx2 = Dense::create(ps, prefix + ".fx2", cfg.fx_widths[0], cfg.fx_widths[1], rng);
  d.fx3 = Dense::create(ps, prefix + ".fx3", cfg.fx_widths[1], cfg.fx_widths[2], rng);
  const std::size_t fx = cfg.fx_widths[2];
  auto head = [&](const char* name, std::size_t stream_width, Dense& h1, Dense& h2, Dense& h3) {
    h1 = Dense::create(ps, prefix + "." + name + "1", fx + stream_width, cfg.head_widths[0], rng);
    h2 = Dense::create(ps, prefix + "." + name + "2", cfg.head_widths[0], cfg.head_widths[1], rng);
    h3 = Dense::create(ps, prefix + "." + name + "3", cfg.head_widths[1], 2, rng);
  };
  head("g", code_dim, d.g1, d.g2, d.g3);
  head("l", lifted_width, d.l1, d.l2, d.l3);
  // crop encoders: strided convs down to 2^3, then spatial mean
  std::size_t fs_width = 0;
  for (int s = 0; s < 3; ++s) {
    int side = cfg.crop_sizes[s];
    std::size_t cin = 1, cout = std::size_t(cfg.crop_channels);
    int layer = 0;
    while (side > 2) {
      d.crop_enc[s].push_back(Conv3d::create(
          ps, prefix + ".crop" + std::to_string(s) + "." + std::to_string(layer), cin,
          cout, {3, 3, 3}, {.stride = {2, 2, 2}, .pad = {1, 1, 1}}, rng));
      cin = cout;
      cout = std::min<std::size_t>(2 * cout, 32);
      side /= 2;
      ++layer;
    }
    fs_width += cin;
  }
  head("s", fs_width, d.s1, d.s2, d.s3);
  return d;
}

SkeDisn SkeDisn::fetch(ParamStore& ps, const std::string& prefix, const SkeDisnConfig& cfg) {
  SkeDisn d;
  d.cfg = cfg;
  d.fx1 = Dense::fetch(ps, prefix + ".fx1");
  d.fx2 = Dense::fetch(ps, prefix + ".fx2");
  d.fx3 = Dense::fetch(ps, prefix + ".fx3");
  auto head = [&](const char* name, Dense& h1, Dense& h2, Dense& h3) {
    h1 = Dense::fetch(ps, prefix + "." + std::string(name) + "1");
    h2 = Dense::fetch(ps, prefix + "." + std::string(name) + "2");
    h3 = Dense::fetch(ps, prefix + "." + std::string(name) + "3");
  };
  head("g", d.g1, d.g2, d.g3);
  head("l", d.l1, d.l2, d.l3);
  head("s", d.s1, d.s2, d.s3);
  for (int s = 0; s < 3; ++s) {
    int side = cfg.crop_sizes[s];
    int layer = 0;
    while (side > 2) {
      d.crop_enc[s].push_back(
          Conv3d::fetch(ps, prefix + ".crop" + std::to_string(s) + "." + std::to_string(layer),
                        {.stride = {2, 2, 2}, .pad = {1, 1, 1}}));
      side /= 2;
      ++layer;
    }
  }
  return d;
}

namespace {

/// Spatial mean of a [C,D,H,W] tensor -> [C].
Tensor spatial_mean(const Tensor& x) {
  const std::size_t c = x.dim(0), m = x.size() / x.dim(0);
  Tensor flat = ops::reshape(x, {c, m});
  Tensor ones = Tensor::full({m, 1}, 1.0 / double(m));
  return ops::reshape(ops::matmul(flat, ones), {c});
}

Tensor lift_point_features(const Points& pts, const EncoderOutput& enc, const Camera& cam) {
  const std::size_t n = std::size_t(pts.rows());
  const Projection proj = project_vertices(cam, pts);
  std::vector<Tensor> parts;
  for (const FeatureMap& fm : enc.feature_maps) {
    Tensor coords = Tensor::zeros({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      coords.values()(Eigen::Index(2 * i)) = proj.pixels(Eigen::Index(i), 0) / fm.factor;
      coords.values()(Eigen::Index(2 * i + 1)) = proj.pixels(Eigen::Index(i), 1) / fm.factor;
    }
    parts.push_back(bilinear_sample(fm.map, coords));
  }
  return ops::concat_cols(parts);
}

}  // namespace

Tensor SkeDisn::extract_multiscale(const Tensor& v, int res, const Eigen::Vector3d& x) const {
  std::vector<Tensor> feats;
  const double s = 1.0 / res;
  const int cx = int(std::floor((x.x() + 0.5) / s));
  const int cy = int(std::floor((x.y() + 0.5) / s));
  const int cz = int(std::floor((x.z() + 0.5) / s));
  for (int sc = 0; sc < 3; ++sc) {
    const int k = cfg.crop_sizes[sc];
    Tensor crop = ops::crop3d(v, {cz - k / 2, cy - k / 2, cx - k / 2}, {k, k, k});
    Tensor h = crop;
    for (const Conv3d& conv : crop_enc[sc]) h = ops::relu(conv(h));
    feats.push_back(spatial_mean(h));
  }
  Tensor cat = ops::concat0(feats);
  return ops::reshape(cat, {1, cat.size()});
}

Tensor SkeDisn::field(const Points& pts, const EncoderOutput& enc, const Camera& cam,
                      const VoxelGrid& v, bool use_skeleton) const {
  if (pts.rows() == 0) throw TensorError("field: empty query batch");
  const std::size_t n = std::size_t(pts.rows());
  Tensor x = points_to_tensor(pts);
  Tensor fx = ops::relu(fx1(x));
  fx = ops::relu(fx2(fx));
  fx = ops::relu(fx3(fx));

  Tensor code_rows = ops::repeat_row(enc.global_code, n);
  Tensor logits_g = g3(ops::relu(g2(ops::relu(g1(ops::concat_cols({fx, code_rows}))))));
  Tensor lifted = lift_point_features(pts, enc, cam);
  Tensor logits_l = l3(ops::relu(l2(ops::relu(l1(ops::concat_cols({fx, lifted}))))));
  Tensor logits = ops::add(logits_g, logits_l);

  if (use_skeleton) {
    const std::size_t r = std::size_t(v.res);
    Tensor vt = Tensor::from_vector({1, r, r, r}, v.values);
    std::vector<Tensor> fs_rows;
    for (std::size_t i = 0; i < n; ++i)
      fs_rows.push_back(extract_multiscale(vt, v.res, pts.row(Eigen::Index(i)).transpose()));
    Tensor fs = ops::concat0(fs_rows);
    Tensor logits_s = s3(ops::relu(s2(ops::relu(s1(ops::concat_cols({fx, fs}))))));
    logits = ops::add(logits, logits_s);
  }
  return ops::softmax_rows(logits);
}

void SkeDisn::zero_skeleton_stream(ParamStore& ps, const std::string& prefix) {
  for (const char* suffix : {"s1", "s2", "s3"}) {
    ps.get(prefix + "." + suffix + std::string(".w")).values().setZero();
    ps.get(prefix + "." + suffix + std::string(".b")).values().setZero();
  }
}

Tensor skedisn_loss(const Tensor& probs, const std::vector<int>& inside) {
  if (probs.ndim() != 2 || probs.dim(1) != 2) throw TensorError("skedisn_loss: probs must be [N,2]");
  const std::size_t n = probs.dim(0);
  if (inside.size() != n) throw TensorError("skedisn_loss: label count mismatch");
  Tensor onehot = Tensor::zeros({n, 2});
  for (std::size_t i = 0; i < n; ++i)
    onehot.values()(Eigen::Index(2 * i + std::size_t(inside[i] ? 1 : 0))) = 1.0;
  Tensor ll = ops::sum_all(ops::mul(onehot, ops::log_op(probs)));
  return ops::neg(ops::scale(ll, 1.0 / double(n)));
}

TriangleMesh extract_isosurface(const std::function<Eigen::VectorXd(const Points&)>& inside_prob,
                                int r, double iso) {
  if (r < 2) throw TensorError("extract_isosurface: resolution must be >= 2");
  VoxelGrid g(r);
  const int batch = 4096;
  Points q(batch, 3);
  std::size_t flat = 0;
  int filled = 0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  auto flush = [&]() {
    if (filled == 0) return;
    const Eigen::VectorXd p = inside_prob(q.topRows(filled));
    for (int i = 0; i < filled; ++i) g.values(Eigen::Index(idx[std::size_t(i)])) = p(i);
    filled = 0;
  };
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x, ++flat) {
        q.row(filled) = g.center(x, y, z);
        idx[std::size_t(filled)] = g.index(x, y, z);
        if (++filled == batch) flush();
      }
  flush();
  TriangleMesh m = marching_cubes(g, iso);
  if (m.empty()) throw TensorError("extract_isosurface: empty isosurface");
  return largest_component(m);
}

}  // namespace skelforge
