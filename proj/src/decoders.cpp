#include "skelforge/decoders.hpp"

#include "skelforge/ops.hpp"

namespace skelforge {

PrimitiveSet PrimitiveSet::lines(int count, int samples) {
  if (count < 1 || samples < 2) throw TensorError("PrimitiveSet::lines: need count>=1, samples>=2");
  PrimitiveSet ps;
  ps.kind = PrimitiveKind::Line;
  ps.count = count;
  ps.samples_u = samples;
  ps.samples_v = 1;
  ps.params.resize(count * samples, 2);
  ps.neighbors.assign(std::size_t(count) * samples, {});
  for (int p = 0; p < count; ++p)
    for (int i = 0; i < samples; ++i) {
      const int idx = p * samples + i;
      ps.params(idx, 0) = double(i) / (samples - 1);
      ps.params(idx, 1) = 0.0;
      if (i > 0) ps.neighbors[std::size_t(idx)].push_back(idx - 1);
      if (i < samples - 1) ps.neighbors[std::size_t(idx)].push_back(idx + 1);
    }
  return ps;
}

PrimitiveSet PrimitiveSet::squares(int count, int grid) {
  if (count < 1 || grid < 2) throw TensorError("PrimitiveSet::squares: need count>=1, grid>=2");
  PrimitiveSet ps;
  ps.kind = PrimitiveKind::Square;
  ps.count = count;
  ps.samples_u = grid;
  ps.samples_v = grid;
  const int per = grid * grid;
  ps.params.resize(count * per, 2);
  ps.neighbors.assign(std::size_t(count) * per, {});
  for (int p = 0; p < count; ++p)
    for (int v = 0; v < grid; ++v)
      for (int u = 0; u < grid; ++u) {
        const int idx = p * per + v * grid + u;
        ps.params(idx, 0) = double(u) / (grid - 1);
        ps.params(idx, 1) = double(v) / (grid - 1);
        if (u > 0) ps.neighbors[std::size_t(idx)].push_back(idx - 1);
        if (u < grid - 1) ps.neighbors[std::size_t(idx)].push_back(idx + 1);
        if (v > 0) ps.neighbors[std::size_t(idx)].push_back(idx - grid);
        if (v < grid - 1) ps.neighbors[std::size_t(idx)].push_back(idx + grid);
      }
  return ps;
}

SkeDecoder SkeDecoder::create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                              std::mt19937_64& rng) {
  SkeDecoder d;
  d.l1 = Dense::create(ps, prefix + ".l1", 2 + code_dim, 512, rng);
  d.l2 = Dense::create(ps, prefix + ".l2", 512, 256, rng);
  d.l3 = Dense::create(ps, prefix + ".l3", 256, 128, rng);
  d.l4 = Dense::create(ps, prefix + ".l4", 128, 3, rng);
  return d;
}

SkeDecoder SkeDecoder::fetch(ParamStore& ps, const std::string& prefix) {
  SkeDecoder d;
  d.l1 = Dense::fetch(ps, prefix + ".l1");
  d.l2 = Dense::fetch(ps, prefix + ".l2");
  d.l3 = Dense::fetch(ps, prefix + ".l3");
  d.l4 = Dense::fetch(ps, prefix + ".l4");
  return d;
}

Tensor SkeDecoder::operator()(const Tensor& code, const PrimitiveSet& prims) const {
  if (code.ndim() != 1) throw TensorError("SkeDecoder: code must be a vector");
  const std::size_t n = std::size_t(prims.total_samples());
  Tensor coords = Tensor::zeros({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    coords.values()(Eigen::Index(2 * i)) = prims.params(Eigen::Index(i), 0);
    coords.values()(Eigen::Index(2 * i + 1)) = prims.params(Eigen::Index(i), 1);
  }
  Tensor in = ops::concat_cols({coords, ops::repeat_row(code, n)});
  Tensor h = ops::relu(l1(in));
  h = ops::relu(l2(h));
  h = ops::relu(l3(h));
  // tanh keeps raw outputs in (-1,1); halved to land in the canonical cube
  return ops::scale(ops::tanh_op(l4(h)), 0.5);
}

Tensor decode_curves(const Tensor& code, const PrimitiveSet& prims, const SkeDecoder& dec) {
  if (prims.kind != PrimitiveKind::Line) throw TensorError("decode_curves: primitive kind must be Line");
  return dec(code, prims);
}

Tensor decode_sheets(const Tensor& code, const PrimitiveSet& prims, const SkeDecoder& dec) {
  if (prims.kind != PrimitiveKind::Square)
    throw TensorError("decode_sheets: primitive kind must be Square");
  return dec(code, prims);
}

Tensor decoder_loss(const Tensor& points, const Points& gt, const PrimitiveSet& prims, double alpha) {
  if (points.ndim() != 2 || points.dim(1) != 3 ||
      points.dim(0) != std::size_t(prims.total_samples()))
    throw TensorError("decoder_loss: points shape does not match primitive set");
  Tensor cd = chamfer(points, points_to_tensor(gt), Reduction::Sum);
  if (alpha == 0.0) return cd;
  return ops::add(cd, ops::scale(laplacian_reg(points, prims.neighbors), alpha));
}

PointSet assemble_skeleton(const Points& curves, const Points& sheets) {
  PointSet out;
  out.points.resize(curves.rows() + sheets.rows(), 3);
  out.points.topRows(curves.rows()) = curves;
  out.points.bottomRows(sheets.rows()) = sheets;
  std::vector<SkelLabel> labels;
  labels.insert(labels.end(), std::size_t(curves.rows()), SkelLabel::Curve);
  labels.insert(labels.end(), std::size_t(sheets.rows()), SkelLabel::Sheet);
  out.labels = std::move(labels);
  return out;
}

}  // namespace skelforge
