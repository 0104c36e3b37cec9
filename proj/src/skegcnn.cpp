#include "skelforge/skegcnn.hpp"

#include <Eigen/Geometry>
#include <numeric>

#include "skelforge/marching_cubes.hpp"
#include "skelforge/ops.hpp"

namespace skelforge {

TriangleMesh extract_initial_mesh(const VoxelGrid& v, double iso, std::size_t max_vertices) {
  const double lo = v.values.minCoeff(), hi = v.values.maxCoeff();
  if (iso <= lo || iso >= hi)
    throw TensorError("extract_initial_mesh: iso " + std::to_string(iso) +
                      " outside grid value range [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  TriangleMesh m = marching_cubes(v, iso);
  if (m.empty()) throw TensorError("extract_initial_mesh: empty isosurface");
  m = largest_component(m);
  return cluster_vertices(m, max_vertices);
}

GcnNet GcnNet::create(ParamStore& ps, const std::string& prefix, std::size_t in_width,
                      const GcnConfig& cfg, std::mt19937_64& rng) {
  if (cfg.layers < 2) throw TensorError("GcnNet: need at least 2 layers");
  GcnNet net;
  std::size_t in = in_width;
  for (int l = 0; l < cfg.layers; ++l) {
    const bool last = l == cfg.layers - 1;
    const std::size_t out = last ? 3 : std::size_t(cfg.hidden);
    const std::string base = prefix + ".l" + std::to_string(l);
    GcnLayer layer;
    if (last) {
      // zero init: untrained deformation is exactly the identity
      layer.w_self = ps.create_zeros(base + ".ws", {in, out});
      layer.w_neigh = ps.create_zeros(base + ".wn", {in, out});
      layer.b = ps.create_zeros(base + ".b", {out});
    } else {
      const double s = std::sqrt(2.0 / double(in));
      layer.w_self = ps.create(base + ".ws", {in, out}, s, rng);
      layer.w_neigh = ps.create(base + ".wn", {in, out}, s, rng);
      layer.b = ps.create_zeros(base + ".b", {out});
    }
    net.layers.push_back(layer);
    in = out;
  }
  return net;
}

GcnNet GcnNet::fetch(ParamStore& ps, const std::string& prefix, const GcnConfig& cfg) {
  GcnNet net;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    net.layers.push_back({ps.get(base + ".ws"), ps.get(base + ".wn"), ps.get(base + ".b")});
  }
  return net;
}

Tensor neighbor_mean(const Tensor& features, const std::vector<std::vector<int>>& adjacency) {
  if (features.ndim() != 2) throw TensorError("neighbor_mean: features must be [N,F]");
  const std::size_t n = features.dim(0), f = features.dim(1);
  if (adjacency.size() != n) throw TensorError("neighbor_mean: adjacency size mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(Eigen::Index(n * f));
  MatMap ym(y.data(), Eigen::Index(n), Eigen::Index(f));
  ConstMatMap x(features.values().data(), Eigen::Index(n), Eigen::Index(f));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = adjacency[i];
    if (nb.empty()) continue;
    for (int j : nb) ym.row(Eigen::Index(i)) += x.row(j);
    ym.row(Eigen::Index(i)) /= double(nb.size());
  }
  return make_op({n, f}, std::move(y), {features}, [n, f, adjacency](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    MatMap pg(self.parents[0]->ensure_grad().data(), Eigen::Index(n), Eigen::Index(f));
    ConstMatMap g(self.grad.data(), Eigen::Index(n), Eigen::Index(f));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nb = adjacency[i];
      if (nb.empty()) continue;
      const double w = 1.0 / double(nb.size());
      for (int j : nb) pg.row(j) += w * g.row(Eigen::Index(i));
    }
  });
}

Tensor gcn_layer(const Tensor& features, const std::vector<std::vector<int>>& adjacency,
                 const GcnLayer& layer, bool relu_act) {
  Tensor h = ops::add(ops::matmul(features, layer.w_self),
                      ops::matmul(neighbor_mean(features, adjacency), layer.w_neigh));
  h = ops::add_bias(h, layer.b);
  return relu_act ? ops::relu(h) : h;
}

Tensor lift_vertex_features(const Tensor& vertices, const EncoderOutput& enc, const Camera& cam) {
  if (vertices.ndim() != 2 || vertices.dim(1) != 3)
    throw TensorError("lift_vertex_features: vertices must be [T,3]");
  const std::size_t n = vertices.dim(0);
  const Points verts = tensor_to_points(vertices);
  const Projection proj = project_vertices(cam, verts);
  std::vector<Tensor> parts;
  for (const FeatureMap& fm : enc.feature_maps) {
    Tensor coords = Tensor::zeros({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      coords.values()(Eigen::Index(2 * i)) = proj.pixels(Eigen::Index(i), 0) / fm.factor;
      coords.values()(Eigen::Index(2 * i + 1)) = proj.pixels(Eigen::Index(i), 1) / fm.factor;
    }
    parts.push_back(bilinear_sample(fm.map, coords));
  }
  parts.push_back(vertices);
  return ops::concat_cols(parts);
}

DeformResult deform(const TriangleMesh& initial, const EncoderOutput& enc, const Camera& cam,
                    const GcnNet& net) {
  initial.validate();
  Tensor base = points_to_tensor(initial.vertices);
  const std::vector<std::vector<int>> adj = initial.vertex_adjacency();
  Tensor h = lift_vertex_features(base, enc, cam);
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    h = gcn_layer(h, adj, net.layers[l], l + 1 < net.layers.size());
  Tensor verts = ops::add(base, h);

  DeformResult out;
  out.vertices = verts;
  out.mesh.vertices = tensor_to_points(verts);
  out.mesh.faces = initial.faces;  // connectivity frozen
  return out;
}

Tensor edge_reg(const Tensor& vertices, const std::vector<std::array<int, 2>>& edges) {
  if (vertices.ndim() != 2 || vertices.dim(1) != 3) throw TensorError("edge_reg: vertices must be [T,3]");
  const std::size_t n = vertices.dim(0);
  ConstMatMap v(vertices.values().data(), Eigen::Index(n), 3);
  double total = 0.0;
  for (const auto& e : edges) total += (v.row(e[0]) - v.row(e[1])).squaredNorm();
  Eigen::VectorXd val(1);
  val(0) = total;
  return make_op({1}, std::move(val), {vertices}, [n, edges, vv = vertices.values()](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    const double g = self.grad(0);
    ConstMatMap v(vv.data(), Eigen::Index(n), 3);
    MatMap pg(self.parents[0]->ensure_grad().data(), Eigen::Index(n), 3);
    for (const auto& e : edges) {
      const Eigen::RowVector3d d = 2.0 * g * (v.row(e[0]) - v.row(e[1]));
      pg.row(e[0]) += d;
      pg.row(e[1]) -= d;
    }
  });
}

Tensor curvature_reg(const Tensor& vertices, const std::vector<std::array<int, 2>>& edges,
                     const PointSet& gt_samples) {
  if (vertices.ndim() != 2 || vertices.dim(1) != 3)
    throw TensorError("curvature_reg: vertices must be [T,3]");
  gt_samples.require_normals("curvature_reg");
  const std::size_t n = vertices.dim(0);
  ConstMatMap v(vertices.values().data(), Eigen::Index(n), 3);
  const NearestNeighborIndex nn(gt_samples.points);
  std::vector<Eigen::RowVector3d> normals(edges.size());
  double total = 0.0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    const int j = nn.nearest(v.row(e[0]).transpose());
    normals[i] = gt_samples.normals->row(j);
    const double d = (v.row(e[0]) - v.row(e[1])).dot(normals[i]);
    total += d * d;
  }
  Eigen::VectorXd val(1);
  val(0) = total;
  return make_op({1}, std::move(val), {vertices},
                 [n, edges, normals, vv = vertices.values()](TensorNode& self) {
                   if (!self.parents[0]->requires_grad) return;
                   const double g = self.grad(0);
                   ConstMatMap v(vv.data(), Eigen::Index(n), 3);
                   MatMap pg(self.parents[0]->ensure_grad().data(), Eigen::Index(n), 3);
                   for (std::size_t i = 0; i < edges.size(); ++i) {
                     const auto& e = edges[i];
                     const double d = (v.row(e[0]) - v.row(e[1])).dot(normals[i]);
                     const Eigen::RowVector3d dn = 2.0 * g * d * normals[i];
                     pg.row(e[0]) += dn;
                     pg.row(e[1]) -= dn;
                   }
                 });
}

Tensor sample_points_on_mesh(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                             std::size_t n, std::uint64_t seed) {
  if (vertices.ndim() != 2 || vertices.dim(1) != 3)
    throw TensorError("sample_points_on_mesh: vertices must be [T,3]");
  if (faces.empty() || n == 0) throw TensorError("sample_points_on_mesh: empty faces or n=0");
  const std::size_t nv = vertices.dim(0);
  ConstMatMap v(vertices.values().data(), Eigen::Index(nv), 3);

  std::vector<double> cdf(faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& fc = faces[f];
    acc += 0.5 * (Eigen::RowVector3d(v.row(fc[1]) - v.row(fc[0]))
                      .cross(Eigen::RowVector3d(v.row(fc[2]) - v.row(fc[0]))))
                     .norm();
    cdf[f] = acc;
  }
  if (acc <= 0.0) throw TensorError("sample_points_on_mesh: zero total area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  struct Pick {
    int face;
    Eigen::Vector3d bary;
  };
  std::vector<Pick> picks(n);
  Eigen::VectorXd y(Eigen::Index(n * 3));
  for (std::size_t k = 0; k < n; ++k) {
    const double target = uni(rng) * acc;
    const std::size_t f =
        std::size_t(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
    double a = uni(rng), b = uni(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    picks[k] = {int(std::min(f, faces.size() - 1)), {1.0 - a - b, a, b}};
    const auto& fc = faces[std::size_t(picks[k].face)];
    const Eigen::RowVector3d p = picks[k].bary(0) * v.row(fc[0]) + picks[k].bary(1) * v.row(fc[1]) +
                                 picks[k].bary(2) * v.row(fc[2]);
    y.segment(Eigen::Index(3 * k), 3) = p.transpose();
  }
  return make_op({n, 3}, std::move(y), {vertices}, [nv, n, faces, picks](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    MatMap pg(self.parents[0]->ensure_grad().data(), Eigen::Index(nv), 3);
    ConstMatMap g(self.grad.data(), Eigen::Index(n), 3);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& fc = faces[std::size_t(picks[k].face)];
      for (int c = 0; c < 3; ++c) pg.row(fc[c]) += picks[k].bary(c) * g.row(Eigen::Index(k));
    }
  });
}

SkeGcnnLossParts skegcnn_loss(const Tensor& vertices, const TriangleMesh& topology,
                              const PointSet& gt_samples, double lambda1, double lambda2,
                              std::size_t sample_budget, std::uint64_t seed) {
  gt_samples.require_nonempty("skegcnn_loss");
  gt_samples.require_normals("skegcnn_loss");
  Tensor pred = sample_points_on_mesh(vertices, topology.faces, sample_budget, seed);
  const Eigen::VectorXd kappa = curvature_weights(gt_samples);
  Tensor wc = weighted_chamfer(pred, points_to_tensor(gt_samples.points), kappa);
  const std::vector<std::array<int, 2>> edges = topology.edges();
  Tensor er = edge_reg(vertices, edges);
  Tensor cr = curvature_reg(vertices, edges, gt_samples);
  SkeGcnnLossParts parts;
  parts.chamfer_part = wc.scalar_value();
  parts.edge_part = er.scalar_value();
  parts.curvature_part = cr.scalar_value();
  parts.total = ops::add(wc, ops::add(ops::scale(er, lambda1), ops::scale(cr, lambda2)));
  return parts;
}

}  // namespace skelforge
