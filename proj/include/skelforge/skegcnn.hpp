#pragma once

#include <random>
#include <vector>

#include "skelforge/camera.hpp"
#include "skelforge/mesh.hpp"
#include "skelforge/nn.hpp"
#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

/// Marching cubes on the skeletal volume, keeping the largest connected
/// component, with the vertex count capped via topology-preserving clustering.
TriangleMesh extract_initial_mesh(const VoxelGrid& v, double iso = 0.5,
                                  std::size_t max_vertices = 10000);

struct GcnLayer {
  Tensor w_self;   // [in, out]
  Tensor w_neigh;  // [in, out]
  Tensor b;        // [out]
};

struct GcnConfig {
  int layers = 6;
  int hidden = 192;
};

/// 6-layer GCN; hidden width 192, last layer emits 3-d vertex offsets and is
/// zero-initialized so the untrained deformation is the identity.
struct GcnNet {
  std::vector<GcnLayer> layers;
  static GcnNet create(ParamStore& ps, const std::string& prefix, std::size_t in_width,
                       const GcnConfig& cfg, std::mt19937_64& rng);
  static GcnNet fetch(ParamStore& ps, const std::string& prefix, const GcnConfig& cfg);
};

/// Mean over graph neighbors of per-vertex feature rows; isolated vertices get
/// a zero neighbor term.
Tensor neighbor_mean(const Tensor& features, const std::vector<std::vector<int>>& adjacency);

/// f' = act(W_self f + W_neigh mean_{t' in N(t)} f_{t'} + b).
Tensor gcn_layer(const Tensor& features, const std::vector<std::vector<int>>& adjacency,
                 const GcnLayer& layer, bool relu_act);

/// Per-vertex input features: bilinear-lifted multi-scale image features at
/// the vertex projections, concatenated with the vertex coordinates.
Tensor lift_vertex_features(const Tensor& vertices, const EncoderOutput& enc, const Camera& cam);

struct DeformResult {
  TriangleMesh mesh;     // deformed copy; connectivity identical to the input
  Tensor vertices;       // [T,3] on the tape (base + predicted offsets)
};

DeformResult deform(const TriangleMesh& initial, const EncoderOutput& enc, const Camera& cam,
                    const GcnNet& net);

/// Sum of squared edge lengths for vertex tensor [T,3].
Tensor edge_reg(const Tensor& vertices, const std::vector<std::array<int, 2>>& edges);

/// Sum over edges of the squared projection of the edge vector on the normal
/// of the nearest ground-truth sample to the edge's first endpoint.
Tensor curvature_reg(const Tensor& vertices, const std::vector<std::array<int, 2>>& edges,
                     const PointSet& gt_samples);

/// Area-weighted differentiable surface sampling: sample positions are
/// barycentric combinations of the vertex tensor rows, so gradients flow back
/// to the triangle's three vertices.
Tensor sample_points_on_mesh(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                             std::size_t n, std::uint64_t seed);

struct SkeGcnnLossParts {
  Tensor total;
  double chamfer_part = 0, edge_part = 0, curvature_part = 0;
};

/// Weighted Chamfer (curvature weights on the ground truth) between sampled
/// surface points, plus lambda1 * edge_reg + lambda2 * curvature_reg.
SkeGcnnLossParts skegcnn_loss(const Tensor& vertices, const TriangleMesh& topology,
                              const PointSet& gt_samples, double lambda1, double lambda2,
                              std::size_t sample_budget, std::uint64_t seed);

}  // namespace skelforge
