#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "skelforge/nn.hpp"
#include "skelforge/pointset.hpp"

namespace skelforge {

enum class PrimitiveKind { Line, Square };

/// Template parameter domains fed to the skeletal decoders. The neighbor
/// graph (consecutive samples on a line, 4-connected grid on a square) is
/// fixed at construction; edges never cross primitives.
struct PrimitiveSet {
  PrimitiveKind kind = PrimitiveKind::Line;
  int count = 20;
  int samples_u = 64;  // samples per line, or grid width for squares
  int samples_v = 1;   // 1 for lines, grid height for squares
  Eigen::MatrixXd params;                    // [count*per, 2] coords in [0,1]^2 (v=0 for lines)
  std::vector<std::vector<int>> neighbors;   // per-sample adjacency

  int samples_per_primitive() const { return samples_u * samples_v; }
  int total_samples() const { return count * samples_per_primitive(); }

  static PrimitiveSet lines(int count = 20, int samples = 64);
  static PrimitiveSet squares(int count = 20, int grid = 8);
};

/// Four dense layers (512, 256, 128, 3), ReLU on the first three, tanh on the
/// last; shared MLP applied per sample to concat(param coords, code).
struct SkeDecoder {
  Dense l1, l2, l3, l4;
  static SkeDecoder create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                           std::mt19937_64& rng);
  static SkeDecoder fetch(ParamStore& ps, const std::string& prefix);
  /// Returns [total_samples, 3] points in the canonical cube.
  Tensor operator()(const Tensor& code, const PrimitiveSet& prims) const;
};

Tensor decode_curves(const Tensor& code, const PrimitiveSet& prims, const SkeDecoder& dec);
Tensor decode_sheets(const Tensor& code, const PrimitiveSet& prims, const SkeDecoder& dec);

/// Chamfer (Sum) to the ground-truth split plus alpha times the Laplacian
/// regularizer over the primitive neighbor graph.
Tensor decoder_loss(const Tensor& points, const Points& gt, const PrimitiveSet& prims, double alpha);

/// Concatenate curve and sheet predictions with Curve/Sheet labels.
PointSet assemble_skeleton(const Points& curves, const Points& sheets);

}  // namespace skelforge
