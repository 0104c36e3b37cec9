#pragma once

#include <functional>
#include <random>

#include "skelforge/camera.hpp"
#include "skelforge/mesh.hpp"
#include "skelforge/nn.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

struct LabeledPoints {
  Points points;
  std::vector<int> inside;  // 1 inside, 0 outside
};

/// Near-surface training points: area-weighted surface samples with Gaussian
/// jitter, rejected unless the jitter stays below epsilon (which bounds the
/// true surface distance), labeled by a ray-parity inside test.
LabeledPoints sample_training_points(const TriangleMesh& gt, std::size_t n, double epsilon,
                                     std::uint64_t seed);

struct SkeDisnConfig {
  int crop_sizes[3] = {4, 8, 16};
  int crop_channels = 16;  // width of the first conv in each crop encoder
  std::size_t fx_widths[3] = {64, 128, 512};
  std::size_t head_widths[2] = {512, 256};  // each head ends in 2 logits
};

/// Three-stream occupancy field: point embedding f_x plus (global code |
/// lifted pixel features | multi-scale skeletal-volume features), one 2-logit
/// head per stream, summed and softmaxed.
struct SkeDisn {
  SkeDisnConfig cfg;
  Dense fx1, fx2, fx3;
  Dense g1, g2, g3;
  Dense l1, l2, l3;
  Dense s1, s2, s3;
  std::vector<Conv3d> crop_enc[3];

  static SkeDisn create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                        std::size_t lifted_width, const SkeDisnConfig& cfg, std::mt19937_64& rng);
  static SkeDisn fetch(ParamStore& ps, const std::string& prefix, const SkeDisnConfig& cfg);

  /// Multi-scale skeletal-volume features for one query point; v is a constant
  /// [1,r,r,r] tensor view of the volume.
  Tensor extract_multiscale(const Tensor& v, int res, const Eigen::Vector3d& x) const;

  /// Occupancy probabilities [N,2] (inside prob in column 1). The skeleton
  /// stream is skipped entirely when use_skeleton is false (two-stream
  /// ablation baseline).
  Tensor field(const Points& pts, const EncoderOutput& enc, const Camera& cam, const VoxelGrid& v,
               bool use_skeleton = true) const;

  /// Zero the skeleton head parameters in place (exact ablation switch).
  void zero_skeleton_stream(ParamStore& ps, const std::string& prefix);
};

/// Mean two-way cross entropy of softmax probabilities against labels.
Tensor skedisn_loss(const Tensor& probs, const std::vector<int>& inside);

/// Evaluate an inside-probability closure on an r^3 lattice and run marching
/// cubes on the result.
TriangleMesh extract_isosurface(const std::function<Eigen::VectorXd(const Points&)>& inside_prob,
                                int r, double iso = 0.5);

}  // namespace skelforge
