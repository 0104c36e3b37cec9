#pragma once

#include <array>
#include <random>
#include <utility>
#include <vector>

#include "skelforge/nn.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

struct RefinementConfig {
  int r = 64;  // output resolution, divisible by 8
  std::vector<int> global_down = {32, 64, 128, 128};
  std::vector<int> global_up = {128, 64, 32, 2};
  std::vector<int> local_down = {32, 64, 128, 128};
  std::vector<int> local_up = {128, 64, 32, 16, 2};
  int feature_volume_channels = 8;

  int r_half() const { return r / 2; }            // r' — resolution of U_in
  int down_res() const { return r_half() / 2; }   // U_in-down / U_out-down side
  int window_in() const { return r_half() / 4 + 4; }   // s'
  int window_out() const { return 2 * window_in(); }   // s
  int stride() const { return r_half() / 4; }
  int feature_volume_res() const { return r_half() / 4; }

  void validate() const;
};

struct SubvolumeWindow {
  std::array<int, 3> in_offset;   // into U_in (resolution r')
  std::array<int, 3> out_offset;  // into V (resolution r), = 2 * in_offset
};

struct SubvolumeTiling {
  int r = 0;       // output resolution
  int s_in = 0;    // input window side
  int s_out = 0;   // output window side
  std::vector<SubvolumeWindow> windows;
  std::vector<int> axis_offsets;    // 1D lattice offsets (shared by all axes)
  std::vector<int> axis_coverage;   // per-axis output coverage counts, length r

  int coverage(int x, int y, int z) const {
    return axis_coverage[std::size_t(x)] * axis_coverage[std::size_t(y)] *
           axis_coverage[std::size_t(z)];
  }
  int min_coverage() const;
  int max_coverage() const;
};

SubvolumeTiling plan_tiling(const RefinementConfig& cfg);

/// Dense map from the global image code to a [C, m, m, m] feature volume at
/// m = r'/4, standing in for a full image-to-volume auto-encoder.
struct FeatureVolumeNet {
  Dense map;
  int res = 0, channels = 0;
  static FeatureVolumeNet create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                                 const RefinementConfig& cfg, std::mt19937_64& rng);
  static FeatureVolumeNet fetch(ParamStore& ps, const std::string& prefix,
                                const RefinementConfig& cfg);
  Tensor operator()(const Tensor& code) const;  // [C,m,m,m]
};

/// Encoder-decoder refining U_in-down into a same-resolution probability grid;
/// the image feature volume joins the encoder at the r'/4 level.
struct GlobalStream {
  std::vector<Conv3d> down;
  std::vector<Conv3d> up;
  static GlobalStream create(ParamStore& ps, const std::string& prefix, const RefinementConfig& cfg,
                             std::mt19937_64& rng);
  static GlobalStream fetch(ParamStore& ps, const std::string& prefix, const RefinementConfig& cfg);
  /// u_down: [1,n,n,n] with n = r'/2; feature_volume: [C,n/2,n/2,n/2].
  Tensor operator()(const Tensor& u_down, const Tensor& feature_volume) const;
};

/// Super-resolving window network: P_in window plus the matching (upsampled)
/// guidance window of U_out-down in, s-sized probability window out.
struct LocalStream {
  std::vector<Conv3d> down;
  std::vector<Conv3d> up;
  static LocalStream create(ParamStore& ps, const std::string& prefix, const RefinementConfig& cfg,
                            std::mt19937_64& rng);
  static LocalStream fetch(ParamStore& ps, const std::string& prefix, const RefinementConfig& cfg);
  /// p_in: [1,s',s',s']; guidance: [1,s'/2,s'/2,s'/2] window of U_out-down.
  Tensor operator()(const Tensor& p_in, const Tensor& guidance) const;
};

/// Extract window w of the tiling from a [n,n,n] grid tensor (n = r').
Tensor extract_window(const Tensor& grid, const SubvolumeTiling& tiling, std::size_t w);
/// Matching guidance window from U_out-down (resolution r'/2, side s'/2).
Tensor extract_guidance(const Tensor& u_out_down, const SubvolumeTiling& tiling, std::size_t w);

/// Average the output windows at overlapping voxels. Windows are keyed by
/// their tiling index; accumulation always runs in ascending key order, so the
/// result is bitwise independent of list order.
Tensor stitch(const SubvolumeTiling& tiling, const std::vector<std::pair<int, Tensor>>& windows);
Tensor stitch(const SubvolumeTiling& tiling, const std::vector<Tensor>& windows);

/// Mean per-voxel binary cross-entropy of a probability grid against a binary
/// target (clamped at the log limits).
Tensor refine_loss(const Tensor& v, const VoxelGrid& target);

Tensor skeletonnet_loss(const Tensor& l_phi, const Tensor& l_psi, const Tensor& l_refine,
                        double beta);

}  // namespace skelforge
