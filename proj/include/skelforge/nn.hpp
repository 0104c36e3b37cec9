#pragma once

#include <map>
#include <random>
#include <string>

#include "skelforge/ops.hpp"

namespace skelforge {

/// Named parameter map with Adam state. Parameter tensors are leaves with
/// requires_grad set; optimizer_step consumes and clears their grads.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Shape shape, double init_scale, std::mt19937_64& rng);
  Tensor& create_zeros(const std::string& name, Shape shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, Tensor>& params() const { return params_; }

  /// Adam update (beta1=0.9, beta2=0.999, eps=1e-8); requires every parameter
  /// to carry a grad, then clears grads.
  void adam_step(double lr);
  void zero_grad();
  std::size_t step_count() const { return step_; }

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Eigen::VectorXd> m_, v_;
  std::size_t step_ = 0;
};

struct Dense {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
  static Dense create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, double w_scale = -1.0);
  static Dense fetch(ParamStore& ps, const std::string& name);
  Tensor operator()(const Tensor& x) const { return ops::add_bias(ops::matmul(x, w), b); }
};

struct Conv3d {
  Tensor w;  // [Co,Ci,kd,kh,kw] (or [Ci,Co,...] for transpose)
  Tensor b;  // [Co]
  ops::ConvSpec spec;
  bool transpose = false;
  static Conv3d create(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                       std::array<int, 3> kernel, ops::ConvSpec spec, std::mt19937_64& rng,
                       bool transpose = false);
  static Conv3d fetch(ParamStore& ps, const std::string& name, ops::ConvSpec spec, bool transpose = false);
  Tensor operator()(const Tensor& x) const {
    return transpose ? ops::conv3d_transpose(x, w, b, spec) : ops::conv3d(x, w, b, spec);
  }
};

struct FeatureMap {
  int factor;  // image downsampling factor
  Tensor map;  // [C,H,W] stored as [C,1,H,W] squeezed
};

struct EncoderOutput {
  Tensor global_code;               // [m]
  std::vector<FeatureMap> feature_maps;  // factors 2,4,8
};

/// Small strided conv encoder replacing a pretrained backbone: 6 conv layers
/// (16,32,64,128,128,128), global average pool, dense to code_dim.
struct ImageEncoder {
  std::vector<Conv3d> convs;
  Dense head;
  std::size_t code_dim = 512;
  static ImageEncoder create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                             std::mt19937_64& rng);
  static ImageEncoder fetch(ParamStore& ps, const std::string& prefix, std::size_t code_dim);
  /// image: [C,H,W] tensor with H=W divisible by 16.
  EncoderOutput operator()(const Tensor& image) const;
};

}  // namespace skelforge
