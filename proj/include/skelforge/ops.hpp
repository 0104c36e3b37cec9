#pragma once

#include <array>

#include "skelforge/tensor.hpp"

namespace skelforge::ops {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);   // argument clamped below 40
Tensor log_op(const Tensor& a);   // argument clamped to [1e-12, 1-1e-12]
Tensor sigmoid(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor reshape(const Tensor& a, Shape shape);  // same numel, identity values

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- matrix / structural ----
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k] x [k,n]
Tensor add_bias(const Tensor& x, const Tensor& b);        // [m,n] + [n] per row
Tensor repeat_row(const Tensor& v, std::size_t rows);     // [n] -> [rows,n]
Tensor concat0(const std::vector<Tensor>& parts);         // along dim 0
Tensor concat_cols(const std::vector<Tensor>& parts);     // [m,n_i] -> [m, sum n_i]
Tensor softmax_rows(const Tensor& a);                     // softmax over last dim
Tensor slice0(const Tensor& a, std::size_t start, std::size_t count);  // along dim 0

// ---- 3D convolution family; x: [C,D,H,W] ----
struct ConvSpec {
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  std::array<int, 3> out_pad{0, 0, 0};  // transpose only
};
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);
// w: [Ci,Co,kd,kh,kw]
Tensor conv3d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);
Tensor maxpool3d(const Tensor& x, int factor);
Tensor upsample_nearest3d(const Tensor& x, int factor);
Tensor crop3d(const Tensor& x, std::array<int, 3> offset, std::array<int, 3> size);  // zero-padded

// Elementwise maximum of same-length vectors; permutation-invariant.
Eigen::VectorXd max_pool_aggregate(const std::vector<Eigen::VectorXd>& codes);

}  // namespace skelforge::ops
