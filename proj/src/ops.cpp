#include "skelforge/ops.hpp"

#include <cmath>

namespace skelforge::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool wants(const TensorNode& self, std::size_t i) { return self.parents[i]->requires_grad; }

Eigen::VectorXd& pgrad(TensorNode& self, std::size_t i) { return self.parents[i]->ensure_grad(); }

// unary elementwise helper: y = f(x), dy/dx given as vector computed at forward time
Tensor unary(const Tensor& a, Eigen::VectorXd y, Eigen::VectorXd dydx) {
  return make_op(a.shape(), std::move(y), {a}, [d = std::move(dydx)](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad.cwiseProduct(d);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.shape(), a.values() + b.values(), {a, b}, [](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad;
    if (wants(self, 1)) pgrad(self, 1) += self.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.shape(), a.values() - b.values(), {a, b}, [](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad;
    if (wants(self, 1)) pgrad(self, 1) -= self.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.shape(), a.values().cwiseProduct(b.values()), {a, b},
                 [av = a.values(), bv = b.values()](TensorNode& self) {
                   if (wants(self, 0)) pgrad(self, 0) += self.grad.cwiseProduct(bv);
                   if (wants(self, 1)) pgrad(self, 1) += self.grad.cwiseProduct(av);
                 });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  return make_op(a.shape(), a.values() * s, {a}, [s](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_op(a.shape(), a.values().array() + s, {a}, [](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad;
  });
}

Tensor relu(const Tensor& a) {
  Eigen::VectorXd y = a.values().cwiseMax(0.0);
  Eigen::VectorXd d = (a.values().array() > 0.0).cast<double>();
  return unary(a, std::move(y), std::move(d));
}

Tensor tanh_op(const Tensor& a) {
  Eigen::VectorXd y = a.values().array().tanh();
  Eigen::VectorXd d = 1.0 - y.array().square();
  return unary(a, std::move(y), std::move(d));
}

Tensor exp_op(const Tensor& a) {
  Eigen::VectorXd y = a.values().array().min(40.0).exp();
  Eigen::VectorXd d = y;
  // clamped region has zero slope
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (a.values()(i) > 40.0) d(i) = 0.0;
  return unary(a, std::move(y), std::move(d));
}

Tensor log_op(const Tensor& a) {
  constexpr double kLo = 1e-12;
  const double kHi = 1.0 - 1e-12;
  Eigen::VectorXd x = a.values().array().max(kLo).min(kHi);
  Eigen::VectorXd y = x.array().log();
  Eigen::VectorXd d(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double v = a.values()(i);
    d(i) = (v < kLo || v > kHi) ? 0.0 : 1.0 / v;
  }
  return unary(a, std::move(y), std::move(d));
}

Tensor sigmoid(const Tensor& a) {
  Eigen::VectorXd y(a.values().size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = a.values()(i);
    y(i) = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Eigen::VectorXd d = y.cwiseProduct(Eigen::VectorXd::Ones(y.size()) - y);
  return unary(a, std::move(y), std::move(d));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Eigen::VectorXd y = a.values().array().max(lo).min(hi);
  Eigen::VectorXd d(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = a.values()(i);
    d(i) = (v < lo || v > hi) ? 0.0 : 1.0;
  }
  return unary(a, std::move(y), std::move(d));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw TensorError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return make_op(std::move(shape), a.values(), {a}, [](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0) += self.grad;
  });
}

Tensor sum_all(const Tensor& a) {
  Eigen::VectorXd y(1);
  y(0) = a.values().sum();
  return make_op({1}, std::move(y), {a}, [](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0).array() += self.grad(0);
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  Eigen::VectorXd y(1);
  y(0) = a.values().sum() * inv;
  return make_op({1}, std::move(y), {a}, [inv](TensorNode& self) {
    if (wants(self, 0)) pgrad(self, 0).array() += self.grad(0) * inv;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw TensorError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Eigen::VectorXd y(m * n);
  MatMap(y.data(), m, n) = a.mat(m, k) * b.mat(k, n);
  return make_op({m, n}, std::move(y), {a, b}, [m, k, n, av = a.values(), bv = b.values()](TensorNode& self) {
    ConstMatMap g(self.grad.data(), m, n);
    if (wants(self, 0)) MatMap(pgrad(self, 0).data(), m, k) += g * ConstMatMap(bv.data(), k, n).transpose();
    if (wants(self, 1)) MatMap(pgrad(self, 1).data(), k, n) += ConstMatMap(av.data(), m, k).transpose() * g;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.size() != x.dim(1))
    throw TensorError("add_bias: shapes " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Eigen::VectorXd y = x.values();
  MatMap ym(y.data(), m, n);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), n);
  return make_op({m, n}, std::move(y), {x, b}, [m, n](TensorNode& self) {
    ConstMatMap g(self.grad.data(), m, n);
    if (wants(self, 0)) pgrad(self, 0) += self.grad;
    if (wants(self, 1)) pgrad(self, 1) += g.colwise().sum().transpose();
  });
}

Tensor repeat_row(const Tensor& v, std::size_t rows) {
  if (v.ndim() != 1) throw TensorError("repeat_row: expects a vector, got " + shape_str(v.shape()));
  const std::size_t n = v.size();
  Eigen::VectorXd y(rows * n);
  MatMap ym(y.data(), rows, n);
  ym.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(v.values().data(), n);
  return make_op({rows, n}, std::move(y), {v}, [rows, n](TensorNode& self) {
    if (wants(self, 0)) {
      ConstMatMap g(self.grad.data(), rows, n);
      pgrad(self, 0) += g.colwise().sum().transpose();
    }
  });
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat0: empty input");
  Shape shape = parts[0].shape();
  std::size_t tail = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) tail *= shape[i];
  std::size_t d0 = 0, total = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != shape.size()) throw TensorError("concat0: rank mismatch");
    for (std::size_t i = 1; i < shape.size(); ++i)
      if (ps[i] != shape[i]) throw TensorError("concat0: trailing dim mismatch");
    d0 += ps[0];
    total += p.size();
  }
  shape[0] = d0;
  Eigen::VectorXd y(total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    y.segment(off, p.size()) = p.values();
    off += p.size();
  }
  return make_op(shape, std::move(y), parts, [offsets](TensorNode& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants(self, i)) continue;
      auto& g = pgrad(self, i);
      g += self.grad.segment(offsets[i], g.size());
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: empty input");
  const std::size_t m = parts[0].dim(0);
  std::size_t ncols = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != m) throw TensorError("concat_cols: row count mismatch");
    ncols += p.dim(1);
  }
  Eigen::VectorXd y(m * ncols);
  MatMap ym(y.data(), m, ncols);
  std::vector<std::size_t> offs;
  std::size_t c = 0;
  for (const auto& p : parts) {
    offs.push_back(c);
    ym.middleCols(c, p.dim(1)) = p.mat(m, p.dim(1));
    c += p.dim(1);
  }
  return make_op({m, ncols}, std::move(y), parts, [m, ncols, offs](TensorNode& self) {
    ConstMatMap g(self.grad.data(), m, ncols);
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants(self, i)) continue;
      const std::size_t w = self.parents[i]->shape[1];
      MatMap(pgrad(self, i).data(), m, w) += g.middleCols(offs[i], w);
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  if (a.ndim() == 0) throw TensorError("softmax_rows: scalar input");
  const std::size_t n = a.shape().back();
  const std::size_t m = a.size() / n;
  Eigen::VectorXd y(a.size());
  ConstMatMap x(a.values().data(), m, n);
  MatMap ym(y.data(), m, n);
  for (std::size_t r = 0; r < m; ++r) {
    Eigen::RowVectorXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    ym.row(r) = e / e.sum();
  }
  return make_op(a.shape(), y, {a}, [m, n, yv = y](TensorNode& self) {
    if (!wants(self, 0)) return;
    ConstMatMap g(self.grad.data(), m, n);
    ConstMatMap yy(yv.data(), m, n);
    MatMap pg(pgrad(self, 0).data(), m, n);
    for (std::size_t r = 0; r < m; ++r) {
      const double dot = g.row(r).dot(yy.row(r));
      pg.row(r) += yy.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
  });
}

Tensor slice0(const Tensor& a, std::size_t start, std::size_t count) {
  if (a.ndim() == 0) throw TensorError("slice0: scalar input");
  if (start + count > a.dim(0)) throw TensorError("slice0: range out of bounds");
  const std::size_t inner = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  Eigen::VectorXd y = a.values().segment(Eigen::Index(start * inner), Eigen::Index(count * inner));
  return make_op(shape, std::move(y), {a}, [start, count, inner](TensorNode& self) {
    if (!wants(self, 0)) return;
    pgrad(self, 0).segment(Eigen::Index(start * inner), Eigen::Index(count * inner)) += self.grad;
  });
}

Eigen::VectorXd max_pool_aggregate(const std::vector<Eigen::VectorXd>& codes) {
  if (codes.empty()) throw TensorError("max_pool_aggregate: empty code list");
  Eigen::VectorXd out = codes[0];
  for (std::size_t i = 1; i < codes.size(); ++i) {
    if (codes[i].size() != out.size()) throw TensorError("max_pool_aggregate: dimension mismatch");
    out = out.cwiseMax(codes[i]);
  }
  return out;
}

}  // namespace skelforge::ops
