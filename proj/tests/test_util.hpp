#pragma once

#include <functional>
#include <random>

#include "skelforge/tensor.hpp"

namespace skelforge::testutil {

/// Central finite differences against the analytic gradient of a scalar-
/// valued function of one leaf tensor. Returns the max relative error over
/// all coordinates (relative to max(|fd|, |an|, floor)).
inline double max_grad_rel_error(Tensor& leaf, const std::function<Tensor()>& f, double step = 1e-5,
                                 double floor = 1e-6) {
  leaf.set_requires_grad(true);
  leaf.node()->grad.resize(0);
  Tensor loss = f();
  backward(loss);
  Eigen::VectorXd analytic = leaf.grad();

  double worst = 0.0;
  for (Eigen::Index i = 0; i < leaf.values().size(); ++i) {
    const double orig = leaf.values()(i);
    leaf.values()(i) = orig + step;
    const double fp = f().scalar_value();
    leaf.values()(i) = orig - step;
    const double fm = f().scalar_value();
    leaf.values()(i) = orig;
    const double fd = (fp - fm) / (2 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic(i)), floor});
    worst = std::max(worst, std::abs(fd - analytic(i)) / denom);
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (Eigen::Index i = 0; i < t.values().size(); ++i) t.values()(i) = d(rng);
  return t;
}

}  // namespace skelforge::testutil
