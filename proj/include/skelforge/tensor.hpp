#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace skelforge {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

/// Thrown on any contract violation (shape mismatch, bad precondition).
struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// One node of the reverse-mode tape. `backward_fn` scatters this node's
/// grad into the grads of its parents; parents keep the upstream graph alive.
struct TensorNode {
  Shape shape;
  Eigen::VectorXd values;
  Eigen::VectorXd grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  Eigen::VectorXd& ensure_grad() {
    if (grad.size() == 0) grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(values.size()));
    return grad;
  }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Value-semantic handle over a shared tape node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> vals, bool requires_grad = false);
  static Tensor from_vector(Shape shape, Eigen::VectorXd vals, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return static_cast<std::size_t>(node_->values.size()); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  Eigen::VectorXd& values() { return node_->values; }
  const Eigen::VectorXd& values() const { return node_->values; }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  double value(std::size_t i) const { return node_->values(static_cast<Eigen::Index>(i)); }
  double scalar_value() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  MatMap mat(std::size_t rows, std::size_t cols) {
    return MatMap(node_->values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatMap mat(std::size_t rows, std::size_t cols) const {
    return ConstMatMap(node_->values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

/// Records a new op on the tape. Parents without requires_grad are dropped so
/// pure inference builds no graph.
Tensor make_op(Shape shape, Eigen::VectorXd values, const std::vector<Tensor>& parents,
               std::function<void(TensorNode&)> backward_fn);

/// Reverse pass from a scalar loss; populates grad for every reachable
/// requires_grad node. Grads accumulate, so clear parameters between steps.
void backward(const Tensor& loss);

void check_finite(const Tensor& t, const char* what);

}  // namespace skelforge
