#include "skelforge/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace skelforge {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_numel(shape)));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.values().setConstant(v);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> vals, bool requires_grad) {
  if (vals.size() != shape_numel(shape))
    throw TensorError("from_values: " + std::to_string(vals.size()) + " values for shape " + shape_str(shape));
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return from_vector(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_vector(Shape shape, Eigen::VectorXd vals, bool requires_grad) {
  if (static_cast<std::size_t>(vals.size()) != shape_numel(shape))
    throw TensorError("from_vector: size mismatch for shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(vals);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from_values({1}, {v}, requires_grad); }

double Tensor::scalar_value() const {
  if (size() != 1) throw TensorError("scalar_value on tensor of shape " + shape_str(shape()));
  return node_->values(0);
}

Tensor make_op(Shape shape, Eigen::VectorXd values, const std::vector<Tensor>& parents,
               std::function<void(TensorNode&)> backward_fn) {
  if (static_cast<std::size_t>(values.size()) != shape_numel(shape))
    throw TensorError("make_op: value count mismatch for shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw TensorError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  // iterative post-order DFS; tapes can be deep
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  TensorNode* root = loss.node().get();
  if (visited.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.n->parents.size()) {
      TensorNode* c = f.n->parents[f.next_child++].get();
      if (visited.insert(c).second) stack.push_back({c, 0});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad(0) = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.values().allFinite()) throw TensorError(std::string("non-finite values in ") + what);
}

}  // namespace skelforge
