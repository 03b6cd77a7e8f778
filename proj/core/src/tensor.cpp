#include "vpr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "node.hpp"

namespace vpr {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_defined(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw std::logic_error("operation on an undefined tensor");
}

void validate_shape(const Shape& shape, std::size_t size) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape " + to_string(shape) + " has a zero extent");
  }
  if (numel(shape) != size) {
    throw std::invalid_argument("tensor shape " + to_string(shape) + " holds " +
                                std::to_string(numel(shape)) + " elements but data has " +
                                std::to_string(size));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape, data.size());
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = vpr::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = vpr::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  check_defined(node_);
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  check_defined(node_);
  return node_->data.size();
}

std::span<const double> Tensor::data() const {
  check_defined(node_);
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  check_defined(node_);
  if (!node_->is_leaf()) throw std::logic_error("mutable_data() on a non-leaf tensor (" + node_->op + ")");
  return node_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  check_defined(node_);
  if (node_->data.size() != 1) {
    throw std::invalid_argument("item() on a tensor of shape " + to_string(node_->shape));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  const auto& s = shape();
  if (s.size() != 2 || i >= s[0] || j >= s[1]) {
    throw std::out_of_range("at(" + std::to_string(i) + ", " + std::to_string(j) + ") on shape " + to_string(s));
  }
  return node_->data[i * s[1] + j];
}

bool Tensor::requires_grad() const {
  check_defined(node_);
  return node_->requires_grad;
}

bool Tensor::is_leaf() const {
  check_defined(node_);
  return node_->is_leaf();
}

bool Tensor::has_grad() const {
  check_defined(node_);
  return !node_->grad.empty() && node_->grad.size() == node_->data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient (" + node_->op + ")");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  check_defined(node_);
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  check_defined(node_);
  node_->grad.clear();
}

const std::string& Tensor::op_name() const {
  check_defined(node_);
  return node_->op;
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  check_defined(node_);
  return Tensor(node_->shape, node_->data, requires_grad);
}

// ---------------------------------------------------------------------------

namespace detail {

Tensor make_result(std::string op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = std::move(op);
  const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(Access::node(t));
    node->backward = std::move(backward);
  }
  return Access::wrap(std::move(node));
}

}  // namespace detail

ComputationTape ComputationTape::record(const Tensor& output) {
  const auto& root = detail::Access::node(output);
  check_defined(root);
  ComputationTape tape;
  if (!root->requires_grad) return tape;

  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }

  tape.entries_.reserve(tape.order_.size());
  for (const auto& node : tape.order_) {
    Entry e;
    e.op = node->op;
    e.output = node.get();
    for (const auto& in : node->inputs) {
      if (in->requires_grad) e.inputs.push_back(in.get());
    }
    tape.entries_.push_back(std::move(e));
  }
  return tape;
}

void ComputationTape::backward() {
  if (order_.empty()) return;
  for (auto& node : order_) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  auto& root = order_.back();
  root->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (!node.is_leaf() && node.backward) node.backward(node);
  }
  // Intermediate gradients are not retained.
  for (auto& node : order_) {
    if (!node->is_leaf()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& output) {
  if (output.numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar output, got shape " + to_string(output.shape()));
  }
  if (!output.requires_grad()) {
    throw std::invalid_argument("backward() on a tensor that does not depend on any parameter");
  }
  ComputationTape::record(output).backward();
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  Tensor x = point.clone(true);
  std::vector<Tensor> params{x};
  return grad_check([&]() { return f(x); }, params, epsilon);
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  for (auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw std::invalid_argument("grad_check: parameters must be leaves that require grad");
    }
    p.zero_grad();
  }
  const Tensor y = f();
  if (y.numel() != 1) {
    throw std::invalid_argument("grad_check: function returned shape " + to_string(y.shape()) +
                                ", expected a scalar");
  }
  backward(y);

  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = f().item();
      values[i] = saved - epsilon;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace vpr
