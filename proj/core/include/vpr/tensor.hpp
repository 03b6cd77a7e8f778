#pragma once

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a backward rule; backward()
// linearizes the reachable graph into a ComputationTape (topological order)
// and walks it in reverse, accumulating into every leaf that requires grad.
//
// Copying a Tensor copies the handle, not the data. Use clone() or detach()
// for an independent copy.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vpr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
struct Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Shape [1, n].
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable storage. Only valid on leaves; used by optimizers and
  // finite-difference probes.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  // Element (i, j) of a rank-2 tensor.
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Name of the operation that produced this tensor ("leaf" for inputs).
  const std::string& op_name() const;

  // Copy of the values with no history and no gradient tracking.
  Tensor detach() const;
  // Copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  // Node identity, stable for the lifetime of the node.
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct detail::Access;

  std::shared_ptr<detail::Node> node_;
};

// Topologically ordered record of the operations that produced a tensor.
class ComputationTape {
 public:
  struct Entry {
    std::string op;
    const void* output = nullptr;
    std::vector<const void*> inputs;
  };

  // Linearize every node reachable from `output` that participates in
  // gradient flow. Inputs precede the operations that consume them.
  static ComputationTape record(const Tensor& output);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Seed d(output)/d(output) = 1 and propagate in reverse tape order.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
  std::vector<Entry> entries_;
};

// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
// clear them with Tensor::zero_grad().
void backward(const Tensor& output);

// ---------------------------------------------------------------------------
// Forward operations. Each records itself when any input requires grad.
// Binary elementwise ops accept identical shapes, or a rank-2 right operand
// of shape [1, m] broadcast across the rows of an [n, m] left operand.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// input [n, c_in, h, w], kernel [c_out, c_in, k, k], optional bias [c_out].
// Stride 1, symmetric zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding);
// Non-overlapping 2x2 windows over the last two axes of a rank-4 tensor.
// Odd trailing rows/columns are dropped. Ties go to the first element in
// row-major order.
Tensor maxpool2x2(const Tensor& input);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// d sqrt(x)/dx is taken as 0 at x == 0.
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
// Reductions keep the reduced axis with extent 1.
Tensor sum_over_axis(const Tensor& x, std::size_t axis);
Tensor mean_over_axis(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
// Columns [begin, end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Gather rows of a rank-2 tensor; indices may repeat.
Tensor select_rows(const Tensor& x, std::span<const std::size_t> indices);
// Concatenate rank-2 tensors along axis 0 or 1.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Row-wise log-softmax of a rank-2 tensor.
Tensor log_softmax_rows(const Tensor& x);
// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return scale(x, -1.0); }

// ---------------------------------------------------------------------------
// Finite-difference verification.
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), with
// central differences of half-width `epsilon` around `point`.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double epsilon);

// Same measure over every coordinate of several leaf parameters that `f`
// closes over. Parameter values are restored on return.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double epsilon);

}  // namespace vpr
