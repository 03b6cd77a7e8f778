#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vpr/tensor.hpp"

namespace vpr::detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty until a gradient is first accumulated.
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs that require grad.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
};

// Builds the output node of an operation. History is kept only when some
// input requires grad, so constant subgraphs stay flat.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward);

}  // namespace vpr::detail
