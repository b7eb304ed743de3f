#include "kwscl/autodiff/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "kwscl/common.hpp"

namespace kwscl::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(shape_size(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (data.size() != shape_size(shape)) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= node_->shape.size()) throw ShapeError("tensor: dim index out of range");
  return node_->shape[i];
}

std::size_t Tensor::size() const { return node_->data.size(); }
std::span<double> Tensor::data() { return node_->data; }
std::span<const double> Tensor::data() const { return node_->data; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<double> Tensor::grad() { return node_->ensure_grad(); }

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) throw Error("tensor: no gradient has been accumulated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::graph_freed() const { return node_->freed; }
bool Tensor::is_leaf() const { return !node_->backward && !node_->freed; }

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

void check_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

void backward(const Tensor& loss, bool retain_graph) {
  if (!loss.defined()) throw Error("backward: undefined tensor");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  detail::Node* root = loss.node().get();
  if (root->freed) throw Error("backward: graph already freed (pass retain_graph to backpropagate twice)");
  if (!root->requires_grad) throw Error("backward: loss does not depend on any tensor requiring grad");

  // Post-order DFS gives parents before children; reverse it for the sweep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }

  if (!retain_graph) {
    for (detail::Node* n : order) {
      if (n->backward) {
        n->backward = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->freed = true;
      }
    }
  }
}

}  // namespace kwscl::ad
