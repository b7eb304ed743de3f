#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kwscl::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool freed = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Reference-counted handle to a dense row-major double array with an
/// optional gradient. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// True once a non-leaf tensor took part in a backward pass that released the graph.
  bool graph_freed() const;
  bool is_leaf() const;

  /// Deep copy of data (no graph, no grad).
  Tensor clone() const;
  /// Same data, cut from the graph.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode pass from a scalar. Gradients accumulate into every tensor
/// that requires them. Unless `retain_graph`, the recorded graph is released
/// and a second call on the same loss throws.
void backward(const Tensor& loss, bool retain_graph = false);

/// Throws NumericError when any entry is NaN or infinite.
void check_finite(std::span<const double> values, const char* op);

}  // namespace kwscl::ad
