#pragma once

#include <string>
#include <vector>

#include "kwscl/autodiff/tensor.hpp"

namespace kwscl::ad {

struct Segment {
  std::string name;
  Tensor tensor;  // shares storage with the owning layer
  bool trainable = true;
};

/// Ordered, named view over a model's tensors. Running statistics appear as
/// non-trainable segments; they are checkpointed but never optimized.
class ParameterVector {
 public:
  ParameterVector() = default;

  void add(std::string name, Tensor tensor, bool trainable = true);
  void append(const ParameterVector& other, const std::string& prefix = {});

  const std::vector<Segment>& segments() const { return segments_; }
  std::vector<Segment>& segments() { return segments_; }
  const Segment& find(const std::string& name) const;

  std::size_t total_count() const;
  std::size_t trainable_count() const;

  /// Concatenated data of trainable segments (or all segments).
  std::vector<double> flatten(bool trainable_only = true) const;
  void unflatten(const std::vector<double>& values, bool trainable_only = true);

  /// Concatenated gradients of trainable segments; throws if any is missing.
  std::vector<double> flatten_grads() const;
  void set_grads(const std::vector<double>& values);
  void zero_grads();
  bool grads_present() const;

  /// Copies every segment's data from `other` (names and shapes must match).
  void copy_from(const ParameterVector& other);

 private:
  std::vector<Segment> segments_;
};

}  // namespace kwscl::ad
