#include "kwscl/autodiff/parameters.hpp"

#include <algorithm>

#include "kwscl/common.hpp"

namespace kwscl::ad {

void ParameterVector::add(std::string name, Tensor tensor, bool trainable) {
  if (!tensor.defined()) throw Error("parameters: segment '" + name + "' is undefined");
  segments_.push_back({std::move(name), std::move(tensor), trainable});
}

void ParameterVector::append(const ParameterVector& other, const std::string& prefix) {
  for (const auto& s : other.segments_) segments_.push_back({prefix + s.name, s.tensor, s.trainable});
}

const Segment& ParameterVector::find(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw Error("parameters: no segment named '" + name + "'");
}

std::size_t ParameterVector::total_count() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.tensor.size();
  return n;
}

std::size_t ParameterVector::trainable_count() const {
  std::size_t n = 0;
  for (const auto& s : segments_) {
    if (s.trainable) n += s.tensor.size();
  }
  return n;
}

std::vector<double> ParameterVector::flatten(bool trainable_only) const {
  std::vector<double> out;
  out.reserve(trainable_only ? trainable_count() : total_count());
  for (const auto& s : segments_) {
    if (trainable_only && !s.trainable) continue;
    const auto d = s.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

void ParameterVector::unflatten(const std::vector<double>& values, bool trainable_only) {
  const std::size_t expected = trainable_only ? trainable_count() : total_count();
  if (values.size() != expected) {
    throw ShapeError("parameters: unflatten expects " + std::to_string(expected) + " values, got " +
                     std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (auto& s : segments_) {
    if (trainable_only && !s.trainable) continue;
    auto d = s.tensor.data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), d.size(), d.begin());
    offset += d.size();
  }
}

std::vector<double> ParameterVector::flatten_grads() const {
  std::vector<double> out;
  out.reserve(trainable_count());
  for (const auto& s : segments_) {
    if (!s.trainable) continue;
    if (!s.tensor.has_grad()) throw Error("parameters: segment '" + s.name + "' has no gradient");
    const auto g = s.tensor.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void ParameterVector::set_grads(const std::vector<double>& values) {
  if (values.size() != trainable_count()) throw ShapeError("parameters: gradient length mismatch");
  std::size_t offset = 0;
  for (auto& s : segments_) {
    if (!s.trainable) continue;
    auto g = s.tensor.grad();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), g.size(), g.begin());
    offset += g.size();
  }
}

void ParameterVector::zero_grads() {
  for (auto& s : segments_) {
    if (s.trainable) s.tensor.grad();  // materialize
    s.tensor.zero_grad();
  }
}

bool ParameterVector::grads_present() const {
  return std::all_of(segments_.begin(), segments_.end(),
                     [](const Segment& s) { return !s.trainable || s.tensor.has_grad(); });
}

void ParameterVector::copy_from(const ParameterVector& other) {
  if (other.segments_.size() != segments_.size()) throw ShapeError("parameters: segment count mismatch in copy");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& src = other.segments_[i];
    auto& dst = segments_[i];
    if (src.tensor.shape() != dst.tensor.shape()) {
      throw ShapeError("parameters: shape mismatch for segment '" + dst.name + "'");
    }
    auto d = dst.tensor.data();
    const auto s = src.tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace kwscl::ad
