#pragma once

#include <string>
#include <vector>

#include "kwscl/autodiff/ops.hpp"
#include "kwscl/autodiff/parameters.hpp"
#include "kwscl/common.hpp"

namespace kwscl::models {

using ad::Mode;
using ad::ParameterVector;
using ad::Tensor;

/// One row of a `describe` table.
struct LayerInfo {
  std::string name;
  std::string kind;
  ad::Shape output;  // per sample, batch axis omitted
  std::size_t params = 0;
};

/// Temporal convolution over [N, C, L]; Kaiming-uniform weights, bias on.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);

  Tensor forward(const Tensor& x) const { return ad::conv1d(x, weight, bias, stride_, padding_); }
  void collect(ParameterVector& params, const std::string& prefix) const;
  std::size_t output_length(std::size_t length) const { return (length + 2 * padding_ - kernel_) / stride_ + 1; }
  std::size_t param_count() const { return weight.size() + bias.size(); }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }

  Tensor weight;
  Tensor bias;

 private:
  std::size_t in_ = 0, out_ = 0, kernel_ = 0, stride_ = 1, padding_ = 0;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t channels);

  Tensor forward(const Tensor& x, Mode mode) {
    return ad::batch_norm(x, gamma, beta, running_mean, running_var, mode, opts);
  }
  void collect(ParameterVector& params, const std::string& prefix) const;
  std::size_t param_count() const { return gamma.size() + beta.size(); }

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  ad::BatchNormOptions opts;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& x) const { return ad::dense(x, weight, bias); }
  void collect(ParameterVector& params, const std::string& prefix) const;
  std::size_t param_count() const { return weight.size() + bias.size(); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor weight;
  Tensor bias;
};

/// conv(stride) -> BN -> ReLU -> conv -> BN, plus a 1x1 conv + BN shortcut,
/// summed and passed through ReLU.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  void collect(ParameterVector& params, const std::string& prefix) const;
  void describe(const std::string& prefix, std::size_t length, std::vector<LayerInfo>& rows) const;
  std::size_t output_length(std::size_t length) const { return conv_b.output_length(conv_a.output_length(length)); }
  std::size_t out_channels() const { return conv_b.out_channels(); }

  Conv1d conv_a;
  BatchNorm1d bn_a;
  Conv1d conv_b;
  BatchNorm1d bn_b;
  Conv1d shortcut;
  BatchNorm1d bn_shortcut;
};

/// A trainable classifier over [N, C, L] inputs.
class Network {
 public:
  virtual ~Network() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  /// Trainable segments plus batch-norm running statistics.
  virtual ParameterVector parameters() const = 0;
  virtual std::vector<LayerInfo> describe() const = 0;
  virtual std::size_t num_outputs() const = 0;
};

/// Exact trainable-parameter count; running statistics are excluded.
std::size_t count_parameters(const Network& net);

}  // namespace kwscl::models
