#pragma once

#include <span>

#include "kwscl/autodiff/tensor.hpp"

namespace kwscl::ad {

/// Forward-pass mode. Batch norm normalizes with batch statistics while
/// training and with running statistics otherwise; running statistics are
/// only updated when both flags are set.
struct Mode {
  bool training = true;
  bool update_stats = true;

  static Mode train() { return {true, true}; }
  static Mode train_frozen_stats() { return {true, false}; }
  static Mode eval() { return {false, false}; }
};

/// Half-open range of logit columns a sample is scored against.
struct ClassRange {
  int begin = 0;
  int end = 0;
};

// x: [N, Cin, L], weight: [Cout, Cin, K], bias: [Cout] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding);

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// x: [N, C] or [N, C, L]; statistics per channel over every other axis.
// running_mean / running_var are updated in place (unbiased variance).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, const BatchNormOptions& opts = {});

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);

// [N, C, L] -> [N, C]
Tensor global_avg_pool(const Tensor& x);

// x: [N, in], weight: [out, in], bias: [out] or undefined.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Mean cross-entropy. `labels` index logit columns; with `ranges`, sample i
/// is normalized over columns [ranges[i].begin, ranges[i].end) only.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             std::span<const ClassRange> ranges = {});

}  // namespace kwscl::ad
