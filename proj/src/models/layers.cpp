#include "kwscl/models/layers.hpp"

#include <cmath>

namespace kwscl::models {

namespace {

Tensor kaiming_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor bias_uniform(std::size_t n, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor({n}, std::move(v), true);
}

}  // namespace

Conv1d::Conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), padding_(padding) {
  if (in == 0 || out == 0 || kernel == 0 || stride == 0) throw ShapeError("conv1d: dimensions must be positive");
  weight = kaiming_uniform({out, in, kernel}, in * kernel, rng);
  bias = bias_uniform(out, in * kernel, rng);
}

void Conv1d::collect(ParameterVector& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

BatchNorm1d::BatchNorm1d(std::size_t channels)
    : gamma({channels}, std::vector<double>(channels, 1.0), true),
      beta({channels}, true),
      running_mean({channels}),
      running_var({channels}, std::vector<double>(channels, 1.0)) {}

void BatchNorm1d::collect(ParameterVector& params, const std::string& prefix) const {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
  params.add(prefix + ".running_mean", running_mean, false);
  params.add(prefix + ".running_var", running_var, false);
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ShapeError("dense: dimensions must be positive");
  weight = kaiming_uniform({out, in}, in, rng);
  bias = bias_uniform(out, in, rng);
}

void Dense::collect(ParameterVector& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

ResidualBlock::ResidualBlock(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng)
    : conv_a(in, out, kernel, stride, kernel / 2, rng),
      bn_a(out),
      conv_b(out, out, kernel, 1, kernel / 2, rng),
      bn_b(out),
      shortcut(in, out, 1, stride, 0, rng),
      bn_shortcut(out) {}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  Tensor h = ad::relu(bn_a.forward(conv_a.forward(x), mode));
  h = bn_b.forward(conv_b.forward(h), mode);
  Tensor s = bn_shortcut.forward(shortcut.forward(x), mode);
  return ad::relu(ad::add(h, s));
}

void ResidualBlock::collect(ParameterVector& params, const std::string& prefix) const {
  conv_a.collect(params, prefix + ".conv_a");
  bn_a.collect(params, prefix + ".bn_a");
  conv_b.collect(params, prefix + ".conv_b");
  bn_b.collect(params, prefix + ".bn_b");
  shortcut.collect(params, prefix + ".shortcut");
  bn_shortcut.collect(params, prefix + ".bn_shortcut");
}

void ResidualBlock::describe(const std::string& prefix, std::size_t length, std::vector<LayerInfo>& rows) const {
  const std::size_t la = conv_a.output_length(length);
  const std::size_t lb = conv_b.output_length(la);
  const std::size_t ls = shortcut.output_length(length);
  const std::size_t c = out_channels();
  auto conv_kind = [](const Conv1d& conv) {
    return "conv1d k=" + std::to_string(conv.kernel()) + " s=" + std::to_string(conv.stride());
  };
  rows.push_back({prefix + ".conv_a", conv_kind(conv_a), {conv_a.out_channels(), la}, conv_a.param_count()});
  rows.push_back({prefix + ".bn_a", "batch_norm", {conv_a.out_channels(), la}, bn_a.param_count()});
  rows.push_back({prefix + ".conv_b", conv_kind(conv_b), {c, lb}, conv_b.param_count()});
  rows.push_back({prefix + ".bn_b", "batch_norm", {c, lb}, bn_b.param_count()});
  rows.push_back({prefix + ".shortcut", conv_kind(shortcut), {c, ls}, shortcut.param_count()});
  rows.push_back({prefix + ".bn_shortcut", "batch_norm", {c, ls}, bn_shortcut.param_count()});
}

std::size_t count_parameters(const Network& net) { return net.parameters().trainable_count(); }

}  // namespace kwscl::models
