#include "kwscl/models/subnet.hpp"

#include <cmath>
#include <sstream>

namespace kwscl::models {

void ScalingConfig::validate() const {
  if (!(mu > 0.0)) throw ConfigError("pcl.mu must be > 0");
  if (pretrain_keywords == 0) throw ConfigError("scaling: C_0 must be >= 1");
}

double width_multiplier(std::size_t task_keywords, const ScalingConfig& cfg) {
  cfg.validate();
  if (task_keywords == 0) throw ConfigError("width_multiplier: C_t must be >= 1");
  return cfg.mu * static_cast<double>(task_keywords) / static_cast<double>(cfg.pretrain_keywords);
}

std::size_t scale_channels(std::size_t base, double alpha, bool* clamped) {
  if (!(alpha > 0.0)) throw ConfigError("scale_channels: alpha must be > 0");
  // The 1e-9 nudge keeps exact halves (2.5 -> 3) from rounding down on representation error.
  const double rounded = std::floor(alpha * static_cast<double>(base) + 0.5 + 1e-9);
  const bool clamp = rounded < 1.0;
  if (clamped) *clamped = clamp;
  return clamp ? 1 : static_cast<std::size_t>(rounded);
}

std::vector<std::size_t> SubNetSpec::scaled_channels() const {
  std::vector<std::size_t> out;
  for (auto c : base_channels) out.push_back(scale_channels(c, alpha));
  return out;
}

SubNet::SubNet(const SubNetSpec& spec, std::uint64_t seed) : spec_(spec), channels_(spec.scaled_channels()) {
  if (channels_.size() != 2) throw ShapeError("subnet: expects exactly two channel entries");
  if (spec_.n_classes < 1) throw ShapeError("subnet: needs at least one keyword");
  Rng rng(seed);
  // Widths {c1, c2}: conv_a maps to c1, conv_b to c2, the shortcut straight to c2.
  block_.conv_a = Conv1d(spec_.in_channels, channels_[0], spec_.kernel, spec_.stride, spec_.kernel / 2, rng);
  block_.bn_a = BatchNorm1d(channels_[0]);
  block_.conv_b = Conv1d(channels_[0], channels_[1], spec_.kernel, 1, spec_.kernel / 2, rng);
  block_.bn_b = BatchNorm1d(channels_[1]);
  block_.shortcut = Conv1d(spec_.in_channels, channels_[1], 1, spec_.stride, 0, rng);
  block_.bn_shortcut = BatchNorm1d(channels_[1]);
  head_ = Dense(channels_[1], spec_.n_classes, rng);
}

Tensor SubNet::forward(const Tensor& h, Mode mode) {
  if (h.rank() != 3 || h.dim(1) != spec_.in_channels) {
    throw ShapeError("subnet: expected encoder output [N, " + std::to_string(spec_.in_channels) + ", L], got " +
                     ad::shape_string(h.shape()));
  }
  return head_.forward(ad::global_avg_pool(block_.forward(h, mode)));
}

ParameterVector SubNet::parameters() const {
  ParameterVector p;
  block_.collect(p, "block");
  head_.collect(p, "head");
  return p;
}

std::vector<LayerInfo> SubNet::describe() const {
  std::vector<LayerInfo> rows;
  block_.describe("block", spec_.input_length, rows);
  rows.push_back({"pool", "global_avg_pool", {channels_[1]}, 0});
  rows.push_back({"head", "dense", {spec_.n_classes}, head_.param_count()});
  return rows;
}

InstantiatedSubNet instantiate_subnet(std::size_t task_keywords, const ScalingConfig& cfg, bool fixed,
                                      std::size_t in_channels, std::size_t input_length, std::uint64_t seed) {
  if (task_keywords == 0) throw ConfigError("instantiate_subnet: task has no keywords");
  InstantiatedSubNet out;
  out.spec.n_classes = task_keywords;
  out.spec.in_channels = in_channels;
  out.spec.input_length = input_length;
  out.spec.alpha = fixed ? 1.0 : width_multiplier(task_keywords, cfg);
  for (auto base : out.spec.base_channels) {
    bool clamped = false;
    scale_channels(base, out.spec.alpha, &clamped);
    if (clamped) {
      std::ostringstream msg;
      msg << "width multiplier " << out.spec.alpha << " collapses a " << base << "-channel layer; clamped to 1";
      out.warnings.push_back(msg.str());
      warn(msg.str());
    }
  }
  out.net = std::make_unique<SubNet>(out.spec, seed);
  return out;
}

}  // namespace kwscl::models
