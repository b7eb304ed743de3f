#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kwscl/models/layers.hpp"

namespace kwscl::models {

/// Keyword-aware width scaling: alpha = mu * C_t / C_0.
struct ScalingConfig {
  double mu = 1.0;
  std::size_t pretrain_keywords = 15;  // C_0

  void validate() const;
};

double width_multiplier(std::size_t task_keywords, const ScalingConfig& cfg);

/// round-half-up(alpha * base), clamped to at least 1. Sets `clamped` when the clamp fired.
std::size_t scale_channels(std::size_t base, double alpha, bool* clamped = nullptr);

struct SubNetSpec {
  std::vector<std::size_t> base_channels{16, 48};
  double alpha = 1.0;
  std::size_t n_classes = 3;
  std::size_t in_channels = 24;  // encoder output width
  std::size_t input_length = 49;
  std::size_t kernel = 3;
  std::size_t stride = 2;

  std::vector<std::size_t> scaled_channels() const;
};

/// Single-head classifier stacked on the shared encoder: one residual block
/// with widths {c1, c2}, global pooling and a dense head over the task's keywords.
class SubNet final : public Network {
 public:
  SubNet(const SubNetSpec& spec, std::uint64_t seed);

  Tensor forward(const Tensor& h, Mode mode) override;
  ParameterVector parameters() const override;
  std::vector<LayerInfo> describe() const override;
  std::size_t num_outputs() const override { return spec_.n_classes; }
  const SubNetSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& channels() const { return channels_; }

 private:
  SubNetSpec spec_;
  std::vector<std::size_t> channels_;
  ResidualBlock block_;
  Dense head_;
};

struct InstantiatedSubNet {
  SubNetSpec spec;
  std::unique_ptr<SubNet> net;
  std::vector<std::string> warnings;
};

/// Network instantiator. `fixed` disables keyword-aware scaling (alpha = 1).
InstantiatedSubNet instantiate_subnet(std::size_t task_keywords, const ScalingConfig& cfg, bool fixed,
                                      std::size_t in_channels, std::size_t input_length, std::uint64_t seed);

}  // namespace kwscl::models
