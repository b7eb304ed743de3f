#pragma once

#include <cstdint>
#include <vector>

#include "kwscl/autodiff/parameters.hpp"

namespace kwscl::ad {

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 15;
  std::uint64_t seed = 0;

  void validate() const;
};

/// SGD with heavy-ball momentum: buf = m*buf + g (buf = g on the first
/// step), theta -= lr * buf. Buffers are keyed by segment position.
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg);

  void step(ParameterVector& params);
  void reset() { buffers_.clear(); }
  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace kwscl::ad
