#include "kwscl/autodiff/sgd.hpp"

#include "kwscl/common.hpp"

namespace kwscl::ad {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd.lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd.weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("sgd.batch_size must be >= 1");
}

Sgd::Sgd(SgdConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Sgd::step(ParameterVector& params) {
  auto& segs = params.segments();
  if (buffers_.empty()) buffers_.resize(segs.size());
  if (buffers_.size() != segs.size()) throw Error("sgd: parameter layout changed between steps");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto& seg = segs[i];
    if (!seg.trainable) continue;
    if (!seg.tensor.has_grad()) throw Error("sgd: missing gradient for '" + seg.name + "'");
    auto theta = seg.tensor.data();
    const auto grad = seg.tensor.grad();
    auto& buf = buffers_[i];
    const bool first = buf.empty();
    if (first) buf.resize(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j] + cfg_.weight_decay * theta[j];
      buf[j] = first ? g : cfg_.momentum * buf[j] + g;
      theta[j] -= cfg_.learning_rate * buf[j];
    }
    check_finite(theta, "sgd_step");
  }
}

}  // namespace kwscl::ad
