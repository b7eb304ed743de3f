#include "kwscl/models/tcresnet.hpp"

namespace kwscl::models {

void TcResNet8Spec::validate() const {
  if (channels.size() < 2) throw ShapeError("tcresnet: need a first-conv width and at least one block");
  for (auto c : channels) {
    if (c == 0) throw ShapeError("tcresnet: channel counts must be positive");
  }
  if (n_classes < 2) throw ConfigError("tcresnet: n_classes must be >= 2, got " + std::to_string(n_classes));
  if (input_channels == 0 || input_length == 0) throw ShapeError("tcresnet: invalid input dims");
  if (first_kernel == 0 || kernel == 0 || block_stride == 0) throw ShapeError("tcresnet: invalid kernel/stride");
}

TcResNet8::TcResNet8(const TcResNet8Spec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  conv0_ = Conv1d(spec_.input_channels, spec_.channels[0], spec_.first_kernel, 1, spec_.first_kernel / 2, rng);
  bn0_ = BatchNorm1d(spec_.channels[0]);
  for (std::size_t b = 0; b < spec_.n_blocks(); ++b) {
    blocks_.emplace_back(spec_.channels[b], spec_.channels[b + 1], spec_.kernel, spec_.block_stride, rng);
  }
  head_ = Dense(spec_.channels.back(), spec_.n_classes, rng);
}

Tensor TcResNet8::encode(const Tensor& x, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != spec_.input_channels) {
    throw ShapeError("tcresnet: expected input [N, " + std::to_string(spec_.input_channels) + ", L], got " +
                     ad::shape_string(x.shape()));
  }
  Tensor h = ad::relu(bn0_.forward(conv0_.forward(x), mode));
  return blocks_[0].forward(h, mode);
}

Tensor TcResNet8::decode(const Tensor& h, Mode mode) {
  Tensor z = h;
  for (std::size_t b = 1; b < blocks_.size(); ++b) z = blocks_[b].forward(z, mode);
  return head_.forward(ad::global_avg_pool(z));
}

ParameterVector TcResNet8::encoder_parameters() const {
  ParameterVector p;
  conv0_.collect(p, "conv0");
  bn0_.collect(p, "bn0");
  blocks_[0].collect(p, "block1");
  return p;
}

ParameterVector TcResNet8::decoder_parameters() const {
  ParameterVector p;
  for (std::size_t b = 1; b < blocks_.size(); ++b) blocks_[b].collect(p, "block" + std::to_string(b + 1));
  head_.collect(p, "head");
  return p;
}

ParameterVector TcResNet8::parameters() const {
  ParameterVector p = encoder_parameters();
  p.append(decoder_parameters());
  return p;
}

std::size_t TcResNet8::encoder_length() const {
  return blocks_[0].output_length(conv0_.output_length(spec_.input_length));
}

std::vector<LayerInfo> TcResNet8::describe() const {
  std::vector<LayerInfo> rows;
  std::size_t len = conv0_.output_length(spec_.input_length);
  rows.push_back({"conv0", "conv1d k=" + std::to_string(conv0_.kernel()) + " s=1", {spec_.channels[0], len},
                  conv0_.param_count()});
  rows.push_back({"bn0", "batch_norm", {spec_.channels[0], len}, bn0_.param_count()});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].describe("block" + std::to_string(b + 1), len, rows);
    len = blocks_[b].output_length(len);
  }
  rows.push_back({"pool", "global_avg_pool", {spec_.channels.back()}, 0});
  rows.push_back({"head", "dense", {spec_.n_classes}, head_.param_count()});
  return rows;
}

std::unique_ptr<TcResNet8> TcResNet8::clone() const {
  auto copy = std::make_unique<TcResNet8>(spec_, 0);
  auto dst = copy->parameters();
  dst.copy_from(parameters());
  return copy;
}

std::unique_ptr<TcResNet8> TcResNet8::with_new_head(std::size_t n_classes, std::uint64_t seed) const {
  TcResNet8Spec s = spec_;
  s.n_classes = n_classes;
  auto copy = std::make_unique<TcResNet8>(s, seed);
  auto dst = copy->encoder_parameters();
  dst.copy_from(encoder_parameters());
  for (std::size_t b = 1; b < blocks_.size(); ++b) {
    ParameterVector from, to;
    blocks_[b].collect(from, "b");
    copy->blocks_[b].collect(to, "b");
    to.copy_from(from);
  }
  return copy;
}

}  // namespace kwscl::models
