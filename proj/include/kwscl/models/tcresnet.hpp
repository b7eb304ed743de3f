#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "kwscl/models/layers.hpp"

namespace kwscl::models {

struct TcResNet8Spec {
  std::vector<std::size_t> channels{16, 24, 32, 48};  // first conv, then one entry per block
  std::size_t n_classes = 15;
  std::size_t input_channels = 40;  // MFCC coefficients
  std::size_t input_length = 98;    // frames
  std::size_t first_kernel = 9;
  std::size_t kernel = 3;
  std::size_t block_stride = 2;

  std::size_t n_blocks() const { return channels.size() - 1; }
  void validate() const;
};

/// Temporal-convolution ResNet: conv -> BN -> ReLU, then residual blocks,
/// global average pooling and a dense head. The first conv and first block
/// form the encoder that PCL shares across tasks.
class TcResNet8 final : public Network {
 public:
  TcResNet8(const TcResNet8Spec& spec, std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode) override { return decode(encode(x, mode), mode); }
  /// [N, input_channels, L] -> [N, channels[1], L'].
  Tensor encode(const Tensor& x, Mode mode);
  /// Encoder output -> logits.
  Tensor decode(const Tensor& h, Mode mode);

  ParameterVector parameters() const override;
  ParameterVector encoder_parameters() const;
  ParameterVector decoder_parameters() const;
  std::vector<LayerInfo> describe() const override;
  std::size_t num_outputs() const override { return spec_.n_classes; }

  const TcResNet8Spec& spec() const { return spec_; }
  std::size_t encoder_channels() const { return spec_.channels[1]; }
  std::size_t encoder_length() const;

  /// Deep copy, including running statistics.
  std::unique_ptr<TcResNet8> clone() const;
  /// Deep copy of everything but the head, which is re-initialized for `n_classes`.
  std::unique_ptr<TcResNet8> with_new_head(std::size_t n_classes, std::uint64_t seed) const;

 private:
  TcResNet8Spec spec_;
  Conv1d conv0_;
  BatchNorm1d bn0_;
  std::vector<ResidualBlock> blocks_;
  Dense head_;
};

}  // namespace kwscl::models
