#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tgx/layers.hpp"

namespace tgx {

struct EncoderConfig {
  std::size_t in_channels = 3;
  bool use_preencoder = false;
  std::size_t pre_channels = 8;
  std::vector<std::size_t> channels{16};  // one entry per residual block
  double dropout_rate = 0.3;
  std::size_t pool_min_spatial = 2;

  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kPadding = 1;

  std::size_t blocks() const { return channels.size(); }
  std::size_t encoder_input_channels() const { return use_preencoder ? pre_channels : in_channels; }
  std::size_t output_channels() const { return channels.back(); }
  void validate() const;
};

// 2x2 stride-2 max pool when min(h, w) > min_spatial, identity otherwise.
template <typename T>
Tensor<T> safe_max_pool(const Tensor<T>& x, std::size_t min_spatial);

// r + (L - 1)(r - 1) for L stacked r x r convolutions.
std::size_t effective_receptive_field(std::size_t r, std::size_t layers);

// (H2, W2) produced by the encoder for an (h, w) input.
std::pair<std::size_t, std::size_t> encoder_output_spatial(std::size_t h, std::size_t w,
                                                           const EncoderConfig& config);

// conv-BN-ReLU-conv-BN, plus the skip path (1x1 projection when channel counts
// differ), followed by a final ReLU.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet<T>& params, const std::string& name, std::size_t in_channels,
                std::size_t out_channels, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) const;

  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  BatchNorm2d<T>& bn1() { return bn1_; }
  BatchNorm2d<T>& bn2() { return bn2_; }
  bool has_projection() const { return has_projection_; }

 private:
  Conv2d<T> conv1_, conv2_, projection_;
  BatchNorm2d<T> bn1_, bn2_;
  bool has_projection_ = false;
};

// Optional conv-BN-ReLU stage in front of the encoder; identity when disabled.
template <typename T>
class PreEncoder {
 public:
  PreEncoder() = default;
  PreEncoder(ParameterSet<T>& params, const std::string& name, const EncoderConfig& config,
             Rng& rng);

  Tensor<T> forward(const Tensor<T>& patches, const ForwardContext& ctx) const;

  bool enabled() const { return enabled_; }
  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  bool enabled_ = false;
  std::size_t in_channels_ = 0;
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

// L residual blocks, each followed by SafeMaxPool and dropout.
template <typename T>
class CnnEncoder {
 public:
  CnnEncoder() = default;
  CnnEncoder(ParameterSet<T>& params, const std::string& name, const EncoderConfig& config,
             Rng& rng);

  Tensor<T> forward(const Tensor<T>& features, const ForwardContext& ctx) const;

  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }

 private:
  EncoderConfig config_;
  std::vector<ResidualBlock<T>> blocks_;
  std::vector<Dropout> dropouts_;
};

}  // namespace tgx
