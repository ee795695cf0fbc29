#include "tgx/encoder.hpp"

#include <algorithm>

namespace tgx {

void EncoderConfig::validate() const {
  if (in_channels == 0) throw std::invalid_argument("encoder: in_channels must be positive");
  if (channels.empty()) throw std::invalid_argument("encoder: at least one block is required");
  if (std::find(channels.begin(), channels.end(), 0u) != channels.end()) {
    throw std::invalid_argument("encoder: block channel counts must be positive");
  }
  if (use_preencoder && pre_channels == 0) {
    throw std::invalid_argument("encoder: pre_channels must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("encoder: dropout_rate must be in [0, 1)");
  }
  if (pool_min_spatial < 1) throw std::invalid_argument("encoder: pool_min_spatial must be >= 1");
}

template <typename T>
Tensor<T> safe_max_pool(const Tensor<T>& x, std::size_t min_spatial) {
  if (min_spatial < 1) throw std::invalid_argument("safe_max_pool: min_spatial must be >= 1");
  const Shape& s = x.shape();
  if (std::min(s[2], s[3]) > min_spatial) return max_pool2d(x, 2, 2);
  return x;
}

std::size_t effective_receptive_field(std::size_t r, std::size_t layers) {
  if (r < 1 || layers < 1) throw std::invalid_argument("effective_receptive_field: r, L >= 1");
  return r + (layers - 1) * (r - 1);
}

std::pair<std::size_t, std::size_t> encoder_output_spatial(std::size_t h, std::size_t w,
                                                           const EncoderConfig& config) {
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    if (std::min(h, w) > config.pool_min_spatial) {
      h /= 2;
      w /= 2;
    }
  }
  return {h, w};
}

template <typename T>
ResidualBlock<T>::ResidualBlock(ParameterSet<T>& params, const std::string& name,
                                std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : conv1_(params, name + ".conv1", in_channels, out_channels, 3, 1, false, rng),
      conv2_(params, name + ".conv2", out_channels, out_channels, 3, 1, false, rng),
      bn1_(params, name + ".bn1", out_channels),
      bn2_(params, name + ".bn2", out_channels),
      has_projection_(in_channels != out_channels) {
  if (has_projection_) {
    projection_ = Conv2d<T>(params, name + ".projection", in_channels, out_channels, 1, 0, false, rng);
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) const {
  Tensor<T> h = relu(bn1_.forward(conv1_.forward(x, ctx), ctx));
  h = bn2_.forward(conv2_.forward(h, ctx), ctx);
  const Tensor<T> skip = has_projection_ ? projection_.forward(x, ctx) : x;
  return relu(add(h, skip));
}

template <typename T>
PreEncoder<T>::PreEncoder(ParameterSet<T>& params, const std::string& name,
                          const EncoderConfig& config, Rng& rng)
    : enabled_(config.use_preencoder), in_channels_(config.in_channels) {
  if (enabled_) {
    conv_ = Conv2d<T>(params, name + ".conv", config.in_channels, config.pre_channels, 3, 1, false, rng);
    bn_ = BatchNorm2d<T>(params, name + ".bn", config.pre_channels);
  }
}

template <typename T>
Tensor<T> PreEncoder<T>::forward(const Tensor<T>& patches, const ForwardContext& ctx) const {
  if (patches.dim(1) != in_channels_) {
    throw ShapeError("pre_encode: expected " + std::to_string(in_channels_) + " channels, got " +
                     std::to_string(patches.dim(1)));
  }
  if (!enabled_) return patches;
  return relu(bn_.forward(conv_.forward(patches, ctx), ctx));
}

template <typename T>
CnnEncoder<T>::CnnEncoder(ParameterSet<T>& params, const std::string& name,
                          const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config.validate();
  std::size_t in = config.encoder_input_channels();
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    blocks_.emplace_back(params, name + ".block" + std::to_string(b), in, config.channels[b], rng);
    dropouts_.emplace_back(config.dropout_rate, params.next_layer_id());
    in = config.channels[b];
  }
}

template <typename T>
Tensor<T> CnnEncoder<T>::forward(const Tensor<T>& features, const ForwardContext& ctx) const {
  const Shape& s = features.shape();
  if (s[2] == 0 || s[3] == 0) throw ShapeError("encode: empty spatial dims");
  Tensor<T> x = features;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = blocks_[b].forward(x, ctx);
    x = safe_max_pool(x, config_.pool_min_spatial);
    x = dropouts_[b].forward(x, ctx);
  }
  return x;
}

template Tensor<float> safe_max_pool(const Tensor<float>&, std::size_t);
template Tensor<double> safe_max_pool(const Tensor<double>&, std::size_t);
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class PreEncoder<float>;
template class PreEncoder<double>;
template class CnnEncoder<float>;
template class CnnEncoder<double>;

}  // namespace tgx
