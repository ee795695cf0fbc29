#pragma once

#include <span>
#include <string>
#include <vector>

#include "tgx/graph.hpp"
#include "tgx/layers.hpp"

namespace tgx {

enum class Aggregation { Sum, Mean };

Aggregation parse_aggregation(const std::string& text);
std::string to_string(Aggregation aggregation);

// Broadcasts each scalar of an edge-feature vector to a constant h x w
// channel; result is [1, F, h, w].
template <typename T>
Tensor<T> spatialize_edge_features(std::span<const float> features, std::size_t h, std::size_t w);

// All edges of a batch at once: [E, F, h, w].
template <typename T>
Tensor<T> spatialize_batch_edge_features(const GraphBatch& batch, std::size_t h, std::size_t w);

// M_ij = Conv1x1(Concat(X_i, X_j, E_ij)) for every edge (i, j), computed as a
// single batched 1x1 convolution over the gathered edge tensor.
template <typename T>
class ConvMessagePassing {
 public:
  ConvMessagePassing() = default;
  ConvMessagePassing(ParameterSet<T>& params, const std::string& name, std::size_t in_channels,
                     std::size_t out_channels, std::size_t edge_feature_dim, Rng& rng);

  // x: [sum N, C_in, H, W] -> messages [E, C_out, H, W], aligned with batch.edges.
  Tensor<T> forward(const Tensor<T>& x, const GraphBatch& batch, const ForwardContext& ctx) const;

  Conv2d<T>& conv() { return conv_; }
  const Conv2d<T>& conv() const { return conv_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t edge_feature_dim() const { return edge_feature_dim_; }

 private:
  Conv2d<T> conv_;
  std::size_t in_channels_ = 0;
  std::size_t edge_feature_dim_ = 0;
};

template <typename T>
Tensor<T> compute_messages(const Tensor<T>& x, const GraphBatch& batch,
                           const ConvMessagePassing<T>& layer, const ForwardContext& ctx) {
  return layer.forward(x, batch, ctx);
}

// m_j = sum of M_ij over in-edges of j; isolated nodes get zeros. The mean
// variant divides by in-degree instead.
template <typename T>
Tensor<T> aggregate_messages(const Tensor<T>& messages, const GraphBatch& batch,
                             Aggregation aggregation = Aggregation::Sum);

template <typename T>
Tensor<T> aggregate_sum(const Tensor<T>& messages, const GraphBatch& batch) {
  return aggregate_messages(messages, batch, Aggregation::Sum);
}

// K stages of 3x3 conv (padding 1), batch norm over the node axis, dropout and
// ReLU. The final conv can start at zero so a fresh layer is the identity.
template <typename T>
class DeepCnnAggregator {
 public:
  DeepCnnAggregator() = default;
  DeepCnnAggregator(ParameterSet<T>& params, const std::string& name, std::size_t channels,
                    std::size_t depth, double dropout_rate, bool zero_init_last, Rng& rng);

  Tensor<T> forward(const Tensor<T>& m, const ForwardContext& ctx) const;

  std::size_t depth() const { return convs_.size(); }
  Conv2d<T>& conv(std::size_t stage) { return convs_.at(stage); }
  BatchNorm2d<T>& bn(std::size_t stage) { return bns_.at(stage); }

 private:
  std::size_t channels_ = 0;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> bns_;
  std::vector<Dropout> dropouts_;
};

struct GnnLayerConfig {
  std::size_t in_channels = 16;
  std::size_t out_channels = 16;
  std::size_t edge_feature_dim = 0;
  std::size_t aggregator_depth = 1;
  double dropout_rate = 0.0;
  bool zero_init_last = true;
  Aggregation aggregation = Aggregation::Sum;
};

// X'_j = X_j + A(m_j). When in and out channels differ, X_j passes through a
// 1x1 projection before the residual add.
template <typename T>
class GnnLayer {
 public:
  GnnLayer() = default;
  GnnLayer(ParameterSet<T>& params, const std::string& name, const GnnLayerConfig& config, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, const GraphBatch& batch, const ForwardContext& ctx) const;

  ConvMessagePassing<T>& message() { return message_; }
  DeepCnnAggregator<T>& aggregator() { return aggregator_; }
  const GnnLayerConfig& config() const { return config_; }

 private:
  GnnLayerConfig config_;
  ConvMessagePassing<T> message_;
  DeepCnnAggregator<T> aggregator_;
  Conv2d<T> projection_;
  bool has_projection_ = false;
};

template <typename T>
Tensor<T> gnn_layer_forward(const Tensor<T>& x, const GraphBatch& batch, const GnnLayer<T>& layer,
                            const ForwardContext& ctx) {
  return layer.forward(x, batch, ctx);
}

}  // namespace tgx
