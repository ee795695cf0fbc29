#include "tgx/message_passing.hpp"

namespace tgx {

Aggregation parse_aggregation(const std::string& text) {
  if (text == "sum") return Aggregation::Sum;
  if (text == "mean") return Aggregation::Mean;
  throw std::invalid_argument("unknown aggregation: " + text);
}

std::string to_string(Aggregation aggregation) {
  return aggregation == Aggregation::Sum ? "sum" : "mean";
}

template <typename T>
Tensor<T> spatialize_edge_features(std::span<const float> features, std::size_t h, std::size_t w) {
  if (features.empty()) throw std::invalid_argument("spatialize_edge_features: empty feature vector");
  std::vector<T> data;
  data.reserve(features.size() * h * w);
  for (const float f : features) data.insert(data.end(), h * w, static_cast<T>(f));
  return Tensor<T>::from(Shape{1, features.size(), h, w}, std::move(data));
}

template <typename T>
Tensor<T> spatialize_batch_edge_features(const GraphBatch& batch, std::size_t h, std::size_t w) {
  const std::size_t f = batch.edge_feature_dim;
  std::vector<T> data;
  data.reserve(batch.num_edges() * f * h * w);
  for (const float v : batch.edge_features) data.insert(data.end(), h * w, static_cast<T>(v));
  return Tensor<T>::from(Shape{batch.num_edges(), f, h, w}, std::move(data));
}

template <typename T>
ConvMessagePassing<T>::ConvMessagePassing(ParameterSet<T>& params, const std::string& name,
                                          std::size_t in_channels, std::size_t out_channels,
                                          std::size_t edge_feature_dim, Rng& rng)
    : conv_(params, name + ".conv1x1", 2 * in_channels + edge_feature_dim, out_channels, 1, 0, true,
            rng),
      in_channels_(in_channels),
      edge_feature_dim_(edge_feature_dim) {}

template <typename T>
Tensor<T> ConvMessagePassing<T>::forward(const Tensor<T>& x, const GraphBatch& batch,
                                         const ForwardContext& ctx) const {
  const Shape& s = x.shape();
  if (s[0] != batch.num_nodes()) {
    throw ShapeError("compute_messages: node tensor has " + std::to_string(s[0]) +
                     " rows but the batch has " + std::to_string(batch.num_nodes()) + " nodes");
  }
  if (s[1] != in_channels_) {
    throw ShapeError("compute_messages: expected " + std::to_string(in_channels_) +
                     " node channels, got " + std::to_string(s[1]));
  }
  if (batch.edge_feature_dim != edge_feature_dim_) {
    throw ShapeError("compute_messages: layer expects " + std::to_string(edge_feature_dim_) +
                     " edge feature channels, batch provides " +
                     std::to_string(batch.edge_feature_dim));
  }
  const auto src = batch.sources();
  const auto dst = batch.destinations();
  std::vector<Tensor<T>> parts{gather_rows(x, std::span<const std::size_t>(src)),
                               gather_rows(x, std::span<const std::size_t>(dst))};
  if (edge_feature_dim_ > 0) parts.push_back(spatialize_batch_edge_features<T>(batch, s[2], s[3]));
  return conv_.forward(concat_channels(std::span<const Tensor<T>>(parts)), ctx);
}

template <typename T>
Tensor<T> aggregate_messages(const Tensor<T>& messages, const GraphBatch& batch,
                             Aggregation aggregation) {
  if (messages.dim(0) != batch.num_edges()) {
    throw ShapeError("aggregate: messages not aligned with the edge list");
  }
  const auto dst = batch.destinations();
  Tensor<T> summed = scatter_add_rows(messages, std::span<const std::size_t>(dst), batch.num_nodes());
  if (aggregation == Aggregation::Sum) return summed;
  std::vector<T> inv_degree(batch.num_nodes(), T(0));
  for (const std::size_t d : dst) inv_degree[d] += T(1);
  for (auto& v : inv_degree) v = v > T(0) ? T(1) / v : T(0);
  return scale_rows(summed, std::span<const T>(inv_degree));
}

template <typename T>
DeepCnnAggregator<T>::DeepCnnAggregator(ParameterSet<T>& params, const std::string& name,
                                        std::size_t channels, std::size_t depth,
                                        double dropout_rate, bool zero_init_last, Rng& rng)
    : channels_(channels) {
  if (depth < 1) throw std::invalid_argument("aggregator depth must be >= 1");
  for (std::size_t k = 0; k < depth; ++k) {
    const std::string stage = name + ".stage" + std::to_string(k);
    convs_.emplace_back(params, stage + ".conv", channels, channels, 3, 1, false, rng);
    bns_.emplace_back(params, stage + ".bn", channels);
    dropouts_.emplace_back(dropout_rate, params.next_layer_id());
  }
  if (zero_init_last) convs_.back().zero_init();
}

template <typename T>
Tensor<T> DeepCnnAggregator<T>::forward(const Tensor<T>& m, const ForwardContext& ctx) const {
  if (m.dim(1) != channels_) {
    throw ShapeError("aggregator: expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(m.dim(1)));
  }
  Tensor<T> h = m;
  for (std::size_t k = 0; k < convs_.size(); ++k) {
    h = bns_[k].forward(convs_[k].forward(h, ctx), ctx);
    h = relu(dropouts_[k].forward(h, ctx));
  }
  return h;
}

template <typename T>
GnnLayer<T>::GnnLayer(ParameterSet<T>& params, const std::string& name,
                      const GnnLayerConfig& config, Rng& rng)
    : config_(config),
      message_(params, name + ".message", config.in_channels, config.out_channels,
               config.edge_feature_dim, rng),
      aggregator_(params, name + ".aggregator", config.out_channels, config.aggregator_depth,
                  config.dropout_rate, config.zero_init_last, rng),
      has_projection_(config.in_channels != config.out_channels) {
  if (has_projection_) {
    projection_ = Conv2d<T>(params, name + ".projection", config.in_channels, config.out_channels,
                            1, 0, false, rng);
  }
}

template <typename T>
Tensor<T> GnnLayer<T>::forward(const Tensor<T>& x, const GraphBatch& batch,
                               const ForwardContext& ctx) const {
  const Tensor<T> messages = message_.forward(x, batch, ctx);
  const Tensor<T> m = aggregate_messages(messages, batch, config_.aggregation);
  const Tensor<T> update = aggregator_.forward(m, ctx);
  const Tensor<T> skip = has_projection_ ? projection_.forward(x, ctx) : x;
  if (skip.shape() != update.shape()) {
    throw ShapeError("gnn layer: residual shapes disagree " + to_string(skip.shape()) + " vs " +
                     to_string(update.shape()));
  }
  return add(skip, update);
}

#define TGX_INSTANTIATE_MP(T)                                                                   \
  template Tensor<T> spatialize_edge_features<T>(std::span<const float>, std::size_t,           \
                                                 std::size_t);                                  \
  template Tensor<T> spatialize_batch_edge_features<T>(const GraphBatch&, std::size_t,          \
                                                       std::size_t);                            \
  template Tensor<T> aggregate_messages(const Tensor<T>&, const GraphBatch&, Aggregation);      \
  template class ConvMessagePassing<T>;                                                         \
  template class DeepCnnAggregator<T>;                                                          \
  template class GnnLayer<T>;

TGX_INSTANTIATE_MP(float)
TGX_INSTANTIATE_MP(double)

#undef TGX_INSTANTIATE_MP

}  // namespace tgx
