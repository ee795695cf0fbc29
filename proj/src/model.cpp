#include "tgx/model.hpp"

namespace tgx {

namespace {

template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  const std::string prefix = std::string("model_forward[") + stage + "]: ";
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(prefix + e.what());
  } catch (const std::logic_error& e) {
    throw std::logic_error(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

template <typename T>
Tensor<T> select_class_logits(const Tensor<T>& node_logits, const GraphBatch& batch,
                              std::size_t classes) {
  if (batch.node_labels.size() != batch.num_nodes()) {
    throw std::invalid_argument("select readout needs node_labels naming each node's class");
  }
  const std::size_t flat = batch.num_nodes() * classes;
  // Row `flat` of the gathered source holds the constant for absent classes.
  std::vector<std::size_t> index(batch.num_graphs() * classes, flat);
  for (std::size_t n = 0; n < batch.num_nodes(); ++n) {
    const int c = batch.node_labels[n];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) {
      throw std::invalid_argument("node label " + std::to_string(c) + " outside the class range");
    }
    std::size_t& slot = index[batch.graph_ids[n] * classes + static_cast<std::size_t>(c)];
    if (slot != flat) throw std::invalid_argument("select readout: two nodes share a class in one graph");
    slot = n * classes + static_cast<std::size_t>(c);
  }
  const Tensor<T> absent = Tensor<T>::full(Shape{1, 1, 1, 1}, static_cast<T>(kAbsentClassLogit));
  const std::vector<Tensor<T>> parts{reshape(node_logits, Shape{1, flat, 1, 1}), absent};
  const Tensor<T> source = reshape(concat_channels(std::span<const Tensor<T>>(parts)),
                                   Shape{flat + 1, 1, 1, 1});
  return reshape(gather_rows(source, std::span<const std::size_t>(index)),
                 Shape{batch.num_graphs(), classes, 1, 1});
}

}  // namespace

template <typename T>
TGraphXModel<T>::TGraphXModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 0x3d1ULL, 0, 0));
  pre_ = PreEncoder<T>(params_, "preencoder", config_.encoder, rng);
  encoder_ = CnnEncoder<T>(params_, "encoder", config_.encoder, rng);
  std::size_t in = config_.encoder.output_channels();
  const std::size_t width = config_.resolved_gnn_channels();
  for (std::size_t l = 0; l < config_.gnn_layers; ++l) {
    GnnLayerConfig lc;
    lc.in_channels = in;
    lc.out_channels = width;
    lc.edge_feature_dim = config_.edge_feature_dim;
    lc.aggregator_depth = config_.aggregator_depth;
    lc.dropout_rate = config_.gnn_dropout;
    lc.zero_init_last = config_.zero_init_last;
    lc.aggregation = config_.aggregation;
    gnn_.emplace_back(params_, "gnn" + std::to_string(l), lc, rng);
    in = width;
  }
  head_ = ClassifierHead<T>(params_, "head", width, config_.classes, rng, config_.head_init_std);
  if (config_.enable_iou_head) {
    iou_head_ = Linear<T>(params_, "iou_head", width, 1, rng, config_.head_init_std);
  }
}

template <typename T>
ModelOutput<T> TGraphXModel<T>::forward(const GraphBatch& batch, const ForwardContext& ctx) const {
  run_stage("input", [&] {
    if (batch.num_nodes() == 0) throw std::invalid_argument("empty batch");
    if (batch.node_features.shape[1] != config_.encoder.in_channels) {
      throw ShapeError("node tensors have " + std::to_string(batch.node_features.shape[1]) +
                       " channels, model expects " + std::to_string(config_.encoder.in_channels));
    }
    if (batch.edge_feature_dim != config_.edge_feature_dim) {
      throw ShapeError("batch has " + std::to_string(batch.edge_feature_dim) +
                       " edge feature channels, model expects " +
                       std::to_string(config_.edge_feature_dim));
    }
    return 0;
  });
  ModelOutput<T> out;
  Tensor<T> x = run_stage("pre_encode", [&] {
    return pre_.forward(batch.node_features.to_tensor<T>(), ctx);
  });
  x = run_stage("encode", [&] { return encoder_.forward(x, ctx); });
  for (std::size_t l = 0; l < gnn_.size(); ++l) {
    x = run_stage("gnn", [&] { return gnn_[l].forward(x, batch, ctx); });
  }
  out.node_maps = x;
  out.node_embeddings = run_stage("pool", [&] { return pool_nodes(x); });
  run_stage("classify", [&] {
    const Tensor<T>& z = out.node_embeddings;
    out.node_logits = head_.forward(z);
    Tensor<T> gz;
    if (config_.readout == Readout::Select) {
      out.graph_logits = select_class_logits(out.node_logits, batch, config_.classes);
      const auto roots = batch.root_nodes();
      gz = gather_rows(z, std::span<const std::size_t>(roots));
    } else {
      if (config_.readout == Readout::Root) {
        const auto roots = batch.root_nodes();
        gz = gather_rows(z, std::span<const std::size_t>(roots));
      } else {
        gz = pool_graph(z, batch,
                        config_.readout == Readout::Mean ? GraphPooling::Mean : GraphPooling::Sum);
      }
      out.graph_logits = head_.forward(gz);
    }
    if (config_.enable_iou_head) {
      out.node_iou = sigmoid(iou_head_.forward(z));
      out.graph_iou = sigmoid(iou_head_.forward(gz));
    }
    return 0;
  });
  return out;
}

std::vector<std::vector<bool>> present_class_masks(const GraphBatch& batch, std::size_t classes,
                                                   TargetLevel level) {
  std::vector<std::vector<bool>> masks;
  if (level != TargetLevel::Graph || batch.node_labels.size() != batch.num_nodes()) return masks;
  masks.assign(batch.num_graphs(), std::vector<bool>(classes, false));
  for (std::size_t n = 0; n < batch.num_nodes(); ++n) {
    const int c = batch.node_labels[n];
    if (c >= 0 && static_cast<std::size_t>(c) < classes) masks[batch.graph_ids[n]][c] = true;
  }
  return masks;
}

template <typename T>
PredictionBundle<T> make_bundle(const ModelOutput<T>& out, const GraphBatch& batch,
                                TargetLevel level) {
  PredictionBundle<T> b;
  if (level == TargetLevel::Graph) {
    b.logits = out.graph_logits;
    b.iou_pred = out.graph_iou;
    for (const auto& label : batch.graph_labels) {
      if (!label) throw std::invalid_argument("graph-level training needs a graph_label on every graph");
      b.targets.push_back(*label);
    }
    if (batch.node_values.size() == batch.num_nodes() && batch.num_nodes() > 0) {
      std::vector<double> gt;
      for (const std::size_t r : batch.root_nodes()) gt.push_back(batch.node_values[r]);
      b.iou_gt = std::move(gt);
    }
  } else {
    b.logits = out.node_logits;
    b.iou_pred = out.node_iou;
    if (batch.node_labels.size() != batch.num_nodes()) {
      throw std::invalid_argument("node-level training needs node_labels on every node");
    }
    b.targets = batch.node_labels;
    if (batch.node_values.size() == batch.num_nodes() && batch.num_nodes() > 0) {
      b.iou_gt = batch.node_values;
    }
  }
  return b;
}

template <typename T>
Tensor<T> model_loss(const ModelConfig& config, const PredictionBundle<T>& bundle) {
  const std::span<const int> targets(bundle.targets);
  if (config.loss_kind == LossKind::Composite) return composite_loss(bundle.logits, targets, config.loss);
  return iou_composite_loss(bundle, config.loss);
}

template <typename T>
std::vector<int> predict_classes(const ModelOutput<T>& out, const GraphBatch& batch,
                                 const ModelConfig& config, TargetLevel level) {
  const Tensor<T>& logits = level == TargetLevel::Graph ? out.graph_logits : out.node_logits;
  const auto data = logits.data();
  const std::vector<double> values(data.begin(), data.end());
  std::vector<std::vector<bool>> masks;
  if (config.mask_absent_classes) masks = present_class_masks(batch, config.classes, level);
  return argmax_rows(values, config.classes, masks);
}

#define TGX_INSTANTIATE_MODEL(T)                                                               \
  template class TGraphXModel<T>;                                                              \
  template PredictionBundle<T> make_bundle(const ModelOutput<T>&, const GraphBatch&,           \
                                           TargetLevel);                                       \
  template Tensor<T> model_loss(const ModelConfig&, const PredictionBundle<T>&);               \
  template std::vector<int> predict_classes(const ModelOutput<T>&, const GraphBatch&,          \
                                            const ModelConfig&, TargetLevel);

TGX_INSTANTIATE_MODEL(float)
TGX_INSTANTIATE_MODEL(double)

#undef TGX_INSTANTIATE_MODEL

GradCheckReport model_grad_check(TGraphXModel<double>& model, const GraphBatch& batch,
                                 TargetLevel level, Mode mode, double epsilon) {
  const ModelConfig& cfg = model.config();
  const ForwardContext ctx{mode, cfg.seed, 0, cfg.conv_algo};
  const auto forward = [&]() {
    const ModelOutput<double> out = model.forward(batch, ctx);
    return model_loss(cfg, make_bundle(out, batch, level));
  };
  return grad_check(forward, model.params().parameters(), epsilon);
}

}  // namespace tgx
