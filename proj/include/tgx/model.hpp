#pragma once

#include <optional>
#include <vector>

#include "tgx/config.hpp"

namespace tgx {

template <typename T>
struct ModelOutput {
  Tensor<T> node_maps;        // X after the last GNN layer, [N, C, H2, W2]
  Tensor<T> node_embeddings;  // z, [N, C, 1, 1]
  Tensor<T> node_logits;      // [N, classes, 1, 1]
  Tensor<T> graph_logits;     // [G, classes, 1, 1]
  std::optional<Tensor<T>> node_iou;   // sigmoid IoU estimates, [N, 1, 1, 1]
  std::optional<Tensor<T>> graph_iou;  // [G, 1, 1, 1]
};

// pre-encode -> encode -> GNN layers -> pool -> classify.
template <typename T>
class TGraphXModel {
 public:
  explicit TGraphXModel(const ModelConfig& config);
  TGraphXModel(const TGraphXModel&) = delete;
  TGraphXModel& operator=(const TGraphXModel&) = delete;
  TGraphXModel(TGraphXModel&&) = default;
  TGraphXModel& operator=(TGraphXModel&&) = default;

  // Errors are rethrown with the failing stage named in the message.
  ModelOutput<T> forward(const GraphBatch& batch, const ForwardContext& ctx) const;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  std::vector<GnnLayer<T>>& gnn_layers() { return gnn_; }
  CnnEncoder<T>& encoder() { return encoder_; }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  PreEncoder<T> pre_;
  CnnEncoder<T> encoder_;
  std::vector<GnnLayer<T>> gnn_;
  ClassifierHead<T> head_;
  Linear<T> iou_head_;
};

// Per-row class masks: for graph targets, the node classes present in each
// graph (node_labels); empty when masking is off or labels are missing.
std::vector<std::vector<bool>> present_class_masks(const GraphBatch& batch, std::size_t classes,
                                                   TargetLevel level);

// Targets and optional IoU labels aligned with the logits of `level`.
template <typename T>
PredictionBundle<T> make_bundle(const ModelOutput<T>& out, const GraphBatch& batch,
                                TargetLevel level);

template <typename T>
Tensor<T> model_loss(const ModelConfig& config, const PredictionBundle<T>& bundle);

// Masked argmax predictions for `level`.
template <typename T>
std::vector<int> predict_classes(const ModelOutput<T>& out, const GraphBatch& batch,
                                 const ModelConfig& config, TargetLevel level);

// Finite-difference check of every parameter of a double-precision model on
// one batch, with the loss from `config` over `level` targets.
GradCheckReport model_grad_check(TGraphXModel<double>& model, const GraphBatch& batch,
                                 TargetLevel level, Mode mode, double epsilon = 1e-5);

}  // namespace tgx
