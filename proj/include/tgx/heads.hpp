#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tgx/graph.hpp"
#include "tgx/layers.hpp"

namespace tgx {

enum class GraphPooling { Mean, Sum };

struct LossConfig {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 1.0;
  void validate() const;
};

enum class LossKind { Composite, IouComposite };

LossKind parse_loss_kind(const std::string& text);
std::string to_string(LossKind kind);

template <typename T>
struct PredictionBundle {
  Tensor<T> logits;                 // [n, C, 1, 1]
  std::optional<Tensor<T>> iou_pred;  // [n, 1, 1, 1]
  std::vector<int> targets;
  std::optional<std::vector<double>> iou_gt;
};

// z_j: spatial mean per node and channel, [N, C, 1, 1].
template <typename T>
Tensor<T> pool_nodes(const Tensor<T>& x) {
  return avg_pool_spatial(x);
}

template <typename T>
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(ParameterSet<T>& params, const std::string& name, std::size_t in_features,
                 std::size_t classes, Rng& rng, double init_std = 0.01);

  Tensor<T> forward(const Tensor<T>& z) const { return linear_.forward(z); }

  Tensor<T>& weight() { return linear_.weight(); }
  Tensor<T>& bias() { return linear_.bias(); }
  std::size_t classes() const { return classes_; }

 private:
  Linear<T> linear_;
  std::size_t classes_ = 0;
};

template <typename T>
Tensor<T> classify_nodes(const Tensor<T>& z, const ClassifierHead<T>& head) {
  return head.forward(z);
}

// Per-graph mean or sum over that graph's rows of z.
template <typename T>
Tensor<T> pool_graph(const Tensor<T>& z, const GraphBatch& batch, GraphPooling mode);

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

template <typename T>
Tensor<T> auc_ranking_loss(const Tensor<T>& logits, std::span<const int> targets);

template <typename T>
Tensor<T> composite_loss(const Tensor<T>& logits, std::span<const int> targets,
                         const LossConfig& cfg);

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, std::span<const double> target);

template <typename T>
Tensor<T> iou_composite_loss(const PredictionBundle<T>& bundle, const LossConfig& cfg);

// max(x, 0) + log1p(exp(-|x|)).
double softplus(double x);

// Argmax per row. When `allowed` is non-empty only classes with allowed[c]
// set are candidates; ties go to the lower class.
std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes,
                             std::span<const std::vector<bool>> allowed = {});

}  // namespace tgx
