#include "tgx/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tgx {

namespace {

template <typename T>
void check_logits(const Tensor<T>& logits, std::span<const int> targets, const char* op) {
  const Shape& s = logits.shape();
  if (s[0] == 0) throw std::invalid_argument(std::string(op) + ": empty batch");
  if (s[2] != 1 || s[3] != 1) throw ShapeError(std::string(op) + ": logits must be [n, C]");
  if (targets.size() != s[0]) {
    throw ShapeError(std::string(op) + ": " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(s[0]) + " rows");
  }
  for (const int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= s[1]) {
      throw std::invalid_argument(std::string(op) + ": target " + std::to_string(t) +
                                  " outside [0, " + std::to_string(s[1]) + ")");
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0)) {
    throw std::invalid_argument("loss: alpha, beta and gamma must be >= 0");
  }
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "composite") return LossKind::Composite;
  if (text == "iou_composite") return LossKind::IouComposite;
  throw std::invalid_argument("unknown loss: " + text);
}

std::string to_string(LossKind kind) {
  return kind == LossKind::Composite ? "composite" : "iou_composite";
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes,
                             std::span<const std::vector<bool>> allowed) {
  if (classes == 0 || logits.size() % classes != 0) {
    throw std::invalid_argument("argmax_rows: logits size not a multiple of class count");
  }
  const std::size_t n = logits.size() / classes;
  if (!allowed.empty() && allowed.size() != n) {
    throw std::invalid_argument("argmax_rows: mask count does not match rows");
  }
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      if (!allowed.empty() && (c >= allowed[i].size() || !allowed[i][c])) continue;
      const double v = logits[i * classes + c];
      if (best < 0 || v > best_value) {
        best = static_cast<int>(c);
        best_value = v;
      }
    }
    if (best < 0) throw std::invalid_argument("argmax_rows: no allowed class in row");
    out[i] = best;
  }
  return out;
}

template <typename T>
ClassifierHead<T>::ClassifierHead(ParameterSet<T>& params, const std::string& name,
                                  std::size_t in_features, std::size_t classes, Rng& rng,
                                  double init_std)
    : classes_(classes) {
  if (classes < 2) throw std::invalid_argument("classifier head needs at least 2 classes");
  linear_ = Linear<T>(params, name, in_features, classes, rng, init_std);
}

template <typename T>
Tensor<T> pool_graph(const Tensor<T>& z, const GraphBatch& batch, GraphPooling mode) {
  if (z.dim(0) != batch.num_nodes()) {
    throw ShapeError("pool_graph: " + std::to_string(z.dim(0)) + " rows for " +
                     std::to_string(batch.num_nodes()) + " nodes");
  }
  const std::size_t graphs = batch.num_graphs();
  Tensor<T> summed = scatter_add_rows(z, std::span<const std::size_t>(batch.graph_ids), graphs);
  if (mode == GraphPooling::Sum) return summed;
  std::vector<T> inv(graphs);
  for (std::size_t g = 0; g < graphs; ++g) {
    const std::size_t count = batch.node_offsets[g + 1] - batch.node_offsets[g];
    inv[g] = count > 0 ? T(1) / static_cast<T>(count) : T(0);
  }
  return scale_rows(summed, std::span<const T>(inv));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  check_logits(logits, targets, "cross_entropy");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  const auto x = logits.data();
  std::vector<T> probs(n * c);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * c;
    const T shift = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - shift);
    const T lse = shift + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t k = 0; k < c; ++k) probs[i * c + k] = std::exp(row[k] - lse);
  }
  const T inv_n = T(1) / static_cast<T>(n);
  std::vector<int> t(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", scalar_shape(), {total * inv_n}, {logits},
                        [logits, probs, t, c, inv_n](const std::vector<T>& gout) {
                          std::vector<T> gin(probs.size());
                          for (std::size_t i = 0; i < t.size(); ++i) {
                            for (std::size_t k = 0; k < c; ++k) {
                              const T onehot = static_cast<int>(k) == t[i] ? T(1) : T(0);
                              gin[i * c + k] = gout[0] * inv_n * (probs[i * c + k] - onehot);
                            }
                          }
                          accumulate_grad<T>(logits, gin);
                        });
}

template <typename T>
Tensor<T> auc_ranking_loss(const Tensor<T>& logits, std::span<const int> targets) {
  check_logits(logits, targets, "auc_ranking_loss");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (c < 2) throw std::invalid_argument("auc_ranking_loss: needs at least 2 classes");
  const auto x = logits.data();
  const T inv_n = T(1) / static_cast<T>(n);
  // d(loss)/d(logit) before the upstream factor.
  std::vector<T> local(n * c, T(0));
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(targets[i]);
    for (std::size_t j = 0; j < c; ++j) {
      if (j == y) continue;
      const double d = static_cast<double>(x[i * c + j]) - static_cast<double>(x[i * c + y]);
      total += static_cast<T>(softplus(d));
      const T s = static_cast<T>(1.0 / (1.0 + std::exp(-d)));
      local[i * c + j] += s * inv_n;
      local[i * c + y] -= s * inv_n;
    }
  }
  return make_result<T>("auc_ranking_loss", scalar_shape(), {total * inv_n}, {logits},
                        [logits, local](const std::vector<T>& gout) {
                          std::vector<T> gin(local.size());
                          for (std::size_t i = 0; i < local.size(); ++i) gin[i] = gout[0] * local[i];
                          accumulate_grad<T>(logits, gin);
                        });
}

template <typename T>
Tensor<T> composite_loss(const Tensor<T>& logits, std::span<const int> targets,
                         const LossConfig& cfg) {
  cfg.validate();
  Tensor<T> ce = cross_entropy(logits, targets);
  if (cfg.gamma == 0.0) return ce;
  return add(ce, scale(auc_ranking_loss(logits, targets), static_cast<T>(cfg.gamma)));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, std::span<const double> target) {
  const std::size_t n = prediction.numel();
  if (n == 0) throw std::invalid_argument("mse_loss: empty batch");
  if (target.size() != n) throw ShapeError("mse_loss: prediction and target sizes differ");
  const auto p = prediction.data();
  std::vector<T> diff(n);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = p[i] - static_cast<T>(target[i]);
    total += diff[i] * diff[i];
  }
  const T inv_n = T(1) / static_cast<T>(n);
  return make_result<T>("mse_loss", scalar_shape(), {total * inv_n}, {prediction},
                        [prediction, diff, inv_n](const std::vector<T>& gout) {
                          std::vector<T> gin(diff.size());
                          for (std::size_t i = 0; i < diff.size(); ++i) {
                            gin[i] = gout[0] * T(2) * inv_n * diff[i];
                          }
                          accumulate_grad<T>(prediction, gin);
                        });
}

template <typename T>
Tensor<T> iou_composite_loss(const PredictionBundle<T>& bundle, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.alpha == 0.0 && cfg.beta == 0.0) {
    throw std::invalid_argument("iou_composite_loss: alpha and beta are both zero");
  }
  std::optional<Tensor<T>> total;
  if (cfg.alpha > 0.0) {
    total = scale(cross_entropy(bundle.logits, std::span<const int>(bundle.targets)),
                  static_cast<T>(cfg.alpha));
  }
  if (cfg.beta > 0.0) {
    if (!bundle.iou_pred || !bundle.iou_gt) {
      throw std::invalid_argument("iou_composite_loss: beta > 0 requires iou_pred and iou_gt");
    }
    Tensor<T> reg = scale(mse_loss(*bundle.iou_pred, std::span<const double>(*bundle.iou_gt)),
                          static_cast<T>(cfg.beta));
    total = total ? add(*total, reg) : reg;
  }
  return *total;
}

#define TGX_INSTANTIATE_HEADS(T)                                                              \
  template class ClassifierHead<T>;                                                           \
  template Tensor<T> pool_graph(const Tensor<T>&, const GraphBatch&, GraphPooling);           \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                   \
  template Tensor<T> auc_ranking_loss(const Tensor<T>&, std::span<const int>);                \
  template Tensor<T> composite_loss(const Tensor<T>&, std::span<const int>, const LossConfig&); \
  template Tensor<T> mse_loss(const Tensor<T>&, std::span<const double>);                     \
  template Tensor<T> iou_composite_loss(const PredictionBundle<T>&, const LossConfig&);

TGX_INSTANTIATE_HEADS(float)
TGX_INSTANTIATE_HEADS(double)

#undef TGX_INSTANTIATE_HEADS

}  // namespace tgx
