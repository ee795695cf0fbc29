#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Everything here is written as plain loops over flat
// arrays so it shares no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "tgx/graph.hpp"
#include "tgx/random.hpp"
#include "tgx/tensor.hpp"

namespace tgx::oracle {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false,
                                    double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor<double>::from(shape, std::move(values), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Six nested loops over output position and kernel window.
inline std::vector<double> conv2d(const Shape& in, std::span<const double> x, const Shape& wt,
                                  std::span<const double> w, std::span<const double> bias,
                                  std::size_t stride, std::size_t pad) {
  const std::size_t n = in[0], ci = in[1], h = in[2], wd = in[3];
  const std::size_t co = wt[0], k = wt[2];
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += x[((b * ci + c) * h + iy) * wd + ix] * w[((o * ci + c) * k + ky) * k + kx];
              }
          out[((b * co + o) * oh + y) * ow + xo] = acc;
        }
  return out;
}

// One edge at a time: build [X_i | X_j | E_ij] for the edge and apply the 1x1
// conv pixel by pixel. Result is [E, C_out, H, W].
inline std::vector<double> messages(const GraphBatch& batch, std::span<const double> x,
                                    std::size_t channels, std::size_t h, std::size_t w,
                                    std::span<const double> weight, std::span<const double> bias,
                                    std::size_t out_channels) {
  const std::size_t f = batch.edge_feature_dim;
  const std::size_t in = 2 * channels + f;
  const std::size_t plane = h * w;
  std::vector<double> out(batch.num_edges() * out_channels * plane, 0.0);
  std::vector<double> stacked(in * plane);
  for (std::size_t e = 0; e < batch.num_edges(); ++e) {
    const std::size_t s = batch.edges[e].source, d = batch.edges[e].destination;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        stacked[c * plane + p] = x[(s * channels + c) * plane + p];
        stacked[(channels + c) * plane + p] = x[(d * channels + c) * plane + p];
      }
    for (std::size_t k = 0; k < f; ++k)
      for (std::size_t p = 0; p < plane; ++p)
        stacked[(2 * channels + k) * plane + p] = batch.edge_features[e * f + k];
    for (std::size_t o = 0; o < out_channels; ++o)
      for (std::size_t p = 0; p < plane; ++p) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < in; ++c) acc += weight[o * in + c] * stacked[c * plane + p];
        out[(e * out_channels + o) * plane + p] = acc;
      }
  }
  return out;
}

// m_j[q] = sum over edges with destination j of messages[e][q].
inline std::vector<double> aggregate_sum(const GraphBatch& batch, std::span<const double> messages,
                                         std::size_t row) {
  std::vector<double> out(batch.num_nodes() * row, 0.0);
  for (std::size_t j = 0; j < batch.num_nodes(); ++j)
    for (std::size_t e = 0; e < batch.num_edges(); ++e) {
      if (batch.edges[e].destination != j) continue;
      for (std::size_t q = 0; q < row; ++q) out[j * row + q] += messages[e * row + q];
    }
  return out;
}

inline double cross_entropy(std::span<const double> logits, std::span<const int> targets,
                            std::size_t classes) {
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits[i * classes + c]);
    total += -std::log(std::exp(logits[i * classes + targets[i]]) / denom);
  }
  return total / static_cast<double>(targets.size());
}

inline double auc_loss(std::span<const double> logits, std::span<const int> targets,
                       std::size_t classes) {
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (std::size_t c = 0; c < classes; ++c) {
      if (static_cast<int>(c) == targets[i]) continue;
      const double margin = logits[i * classes + targets[i]] - logits[i * classes + c];
      total += std::log(1.0 + std::exp(-margin));
    }
  return total / static_cast<double>(targets.size());
}

inline std::vector<int> random_targets(std::size_t n, std::size_t classes, Rng& rng) {
  std::uniform_int_distribution<int> dist(0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (auto& t : out) t = dist(rng);
  return out;
}

}  // namespace tgx::oracle
