#include "tgx/graph.hpp"

#include <algorithm>
#include <numeric>

#include "tgx/random.hpp"

namespace tgx {

FeatureArray FeatureArray::zeros(const Shape& shape) {
  return FeatureArray{shape, std::vector<float>(numel(shape), 0.0f)};
}

float& FeatureArray::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return values[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
}

float FeatureArray::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return values[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
}

Shape Graph::node_shape() const {
  const Shape& s = node_features.shape;
  return Shape{1, s[1], s[2], s[3]};
}

void graph_validate(const Graph& g) {
  const std::size_t n = g.num_nodes();
  if (n < 1) throw GraphError("graph has no nodes");
  if (g.node_features.values.size() != numel(g.node_features.shape)) {
    throw GraphError("node feature data does not match shape " + to_string(g.node_features.shape));
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    if (edge.source >= n || edge.destination >= n) {
      throw GraphError("edge " + std::to_string(e) + " (" + std::to_string(edge.source) + ", " +
                       std::to_string(edge.destination) + ") out of range for " +
                       std::to_string(n) + " nodes");
    }
  }
  if (g.edge_features.size() != g.edges.size() * g.edge_feature_dim) {
    throw GraphError("edge features hold " + std::to_string(g.edge_features.size()) +
                     " values, expected " + std::to_string(g.edges.size()) + " x " +
                     std::to_string(g.edge_feature_dim));
  }
  if (!g.node_labels.empty() && g.node_labels.size() != n) {
    throw GraphError("node label count does not match node count");
  }
  if (!g.node_values.empty() && g.node_values.size() != n) {
    throw GraphError("node value count does not match node count");
  }
}

std::vector<std::size_t> GraphBatch::sources() const {
  std::vector<std::size_t> out(edges.size());
  std::transform(edges.begin(), edges.end(), out.begin(), [](const Edge& e) { return e.source; });
  return out;
}

std::vector<std::size_t> GraphBatch::destinations() const {
  std::vector<std::size_t> out(edges.size());
  std::transform(edges.begin(), edges.end(), out.begin(),
                 [](const Edge& e) { return e.destination; });
  return out;
}

std::vector<std::size_t> GraphBatch::root_nodes() const {
  std::vector<std::size_t> out;
  out.reserve(num_graphs());
  for (std::size_t g = 0; g + 1 < node_offsets.size(); ++g) out.push_back(node_offsets[g + 1] - 1);
  return out;
}

GraphBatch batch_merge(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw GraphError("batch_merge: no graphs");
  const Graph& first = graphs.front();
  const Shape node_shape = first.node_shape();
  const bool with_node_labels = !first.node_labels.empty();
  const bool with_node_values = !first.node_values.empty();

  GraphBatch b;
  b.edge_feature_dim = first.edge_feature_dim;
  b.node_offsets.push_back(0);
  b.edge_offsets.push_back(0);
  std::size_t total_nodes = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    graph_validate(g);
    if (g.node_shape() != node_shape) {
      throw GraphError("batch_merge: graph " + std::to_string(gi) + " node shape " +
                       to_string(g.node_shape()) + " differs from " + to_string(node_shape));
    }
    if (g.edge_feature_dim != b.edge_feature_dim) {
      throw GraphError("batch_merge: graph " + std::to_string(gi) + " edge feature dim differs");
    }
    if (g.node_labels.empty() == with_node_labels || g.node_values.empty() == with_node_values) {
      throw GraphError("batch_merge: graph " + std::to_string(gi) +
                       " populates different optional label slots");
    }
    total_nodes += g.num_nodes();
  }

  b.node_features.shape = Shape{total_nodes, node_shape[1], node_shape[2], node_shape[3]};
  b.node_features.values.reserve(numel(b.node_features.shape));
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    const std::size_t offset = b.node_offsets.back();
    b.node_features.values.insert(b.node_features.values.end(), g.node_features.values.begin(),
                                  g.node_features.values.end());
    for (const Edge& e : g.edges) b.edges.push_back({e.source + offset, e.destination + offset});
    b.edge_features.insert(b.edge_features.end(), g.edge_features.begin(), g.edge_features.end());
    b.graph_ids.insert(b.graph_ids.end(), g.num_nodes(), gi);
    b.node_labels.insert(b.node_labels.end(), g.node_labels.begin(), g.node_labels.end());
    b.node_values.insert(b.node_values.end(), g.node_values.begin(), g.node_values.end());
    b.graph_labels.push_back(g.graph_label);
    b.node_offsets.push_back(offset + g.num_nodes());
    b.edge_offsets.push_back(b.edges.size());
  }
  return b;
}

std::vector<Graph> batch_split(const GraphBatch& b) {
  const std::size_t graphs = b.graph_labels.size();
  if (b.node_offsets.size() != graphs + 1 || b.edge_offsets.size() != graphs + 1 ||
      b.node_offsets.front() != 0 || b.edge_offsets.front() != 0 ||
      b.node_offsets.back() != b.num_nodes() || b.edge_offsets.back() != b.num_edges() ||
      b.graph_ids.size() != b.num_nodes()) {
    throw GraphError("batch_split: corrupted offsets");
  }
  const std::size_t row = b.node_features.row_size();
  const std::size_t fdim = b.edge_feature_dim;
  std::vector<Graph> out;
  out.reserve(graphs);
  for (std::size_t gi = 0; gi < graphs; ++gi) {
    const std::size_t n0 = b.node_offsets[gi], n1 = b.node_offsets[gi + 1];
    const std::size_t e0 = b.edge_offsets[gi], e1 = b.edge_offsets[gi + 1];
    if (n1 <= n0 || e1 < e0 || n1 > b.num_nodes() || e1 > b.num_edges()) throw GraphError("batch_split: corrupted offsets");
    Graph g;
    g.node_features.shape = Shape{n1 - n0, b.node_features.shape[1], b.node_features.shape[2],
                                  b.node_features.shape[3]};
    g.node_features.values.assign(b.node_features.values.begin() + n0 * row,
                                  b.node_features.values.begin() + n1 * row);
    for (std::size_t e = e0; e < e1; ++e) {
      const Edge& edge = b.edges[e];
      if (edge.source < n0 || edge.source >= n1 || edge.destination < n0 ||
          edge.destination >= n1) {
        throw GraphError("batch_split: edge " + std::to_string(e) + " crosses graph boundary");
      }
      g.edges.push_back({edge.source - n0, edge.destination - n0});
    }
    g.edge_feature_dim = fdim;
    g.edge_features.assign(b.edge_features.begin() + e0 * fdim, b.edge_features.begin() + e1 * fdim);
    if (!b.node_labels.empty()) {
      g.node_labels.assign(b.node_labels.begin() + n0, b.node_labels.begin() + n1);
    }
    if (!b.node_values.empty()) {
      g.node_values.assign(b.node_values.begin() + n0, b.node_values.begin() + n1);
    }
    g.graph_label = b.graph_labels[gi];
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<Neighbor>> neighborhoods(const Graph& g) {
  std::vector<std::vector<Neighbor>> out(g.num_nodes());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    out.at(g.edges[e].destination).push_back({g.edges[e].source, e});
  }
  return out;
}

GraphDataset::GraphDataset(std::vector<Graph> graphs) : graphs_(std::move(graphs)) {
  for (const auto& g : graphs_) graph_validate(g);
}

std::vector<std::size_t> GraphDataset::order(std::uint64_t seed, std::uint64_t epoch) const {
  std::vector<std::size_t> idx(graphs_.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x5f1eULL, epoch));
  // Fisher-Yates with modulo draws keeps the order independent of the
  // standard library's distribution implementations.
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng() % i]);
  }
  return idx;
}

std::vector<std::vector<std::size_t>> GraphDataset::batches(std::size_t batch_size,
                                                            std::uint64_t seed,
                                                            std::uint64_t epoch,
                                                            bool shuffle) const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> idx;
  if (shuffle) {
    idx = order(seed, epoch);
  } else {
    idx.resize(graphs_.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    out.emplace_back(idx.begin() + i, idx.begin() + std::min(idx.size(), i + batch_size));
  }
  return out;
}

GraphBatch GraphDataset::make_batch(const std::vector<std::size_t>& indices) const {
  std::vector<Graph> selected;
  selected.reserve(indices.size());
  for (std::size_t i : indices) selected.push_back(graphs_.at(i));
  return batch_merge(selected);
}

Graph random_graph(Rng& rng, const RandomGraphOptions& o) {
  if (o.min_nodes < 1 || o.max_nodes < o.min_nodes) {
    throw std::invalid_argument("random_graph: need 1 <= min_nodes <= max_nodes");
  }
  std::uniform_int_distribution<std::size_t> count(o.min_nodes, o.max_nodes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_int_distribution<int> label(0, static_cast<int>(o.classes) - 1);
  Graph g;
  const std::size_t n = count(rng);
  g.node_features = FeatureArray::zeros(Shape{n, o.channels, o.height, o.width});
  for (auto& v : g.node_features.values) v = normal(rng);
  g.edge_feature_dim = o.edge_feature_dim;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool forced = n > 1 && i == 0 && j == n - 1;
      if (i == j || !(forced || u(rng) < o.edge_probability)) continue;
      g.edges.push_back({i, j});
      for (std::size_t f = 0; f < o.edge_feature_dim; ++f) g.edge_features.push_back(normal(rng));
    }
  }
  for (std::size_t i = 0; i < n; ++i) g.node_labels.push_back(label(rng));
  g.graph_label = label(rng);
  for (std::size_t i = 0; i < n; ++i) g.node_values.push_back(u(rng));
  graph_validate(g);
  return g;
}

}  // namespace tgx
