#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgx/random.hpp"
#include "tgx/tensor.hpp"

namespace tgx {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense [n, c, h, w] float storage for graph inputs. Inputs are kept in single
// precision regardless of model precision and widened on the way in.
struct FeatureArray {
  Shape shape{0, 0, 0, 0};
  std::vector<float> values;

  static FeatureArray zeros(const Shape& shape);
  std::size_t row_size() const { return shape[1] * shape[2] * shape[3]; }
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  template <typename T>
  Tensor<T> to_tensor() const {
    return Tensor<T>::from(shape, std::vector<T>(values.begin(), values.end()));
  }

  bool operator==(const FeatureArray&) const = default;
};

// Directed edge; messages flow from source to destination.
struct Edge {
  std::size_t source = 0;
  std::size_t destination = 0;

  bool operator==(const Edge&) const = default;
};

struct Graph {
  FeatureArray node_features;       // [N, C, H, W]
  std::vector<Edge> edges;          // edge_index as (source, destination) pairs
  std::size_t edge_feature_dim = 0;  // F; 0 when the graph has no edge features
  std::vector<float> edge_features;  // [E, F] row-major
  std::vector<int> node_labels;      // empty or N entries
  std::optional<int> graph_label;
  std::vector<double> node_values;  // optional per-node regression targets

  std::size_t num_nodes() const { return node_features.shape[0]; }
  std::size_t num_edges() const { return edges.size(); }
  Shape node_shape() const;

  bool operator==(const Graph&) const = default;
};

// Throws GraphError describing the first violated invariant.
void graph_validate(const Graph& graph);

struct GraphBatch {
  FeatureArray node_features;  // [sum N_g, C, H, W]
  std::vector<Edge> edges;     // endpoints offset into the merged node range
  std::size_t edge_feature_dim = 0;
  std::vector<float> edge_features;
  std::vector<std::size_t> node_offsets;  // G + 1 prefix sums of node counts
  std::vector<std::size_t> edge_offsets;  // G + 1 prefix sums of edge counts
  std::vector<std::size_t> graph_ids;     // graph membership per merged node
  std::vector<int> node_labels;
  std::vector<std::optional<int>> graph_labels;
  std::vector<double> node_values;

  std::size_t num_graphs() const { return graph_labels.size(); }
  std::size_t num_nodes() const { return node_features.shape[0]; }
  std::size_t num_edges() const { return edges.size(); }

  std::vector<std::size_t> sources() const;
  std::vector<std::size_t> destinations() const;
  // Last node of each graph (the union node of a detection graph).
  std::vector<std::size_t> root_nodes() const;
};

// Concatenates graphs, offsetting node indices of graph g by the node count of
// graphs 0..g-1. All graphs must agree on (C, H, W), edge-feature dimension,
// and on which optional label slots are populated.
GraphBatch batch_merge(const std::vector<Graph>& graphs);

std::vector<Graph> batch_split(const GraphBatch& batch);

struct Neighbor {
  std::size_t source = 0;
  std::size_t edge = 0;  // position in edge_index

  bool operator==(const Neighbor&) const = default;
};

// For every destination j, the in-edges of j in edge-index order.
std::vector<std::vector<Neighbor>> neighborhoods(const Graph& graph);

class GraphDataset {
 public:
  GraphDataset() = default;
  explicit GraphDataset(std::vector<Graph> graphs);

  std::size_t size() const { return graphs_.size(); }
  bool empty() const { return graphs_.empty(); }
  const Graph& operator[](std::size_t i) const { return graphs_.at(i); }
  const std::vector<Graph>& graphs() const { return graphs_; }

  // Permutation of [0, size) determined by (seed, epoch) alone.
  std::vector<std::size_t> order(std::uint64_t seed, std::uint64_t epoch) const;

  // Index lists of consecutive batches over `order`; the last may be short.
  std::vector<std::vector<std::size_t>> batches(std::size_t batch_size, std::uint64_t seed,
                                                std::uint64_t epoch, bool shuffle) const;

  GraphBatch make_batch(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Graph> graphs_;
};

struct RandomGraphOptions {
  std::size_t min_nodes = 1;
  std::size_t max_nodes = 4;
  std::size_t channels = 2;
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t edge_feature_dim = 1;
  double edge_probability = 0.5;  // per ordered pair i != j
  std::size_t classes = 3;        // labels drawn from [0, classes)
};

// Standard-normal node features, Bernoulli edges, uniform labels. The last
// node of each graph additionally receives an edge from node 0 when there
// is more than one node, so readout roots are never isolated.
Graph random_graph(Rng& rng, const RandomGraphOptions& options);

}  // namespace tgx
