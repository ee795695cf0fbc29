#include "tgx/patch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace tgx {

PadPolicy parse_pad_policy(const std::string& text) {
  if (text == "error") return PadPolicy::Error;
  if (text == "zero-pad" || text == "zero_pad") return PadPolicy::ZeroPad;
  throw std::invalid_argument("unknown pad_policy: " + text);
}

DistanceMetric parse_metric(const std::string& text) {
  if (text == "chebyshev") return DistanceMetric::Chebyshev;
  if (text == "manhattan") return DistanceMetric::Manhattan;
  throw std::invalid_argument("unknown metric: " + text);
}

std::string to_string(PadPolicy policy) {
  return policy == PadPolicy::Error ? "error" : "zero-pad";
}

std::string to_string(DistanceMetric metric) {
  return metric == DistanceMetric::Chebyshev ? "chebyshev" : "manhattan";
}

PatchGrid extract_patches(const FeatureArray& image, std::size_t patch_h, std::size_t patch_w,
                          PadPolicy pad_policy) {
  const Shape& s = image.shape;
  if (s[0] != 1) throw std::invalid_argument("extract_patches: expected a single image [1, C, H, W]");
  if (patch_h == 0 || patch_w == 0) throw std::invalid_argument("extract_patches: zero patch size");
  if (patch_h > s[2] || patch_w > s[3]) {
    throw std::invalid_argument("extract_patches: patch larger than image " + to_string(s));
  }
  const bool divisible = s[2] % patch_h == 0 && s[3] % patch_w == 0;
  if (!divisible && pad_policy == PadPolicy::Error) {
    throw std::invalid_argument("extract_patches: image " + std::to_string(s[2]) + "x" +
                                std::to_string(s[3]) + " not divisible by patch " +
                                std::to_string(patch_h) + "x" + std::to_string(patch_w));
  }
  PatchGrid grid;
  grid.rows = (s[2] + patch_h - 1) / patch_h;
  grid.cols = (s[3] + patch_w - 1) / patch_w;
  const std::size_t channels = s[1];
  grid.patches = FeatureArray::zeros(Shape{grid.rows * grid.cols, channels, patch_h, patch_w});
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const std::size_t p = r * grid.cols + c;
      grid.positions.push_back({r, c});
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = 0; y < patch_h; ++y) {
          const std::size_t iy = r * patch_h + y;
          if (iy >= s[2]) break;
          for (std::size_t x = 0; x < patch_w; ++x) {
            const std::size_t ix = c * patch_w + x;
            if (ix >= s[3]) break;
            grid.patches.at(p, ch, y, x) = image.at(0, ch, iy, ix);
          }
        }
      }
    }
  }
  return grid;
}

FeatureArray reassemble_patches(const PatchGrid& grid) {
  const Shape& ps = grid.patches.shape;
  FeatureArray image = FeatureArray::zeros(Shape{1, ps[1], grid.rows * ps[2], grid.cols * ps[3]});
  for (std::size_t p = 0; p < ps[0]; ++p) {
    const GridPosition pos = grid.positions[p];
    for (std::size_t ch = 0; ch < ps[1]; ++ch)
      for (std::size_t y = 0; y < ps[2]; ++y)
        for (std::size_t x = 0; x < ps[3]; ++x)
          image.at(0, ch, pos.row * ps[2] + y, pos.col * ps[3] + x) = grid.patches.at(p, ch, y, x);
  }
  return image;
}

double grid_distance(const GridPosition& a, const GridPosition& b, DistanceMetric metric) {
  const double dr = std::abs(static_cast<double>(a.row) - static_cast<double>(b.row));
  const double dc = std::abs(static_cast<double>(a.col) - static_cast<double>(b.col));
  return metric == DistanceMetric::Chebyshev ? std::max(dr, dc) : dr + dc;
}

std::vector<Edge> build_grid_graph(const PatchGrid& grid, DistanceMetric metric, double tau) {
  if (tau < 0) throw std::invalid_argument("build_grid_graph: tau must be >= 0");
  std::vector<Edge> edges;
  const std::size_t n = grid.positions.size();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != j && grid_distance(grid.positions[i], grid.positions[j], metric) <= tau) {
        edges.push_back({i, j});
      }
    }
  }
  return edges;
}

std::vector<float> attach_positional_edge_features(const std::vector<Edge>& edges,
                                                   const std::vector<GridPosition>& positions) {
  std::vector<float> features;
  features.reserve(edges.size() * 2);
  for (const Edge& e : edges) {
    const GridPosition& from = positions.at(e.source);
    const GridPosition& to = positions.at(e.destination);
    features.push_back(static_cast<float>(static_cast<double>(to.row) - static_cast<double>(from.row)));
    features.push_back(static_cast<float>(static_cast<double>(to.col) - static_cast<double>(from.col)));
  }
  return features;
}

Graph make_patch_graph(const FeatureArray& image, const PatchConfig& config) {
  PatchGrid grid = extract_patches(image, config.patch_h, config.patch_w, config.pad_policy);
  Graph g;
  g.edges = build_grid_graph(grid, config.metric, config.tau);
  if (config.positional_edge_features) {
    g.edge_feature_dim = 2;
    g.edge_features = attach_positional_edge_features(g.edges, grid.positions);
  }
  g.node_features = std::move(grid.patches);
  graph_validate(g);
  return g;
}

}  // namespace tgx
