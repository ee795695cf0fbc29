#pragma once

#include <string>
#include <vector>

#include "tgx/graph.hpp"

namespace tgx {

enum class PadPolicy { Error, ZeroPad };
enum class DistanceMetric { Chebyshev, Manhattan };

PadPolicy parse_pad_policy(const std::string& text);
DistanceMetric parse_metric(const std::string& text);
std::string to_string(PadPolicy policy);
std::string to_string(DistanceMetric metric);

struct GridPosition {
  std::size_t row = 0;
  std::size_t col = 0;

  bool operator==(const GridPosition&) const = default;
};

// Non-overlapping tiles in row-major order: patch (r, c) is index r * cols + c.
struct PatchGrid {
  FeatureArray patches;  // [rows * cols, C, patch_h, patch_w]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<GridPosition> positions;
};

// `image` is [1, C, H, W]. Under ZeroPad the image is extended on the bottom
// and right to the next multiple of the patch size.
PatchGrid extract_patches(const FeatureArray& image, std::size_t patch_h, std::size_t patch_w,
                          PadPolicy pad_policy);

// Inverse tiling; returns the (padded) image [1, C, rows * patch_h, cols * patch_w].
FeatureArray reassemble_patches(const PatchGrid& grid);

double grid_distance(const GridPosition& a, const GridPosition& b, DistanceMetric metric);

// Directed edges (i, j), i != j, for every ordered pair within distance tau,
// ordered by destination then source.
std::vector<Edge> build_grid_graph(const PatchGrid& grid, DistanceMetric metric, double tau);

// Feature of edge (i, j) is position_j - position_i as (d_row, d_col); [E, 2].
std::vector<float> attach_positional_edge_features(const std::vector<Edge>& edges,
                                                   const std::vector<GridPosition>& positions);

struct PatchConfig {
  std::size_t patch_h = 16;
  std::size_t patch_w = 16;
  DistanceMetric metric = DistanceMetric::Manhattan;
  double tau = 1.0;
  PadPolicy pad_policy = PadPolicy::Error;
  bool positional_edge_features = true;
};

// Image -> patch graph with one node per patch.
Graph make_patch_graph(const FeatureArray& image, const PatchConfig& config);

}  // namespace tgx
