#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tgx/graph.hpp"

namespace tgx {

// Line-delimited graph records, one JSON object per line. Schema (version 1):
//
//   {"format": "tgx-graph", "version": 1,
//    "node_shape": [N, C, H, W],
//    "node_features": {"encoding": "base64-f32le", "data": "..."}   // or a flat list of numbers
//    "edges": [[source, destination], ...],
//    "edge_feature_dim": F, "edge_features": [...],                 // E * F numbers
//    "node_labels": [...], "graph_label": k, "node_values": [...]}  // optional
//
// See docs/graph_format.md.
inline constexpr int kGraphFormatVersion = 1;

enum class FeatureEncoding { Base64, List };

std::string graph_to_json_line(const Graph& graph, FeatureEncoding encoding = FeatureEncoding::Base64);
Graph graph_from_json_line(const std::string& line);

void write_graphs(const std::filesystem::path& path, const std::vector<Graph>& graphs,
                  FeatureEncoding encoding = FeatureEncoding::Base64);
std::vector<Graph> read_graphs(const std::filesystem::path& path);

std::string base64_encode(const unsigned char* bytes, std::size_t size);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace tgx
