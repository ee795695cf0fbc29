#include "tgx/graph_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace tgx {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(const unsigned char* bytes, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const std::uint32_t b0 = bytes[i];
    const std::uint32_t b1 = i + 1 < size ? bytes[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < size ? bytes[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(triple >> 18) & 63]);
    out.push_back(kAlphabet[(triple >> 12) & 63]);
    out.push_back(i + 1 < size ? kAlphabet[(triple >> 6) & 63] : '=');
    out.push_back(i + 2 < size ? kAlphabet[triple & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw GraphError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        v[k] = 0;
        ++pad;
      } else {
        if (pad) throw GraphError("invalid base64 padding");
        v[k] = decode_char(c);
        if (v[k] < 0) throw GraphError("invalid base64 character");
      }
    }
    const std::uint32_t triple = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>(triple >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>((triple >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(triple & 0xff));
  }
  return out;
}

std::string graph_to_json_line(const Graph& g, FeatureEncoding encoding) {
  graph_validate(g);
  json j;
  j["format"] = "tgx-graph";
  j["version"] = kGraphFormatVersion;
  const Shape& s = g.node_features.shape;
  j["node_shape"] = {s[0], s[1], s[2], s[3]};
  if (encoding == FeatureEncoding::Base64) {
    j["node_features"] = {
        {"encoding", "base64-f32le"},
        {"data", base64_encode(reinterpret_cast<const unsigned char*>(g.node_features.values.data()),
                               g.node_features.values.size() * sizeof(float))}};
  } else {
    j["node_features"] = g.node_features.values;
  }
  json edges = json::array();
  for (const Edge& e : g.edges) edges.push_back({e.source, e.destination});
  j["edges"] = std::move(edges);
  j["edge_feature_dim"] = g.edge_feature_dim;
  j["edge_features"] = g.edge_features;
  if (!g.node_labels.empty()) j["node_labels"] = g.node_labels;
  if (g.graph_label) j["graph_label"] = *g.graph_label;
  if (!g.node_values.empty()) j["node_values"] = g.node_values;
  return j.dump();
}

Graph graph_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("graph record is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "tgx-graph") throw GraphError("record is not a tgx-graph");
  if (j.value("version", 0) != kGraphFormatVersion) {
    throw GraphError("unsupported graph record version");
  }
  try {
    Graph g;
    const auto dims = j.at("node_shape").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw GraphError("node_shape must have 4 dims");
    g.node_features.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
    const json& nf = j.at("node_features");
    if (nf.is_array()) {
      g.node_features.values = nf.get<std::vector<float>>();
    } else {
      if (nf.at("encoding") != "base64-f32le") throw GraphError("unknown feature encoding");
      const auto bytes = base64_decode(nf.at("data").get<std::string>());
      if (bytes.size() % sizeof(float) != 0) throw GraphError("feature payload misaligned");
      g.node_features.values.resize(bytes.size() / sizeof(float));
      std::memcpy(g.node_features.values.data(), bytes.data(), bytes.size());
    }
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    g.edge_feature_dim = j.value("edge_feature_dim", std::size_t{0});
    if (j.contains("edge_features")) g.edge_features = j["edge_features"].get<std::vector<float>>();
    if (j.contains("node_labels")) g.node_labels = j["node_labels"].get<std::vector<int>>();
    if (j.contains("graph_label")) g.graph_label = j["graph_label"].get<int>();
    if (j.contains("node_values")) g.node_values = j["node_values"].get<std::vector<double>>();
    graph_validate(g);
    return g;
  } catch (const json::exception& e) {
    throw GraphError(std::string("malformed graph record: ") + e.what());
  }
}

void write_graphs(const std::filesystem::path& path, const std::vector<Graph>& graphs,
                  FeatureEncoding encoding) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& g : graphs) out << graph_to_json_line(g, encoding) << '\n';
}

std::vector<Graph> read_graphs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open " + path.string());
  std::vector<Graph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      graphs.push_back(graph_from_json_line(line));
    } catch (const GraphError& e) {
      throw GraphError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return graphs;
}

}  // namespace tgx
