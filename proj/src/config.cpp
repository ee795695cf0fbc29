#include "tgx/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tgx {

using nlohmann::json;

Precision parse_precision(const std::string& text) {
  if (text == "single" || text == "float") return Precision::Single;
  if (text == "double") return Precision::Double;
  throw std::invalid_argument("unknown precision: " + text);
}

Readout parse_readout(const std::string& text) {
  if (text == "root") return Readout::Root;
  if (text == "mean") return Readout::Mean;
  if (text == "sum") return Readout::Sum;
  if (text == "select") return Readout::Select;
  throw std::invalid_argument("unknown readout: " + text);
}

TargetLevel parse_target_level(const std::string& text) {
  if (text == "graph") return TargetLevel::Graph;
  if (text == "node") return TargetLevel::Node;
  throw std::invalid_argument("unknown target_level: " + text);
}

ConvAlgo parse_conv_algo(const std::string& text) {
  if (text == "im2col") return ConvAlgo::Im2col;
  if (text == "direct") return ConvAlgo::Direct;
  throw std::invalid_argument("unknown conv_algo: " + text);
}

std::string to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

std::string to_string(Readout r) {
  switch (r) {
    case Readout::Root: return "root";
    case Readout::Mean: return "mean";
    case Readout::Sum: return "sum";
    case Readout::Select: return "select";
  }
  return "root";
}

std::string to_string(TargetLevel t) { return t == TargetLevel::Graph ? "graph" : "node"; }
std::string to_string(ConvAlgo a) { return a == ConvAlgo::Im2col ? "im2col" : "direct"; }

void ModelConfig::validate() const {
  encoder.validate();
  if (gnn_layers < 1) throw std::invalid_argument("gnn_layers must be >= 1");
  if (aggregator_depth < 1) throw std::invalid_argument("aggregator_depth must be >= 1");
  if (!(gnn_dropout >= 0.0 && gnn_dropout < 1.0)) {
    throw std::invalid_argument("gnn_dropout must be in [0, 1)");
  }
  if (classes < 2) throw std::invalid_argument("classes must be >= 2");
  if (!(head_init_std > 0.0)) throw std::invalid_argument("head_init_std must be positive");
  loss.validate();
  if (loss_kind == LossKind::IouComposite) {
    if (loss.alpha == 0.0 && loss.beta == 0.0) {
      throw std::invalid_argument("iou_composite loss needs alpha or beta positive");
    }
    if (loss.beta > 0.0 && !enable_iou_head) {
      throw std::invalid_argument("iou_composite loss with beta > 0 needs enable_iou_head");
    }
  }
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
}

void TrainConfig::validate() const {
  model.validate();
  adam.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (node_size < 1) throw std::invalid_argument("node_size must be >= 1");
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw std::invalid_argument(key + ": empty list entry");
    out.push_back(to_uint(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

struct KeySpec {
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define TGX_NUM_KEY(name, field, conv, type)                                                   \
  {name,                                                                                       \
   {[](const TrainConfig& c) { return json(c.field); },                                        \
    [](TrainConfig& c, const std::string& v) { c.field = static_cast<type>(conv(name, v)); }}}

#define TGX_ENUM_KEY(name, field, parse)                                                       \
  {name,                                                                                       \
   {[](const TrainConfig& c) { return json(to_string(c.field)); },                             \
    [](TrainConfig& c, const std::string& v) { c.field = parse(v); }}}

const std::vector<std::pair<std::string, KeySpec>>& key_table() {
  static const std::vector<std::pair<std::string, KeySpec>> table = {
      TGX_NUM_KEY("seed", model.seed, to_uint, std::uint64_t),
      TGX_ENUM_KEY("precision", model.precision, parse_precision),
      TGX_ENUM_KEY("conv_algo", model.conv_algo, parse_conv_algo),
      TGX_NUM_KEY("epochs", epochs, to_uint, std::size_t),
      TGX_NUM_KEY("batch_size", batch_size, to_uint, std::size_t),
      TGX_NUM_KEY("shuffle", shuffle, to_bool, bool),
      TGX_ENUM_KEY("target_level", target, parse_target_level),
      TGX_NUM_KEY("node_size", node_size, to_uint, std::size_t),
      TGX_NUM_KEY("in_channels", model.encoder.in_channels, to_uint, std::size_t),
      TGX_NUM_KEY("use_preencoder", model.encoder.use_preencoder, to_bool, bool),
      TGX_NUM_KEY("pre_channels", model.encoder.pre_channels, to_uint, std::size_t),
      {"encoder_channels",
       {[](const TrainConfig& c) { return json(c.model.encoder.channels); },
        [](TrainConfig& c, const std::string& v) {
          c.model.encoder.channels = to_list("encoder_channels", v);
        }}},
      TGX_NUM_KEY("encoder_dropout", model.encoder.dropout_rate, to_double, double),
      TGX_NUM_KEY("pool_min_spatial", model.encoder.pool_min_spatial, to_uint, std::size_t),
      TGX_NUM_KEY("gnn_layers", model.gnn_layers, to_uint, std::size_t),
      TGX_NUM_KEY("gnn_channels", model.gnn_channels, to_uint, std::size_t),
      TGX_NUM_KEY("aggregator_depth", model.aggregator_depth, to_uint, std::size_t),
      TGX_NUM_KEY("gnn_dropout", model.gnn_dropout, to_double, double),
      TGX_NUM_KEY("zero_init_last", model.zero_init_last, to_bool, bool),
      TGX_ENUM_KEY("aggregation", model.aggregation, parse_aggregation),
      TGX_NUM_KEY("edge_feature_dim", model.edge_feature_dim, to_uint, std::size_t),
      TGX_NUM_KEY("classes", model.classes, to_uint, std::size_t),
      TGX_ENUM_KEY("readout", model.readout, parse_readout),
      TGX_NUM_KEY("enable_iou_head", model.enable_iou_head, to_bool, bool),
      TGX_NUM_KEY("head_init_std", model.head_init_std, to_double, double),
      TGX_NUM_KEY("mask_absent_classes", model.mask_absent_classes, to_bool, bool),
      TGX_ENUM_KEY("loss", model.loss_kind, parse_loss_kind),
      TGX_NUM_KEY("alpha", model.loss.alpha, to_double, double),
      TGX_NUM_KEY("beta", model.loss.beta, to_double, double),
      TGX_NUM_KEY("gamma", model.loss.gamma, to_double, double),
      TGX_NUM_KEY("lr", adam.lr, to_double, double),
      TGX_NUM_KEY("beta1", adam.beta1, to_double, double),
      TGX_NUM_KEY("beta2", adam.beta2, to_double, double),
      TGX_NUM_KEY("adam_epsilon", adam.epsilon, to_double, double),
      TGX_NUM_KEY("weight_decay", adam.weight_decay, to_double, double),
  };
  return table;
}

#undef TGX_NUM_KEY
#undef TGX_ENUM_KEY

const KeySpec& spec_for(const std::string& key) {
  for (const auto& [name, spec] : key_table()) {
    if (name == key) return spec;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

std::string json_to_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ",";
      out += json_to_text(item);
    }
    return out;
  }
  return v.dump();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& entry : key_table()) out.push_back(entry.first);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  spec_for(key).set(cfg, value);
}

json config_value(const TrainConfig& cfg, const std::string& key) { return spec_for(key).get(cfg); }

json config_to_json(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& [name, spec] : key_table()) j[name] = spec.get(cfg);
  return j;
}

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config json must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) set_config_value(cfg, key, json_to_text(value));
  return cfg;
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, spec] : key_table()) out += name + " = " + json_to_text(spec.get(cfg)) + "\n";
  return out;
}

}  // namespace tgx
