#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "tgx/encoder.hpp"
#include "tgx/heads.hpp"
#include "tgx/message_passing.hpp"

namespace tgx {

enum class Precision { Single, Double };
// Root: the last node's embedding. Mean/Sum: pooled embeddings. Select: the
// graph logit of class c is the class-c logit of the node whose node label is
// c (absent classes get kAbsentClassLogit).
enum class Readout { Root, Mean, Sum, Select };
inline constexpr double kAbsentClassLogit = -1e4;
enum class TargetLevel { Graph, Node };

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t gnn_layers = 2;
  std::size_t gnn_channels = 0;  // 0 keeps the encoder's output width
  std::size_t aggregator_depth = 1;
  double gnn_dropout = 0.3;
  bool zero_init_last = true;
  Aggregation aggregation = Aggregation::Sum;
  std::size_t edge_feature_dim = 1;
  std::size_t classes = 3;
  Readout readout = Readout::Root;
  bool enable_iou_head = false;
  double head_init_std = 0.01;
  bool mask_absent_classes = true;
  LossConfig loss;
  LossKind loss_kind = LossKind::Composite;
  std::uint64_t seed = 1;
  Precision precision = Precision::Single;
  ConvAlgo conv_algo = ConvAlgo::Im2col;

  std::size_t resolved_gnn_channels() const {
    return gnn_channels == 0 ? encoder.output_channels() : gnn_channels;
  }
  void validate() const;
};

struct AdamConfig {
  double lr = 5.12e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  bool shuffle = true;
  TargetLevel target = TargetLevel::Graph;
  std::size_t node_size = 128;  // detection crops are node_size x node_size
  void validate() const;
};

// Flat key/value view of TrainConfig shared by config files, CLI flags and
// checkpoint metadata.
const std::vector<std::string>& config_keys();
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
nlohmann::json config_value(const TrainConfig& cfg, const std::string& key);

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

// `key = value` lines; '#' starts a comment; unknown keys are errors.
TrainConfig parse_config_text(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
std::string config_to_text(const TrainConfig& cfg);

Precision parse_precision(const std::string& text);
Readout parse_readout(const std::string& text);
TargetLevel parse_target_level(const std::string& text);
ConvAlgo parse_conv_algo(const std::string& text);
std::string to_string(Precision p);
std::string to_string(Readout r);
std::string to_string(TargetLevel t);
std::string to_string(ConvAlgo a);

}  // namespace tgx
