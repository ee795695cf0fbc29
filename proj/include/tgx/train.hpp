#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tgx/checkpoint.hpp"
#include "tgx/model.hpp"

namespace tgx {

// Bias-corrected Adam over every parameter of a ParameterSet. Parameters that
// received no gradient in a step are left untouched, moments included.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet<T>& params, const AdamConfig& config);

  // Throws NumericError naming the parameter when a gradient is NaN/Inf.
  void step();

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<NamedTensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

// {"epoch":..,"split":..,"loss":..,"accuracy":..} with round-trip number formatting.
std::string metrics_line(const EpochMetrics& m);

// Dropout masks derive from (seed, step) and shuffles from (seed, epoch), so
// these counters are the whole random state.
struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  double best_val_metric = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

template <typename T>
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<int> targets;
};

template <typename T>
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  // Only the epoch budget may change after construction.
  void set_epochs(std::size_t epochs) { config_.epochs = epochs; }
  TGraphXModel<T>& model() { return model_; }
  const TGraphXModel<T>& model() const { return model_; }
  Adam<T>& optimizer() { return adam_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  // One pass over `train` in train mode with Adam updates.
  EpochMetrics train_epoch(const GraphDataset& train);

  // Eval-mode pass without gradient recording.
  EvalResult<T> evaluate(const GraphDataset& data) const;

  struct EpochReport {
    EpochMetrics train;
    std::optional<EpochMetrics> val;
    bool improved = false;
  };
  using EpochCallback = std::function<bool(const EpochReport&)>;  // false stops training

  // Trains until state().epoch reaches config().epochs or the callback stops it.
  std::vector<EpochReport> fit(const GraphDataset& train, const GraphDataset* val,
                               const EpochCallback& on_epoch = {});

  void save(const std::filesystem::path& path) const;
  static Trainer load(const std::filesystem::path& path);

 private:
  void check_dataset(const GraphDataset& data) const;

  TrainConfig config_;
  TGraphXModel<T> model_;
  Adam<T> adam_;
  TrainState state_;
};

// Precision and config stored in a checkpoint, read without loading tensors.
TrainConfig checkpoint_config(const std::filesystem::path& path);

// Writes parameters and buffers of `params` into `checkpoint` with the given prefixes.
template <typename T>
void append_records(Checkpoint<T>& checkpoint, const std::vector<NamedTensor<T>>& tensors,
                    const std::string& prefix);

// Copies matching records back; throws CheckpointError on missing or misshapen entries.
template <typename T>
void restore_records(const Checkpoint<T>& checkpoint, const std::vector<NamedTensor<T>>& tensors,
                     const std::string& prefix);

}  // namespace tgx
