#include "tgx/train.hpp"

#include <cmath>

#include "json.hpp"

namespace tgx {

using nlohmann::json;

template <typename T>
Adam<T>::Adam(const ParameterSet<T>& params, const AdamConfig& config)
    : params_(params.parameters()), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (const T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
  }
  ++steps_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.lr);
  const T eps = static_cast<T>(config_.epsilon);
  const T wd = static_cast<T>(config_.weight_decay);
  const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(steps_)));
  const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(steps_)));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T> param = params_[k].tensor;
    if (!param.has_grad()) continue;
    const auto grad = param.grad();
    auto value = param.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i] + wd * value[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] / c1;
      const T v_hat = v[i] / c2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

std::string metrics_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  return j.dump();
}

template <typename T>
Trainer<T>::Trainer(const TrainConfig& config) : config_(config), model_(config.model) {
  config_.validate();
  adam_ = Adam<T>(model_.params(), config_.adam);
}

template <typename T>
void Trainer<T>::check_dataset(const GraphDataset& data) const {
  const EncoderConfig& enc = config_.model.encoder;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Graph& g = data[i];
    if (g.node_features.shape[1] != enc.in_channels) {
      throw std::invalid_argument("dataset graph " + std::to_string(i) + " has " +
                                  std::to_string(g.node_features.shape[1]) +
                                  " channels, config expects " + std::to_string(enc.in_channels));
    }
    if (g.edge_feature_dim != config_.model.edge_feature_dim) {
      throw std::invalid_argument("dataset graph " + std::to_string(i) + " has edge_feature_dim " +
                                  std::to_string(g.edge_feature_dim) + ", config expects " +
                                  std::to_string(config_.model.edge_feature_dim));
    }
    if (g.node_shape() != data[0].node_shape()) {
      throw std::invalid_argument("dataset graph " + std::to_string(i) +
                                  " node tensor shape differs from graph 0");
    }
    const auto check_label = [&](int label) {
      if (label < 0 || static_cast<std::size_t>(label) >= config_.model.classes) {
        throw std::invalid_argument("dataset graph " + std::to_string(i) + " has label " +
                                    std::to_string(label) + " outside [0, " +
                                    std::to_string(config_.model.classes) + ")");
      }
    };
    if (config_.target == TargetLevel::Graph) {
      if (!g.graph_label) throw std::invalid_argument("dataset graph " + std::to_string(i) + " has no graph_label");
      check_label(*g.graph_label);
    } else {
      if (g.node_labels.size() != g.num_nodes()) {
        throw std::invalid_argument("dataset graph " + std::to_string(i) + " lacks node_labels");
      }
      for (const int l : g.node_labels) check_label(l);
    }
  }
}

template <typename T>
EpochMetrics Trainer<T>::train_epoch(const GraphDataset& train) {
  if (train.empty()) throw std::invalid_argument("train: empty training set");
  check_dataset(train);
  double loss_sum = 0.0;
  std::size_t correct = 0, count = 0;
  const auto batches =
      train.batches(config_.batch_size, config_.model.seed, state_.epoch, config_.shuffle);
  for (const auto& indices : batches) {
    const GraphBatch batch = train.make_batch(indices);
    reset_tape<T>();
    model_.params().zero_grad();
    ForwardContext ctx{Mode::Train, config_.model.seed, state_.step, config_.model.conv_algo};
    const ModelOutput<T> out = model_.forward(batch, ctx);
    const PredictionBundle<T> bundle = make_bundle(out, batch, config_.target);
    const Tensor<T> loss = model_loss(config_.model, bundle);
    backward(loss);
    adam_.step();
    ++state_.step;
    const auto preds = predict_classes(out, batch, config_.model, config_.target);
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == bundle.targets[i];
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(preds.size());
    count += preds.size();
  }
  reset_tape<T>();
  ++state_.epoch;
  return EpochMetrics{state_.epoch, "train", loss_sum / static_cast<double>(count),
                      static_cast<double>(correct) / static_cast<double>(count)};
}

template <typename T>
EvalResult<T> Trainer<T>::evaluate(const GraphDataset& data) const {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  check_dataset(data);
  NoGradGuard guard;
  EvalResult<T> result;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto batches = data.batches(config_.batch_size, config_.model.seed, 0, false);
  for (const auto& indices : batches) {
    const GraphBatch batch = data.make_batch(indices);
    ForwardContext ctx{Mode::Eval, config_.model.seed, 0, config_.model.conv_algo};
    const ModelOutput<T> out = model_.forward(batch, ctx);
    const PredictionBundle<T> bundle = make_bundle(out, batch, config_.target);
    const Tensor<T> loss = model_loss(config_.model, bundle);
    const auto preds = predict_classes(out, batch, config_.model, config_.target);
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == bundle.targets[i];
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(preds.size());
    result.predictions.insert(result.predictions.end(), preds.begin(), preds.end());
    result.targets.insert(result.targets.end(), bundle.targets.begin(), bundle.targets.end());
  }
  const double n = static_cast<double>(result.predictions.size());
  result.loss = loss_sum / n;
  result.accuracy = static_cast<double>(correct) / n;
  return result;
}

template <typename T>
std::vector<typename Trainer<T>::EpochReport> Trainer<T>::fit(const GraphDataset& train,
                                                              const GraphDataset* val,
                                                              const EpochCallback& on_epoch) {
  std::vector<EpochReport> reports;
  while (state_.epoch < config_.epochs) {
    EpochReport report;
    report.train = train_epoch(train);
    if (val != nullptr && !val->empty()) {
      const EvalResult<T> r = evaluate(*val);
      report.val = EpochMetrics{state_.epoch, "val", r.loss, r.accuracy};
      if (r.loss < state_.best_val_metric) {
        state_.best_val_metric = r.loss;
        state_.best_epoch = state_.epoch;
        report.improved = true;
      }
    }
    reports.push_back(report);
    if (on_epoch && !on_epoch(report)) break;
  }
  return reports;
}

template <typename T>
void append_records(Checkpoint<T>& checkpoint, const std::vector<NamedTensor<T>>& tensors,
                    const std::string& prefix) {
  for (const auto& t : tensors) {
    const auto d = t.tensor.data();
    checkpoint.records.push_back({prefix + t.name, t.tensor.shape(), std::vector<T>(d.begin(), d.end())});
  }
}

template <typename T>
void restore_records(const Checkpoint<T>& checkpoint, const std::vector<NamedTensor<T>>& tensors,
                     const std::string& prefix) {
  for (const auto& t : tensors) {
    const CheckpointRecord<T>* r = checkpoint.find(prefix + t.name);
    if (r == nullptr) throw CheckpointError("checkpoint lacks tensor " + prefix + t.name);
    if (r->shape != t.tensor.shape()) {
      throw CheckpointError("checkpoint tensor " + prefix + t.name + " has shape " +
                            to_string(r->shape) + ", model expects " + to_string(t.tensor.shape()));
    }
    Tensor<T> target = t.tensor;
    std::copy(r->values.begin(), r->values.end(), target.mutable_data().begin());
  }
}

namespace {

template <typename T>
std::vector<NamedTensor<T>> moment_views(const std::vector<NamedTensor<T>>& params,
                                         const std::vector<std::vector<T>>& moments) {
  std::vector<NamedTensor<T>> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    out.push_back({params[k].name, Tensor<T>::from(params[k].tensor.shape(), moments[k])});
  }
  return out;
}

}  // namespace

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  Checkpoint<T> ckpt;
  json meta;
  meta["format"] = "tgx-train-state";
  meta["config"] = config_to_json(config_);
  meta["state"] = {{"epoch", state_.epoch},
                   {"step", state_.step},
                   {"optimizer_steps", adam_.steps()},
                   {"best_epoch", state_.best_epoch}};
  meta["state"]["best_val_metric"] =
      std::isfinite(state_.best_val_metric) ? json(state_.best_val_metric) : json(nullptr);
  ckpt.metadata_json = meta.dump();
  const auto& params = model_.params().parameters();
  append_records(ckpt, params, "param/");
  append_records(ckpt, model_.params().buffers(), "buffer/");
  append_records(ckpt, moment_views(params, adam_.first_moments()), "adam.m/");
  append_records(ckpt, moment_views(params, adam_.second_moments()), "adam.v/");
  save_checkpoint(path, ckpt);
}

TrainConfig checkpoint_config(const std::filesystem::path& path) {
  const std::uint32_t bytes = checkpoint_dtype_bytes(path);
  const std::string meta = bytes == 8 ? load_checkpoint<double>(path).metadata_json
                                      : load_checkpoint<float>(path).metadata_json;
  const json j = json::parse(meta);
  if (!j.contains("config")) throw CheckpointError("checkpoint metadata has no config");
  return config_from_json(j.at("config"));
}

template <typename T>
Trainer<T> Trainer<T>::load(const std::filesystem::path& path) {
  const Checkpoint<T> ckpt = load_checkpoint<T>(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata_json);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (meta.value("format", "") != "tgx-train-state") {
    throw CheckpointError("checkpoint is not a training state");
  }
  Trainer trainer(config_from_json(meta.at("config")));
  const json& st = meta.at("state");
  trainer.state_.epoch = st.at("epoch").get<std::size_t>();
  trainer.state_.step = st.at("step").get<std::uint64_t>();
  trainer.state_.best_epoch = st.at("best_epoch").get<std::size_t>();
  trainer.state_.best_val_metric = st.at("best_val_metric").is_null()
                                       ? std::numeric_limits<double>::infinity()
                                       : st.at("best_val_metric").get<double>();
  trainer.adam_.set_steps(st.at("optimizer_steps").get<std::uint64_t>());
  const auto& params = trainer.model_.params().parameters();
  restore_records(ckpt, params, "param/");
  restore_records(ckpt, trainer.model_.params().buffers(), "buffer/");
  auto& m = trainer.adam_.first_moments();
  auto& v = trainer.adam_.second_moments();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto* rm = ckpt.find("adam.m/" + params[k].name);
    const auto* rv = ckpt.find("adam.v/" + params[k].name);
    if (rm == nullptr || rv == nullptr) {
      throw CheckpointError("checkpoint lacks optimizer moments for " + params[k].name);
    }
    if (rm->values.size() != m[k].size() || rv->values.size() != v[k].size()) {
      throw CheckpointError("optimizer moment size mismatch for " + params[k].name);
    }
    m[k] = rm->values;
    v[k] = rv->values;
  }
  return trainer;
}

#define TGX_INSTANTIATE_TRAIN(T)                                                               \
  template class Adam<T>;                                                                      \
  template class Trainer<T>;                                                                   \
  template void append_records(Checkpoint<T>&, const std::vector<NamedTensor<T>>&,             \
                               const std::string&);                                            \
  template void restore_records(const Checkpoint<T>&, const std::vector<NamedTensor<T>>&,      \
                                const std::string&);

TGX_INSTANTIATE_TRAIN(float)
TGX_INSTANTIATE_TRAIN(double)

#undef TGX_INSTANTIATE_TRAIN

}  // namespace tgx
