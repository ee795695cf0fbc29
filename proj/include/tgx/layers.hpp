#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgx/grad_check.hpp"
#include "tgx/ops.hpp"
#include "tgx/random.hpp"

namespace tgx {

// Everything a layer needs besides its input: train/eval switch, the root
// seed for dropout masks, the global optimizer step, and the conv kernel path.
struct ForwardContext {
  Mode mode = Mode::Eval;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  ConvAlgo conv_algo = ConvAlgo::Im2col;
};

// Named registry of a model's learnable parameters and non-learnable buffers
// (batch-norm running statistics). Names are unique across both lists.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add_parameter(const std::string& name, Tensor<T> tensor);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> tensor);

  const std::vector<NamedTensor<T>>& parameters() const { return parameters_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }
  std::optional<Tensor<T>> find(std::string_view name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  // Dropout sites draw distinct ids so their masks are independent.
  std::uint64_t next_layer_id() { return next_layer_id_++; }

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensor<T>> parameters_;
  std::vector<NamedTensor<T>> buffers_;
  std::uint64_t next_layer_id_ = 1;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in_channels,
         std::size_t out_channels, std::size_t kernel, std::size_t padding, bool with_bias,
         Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) const;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  std::size_t in_channels() const { return weight_.dim(1); }
  std::size_t out_channels() const { return weight_.dim(0); }

  void zero_init();

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::size_t padding_ = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet<T>& params, const std::string& name, std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) const;

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  // Weight ~ N(0, init_std^2) when init_std is given, He-normal otherwise.
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in_features,
         std::size_t out_features, Rng& rng, std::optional<double> init_std = std::nullopt);

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight_, bias_); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, std::uint64_t layer_id);

  template <typename T>
  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) const {
    return dropout(x, rate_, ctx.mode, DropoutKey{ctx.seed, layer_id_, ctx.step});
  }

  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  std::uint64_t layer_id_ = 0;
};

}  // namespace tgx
