#include "tgx/layers.hpp"

#include <algorithm>

namespace tgx {

template <typename T>
void ParameterSet<T>::check_unique(const std::string& name) const {
  auto same = [&](const NamedTensor<T>& e) { return e.name == name; };
  if (std::any_of(parameters_.begin(), parameters_.end(), same) ||
      std::any_of(buffers_.begin(), buffers_.end(), same)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

template <typename T>
Tensor<T> ParameterSet<T>::add_parameter(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  tensor.set_requires_grad(true);
  parameters_.push_back({name, tensor});
  return tensor;
}

template <typename T>
Tensor<T> ParameterSet<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  tensor.set_requires_grad(false);
  buffers_.push_back({name, tensor});
  return tensor;
}

template <typename T>
std::optional<Tensor<T>> ParameterSet<T>::find(std::string_view name) const {
  for (const auto* list : {&parameters_, &buffers_}) {
    for (const auto& e : *list) {
      if (e.name == name) return e.tensor;
    }
  }
  return std::nullopt;
}

template <typename T>
std::size_t ParameterSet<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters_) total += p.tensor.numel();
  return total;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel, std::size_t padding,
                  bool with_bias, Rng& rng)
    : padding_(padding) {
  auto w = Tensor<T>::zeros(Shape{out_channels, in_channels, kernel, kernel});
  he_normal_fill(w.mutable_data(), in_channels * kernel * kernel, rng);
  weight_ = params.add_parameter(name + ".weight", w);
  if (with_bias) bias_ = params.add_parameter(name + ".bias", Tensor<T>::zeros(vector_shape(out_channels)));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) const {
  return conv2d(x, weight_, bias_, Conv2dOptions{1, padding_, ctx.conv_algo});
}

template <typename T>
void Conv2d<T>::zero_init() {
  auto w = weight_.mutable_data();
  std::fill(w.begin(), w.end(), T(0));
  if (bias_.defined()) {
    auto b = bias_.mutable_data();
    std::fill(b.begin(), b.end(), T(0));
  }
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParameterSet<T>& params, const std::string& name,
                            std::size_t channels) {
  gamma_ = params.add_parameter(name + ".gamma", Tensor<T>::full(vector_shape(channels), T(1)));
  beta_ = params.add_parameter(name + ".beta", Tensor<T>::zeros(vector_shape(channels)));
  running_mean_ = params.add_buffer(name + ".running_mean", Tensor<T>::zeros(vector_shape(channels)));
  running_var_ = params.add_buffer(name + ".running_var", Tensor<T>::full(vector_shape(channels), T(1)));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) const {
  Tensor<T> mean_buf = running_mean_;
  Tensor<T> var_buf = running_var_;
  return batch_norm2d(x, gamma_, beta_, mean_buf, var_buf,
                      BatchNormOptions{ctx.mode, kMomentum, kEpsilon});
}

template <typename T>
Linear<T>::Linear(ParameterSet<T>& params, const std::string& name, std::size_t in_features,
                  std::size_t out_features, Rng& rng, std::optional<double> init_std) {
  auto w = Tensor<T>::zeros(matrix_shape(out_features, in_features));
  if (init_std) {
    normal_fill(w.mutable_data(), *init_std, rng);
  } else {
    he_normal_fill(w.mutable_data(), in_features, rng);
  }
  weight_ = params.add_parameter(name + ".weight", w);
  bias_ = params.add_parameter(name + ".bias", Tensor<T>::zeros(vector_shape(out_features)));
}

Dropout::Dropout(double rate, std::uint64_t layer_id) : rate_(rate), layer_id_(layer_id) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace tgx
