#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tgx/tensor.hpp"

namespace tgx {

enum class ConvAlgo { Direct, Im2col };

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  ConvAlgo algo = ConvAlgo::Im2col;
};

// input [n, c_in, h, w], weight [c_out, c_in, k, k], bias [c_out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& options = {});

struct BatchNormOptions {
  Mode mode = Mode::Train;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Per-channel normalization over (n, h, w). Train mode normalizes with batch
// statistics and updates the running buffers in place (unbiased variance);
// eval mode uses the running buffers only.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var,
                       const BatchNormOptions& options);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

// Identifies one dropout draw: masks are a pure function of these counters.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
};

// Inverted dropout. Eval mode and rate 0 return the input unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, const DropoutKey& key);

// Floor semantics: output dims are (h - k) / stride + 1.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride);

// Spatial mean per (n, c); result is [n, c, 1, 1].
template <typename T>
Tensor<T> avg_pool_spatial(const Tensor<T>& input);

// input [n, d], weight [k, d], bias [k] or undefined -> [n, k].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise sum; an empty list yields zeros of `shape`.
template <typename T>
Tensor<T> sum_list(std::span<const Tensor<T>> parts, const Shape& shape);

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor);

// Multiplies row i (first axis) by factors[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& input, std::span<const T> factors);

// out[i] = input[index[i]] along the first axis.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& input, std::span<const std::size_t> index);

// out[index[i]] += input[i]; rows never referenced stay zero.
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& input, std::span<const std::size_t> index,
                           std::size_t rows);

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, const Shape& shape);

// Scalar reductions, result [1, 1, 1, 1].
template <typename T>
Tensor<T> sum(const Tensor<T>& input);

template <typename T>
Tensor<T> mean(const Tensor<T>& input);

}  // namespace tgx
