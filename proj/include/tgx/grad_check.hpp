#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tgx/tensor.hpp"

namespace tgx {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_abs_autodiff = 0.0;
  double max_abs_numeric = 0.0;
  // ||g_ad - g_fd||_inf / (||g_ad||_inf + ||g_fd||_inf + epsilon)
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_relative_error() const;
  bool passed(double tolerance) const { return max_relative_error() < tolerance; }
};

// Compares reverse-mode gradients against central differences for every
// element of every parameter. `forward` must rebuild the scalar loss from the
// current parameter values and must be deterministic; a forward that returns
// two different values for the same parameters is rejected.
GradCheckReport grad_check(const std::function<Tensor<double>()>& forward,
                           const std::vector<NamedTensor<double>>& params, double epsilon = 1e-5);

}  // namespace tgx
