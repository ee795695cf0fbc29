#include "tgx/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace tgx {

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.relative_error);
  return worst;
}

namespace {

double probe(const std::function<Tensor<double>()>& forward) {
  NoGradGuard no_grad;
  return forward().item();
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& forward,
                           const std::vector<NamedTensor<double>>& params, double epsilon) {
  GradCheckReport report;
  if (params.empty()) return report;

  const double first = probe(forward);
  const double second = probe(forward);
  if (first != second) {
    throw std::runtime_error("grad_check: forward is not deterministic (" +
                             std::to_string(first) + " vs " + std::to_string(second) + ")");
  }

  auto& tape = Tape<double>::current();
  tape.reset();
  for (const auto& p : params) {
    auto t = p.tensor;
    t.zero_grad();
  }
  Tensor<double> loss = forward();
  backward(loss);
  tape.reset();

  for (const auto& p : params) {
    Tensor<double> t = p.tensor;
    GradCheckEntry entry;
    entry.name = p.name;
    entry.elements = t.numel();
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    double max_diff = 0.0;
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + epsilon;
      const double plus = probe(forward);
      values[i] = original - epsilon;
      const double minus = probe(forward);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
      entry.max_abs_autodiff = std::max(entry.max_abs_autodiff, std::abs(analytic[i]));
    }
    entry.relative_error =
        max_diff / (entry.max_abs_autodiff + entry.max_abs_numeric + epsilon);
    report.entries.push_back(entry);
    t.zero_grad();
  }
  return report;
}

}  // namespace tgx
