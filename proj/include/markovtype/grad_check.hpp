#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "markovtype/tensor.hpp"

namespace markovtype {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst;  // name of the tensor with the largest error
};

/// Compares analytic gradients against central finite differences.
///
/// `forward()` returns the scalar loss for the current parameter values and
/// input contents. `backward()` must zero nothing itself; grad_check zeroes the
/// store, calls it once, and expects it to fill parameter gradients and return
/// one gradient per entry of `inputs` (same order).
///
/// The error of one tensor is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, floor); the report carries the maximum over all parameters and
/// inputs.
template <typename Scalar, typename Forward, typename Backward>
GradCheckReport grad_check(ParamStore<Scalar>& params, const std::vector<Matrix<Scalar>*>& inputs, Forward&& forward,
                           Backward&& backward, Scalar step = Scalar(-1), double floor = -1.0) {
  constexpr bool single = std::is_same_v<Scalar, float>;
  if (step <= Scalar(0)) step = single ? Scalar(1e-3) : Scalar(1e-6);
  if (floor < 0.0) floor = single ? 1e-3 : 1e-7;

  params.zero_grads();
  const std::vector<Matrix<Scalar>> input_grads = backward();

  GradCheckReport report;
  auto compare = [&](const std::string& name, Scalar* values, Index n, const Scalar* analytic) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Scalar saved = values[i];
      values[i] = saved + step;
      const double up = static_cast<double>(forward());
      values[i] = saved - step;
      const double down = static_cast<double>(forward());
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[i]);
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    const double err = std::sqrt(diff2) / denom;
    if (err > report.max_relative_error || report.worst.empty()) {
      report.max_relative_error = std::max(report.max_relative_error, err);
      if (err >= report.max_relative_error) report.worst = name;
    }
  };

  for (auto& [name, p] : params) {
    const Vector<Scalar> analytic = p.grad.values();
    compare(name, p.value.data(), p.value.size(), analytic.data());
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix<Scalar>& g = input_grads.at(k);
    if (g.rows() != inputs[k]->rows() || g.cols() != inputs[k]->cols()) {
      throw DimensionError("grad_check: input gradient " + std::to_string(k) + " has the wrong shape");
    }
    compare("input" + std::to_string(k), inputs[k]->data(), inputs[k]->size(), g.data());
  }
  return report;
}

}  // namespace markovtype
