#pragma once

#include <cmath>
#include <map>
#include <string>

#include "markovtype/tensor.hpp"

namespace markovtype {

/// Adam optimizer state. Moments are created lazily, zero-initialized, the
/// first time a parameter is stepped.
template <typename Scalar>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::map<std::string, Vector<Scalar>> first_moment;
  std::map<std::string, Vector<Scalar>> second_moment;
};

// Bias-corrected Adam update applied in place to every parameter of the store.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, AdamState<Scalar>& state) {
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const Scalar correction1 = Scalar(1.0 - std::pow(state.beta1, t));
  const Scalar correction2 = Scalar(1.0 - std::pow(state.beta2, t));
  const Scalar b1 = Scalar(state.beta1);
  const Scalar b2 = Scalar(state.beta2);
  const Scalar lr = Scalar(state.learning_rate);
  const Scalar eps = Scalar(state.epsilon);

  for (auto& [name, p] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != p.value.size()) {
      m = Vector<Scalar>::Zero(p.value.size());
      v = Vector<Scalar>::Zero(p.value.size());
    }
    const auto& g = p.grad.values();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    p.value.values().array() -=
        lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

inline void check_decay_factor(double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("learning-rate decay factor must lie in (0, 1]");
}

template <typename Scalar>
void decay_lr(AdamState<Scalar>& state, double factor) {
  check_decay_factor(factor);
  state.learning_rate *= factor;
}

}  // namespace markovtype
