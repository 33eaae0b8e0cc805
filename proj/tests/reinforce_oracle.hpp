#pragma once

// Exhaustive-enumeration check of the REINFORCE estimator on a tiny instance:
// A = 3, K = 1, N = 2, two items per pool. Every (target, q1, e1, q2, e2)
// outcome is enumerated, E[R] is formed exactly and differentiated by central
// finite differences; the sampled estimator is the negated gradient of
// loss_reinforce, averaged over episodes and compared along fixed directions.

#include <cmath>
#include <vector>

#include "markovtype/trainer.hpp"
#include "test_support.hpp"

namespace markovtype::testing {

struct DirectionCheck {
  double exact = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double z() const { return standard_error > 0.0 ? std::abs(estimate - exact) / standard_error : HUGE_VAL; }
};

struct UnbiasednessResult {
  DiscountKind kind = DiscountKind::linear;
  double exact_norm = 0.0;
  double fd_disagreement = 0.0;  // relative gap between two finite-difference step sizes
  std::vector<DirectionCheck> directions;  // [0] is the exact gradient direction
};

struct ReinforceInstance {
  ModelConfig cfg = tiny_model(3, 1, 2);
  ParamStore<double> params;
  ResponsePool<double> pool;

  explicit ReinforceInstance(std::uint64_t seed) : params(init_markovtype<double>(cfg, seed)) {
    std::mt19937_64 gen(seed + 7);
    randomize(params, gen, 0.6);
    pool = synth_pools(SynthConfig{cfg.channels, cfg.samples, 1.0, 2, 2, seed}).cast<double>();
  }

  double expected_return(const DiscountSpec& discount) const {
    const int A = cfg.alphabet;
    double total = 0.0;
    for (int t = 0; t < A; ++t) {
      for (int q1 = 0; q1 < A; ++q1) {
        for (Index e1 = 0; e1 < 2; ++e1) {
          for (int q2 = 0; q2 < A; ++q2) {
            for (Index e2 = 0; e2 < 2; ++e2) {
              TrialTrace<double> rec;
              rec.target = t;
              rec.steps.resize(2);
              rec.steps[0].query = {q1};
              rec.steps[0].responses = {{q1 == t, e1}};
              rec.steps[1].query = {q2};
              rec.steps[1].responses = {{q2 == t, e2}};
              const TrialTrace<double> tr = replay_trial(params, cfg, pool, rec);
              const double pi2 = std::exp(query_log_prob(tr.steps[0].belief, Query{q2}));
              const double prob = (1.0 / A) * (1.0 / A) * 0.5 * pi2 * 0.5;
              total += prob * per_sequence_rewards(tr, t, discount).to_go[0];
            }
          }
        }
      }
    }
    return total;
  }

  std::vector<double> exact_gradient(const DiscountSpec& discount, double step) {
    std::vector<double> g;
    for (auto& [name, p] : params) {
      for (Index i = 0; i < p.value.size(); ++i) {
        double& w = p.value.values()[i];
        const double saved = w;
        w = saved + step;
        const double up = expected_return(discount);
        w = saved - step;
        const double down = expected_return(discount);
        w = saved;
        g.push_back((up - down) / (2.0 * step));
      }
    }
    return g;
  }

  std::vector<double> flat_grads() const {
    std::vector<double> g;
    for (const auto& [name, p] : params) {
      for (Index i = 0; i < p.grad.size(); ++i) g.push_back(p.grad.values()[i]);
    }
    return g;
  }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<UnbiasednessResult> reinforce_unbiasedness(int episodes, std::uint64_t seed,
                                                             int random_directions = 3) {
  ReinforceInstance inst(seed);
  const Index P = inst.params.num_values();

  std::vector<UnbiasednessResult> results;
  std::vector<std::vector<std::vector<double>>> dirs;  // per discount, per direction
  std::mt19937_64 gen(seed + 11);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> shared(static_cast<std::size_t>(random_directions), std::vector<double>(P));
  for (auto& d : shared) {
    for (double& x : d) x = normal(gen);
    const double n = std::sqrt(dot(d, d));
    for (double& x : d) x /= n;
  }

  for (const DiscountKind kind : kAllDiscounts) {
    const DiscountSpec discount{kind, inst.cfg.sequences};
    UnbiasednessResult r;
    r.kind = kind;
    const std::vector<double> exact = inst.exact_gradient(discount, 1e-6);
    const std::vector<double> coarse = inst.exact_gradient(discount, 1e-5);
    r.exact_norm = std::sqrt(dot(exact, exact));
    std::vector<double> gap(exact.size());
    for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = exact[i] - coarse[i];
    r.fd_disagreement = std::sqrt(dot(gap, gap)) / std::max(r.exact_norm, 1e-12);

    std::vector<std::vector<double>> d;
    std::vector<double> unit = exact;
    for (double& x : unit) x /= std::max(r.exact_norm, 1e-300);
    d.push_back(unit);
    for (const auto& s : shared) d.push_back(s);
    for (const auto& v : d) r.directions.push_back({dot(exact, v), 0.0, 0.0});
    dirs.push_back(std::move(d));
    results.push_back(std::move(r));
  }

  const std::size_t D = results[0].directions.size();
  std::vector<std::vector<double>> sum(results.size(), std::vector<double>(D, 0.0));
  std::vector<std::vector<double>> sum2 = sum;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_stream(seed, {0xe5, static_cast<std::uint64_t>(e)});
    const int target = static_cast<int>(uniform_index(rng, inst.cfg.alphabet));
    TrialTape<double> tape;
    const TrialTrace<double> trace = run_trial(inst.params, inst.cfg, inst.pool, target, rng, &tape);
    for (std::size_t k = 0; k < results.size(); ++k) {
      const DiscountSpec discount{results[k].kind, inst.cfg.sequences};
      const RewardTrack track = per_sequence_rewards(trace, target, discount);
      TrialGradient<double> grad(trace.steps.size());
      loss_reinforce(track, trace, &grad);
      inst.params.zero_grads();
      trial_backward(inst.params, inst.cfg, trace, tape, grad);
      const std::vector<double> g = inst.flat_grads();
      for (std::size_t j = 0; j < D; ++j) {
        const double x = -dot(g, dirs[k][j]);
        sum[k][j] += x;
        sum2[k][j] += x * x;
      }
    }
  }
  for (std::size_t k = 0; k < results.size(); ++k) {
    for (std::size_t j = 0; j < D; ++j) {
      const double mean = sum[k][j] / episodes;
      const double var = (sum2[k][j] / episodes - mean * mean) * episodes / (episodes - 1.0);
      results[k].directions[j].estimate = mean;
      results[k].directions[j].standard_error = std::sqrt(std::max(var, 0.0) / episodes);
    }
  }
  return results;
}

}  // namespace markovtype::testing
