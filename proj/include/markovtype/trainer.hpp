#pragma once

// Rewards, discounts, the hybrid supervised + REINFORCE loss and the training
// loop for the recursive classifier.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "markovtype/adam.hpp"
#include "markovtype/eval.hpp"
#include "markovtype/model.hpp"

namespace markovtype {

enum class DiscountKind { linear, inv, inv2, inv3 };

inline std::string to_string(DiscountKind kind) {
  switch (kind) {
    case DiscountKind::linear: return "linear";
    case DiscountKind::inv: return "inv";
    case DiscountKind::inv2: return "inv2";
    case DiscountKind::inv3: return "inv3";
  }
  return "linear";
}

inline DiscountKind parse_discount(const std::string& name) {
  if (name == "linear") return DiscountKind::linear;
  if (name == "inv") return DiscountKind::inv;
  if (name == "inv2") return DiscountKind::inv2;
  if (name == "inv3") return DiscountKind::inv3;
  throw ConfigError("unknown discount '" + name + "' (expected linear, inv, inv2 or inv3)");
}

inline constexpr DiscountKind kAllDiscounts[] = {DiscountKind::linear, DiscountKind::inv, DiscountKind::inv2,
                                                 DiscountKind::inv3};

// Tuned lambda per discount kind.
inline double default_lambda(DiscountKind kind) {
  switch (kind) {
    case DiscountKind::linear: return 0.02;
    case DiscountKind::inv: return 0.02;
    case DiscountKind::inv2: return 0.01;
    case DiscountKind::inv3: return 0.1;
  }
  return 0.02;
}

// The lambda search grid 0.01, 0.02, ..., 0.10.
inline std::vector<double> lambda_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(i / 100.0);
  return grid;
}

struct DiscountSpec {
  DiscountKind kind = DiscountKind::linear;
  int sequences = 10;

  // d(n) for 1-based n.
  double operator()(int n) const {
    const double N = sequences;
    switch (kind) {
      case DiscountKind::linear: return (2.0 * N - n - 1.0) / N;
      case DiscountKind::inv: return 1.0 / n;
      case DiscountKind::inv2: return 1.0 / (static_cast<double>(n) * n);
      case DiscountKind::inv3: return 1.0 / (static_cast<double>(n) * n * n);
    }
    return 0.0;
  }

  void validate() const {
    if (sequences < 1) throw ConfigError("discount: N must be >= 1");
    // (2N - N - 1) / N vanishes at N = 1.
    if (kind == DiscountKind::linear && sequences < 2) throw ConfigError("linear discount needs N >= 2");
  }
};

struct RewardTrack {
  std::vector<double> raw;         // r_n in {0, 1}
  std::vector<double> discounted;  // r_n d(n)
  std::vector<double> to_go;       // R_n = sum_{m >= n} r_m d(m)
};

/// r_n = 1 iff argmax p_n (lowest index on ties) is the target.
template <typename Scalar>
RewardTrack per_sequence_rewards(const TrialTrace<Scalar>& trace, int target, const DiscountSpec& discount) {
  const std::size_t N = trace.steps.size();
  RewardTrack track{std::vector<double>(N), std::vector<double>(N), std::vector<double>(N)};
  for (std::size_t n = 0; n < N; ++n) {
    track.raw[n] = argmax(trace.steps[n].belief) == target ? 1.0 : 0.0;
    track.discounted[n] = track.raw[n] * discount(static_cast<int>(n) + 1);
  }
  double acc = 0.0;
  for (std::size_t n = N; n-- > 0;) {
    acc += track.discounted[n];
    track.to_go[n] = acc;
  }
  return track;
}

// ---------------------------------------------------------------------------
// Losses. Each takes an optional gradient sink and a weight applied to the
// gradient it contributes.

/// -ln p_{N,t}.
template <typename Scalar>
double loss_action(const TrialTrace<Scalar>& trace, int target, TrialGradient<Scalar>* grad = nullptr,
                   double weight = 1.0) {
  const auto& last = trace.steps.back();
  double value;
  if (last.logits.size() != 0) {
    const Vector<double> z = last.logits.template cast<double>();
    const double m = z.maxCoeff();
    value = -(z[target] - m - std::log((z.array() - m).exp().sum()));
  } else {
    value = -std::log(static_cast<double>(last.belief[target]));
  }
  if (grad) {
    Vector<Scalar> g = last.belief;
    g[target] -= Scalar(1);
    grad->add_logits(trace.steps.size() - 1, Scalar(weight) * g);
  }
  return value;
}

/// (1/N) sum_n (R_n - b_n)^2. Gradient reaches the baseline head only.
template <typename Scalar>
double loss_baseline(const RewardTrack& track, const TrialTrace<Scalar>& trace, TrialGradient<Scalar>* grad = nullptr,
                     double weight = 1.0) {
  const std::size_t N = trace.steps.size();
  if (track.to_go.size() != N) throw DimensionError("loss_baseline: reward track and trace lengths differ");
  double value = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double residual = track.to_go[n] - static_cast<double>(trace.steps[n].baseline);
    value += residual * residual;
    if (grad) grad->d_baseline[n] += Scalar(-2.0 * weight * residual / static_cast<double>(N));
  }
  return value / static_cast<double>(N);
}

/// -sum_n log pi_n (R_n - b_n) with the advantage held constant. The first
/// query is drawn from the fixed uniform prior and carries no parameter
/// gradient.
template <typename Scalar>
double loss_reinforce(const RewardTrack& track, const TrialTrace<Scalar>& trace, TrialGradient<Scalar>* grad = nullptr,
                      double weight = 1.0) {
  const std::size_t N = trace.steps.size();
  if (track.to_go.size() != N) throw DimensionError("loss_reinforce: reward track and trace lengths differ");
  double value = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double advantage = track.to_go[n] - static_cast<double>(trace.steps[n].baseline);
    value -= static_cast<double>(trace.steps[n].log_prob) * advantage;
    if (grad && n > 0 && advantage != 0.0) {
      const Vector<Scalar>& prior = trace.steps[n - 1].belief;
      const Vector<Scalar> d_prior = Scalar(-weight * advantage) * query_log_prob_grad(prior, trace.steps[n].query);
      grad->add_logits(n - 1, softmax_backward(prior, d_prior));
    }
  }
  return value;
}

inline double loss_total(double action, double baseline, double reinforce, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  return action + lambda * (baseline + reinforce);
}

struct TrialLosses {
  double action = 0.0;
  double baseline = 0.0;
  double reinforce = 0.0;
  double total = 0.0;
};

/// All three terms for one trial; gradients of weight * total go to `grad`.
template <typename Scalar>
TrialLosses hybrid_loss(const TrialTrace<Scalar>& trace, const DiscountSpec& discount, double lambda,
                        TrialGradient<Scalar>* grad = nullptr, double weight = 1.0) {
  const RewardTrack track = per_sequence_rewards(trace, trace.target, discount);
  TrialLosses out;
  out.action = loss_action(trace, trace.target, grad, weight);
  out.baseline = loss_baseline(track, trace, grad, weight * lambda);
  out.reinforce = loss_reinforce(track, trace, grad, weight * lambda);
  out.total = loss_total(out.action, out.baseline, out.reinforce, lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  double decay = 0.97;
  int batch = 28;
  int episodes = 1;
  double lambda = 0.02;
  DiscountKind discount = DiscountKind::linear;
  std::uint64_t seed = 0;
  int batches_per_epoch = 20;
  int val_trials = 280;
  double val_fraction = 0.1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    check_decay_factor(decay);
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (episodes != 1) throw ConfigError("train: only M = 1 episode per trial is supported");
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
    if (batches_per_epoch < 1) throw ConfigError("train: batches per epoch must be >= 1");
    if (val_trials < 1) throw ConfigError("train: validation trials must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: validation fraction must lie in (0, 1)");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  ParamStore<float> params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// No-threshold accuracy at sequence N on `pool`.
inline double validation_accuracy(const ParamStore<float>& params, const ModelConfig& cfg,
                                  const ResponsePool<float>& pool, int trials, std::uint64_t seed) {
  MarkovTypeDecoder decoder(params, cfg);
  SessionConfig session{trials, 1.0, cfg.sequences, cfg.query_size, seed};
  return sweep_no_threshold(decoder, pool, session).back();
}

/// One optimizer step per batch of simulated trials (targets uniform over the
/// alphabet), learning-rate decay per epoch, validation on held-out pool items.
inline TrainResult train_markovtype(const ResponsePool<float>& pool, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                    const EpochCallback& on_epoch = {}) {
  mcfg.validate();
  tcfg.validate();
  pool.validate();
  const DiscountSpec discount{tcfg.discount, mcfg.sequences};
  discount.validate();
  auto [train_pool, val_pool] = split_pool(pool, tcfg.val_fraction, tcfg.seed);

  TrainResult result{init_markovtype<float>(mcfg, tcfg.seed), {}};
  ParamStore<float>& params = result.params;
  AdamState<float> adam;
  adam.learning_rate = tcfg.learning_rate;
  const double weight = 1.0 / tcfg.batch;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int b = 0; b < tcfg.batches_per_epoch; ++b) {
      params.zero_grads();
      double batch_loss = 0.0;
      for (int i = 0; i < tcfg.batch; ++i) {
        Rng rng = make_stream(tcfg.seed, {0x7a11, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b),
                                          static_cast<std::uint64_t>(i)});
        const int target = static_cast<int>(uniform_index(rng, mcfg.alphabet));
        TrialTape<float> tape;
        const TrialTrace<float> trace = run_trial(params, mcfg, train_pool, target, rng, &tape);
        TrialGradient<float> grad(trace.steps.size());
        batch_loss += hybrid_loss(trace, discount, tcfg.lambda, &grad, weight).total * weight;
        trial_backward(params, mcfg, trace, tape, grad);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(b + 1));
      }
      adam_step(params, adam);
      epoch_loss += batch_loss;
    }
    EpochRecord record{epoch + 1, epoch_loss / tcfg.batches_per_epoch, 0.0, adam.learning_rate};
    decay_lr(adam, tcfg.decay);
    record.val_accuracy =
        validation_accuracy(params, mcfg, val_pool, tcfg.val_trials, splitmix64(tcfg.seed ^ 0x7e57));
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

struct LambdaSearch {
  double best_lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> val_accuracy;  // final-epoch validation accuracy per grid entry
};

/// Trains one model per lambda; the highest final validation accuracy wins,
/// ties go to the smaller lambda.
inline LambdaSearch tune_lambda(const std::vector<double>& grid, const ResponsePool<float>& pool,
                                const ModelConfig& mcfg, TrainConfig tcfg) {
  if (grid.empty()) throw ConfigError("tune_lambda: empty grid");
  LambdaSearch search;
  search.grid = grid;
  double best_acc = -1.0;
  for (double lambda : grid) {
    tcfg.lambda = lambda;
    const TrainResult run = train_markovtype(pool, mcfg, tcfg);
    const double acc = run.history.empty() ? validation_accuracy(run.params, mcfg, split_pool(pool, tcfg.val_fraction, tcfg.seed).second,
                                                                 tcfg.val_trials, splitmix64(tcfg.seed ^ 0x7e57))
                                           : run.history.back().val_accuracy;
    search.val_accuracy.push_back(acc);
    if (acc > best_acc || (acc == best_acc && lambda < search.best_lambda)) {
      best_acc = acc;
      search.best_lambda = lambda;
    }
  }
  return search;
}

}  // namespace markovtype
