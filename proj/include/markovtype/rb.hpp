#pragma once

// Recursive-Bayesian competitor: a binary target / non-target classifier on
// single responses, fused over the alphabet with likelihood ratios s / (1 - s).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "markovtype/adam.hpp"
#include "markovtype/model.hpp"

namespace markovtype {

inline constexpr double kLogitClamp = 15.0;
inline constexpr double kMinLikelihoodRatio = 1e-6;
inline constexpr double kMaxLikelihoodRatio = 1e6;

// Shares the extractor layout of ModelConfig; the head maps L features to one
// logit through a rect.
template <typename Scalar>
ParamStore<Scalar> init_rb(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<Scalar> ps(seed);
  add_extractor(ps, cfg, "rb.fe");
  add_linear(ps, "rb.head", cfg.feature_length, Index{1});
  return ps;
}

template <typename Scalar>
struct BinaryTape {
  ExtractTape<Scalar> extract;
  Matrix<Scalar> feature;
  Matrix<Scalar> hidden;
  Scalar raw_logit = 0;
};

// Logit clamped to +-15.
template <typename Scalar>
Scalar binary_logit(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const MatrixIn<Scalar>& response,
                    BinaryTape<Scalar>* tape = nullptr) {
  Matrix<Scalar> feature = extract(ps, cfg, "rb.fe", response, tape ? &tape->extract : nullptr);
  Matrix<Scalar> hidden = rect(feature);
  const Scalar raw = linear(ps, "rb.head", hidden)(0, 0);
  if (tape) {
    tape->feature = std::move(feature);
    tape->hidden = std::move(hidden);
    tape->raw_logit = raw;
  }
  return std::clamp(raw, Scalar(-kLogitClamp), Scalar(kLogitClamp));
}

/// Estimated probability that the response is a target response.
template <typename Scalar>
Scalar binary_forward(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const MatrixIn<Scalar>& response) {
  const Scalar z = binary_logit(ps, cfg, response);
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

template <typename Scalar>
void binary_backward(ParamStore<Scalar>& ps, const ModelConfig& cfg, const BinaryTape<Scalar>& tape, Scalar d_logit) {
  if (std::abs(static_cast<double>(tape.raw_logit)) > kLogitClamp) return;
  Matrix<Scalar> d = linear_backward(ps, "rb.head", tape.hidden, Matrix<Scalar>::Constant(1, 1, d_logit));
  d = rect_backward(tape.feature, d);
  extract_backward(ps, cfg, "rb.fe", tape.extract, d);
}

// Binary cross-entropy on the clamped logit, and its derivative.
template <typename Scalar>
double binary_cross_entropy(Scalar logit, bool is_target, Scalar* d_logit = nullptr) {
  const double z = static_cast<double>(logit);
  const double y = is_target ? 1.0 : 0.0;
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  if (d_logit) *d_logit = static_cast<Scalar>(1.0 / (1.0 + std::exp(-z)) - y);
  return softplus - y * z;
}

struct BinaryTrainConfig {
  double learning_rate = 1e-3;
  int epochs = 25;
  double decay = 0.97;
  int batch = 28;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("rb: learning rate must be > 0");
    if (epochs < 0) throw ConfigError("rb: epochs must be >= 0");
    check_decay_factor(decay);
    if (batch < 1) throw ConfigError("rb: batch must be >= 1");
  }
};

struct BinaryTrainResult {
  ParamStore<float> params;
  std::vector<double> loss_history;  // mean loss per epoch
};

// Called after every epoch with the mean loss, the learning rate used and the
// current parameters.
using BinaryEpochCallback =
    std::function<void(int epoch, double loss, double learning_rate, const ParamStore<float>& params)>;

/// Minimizes binary cross-entropy over shuffled single responses. Each epoch
/// rebalances the classes to 50/50 by resampling the minority class with
/// replacement up to the majority count.
inline BinaryTrainResult train_binary(const ResponsePool<float>& pool, const ModelConfig& cfg,
                                      const BinaryTrainConfig& bcfg, const BinaryEpochCallback& on_epoch = {}) {
  if (pool.target.rank() != 3 || pool.nontarget.rank() != 3 || pool.count_target() < 1 || pool.count_nontarget() < 1) {
    throw ConfigError("rb: training needs both target and non-target responses");
  }
  pool.validate();
  bcfg.validate();
  BinaryTrainResult result{init_rb<float>(cfg, bcfg.seed), {}};
  ParamStore<float>& params = result.params;
  AdamState<float> adam;
  adam.learning_rate = bcfg.learning_rate;

  const Index per_class = std::max(pool.count_target(), pool.count_nontarget());
  for (int epoch = 0; epoch < bcfg.epochs; ++epoch) {
    Rng rng = make_stream(bcfg.seed, {0xb1, static_cast<std::uint64_t>(epoch)});
    std::vector<ResponseRef> order;
    for (const bool is_target : {true, false}) {
      const Index count = is_target ? pool.count_target() : pool.count_nontarget();
      for (Index i = 0; i < per_class; ++i) {
        order.push_back({is_target, i < count ? i : static_cast<Index>(uniform_index(rng, count))});
      }
    }
    shuffle_in_place(order, rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(bcfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(bcfg.batch));
      const float weight = 1.0f / static_cast<float>(stop - start);
      params.zero_grads();
      for (std::size_t k = start; k < stop; ++k) {
        BinaryTape<float> tape;
        const float z = binary_logit(params, cfg, Matrix<float>(pool.item(order[k].target, order[k].index)), &tape);
        float d_logit = 0.0f;
        epoch_loss += binary_cross_entropy(z, order[k].target, &d_logit);
        binary_backward(params, cfg, tape, d_logit * weight);
      }
      adam_step(params, adam);
    }
    const double mean_loss = epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) throw TrainingError("rb: non-finite training loss at epoch " + std::to_string(epoch + 1));
    const double used_lr = adam.learning_rate;
    decay_lr(adam, bcfg.decay);
    result.loss_history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch + 1, mean_loss, used_lr, params);
  }
  return result;
}

/// Posterior after one sequence: queried symbol i gets mass p(i) * s_i / (1 - s_i)
/// (ratio clamped to [1e-6, 1e6]), unqueried symbols keep p(i), then renormalize.
template <typename Scalar>
Vector<Scalar> bayes_update(const Vector<Scalar>& belief, const Query& query, const std::vector<double>& scores) {
  validate_query(query, static_cast<int>(belief.size()));
  if (scores.size() != query.size()) throw DimensionError("bayes_update: one score per queried symbol is required");
  Vector<double> mass = belief.template cast<double>();
  for (std::size_t k = 0; k < query.size(); ++k) {
    const double s = scores[k];
    if (!(s > 0.0 && s < 1.0)) throw DomainError("bayes_update: score must lie in (0, 1)");
    const double ratio = std::clamp(s / (1.0 - s), kMinLikelihoodRatio, kMaxLikelihoodRatio);
    mass[query[k]] *= ratio;
  }
  return (mass / mass.sum()).template cast<Scalar>();
}

class RbDecoder final : public Decoder {
 public:
  RbDecoder(const ParamStore<float>& params, ModelConfig cfg) : params_(params), cfg_(std::move(cfg)) {
    check_same_layout(params_, init_rb<float>(cfg_, 0), "rb1d parameters");
    reset();
  }

  int alphabet() const override { return cfg_.alphabet; }
  Index num_params() const override { return params_.num_values(); }
  void reset() override { belief_ = uniform_belief<double>(cfg_.alphabet); }

  Vector<float> step(const Query& query, const Responses<float>& responses) override {
    std::vector<double> scores;
    for (Index k = 0; k < responses.size(); ++k) {
      scores.push_back(static_cast<double>(binary_forward(params_, cfg_, responses.at(k))));
    }
    belief_ = bayes_update(belief_, query, scores);
    return belief_.cast<float>();
  }

 private:
  const ParamStore<float>& params_;
  ModelConfig cfg_;
  Vector<double> belief_;
};

/// Same rollout structure as run_trial with the posterior produced by
/// bayes_update; no hidden state.
inline TrialTrace<float> run_trial_rb(int target, const ResponsePool<float>& pool, const ParamStore<float>& params,
                                      const ModelConfig& cfg, Rng& rng) {
  if (target < 0 || target >= cfg.alphabet) throw ConfigError("trial target outside the alphabet");
  RbDecoder decoder(params, cfg);
  TrialTrace<float> trace;
  trace.target = target;
  trace.initial_belief = uniform_belief<float>(cfg.alphabet);
  for (int n = 0; n < cfg.sequences; ++n) {
    TrialStep<float> step;
    const Vector<float>& prior = trace.belief_before(static_cast<std::size_t>(n));
    step.query = sample_query(prior, cfg.query_size, rng);
    step.log_prob = query_log_prob(prior, step.query);
    const Responses<float> responses = draw_responses(step.query, target, pool, rng);
    step.responses = responses.refs;
    step.belief = decoder.step(step.query, responses);
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

/// Area under the ROC curve (Mann-Whitney statistic, ties count half).
inline double roc_auc(std::vector<double> positives, std::vector<double> negatives) {
  if (positives.empty() || negatives.empty()) throw DomainError("roc_auc: both classes are required");
  std::sort(negatives.begin(), negatives.end());
  double wins = 0.0;
  for (double p : positives) {
    const auto lo = std::lower_bound(negatives.begin(), negatives.end(), p);
    const auto hi = std::upper_bound(negatives.begin(), negatives.end(), p);
    wins += static_cast<double>(lo - negatives.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

}  // namespace markovtype
