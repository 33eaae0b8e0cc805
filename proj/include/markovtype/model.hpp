#pragma once

// Recursive classifier: per-response feature extractor, alphabet feature map,
// core recurrence, softmax classifier and baseline head, composed into an
// N-sequence trial rollout with backpropagation through the whole trial.

#include <string>
#include <vector>

#include <json.hpp>

#include "markovtype/decoder.hpp"
#include "markovtype/layers.hpp"
#include "markovtype/simulator.hpp"

namespace markovtype {

struct ConvLayerSpec {
  Index out_channels = 1;
  Index kernel = 1;
  Index stride = 1;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

inline constexpr std::size_t kConvLayers = 5;

struct ModelConfig {
  int alphabet = 28;
  int query_size = 10;
  int sequences = 10;
  Index channels = 4;
  Index samples = 64;
  Index feature_length = 64;
  Index hidden = 128;
  std::vector<ConvLayerSpec> conv = {{8, 7, 2}, {16, 5, 2}, {16, 5, 1}, {32, 3, 1}, {32, 3, 1}};

  // Time length after the last convolution; throws if the stack does not fit.
  Index conv_output_length() const {
    Index t = samples;
    for (const auto& layer : conv) t = conv1d_output_length(t, layer.kernel, layer.stride);
    return t;
  }

  void validate() const {
    if (alphabet < 2) throw ConfigError("model: alphabet must be >= 2");
    if (query_size < 1 || query_size > alphabet) throw ConfigError("model: query size must lie in [1, alphabet]");
    if (sequences < 1) throw ConfigError("model: sequences must be >= 1");
    if (channels < 1 || samples < 1 || feature_length < 1) throw ConfigError("model: dimensions must be positive");
    if (hidden < 2) throw ConfigError("model: hidden length must be >= 2");
    if (conv.size() != kConvLayers) throw ConfigError("model: the feature extractor has exactly 5 convolution layers");
    for (const auto& layer : conv) {
      if (layer.out_channels < 1 || layer.kernel < 1 || layer.stride < 1) {
        throw ConfigError("model: convolution sizes must be positive");
      }
    }
    try {
      conv_output_length();
    } catch (const DimensionError& e) {
      throw ConfigError(std::string("model: convolution stack does not fit the response length: ") + e.what());
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& cfg) {
  auto conv = nlohmann::ordered_json::array();
  for (const auto& l : cfg.conv) conv.push_back({l.out_channels, l.kernel, l.stride});
  j = nlohmann::ordered_json{{"alphabet", cfg.alphabet},       {"query_size", cfg.query_size},
                             {"sequences", cfg.sequences},     {"channels", cfg.channels},
                             {"samples", cfg.samples},         {"feature_length", cfg.feature_length},
                             {"hidden", cfg.hidden},           {"conv", conv}};
}

inline void from_json(const nlohmann::ordered_json& j, ModelConfig& cfg) {
  cfg.alphabet = j.at("alphabet").get<int>();
  cfg.query_size = j.at("query_size").get<int>();
  cfg.sequences = j.at("sequences").get<int>();
  cfg.channels = j.at("channels").get<Index>();
  cfg.samples = j.at("samples").get<Index>();
  cfg.feature_length = j.at("feature_length").get<Index>();
  cfg.hidden = j.at("hidden").get<Index>();
  cfg.conv.clear();
  for (const auto& l : j.at("conv")) cfg.conv.push_back({l.at(0).get<Index>(), l.at(1).get<Index>(), l.at(2).get<Index>()});
}

// ---------------------------------------------------------------------------
// Feature extractor: 5 x (conv1d + rect), mean over time, linear to L.

template <typename Scalar>
void add_extractor(ParamStore<Scalar>& ps, const ModelConfig& cfg, const std::string& prefix) {
  Index in = cfg.channels;
  for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
    add_conv1d(ps, prefix + ".conv" + std::to_string(i), in, cfg.conv[i].out_channels, cfg.conv[i].kernel);
    in = cfg.conv[i].out_channels;
  }
  add_linear(ps, prefix + ".proj", in, cfg.feature_length);
}

template <typename Scalar>
struct ExtractTape {
  std::vector<Matrix<Scalar>> conv_in;   // input of each convolution
  std::vector<Matrix<Scalar>> conv_out;  // pre-activation output of each convolution
  Matrix<Scalar> pooled;                 // [1, channels of last conv]
};

template <typename Scalar>
Matrix<Scalar> extract(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const std::string& prefix,
                       const MatrixIn<Scalar>& response, ExtractTape<Scalar>* tape = nullptr) {
  if (response.rows() != cfg.channels || response.cols() != cfg.samples) {
    throw DimensionError("extract: response is " + std::to_string(response.rows()) + "x" +
                         std::to_string(response.cols()) + ", model expects " + std::to_string(cfg.channels) + "x" +
                         std::to_string(cfg.samples));
  }
  if (tape) {
    tape->conv_in.clear();
    tape->conv_out.clear();
  }
  Matrix<Scalar> x = response;
  for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
    Matrix<Scalar> y = conv1d(ps, prefix + ".conv" + std::to_string(i), x, cfg.conv[i].stride);
    if (tape) {
      tape->conv_in.push_back(std::move(x));
      tape->conv_out.push_back(y);
    }
    x = rect(y);
  }
  Matrix<Scalar> pooled = mean_pool_time(x);
  Matrix<Scalar> feature = linear(ps, prefix + ".proj", pooled);
  if (tape) tape->pooled = std::move(pooled);
  return feature;
}

// Accumulates parameter gradients; returns the gradient for the response.
template <typename Scalar>
Matrix<Scalar> extract_backward(ParamStore<Scalar>& ps, const ModelConfig& cfg, const std::string& prefix,
                                const ExtractTape<Scalar>& tape, const MatrixIn<Scalar>& d_feature) {
  Matrix<Scalar> d = linear_backward(ps, prefix + ".proj", tape.pooled, d_feature);
  d = mean_pool_time_backward<Scalar>(tape.conv_out.back().cols(), d);
  for (std::size_t i = cfg.conv.size(); i-- > 0;) {
    d = rect_backward(tape.conv_out[i], d);
    d = conv1d_backward(ps, prefix + ".conv" + std::to_string(i), tape.conv_in[i], cfg.conv[i].stride, d);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Parameters of the full model.

template <typename Scalar>
ParamStore<Scalar> init_markovtype(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<Scalar> ps(seed);
  add_extractor(ps, cfg, "fe");
  add_linear(ps, "core.hidden", cfg.hidden, cfg.hidden);
  add_linear(ps, "core.input", static_cast<Index>(cfg.alphabet) * cfg.feature_length, cfg.hidden);
  add_layernorm(ps, "core.norm", cfg.hidden);
  add_linear(ps, "classifier", cfg.hidden, static_cast<Index>(cfg.alphabet));
  add_linear(ps, "baseline", cfg.hidden, Index{1});
  return ps;
}

/// Alphabet features: row i is extract(responses[k]) where query[k] == i and
/// exactly zero for symbols outside the query.
template <typename Scalar>
Matrix<Scalar> map_features(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const Responses<Scalar>& responses,
                            const Query& query, std::vector<ExtractTape<Scalar>>* tapes = nullptr) {
  validate_query(query, cfg.alphabet);
  if (responses.size() != static_cast<Index>(query.size())) {
    throw DimensionError("map_features: " + std::to_string(responses.size()) + " responses for a query of " +
                         std::to_string(query.size()) + " symbols");
  }
  Matrix<Scalar> G = Matrix<Scalar>::Zero(cfg.alphabet, cfg.feature_length);
  if (tapes) tapes->assign(query.size(), {});
  for (std::size_t k = 0; k < query.size(); ++k) {
    G.row(query[k]) = extract(ps, cfg, "fe", responses.at(static_cast<Index>(k)), tapes ? &(*tapes)[k] : nullptr);
  }
  return G;
}

template <typename Scalar>
struct CoreTape {
  Matrix<Scalar> h_prev;
  Matrix<Scalar> g_flat;  // [1, A * L]
  Matrix<Scalar> pre;     // before rect
  Matrix<Scalar> act;     // after rect, before layernorm
};

/// h_n = LayerNorm(Rect(Linear(h_{n-1}) + Linear(flatten(G_n)))).
template <typename Scalar>
Matrix<Scalar> core_update(const ParamStore<Scalar>& ps, const MatrixIn<Scalar>& h_prev, const MatrixIn<Scalar>& G,
                           CoreTape<Scalar>* tape = nullptr) {
  Matrix<Scalar> g_flat = ConstMatrixMap<Scalar>(G.data(), 1, G.size());
  Matrix<Scalar> pre = linear(ps, "core.hidden", h_prev) + linear(ps, "core.input", g_flat);
  Matrix<Scalar> act = rect(pre);
  Matrix<Scalar> h = layernorm(ps, "core.norm", act);
  if (tape) *tape = {h_prev, std::move(g_flat), std::move(pre), std::move(act)};
  return h;
}

template <typename Scalar>
struct CoreGrads {
  Matrix<Scalar> d_h_prev;
  Matrix<Scalar> d_G;  // [A, L]
};

template <typename Scalar>
CoreGrads<Scalar> core_update_backward(ParamStore<Scalar>& ps, const ModelConfig& cfg, const CoreTape<Scalar>& tape,
                                       const MatrixIn<Scalar>& d_h) {
  Matrix<Scalar> d = layernorm_backward(ps, "core.norm", tape.act, d_h);
  d = rect_backward(tape.pre, d);
  CoreGrads<Scalar> out;
  out.d_h_prev = linear_backward(ps, "core.hidden", tape.h_prev, d);
  const Matrix<Scalar> d_flat = linear_backward(ps, "core.input", tape.g_flat, d);
  out.d_G = ConstMatrixMap<Scalar>(d_flat.data(), cfg.alphabet, cfg.feature_length);
  return out;
}

template <typename Scalar>
struct Classification {
  Vector<Scalar> logits;
  Vector<Scalar> belief;
};

/// Softmax(Linear(h)).
template <typename Scalar>
Classification<Scalar> classify(const ParamStore<Scalar>& ps, const MatrixIn<Scalar>& h) {
  Classification<Scalar> out;
  out.logits = linear(ps, "classifier", h).row(0).transpose();
  out.belief = softmax(out.logits);
  return out;
}

template <typename Scalar>
Scalar baseline_value(const ParamStore<Scalar>& ps, const MatrixIn<Scalar>& h) {
  return linear(ps, "baseline", h)(0, 0);
}

// ---------------------------------------------------------------------------
// Trials.

template <typename Scalar>
struct TrialStep {
  Query query;
  Scalar log_prob = 0;  // log pi(query | belief before this sequence)
  Vector<Scalar> logits;  // empty for methods without a softmax head
  Vector<Scalar> belief;
  // Baseline from the hidden state the query was drawn from (h_{n-1}).
  Scalar baseline = 0;
  Matrix<Scalar> hidden;  // h_n, [1, v]; empty for methods without one
  std::vector<ResponseRef> responses;
};

template <typename Scalar>
struct TrialTrace {
  int target = 0;
  Vector<Scalar> initial_belief;
  std::vector<TrialStep<Scalar>> steps;

  const Vector<Scalar>& belief_before(std::size_t step) const {
    return step == 0 ? initial_belief : steps[step - 1].belief;
  }
};

template <typename Scalar>
struct TrialTape {
  std::vector<std::vector<ExtractTape<Scalar>>> extract;
  std::vector<CoreTape<Scalar>> core;
};

/// One sequence of the recursion: (h_{n-1}, query, responses) -> h_n, p_n.
template <typename Scalar>
Classification<Scalar> markovtype_step(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const MatrixIn<Scalar>& h_prev,
                                       const Query& query, const Responses<Scalar>& responses, Matrix<Scalar>& h_out,
                                       std::vector<ExtractTape<Scalar>>* extract_tapes = nullptr,
                                       CoreTape<Scalar>* core_tape = nullptr) {
  const Matrix<Scalar> G = map_features(ps, cfg, responses, query, extract_tapes);
  h_out = core_update(ps, h_prev, G, core_tape);
  return classify(ps, h_out);
}

namespace detail {

template <typename Scalar>
TrialTrace<Scalar> rollout(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const ResponsePool<Scalar>& pool,
                           int target, Rng* rng, const TrialTrace<Scalar>* replay, TrialTape<Scalar>* tape) {
  if (target < 0 || target >= cfg.alphabet) throw ConfigError("trial target outside the alphabet");
  if (pool.channels() != cfg.channels || pool.samples() != cfg.samples) {
    throw DimensionError("response pool is " + std::to_string(pool.channels()) + "x" + std::to_string(pool.samples()) +
                         ", model expects " + std::to_string(cfg.channels) + "x" + std::to_string(cfg.samples));
  }
  TrialTrace<Scalar> trace;
  trace.target = target;
  trace.initial_belief = uniform_belief<Scalar>(cfg.alphabet);
  const int steps = replay ? static_cast<int>(replay->steps.size()) : cfg.sequences;
  if (tape) {
    tape->extract.assign(static_cast<std::size_t>(steps), {});
    tape->core.assign(static_cast<std::size_t>(steps), {});
  }
  Matrix<Scalar> h = Matrix<Scalar>::Zero(1, cfg.hidden);
  for (int n = 0; n < steps; ++n) {
    TrialStep<Scalar> step;
    const Vector<Scalar>& prior = trace.belief_before(static_cast<std::size_t>(n));
    step.baseline = baseline_value(ps, h);
    step.query = replay ? replay->steps[n].query : sample_query(prior, cfg.query_size, *rng);
    step.log_prob = query_log_prob(prior, step.query);
    Responses<Scalar> responses = replay ? gather_responses(replay->steps[n].responses, pool)
                                         : draw_responses(step.query, target, pool, *rng);
    step.responses = responses.refs;
    Matrix<Scalar> h_next;
    Classification<Scalar> out = markovtype_step(ps, cfg, h, step.query, responses, h_next,
                                                 tape ? &tape->extract[n] : nullptr, tape ? &tape->core[n] : nullptr);
    step.logits = std::move(out.logits);
    step.belief = std::move(out.belief);
    step.hidden = h_next;
    h = std::move(h_next);
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

}  // namespace detail

/// Full N-sequence trial: uniform p_0, zero h_0; each sequence samples a query
/// from the previous belief, draws responses and updates the model state.
template <typename Scalar>
TrialTrace<Scalar> run_trial(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const ResponsePool<Scalar>& pool,
                             int target, Rng& rng, TrialTape<Scalar>* tape = nullptr) {
  return detail::rollout(ps, cfg, pool, target, &rng, static_cast<const TrialTrace<Scalar>*>(nullptr), tape);
}

/// Re-runs a recorded trial with its queries and responses held fixed.
template <typename Scalar>
TrialTrace<Scalar> replay_trial(const ParamStore<Scalar>& ps, const ModelConfig& cfg, const ResponsePool<Scalar>& pool,
                                const TrialTrace<Scalar>& recorded, TrialTape<Scalar>* tape = nullptr) {
  return detail::rollout(ps, cfg, pool, recorded.target, static_cast<Rng*>(nullptr), &recorded, tape);
}

/// Upstream gradient for a trial: per step, dL/dlogits of p_n and dL/db_n.
/// Empty logit vectors count as zero.
template <typename Scalar>
struct TrialGradient {
  std::vector<Vector<Scalar>> d_logits;
  std::vector<Scalar> d_baseline;

  explicit TrialGradient(std::size_t steps = 0) : d_logits(steps), d_baseline(steps, Scalar(0)) {}

  void add_logits(std::size_t step, const Vector<Scalar>& g) {
    if (d_logits[step].size() == 0) d_logits[step] = g;
    else d_logits[step] += g;
  }
};

/// Backpropagation through the trial. The baseline head receives gradient
/// with the hidden state held constant.
template <typename Scalar>
void trial_backward(ParamStore<Scalar>& ps, const ModelConfig& cfg, const TrialTrace<Scalar>& trace,
                    const TrialTape<Scalar>& tape, const TrialGradient<Scalar>& grad) {
  const std::size_t steps = trace.steps.size();
  const Matrix<Scalar> h0 = Matrix<Scalar>::Zero(1, cfg.hidden);
  Matrix<Scalar> d_h = Matrix<Scalar>::Zero(1, cfg.hidden);
  for (std::size_t n = steps; n-- > 0;) {
    const Matrix<Scalar>& h_prev = n == 0 ? h0 : trace.steps[n - 1].hidden;
    if (grad.d_baseline[n] != Scalar(0)) {
      linear_backward(ps, "baseline", h_prev, Matrix<Scalar>(Matrix<Scalar>::Constant(1, 1, grad.d_baseline[n])));
    }
    if (grad.d_logits[n].size() != 0) {
      d_h += linear_backward(ps, "classifier", trace.steps[n].hidden, Matrix<Scalar>(grad.d_logits[n].transpose()));
    }
    if (d_h.isZero(0)) continue;
    CoreGrads<Scalar> g = core_update_backward(ps, cfg, tape.core[n], d_h);
    const Query& q = trace.steps[n].query;
    for (std::size_t k = 0; k < q.size(); ++k) {
      extract_backward(ps, cfg, "fe", tape.extract[n][k], Matrix<Scalar>(g.d_G.row(q[k])));
    }
    d_h = std::move(g.d_h_prev);
  }
}

// ---------------------------------------------------------------------------
// Inference-only decoder for the test protocol.

class MarkovTypeDecoder final : public Decoder {
 public:
  MarkovTypeDecoder(const ParamStore<float>& params, ModelConfig cfg) : params_(params), cfg_(std::move(cfg)) {
    check_same_layout(params_, init_markovtype<float>(cfg_, 0), "markovtype parameters");
    reset();
  }

  int alphabet() const override { return cfg_.alphabet; }
  Index num_params() const override { return params_.num_values(); }
  void reset() override { h_ = Matrix<float>::Zero(1, cfg_.hidden); }

  Vector<float> step(const Query& query, const Responses<float>& responses) override {
    Matrix<float> next;
    Classification<float> out = markovtype_step(params_, cfg_, h_, query, responses, next);
    h_ = std::move(next);
    return out.belief;
  }

 private:
  const ParamStore<float>& params_;
  ModelConfig cfg_;
  Matrix<float> h_;
};

}  // namespace markovtype
