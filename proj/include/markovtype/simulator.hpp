#pragma once

// Typing environment: response pools, query sampling from the current belief,
// per-symbol response draws and a synthetic pool generator.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "markovtype/random.hpp"
#include "markovtype/tensor.hpp"

namespace markovtype {

using Query = std::vector<int>;

// Floor applied to every belief entry before query sampling.
inline constexpr double kQueryFloor = 1e-6;

template <typename Scalar>
Vector<Scalar> uniform_belief(int alphabet) {
  if (alphabet < 2) throw ConfigError("alphabet size must be >= 2");
  return Vector<Scalar>::Constant(alphabet, Scalar(1) / Scalar(alphabet));
}

template <typename Scalar>
bool on_simplex(const Vector<Scalar>& p, double tol = 1e-6) {
  if (!p.allFinite() || (p.array() < Scalar(0)).any()) return false;
  return std::abs(static_cast<double>(p.template cast<double>().sum()) - 1.0) <= tol;
}

// Lowest index wins ties.
template <typename Scalar>
int argmax(const Vector<Scalar>& p) {
  Index best = 0;
  for (Index i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return static_cast<int>(best);
}

inline void validate_query(const Query& query, int alphabet) {
  std::vector<bool> seen(static_cast<std::size_t>(alphabet), false);
  for (int s : query) {
    if (s < 0 || s >= alphabet) {
      throw InvariantError("query symbol " + std::to_string(s) + " outside alphabet of size " + std::to_string(alphabet));
    }
    if (seen[static_cast<std::size_t>(s)]) throw InvariantError("query repeats symbol " + std::to_string(s));
    seen[static_cast<std::size_t>(s)] = true;
  }
}

namespace detail {

template <typename Scalar>
std::vector<double> floored(const Vector<Scalar>& belief) {
  std::vector<double> u(static_cast<std::size_t>(belief.size()));
  for (Index i = 0; i < belief.size(); ++i) u[i] = std::max(static_cast<double>(belief[i]), kQueryFloor);
  return u;
}

}  // namespace detail

/// Draws K distinct symbols one at a time, each proportional to the floored
/// belief restricted to the symbols not yet drawn. Draw order is kept.
template <typename Scalar>
Query sample_query(const Vector<Scalar>& belief, int K, Rng& rng) {
  const int A = static_cast<int>(belief.size());
  if (K < 1 || K > A) throw ConfigError("query length K=" + std::to_string(K) + " must lie in [1, A=" + std::to_string(A) + "]");
  std::vector<double> u = detail::floored(belief);
  Query query;
  query.reserve(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) {
    double remaining = 0.0;
    for (double x : u) remaining += x;
    const double r = uniform01(rng) * remaining;
    double acc = 0.0;
    int chosen = -1;
    for (int i = 0; i < A; ++i) {
      if (u[i] == 0.0) continue;
      chosen = i;
      acc += u[i];
      if (r < acc) break;
    }
    query.push_back(chosen);
    u[static_cast<std::size_t>(chosen)] = 0.0;
  }
  return query;
}

/// Log-probability that sample_query(belief, K) returns exactly `query`, in
/// that order.
template <typename Scalar>
Scalar query_log_prob(const Vector<Scalar>& belief, const Query& query) {
  validate_query(query, static_cast<int>(belief.size()));
  std::vector<double> u = detail::floored(belief);
  double logp = 0.0;
  for (int s : query) {
    double remaining = 0.0;
    for (double x : u) remaining += x;
    logp += std::log(u[static_cast<std::size_t>(s)]) - std::log(remaining);
    u[static_cast<std::size_t>(s)] = 0.0;
  }
  return static_cast<Scalar>(logp);
}

/// Gradient of query_log_prob with respect to the belief entries. Entries
/// held at the floor get zero gradient.
template <typename Scalar>
Vector<Scalar> query_log_prob_grad(const Vector<Scalar>& belief, const Query& query) {
  validate_query(query, static_cast<int>(belief.size()));
  std::vector<double> u = detail::floored(belief);
  std::vector<bool> active(u.size(), true);
  std::vector<double> g(u.size(), 0.0);
  for (int s : query) {
    double remaining = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (active[i]) remaining += u[i];
    }
    g[static_cast<std::size_t>(s)] += 1.0 / u[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (active[i]) g[i] -= 1.0 / remaining;
    }
    active[static_cast<std::size_t>(s)] = false;
  }
  Vector<Scalar> out(belief.size());
  for (Index i = 0; i < belief.size(); ++i) {
    out[i] = static_cast<double>(belief[i]) > kQueryFloor ? static_cast<Scalar>(g[i]) : Scalar(0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response pools.

/// Labeled responses, each [c, f]. Tensors are [count, c, f].
template <typename Scalar>
struct ResponsePool {
  Tensor<Scalar> target;
  Tensor<Scalar> nontarget;

  Index channels() const { return target.dim(1); }
  Index samples() const { return target.dim(2); }
  Index count_target() const { return target.dim(0); }
  Index count_nontarget() const { return nontarget.dim(0); }

  ConstMatrixMap<Scalar> item(bool is_target, Index i) const {
    return is_target ? target.slice(i) : nontarget.slice(i);
  }

  void validate() const {
    if (target.rank() != 3 || nontarget.rank() != 3) throw DimensionError("response pools must be [count, c, f]");
    if (target.dim(1) != nontarget.dim(1) || target.dim(2) != nontarget.dim(2)) {
      throw DimensionError("target and non-target responses differ in shape");
    }
    if (count_target() < 1 || count_nontarget() < 1) throw ConfigError("each response pool needs at least one item");
    if (!target.all_finite() || !nontarget.all_finite()) throw DomainError("response pool holds non-finite values");
  }

  template <typename Other>
  ResponsePool<Other> cast() const {
    return {target.template cast<Other>(), nontarget.template cast<Other>()};
  }
};

struct ResponseRef {
  bool target = false;
  Index index = 0;
  friend bool operator==(const ResponseRef&, const ResponseRef&) = default;
};

/// One sequence's responses: values[k] is the response to query[k].
template <typename Scalar>
struct Responses {
  Tensor<Scalar> values;  // [K, c, f]
  std::vector<ResponseRef> refs;

  Index size() const { return static_cast<Index>(refs.size()); }
  Matrix<Scalar> at(Index k) const { return values.slice(k); }
};

template <typename Scalar>
Responses<Scalar> gather_responses(const std::vector<ResponseRef>& refs, const ResponsePool<Scalar>& pool) {
  Responses<Scalar> out;
  out.refs = refs;
  out.values = Tensor<Scalar>({static_cast<Index>(refs.size()), pool.channels(), pool.samples()});
  for (std::size_t k = 0; k < refs.size(); ++k) {
    out.values.slice(static_cast<Index>(k)) = pool.item(refs[k].target, refs[k].index);
  }
  return out;
}

/// Row k comes from the target pool when query[k] is the target, otherwise
/// from the non-target pool; uniform with replacement.
template <typename Scalar>
Responses<Scalar> draw_responses(const Query& query, int target, const ResponsePool<Scalar>& pool, Rng& rng) {
  std::vector<ResponseRef> refs;
  refs.reserve(query.size());
  for (int s : query) {
    const bool is_target = s == target;
    const Index count = is_target ? pool.count_target() : pool.count_nontarget();
    refs.push_back({is_target, static_cast<Index>(uniform_index(rng, count))});
  }
  return gather_responses(refs, pool);
}

// ---------------------------------------------------------------------------
// Synthetic pools.

struct SynthConfig {
  Index channels = 4;
  Index samples = 64;
  double delta = 1.0;
  Index count_target = 200;
  Index count_nontarget = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (channels < 1 || samples < 1) throw ConfigError("synthetic response dimensions must be positive");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be a finite value >= 0");
    if (count_target < 1 || count_nontarget < 1) throw ConfigError("synthetic pool counts must be >= 1");
  }
};

// Channels that carry the target mean shift.
inline Index affected_channels(Index channels) { return (channels + 1) / 2; }

/// Unit-variance Gaussian noise; target items add `delta` to every sample of
/// the first ceil(c/2) channels.
inline ResponsePool<float> synth_pools(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_stream(cfg.seed, {0x5157});
  std::normal_distribution<double> noise(0.0, 1.0);
  const Index c = cfg.channels;
  const Index f = cfg.samples;
  const Index shifted = affected_channels(c);
  ResponsePool<float> pool{Tensor<float>({cfg.count_target, c, f}), Tensor<float>({cfg.count_nontarget, c, f})};
  for (Index n = 0; n < cfg.count_target; ++n) {
    auto item = pool.target.slice(n);
    for (Index ch = 0; ch < c; ++ch) {
      const double mean = ch < shifted ? cfg.delta : 0.0;
      for (Index t = 0; t < f; ++t) item(ch, t) = static_cast<float>(mean + noise(rng));
    }
  }
  for (Index n = 0; n < cfg.count_nontarget; ++n) {
    auto item = pool.nontarget.slice(n);
    for (Index ch = 0; ch < c; ++ch) {
      for (Index t = 0; t < f; ++t) item(ch, t) = static_cast<float>(noise(rng));
    }
  }
  return pool;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> take_items(const Tensor<Scalar>& source, const std::vector<Index>& rows) {
  Tensor<Scalar> out({static_cast<Index>(rows.size()), source.dim(1), source.dim(2)});
  for (std::size_t i = 0; i < rows.size(); ++i) out.slice(static_cast<Index>(i)) = source.slice(rows[i]);
  return out;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_items(const Tensor<Scalar>& source, double fraction, Rng& rng) {
  const Index n = source.dim(0);
  if (n < 2) throw ConfigError("cannot split a pool class with fewer than 2 items");
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[i] = i;
  shuffle_in_place(order, rng);
  Index held = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  held = std::clamp<Index>(held, 1, n - 1);
  std::vector<Index> rest(order.begin(), order.end() - held);
  std::vector<Index> out(order.end() - held, order.end());
  std::sort(rest.begin(), rest.end());
  std::sort(out.begin(), out.end());
  return {take_items(source, rest), take_items(source, out)};
}

}  // namespace detail

/// Seeded per-class split. Returns (kept, held_out) with round(fraction * n)
/// items of each class held out, at least one item on each side.
template <typename Scalar>
std::pair<ResponsePool<Scalar>, ResponsePool<Scalar>> split_pool(const ResponsePool<Scalar>& pool, double fraction,
                                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  Rng rng = make_stream(seed, {0x59117});
  auto [t_keep, t_held] = detail::split_items(pool.target, fraction, rng);
  auto [n_keep, n_held] = detail::split_items(pool.nontarget, fraction, rng);
  return {ResponsePool<Scalar>{std::move(t_keep), std::move(n_keep)},
          ResponsePool<Scalar>{std::move(t_held), std::move(n_held)}};
}

// Dataset manifest + f32le blobs. Defined in dataset.cpp.
void save_pools(const ResponsePool<float>& pool, const std::filesystem::path& dir);
ResponsePool<float> load_pools(const std::filesystem::path& manifest);

}  // namespace markovtype
