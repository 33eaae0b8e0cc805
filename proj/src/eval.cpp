#include "markovtype/eval.hpp"

#include <cmath>

namespace markovtype {

double itr(int alphabet, double accuracy) {
  if (alphabet < 2) throw DomainError("itr: alphabet size must be >= 2");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw DomainError("itr: accuracy must lie in [0, 1]");
  const double A = alphabet;
  const double P = accuracy;
  double bits = std::log2(A);
  if (P > 0.0) bits += P * std::log2(P);
  if (P < 1.0) bits += (1.0 - P) * std::log2((1.0 - P) / (A - 1.0));
  return bits;
}

double itr_per_sequence(int alphabet, double accuracy, double n_tau) {
  if (!(n_tau >= 1.0)) throw DomainError("itr_per_sequence: mean sequence count must be >= 1");
  return itr(alphabet, accuracy) / n_tau;
}

namespace {

void check_decoder(const Decoder& decoder, const SessionConfig& cfg) {
  cfg.validate();
  if (cfg.query_size > decoder.alphabet()) throw ConfigError("session: query size exceeds the alphabet");
}

}  // namespace

SessionResult run_session(Decoder& decoder, const ResponsePool<float>& pool, const SessionConfig& cfg) {
  check_decoder(decoder, cfg);
  const int A = decoder.alphabet();
  SessionResult result;
  result.correct_at.assign(static_cast<std::size_t>(cfg.sequences), 0);
  result.incorrect_at.assign(static_cast<std::size_t>(cfg.sequences), 0);
  long total_sequences = 0;

  for (int i = 0; i < cfg.trials; ++i) {
    Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(i)});
    const int target = static_cast<int>(uniform_index(rng, A));
    decoder.reset();
    Vector<float> belief = uniform_belief<float>(A);
    TrialOutcome outcome{target, 0, cfg.sequences};
    for (int n = 1; n <= cfg.sequences; ++n) {
      const Query query = sample_query(belief, cfg.query_size, rng);
      const Responses<float> responses = draw_responses(query, target, pool, rng);
      belief = decoder.step(query, responses);
      const int best = argmax(belief);
      if (static_cast<double>(belief[best]) >= cfg.tau || n == cfg.sequences) {
        outcome.decision = best;
        outcome.stop = n;
        break;
      }
    }
    const bool hit = outcome.decision == target;
    result.correct += hit ? 1 : 0;
    (hit ? result.correct_at : result.incorrect_at)[static_cast<std::size_t>(outcome.stop - 1)] += 1;
    total_sequences += outcome.stop;
    result.trials.push_back(outcome);
  }

  result.accuracy = static_cast<double>(result.correct) / cfg.trials;
  result.n_tau = static_cast<double>(total_sequences) / cfg.trials;
  result.itr_selection = itr(A, result.accuracy);
  result.itr_sequence = itr_per_sequence(A, result.accuracy, result.n_tau);
  return result;
}

std::vector<double> sweep_no_threshold(Decoder& decoder, const ResponsePool<float>& pool, const SessionConfig& cfg) {
  check_decoder(decoder, cfg);
  const int A = decoder.alphabet();
  std::vector<long> hits(static_cast<std::size_t>(cfg.sequences), 0);
  for (int i = 0; i < cfg.trials; ++i) {
    Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(i)});
    const int target = static_cast<int>(uniform_index(rng, A));
    decoder.reset();
    Vector<float> belief = uniform_belief<float>(A);
    for (int n = 0; n < cfg.sequences; ++n) {
      const Query query = sample_query(belief, cfg.query_size, rng);
      const Responses<float> responses = draw_responses(query, target, pool, rng);
      belief = decoder.step(query, responses);
      if (argmax(belief) == target) hits[static_cast<std::size_t>(n)] += 1;
    }
  }
  std::vector<double> accuracy;
  for (long h : hits) accuracy.push_back(static_cast<double>(h) / cfg.trials);
  return accuracy;
}

}  // namespace markovtype
