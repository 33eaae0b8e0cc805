#pragma once

// Threshold-stopping test protocol, the no-threshold sweep and ITR metrics.

#include <vector>

#include "markovtype/decoder.hpp"

namespace markovtype {

struct SessionConfig {
  int trials = 1000;
  double tau = 0.8;
  int sequences = 10;
  int query_size = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (trials < 1) throw ConfigError("session: trials must be >= 1");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("session: tau must lie in (0, 1]");
    if (sequences < 1) throw ConfigError("session: sequences must be >= 1");
    if (query_size < 1) throw ConfigError("session: query size must be >= 1");
  }
};

struct TrialOutcome {
  int target = 0;
  int decision = 0;
  int stop = 0;  // 1-based sequence at which the decision was taken
};

struct SessionResult {
  std::vector<TrialOutcome> trials;
  int correct = 0;
  double accuracy = 0.0;  // C / T
  double n_tau = 0.0;     // mean stop sequence
  double itr_selection = 0.0;
  double itr_sequence = 0.0;
  std::vector<int> correct_at;    // [N], decisions taken at sequence n + 1
  std::vector<int> incorrect_at;  // [N]
};

/// Bits per selection for accuracy P over an alphabet of A symbols.
double itr(int alphabet, double accuracy);

/// Bits per sequence: itr(A, P) / n_tau.
double itr_per_sequence(int alphabet, double accuracy, double n_tau);

/// Typing session with early stopping: a trial ends at the first sequence whose
/// posterior maximum reaches tau, or at sequence N. Trial i uses its own stream
/// derived from (seed, i); the target is its first draw.
SessionResult run_session(Decoder& decoder, const ResponsePool<float>& pool, const SessionConfig& cfg);

/// Accuracy of argmax p_n at every n = 1..N over full-length trials.
std::vector<double> sweep_no_threshold(Decoder& decoder, const ResponsePool<float>& pool, const SessionConfig& cfg);

}  // namespace markovtype
