#pragma once

// Flat key = value run configuration. Every field of the model, training,
// session and synthetic-data configs is addressable by a dotted key, e.g.
// `train.lambda = 0.02` or `model.conv = 8:7:2,16:5:2,16:5:1,32:3:1,32:3:1`.
// Lines starting with '#' are comments.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "markovtype/eval.hpp"
#include "markovtype/model.hpp"
#include "markovtype/rb.hpp"
#include "markovtype/trainer.hpp"

namespace markovtype {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  BinaryTrainConfig rb;
  SessionConfig session;
  SynthConfig synth;
  double test_fraction = 0.2;  // per-seed held-out share of the dataset for evaluation

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& assignment);  // "key=value"
  void load_file(const std::filesystem::path& path);
  bool is_set(const std::string& key) const { return explicit_keys_.count(key) != 0; }

  /// Every key with its current value, one `key = value` line each, sorted.
  std::string dump() const;

  static const std::vector<std::string>& keys();

 private:
  std::set<std::string> explicit_keys_;
};

std::string format_conv(const std::vector<ConvLayerSpec>& conv);
std::vector<ConvLayerSpec> parse_conv(const std::string& text);

}  // namespace markovtype
