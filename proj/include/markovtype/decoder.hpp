#pragma once

#include <string>

#include "markovtype/simulator.hpp"

namespace markovtype {

/// A typing method as seen by the test protocol: reset per selection, then
/// one posterior update per sequence.
class Decoder {
 public:
  virtual ~Decoder() = default;

  virtual int alphabet() const = 0;
  virtual Index num_params() const = 0;
  virtual void reset() = 0;
  virtual Vector<float> step(const Query& query, const Responses<float>& responses) = 0;
};

}  // namespace markovtype
