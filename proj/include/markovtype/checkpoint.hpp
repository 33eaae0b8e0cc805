#pragma once

#include <filesystem>

#include <json.hpp>

#include "markovtype/tensor.hpp"

namespace markovtype {

struct Checkpoint {
  ParamStore<float> params;
  nlohmann::ordered_json meta;  // model config, method, training settings
};

// Writes <dir>/params.json (name -> shape -> offset, plus `meta`) and
// <dir>/params.f32 (little-endian float32, tensors in name order).
void save_checkpoint(const ParamStore<float>& params, const nlohmann::ordered_json& meta,
                     const std::filesystem::path& dir);

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace markovtype
