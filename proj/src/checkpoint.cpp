#include "markovtype/checkpoint.hpp"

#include "markovtype/io.hpp"

namespace markovtype {

void save_checkpoint(const ParamStore<float>& params, const nlohmann::ordered_json& meta,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["dtype"] = "f32le";
  manifest["blob"] = "params.f32";
  manifest["seed"] = params.seed();
  auto tensors = nlohmann::ordered_json::array();
  std::vector<float> blob;
  blob.reserve(static_cast<std::size_t>(params.num_values()));
  for (const auto& [name, p] : params) {
    tensors.push_back({{"name", name}, {"shape", p.value.shape()}, {"offset", blob.size()}});
    blob.insert(blob.end(), p.value.data(), p.value.data() + p.value.size());
  }
  manifest["tensors"] = tensors;
  manifest["meta"] = meta;
  io::write_f32(dir / "params.f32", blob);
  io::write_text(dir / "params.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(io::read_text(dir / "params.json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("dtype", "") != "f32le") throw LoadError("checkpoint dtype: only f32le is supported");
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) throw LoadError("checkpoint tensors: missing");

  std::size_t total = 0;
  for (const auto& t : manifest["tensors"]) {
    total = std::max(total, t.at("offset").get<std::size_t>() + static_cast<std::size_t>(shape_size(t.at("shape").get<Shape>())));
  }
  const std::vector<float> blob = io::read_f32(dir / manifest.value("blob", "params.f32"), total, "checkpoint blob");

  Checkpoint ckpt{ParamStore<float>(manifest.value("seed", std::uint64_t{0})), manifest.value("meta", nlohmann::ordered_json::object())};
  for (const auto& t : manifest["tensors"]) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    auto& p = ckpt.params.add(name, shape);
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(), p.value.data());
    if (!p.value.all_finite()) throw LoadError("checkpoint tensor '" + name + "': non-finite values");
  }
  return ckpt;
}

}  // namespace markovtype
