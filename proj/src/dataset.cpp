#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "markovtype/io.hpp"
#include "markovtype/simulator.hpp"

namespace markovtype {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

namespace io {

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(field + ": cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected_count * sizeof(float)) {
    throw LoadError(field + ": blob '" + path.string() + "' holds " + std::to_string(bytes / sizeof(float)) +
                    " floats, manifest expects " + std::to_string(expected_count));
  }
  std::vector<float> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw LoadError(field + ": short read from '" + path.string() + "'");
  return values;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace io

void save_pools(const ResponsePool<float>& pool, const std::filesystem::path& dir) {
  pool.validate();
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["channels"] = pool.channels();
  manifest["samples"] = pool.samples();
  manifest["count_target"] = pool.count_target();
  manifest["count_nontarget"] = pool.count_nontarget();
  manifest["dtype"] = "f32le";
  manifest["target_file"] = "target.f32";
  manifest["nontarget_file"] = "nontarget.f32";
  io::write_f32(dir / "target.f32", {pool.target.data(), static_cast<std::size_t>(pool.target.size())});
  io::write_f32(dir / "nontarget.f32", {pool.nontarget.data(), static_cast<std::size_t>(pool.nontarget.size())});
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

Index positive_field(const nlohmann::json& manifest, const char* key) {
  if (!manifest.contains(key)) throw LoadError(std::string(key) + ": missing from manifest");
  const auto& v = manifest.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) throw LoadError(std::string(key) + ": must be a positive integer");
  return static_cast<Index>(v.get<long long>());
}

std::string string_field(const nlohmann::json& manifest, const char* key) {
  if (!manifest.contains(key) || !manifest.at(key).is_string()) {
    throw LoadError(std::string(key) + ": missing or not a string");
  }
  return manifest.at(key).get<std::string>();
}

Tensor<float> load_blob(const std::filesystem::path& path, Index count, Index c, Index f, const std::string& field) {
  std::vector<float> raw = io::read_f32(path, static_cast<std::size_t>(count * c * f), field);
  Tensor<float> t({count, c, f});
  std::copy(raw.begin(), raw.end(), t.data());
  if (!t.all_finite()) throw LoadError(field + ": contains non-finite values");
  return t;
}

}  // namespace

ResponsePool<float> load_pools(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest: " + std::string(e.what()));
  }
  const Index c = positive_field(manifest, "channels");
  const Index f = positive_field(manifest, "samples");
  const Index nt = positive_field(manifest, "count_target");
  const Index nn = positive_field(manifest, "count_nontarget");
  if (string_field(manifest, "dtype") != "f32le") throw LoadError("dtype: only f32le is supported");
  const auto base = manifest_path.parent_path();
  ResponsePool<float> pool{load_blob(base / string_field(manifest, "target_file"), nt, c, f, "target_file"),
                           load_blob(base / string_field(manifest, "nontarget_file"), nn, c, f, "nontarget_file")};
  return pool;
}

}  // namespace markovtype
