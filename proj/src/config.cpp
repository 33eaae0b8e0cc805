#include "markovtype/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include "markovtype/io.hpp"
#include "markovtype/reports.hpp"

namespace markovtype {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T x{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError(key + ": '" + text + "' is not a valid number");
  }
  return x;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

// Member-pointer helpers for the common field kinds.
template <typename Group, typename T>
Field num_field(Group RunConfig::*group, T Group::*member) {
  return {[=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double((c.*group).*member);
            else return std::to_string((c.*group).*member);
          },
          [=](RunConfig& c, const std::string& key, const std::string& text) {
            (c.*group).*member = parse_number<T>(key, text);
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    using R = RunConfig;
    t["model.alphabet"] = num_field(&R::model, &ModelConfig::alphabet);
    t["model.query_size"] = num_field(&R::model, &ModelConfig::query_size);
    t["model.sequences"] = num_field(&R::model, &ModelConfig::sequences);
    t["model.channels"] = num_field(&R::model, &ModelConfig::channels);
    t["model.samples"] = num_field(&R::model, &ModelConfig::samples);
    t["model.feature_length"] = num_field(&R::model, &ModelConfig::feature_length);
    t["model.hidden"] = num_field(&R::model, &ModelConfig::hidden);
    t["model.conv"] = {[](const R& c) { return format_conv(c.model.conv); },
                       [](R& c, const std::string&, const std::string& v) { c.model.conv = parse_conv(v); }};

    t["train.learning_rate"] = num_field(&R::train, &TrainConfig::learning_rate);
    t["train.epochs"] = num_field(&R::train, &TrainConfig::epochs);
    t["train.decay"] = num_field(&R::train, &TrainConfig::decay);
    t["train.batch"] = num_field(&R::train, &TrainConfig::batch);
    t["train.episodes"] = num_field(&R::train, &TrainConfig::episodes);
    t["train.lambda"] = num_field(&R::train, &TrainConfig::lambda);
    t["train.discount"] = {[](const R& c) { return to_string(c.train.discount); },
                           [](R& c, const std::string&, const std::string& v) { c.train.discount = parse_discount(v); }};
    t["train.seed"] = num_field(&R::train, &TrainConfig::seed);
    t["train.batches_per_epoch"] = num_field(&R::train, &TrainConfig::batches_per_epoch);
    t["train.val_trials"] = num_field(&R::train, &TrainConfig::val_trials);
    t["train.val_fraction"] = num_field(&R::train, &TrainConfig::val_fraction);

    t["rb.learning_rate"] = num_field(&R::rb, &BinaryTrainConfig::learning_rate);
    t["rb.epochs"] = num_field(&R::rb, &BinaryTrainConfig::epochs);
    t["rb.decay"] = num_field(&R::rb, &BinaryTrainConfig::decay);
    t["rb.batch"] = num_field(&R::rb, &BinaryTrainConfig::batch);

    t["session.trials"] = num_field(&R::session, &SessionConfig::trials);
    t["session.tau"] = num_field(&R::session, &SessionConfig::tau);
    t["session.sequences"] = num_field(&R::session, &SessionConfig::sequences);
    t["session.query_size"] = num_field(&R::session, &SessionConfig::query_size);
    t["session.seed"] = num_field(&R::session, &SessionConfig::seed);

    t["synth.channels"] = num_field(&R::synth, &SynthConfig::channels);
    t["synth.samples"] = num_field(&R::synth, &SynthConfig::samples);
    t["synth.delta"] = num_field(&R::synth, &SynthConfig::delta);
    t["synth.count_target"] = num_field(&R::synth, &SynthConfig::count_target);
    t["synth.count_nontarget"] = num_field(&R::synth, &SynthConfig::count_nontarget);
    t["synth.seed"] = num_field(&R::synth, &SynthConfig::seed);

    t["data.test_fraction"] = {[](const R& c) { return format_double(c.test_fraction); },
                               [](R& c, const std::string& key, const std::string& v) {
                                 c.test_fraction = parse_number<double>(key, v);
                               }};
    return t;
  }();
  return table;
}

}  // namespace

std::string format_conv(const std::vector<ConvLayerSpec>& conv) {
  std::string out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(conv[i].out_channels) + ":" + std::to_string(conv[i].kernel) + ":" +
           std::to_string(conv[i].stride);
  }
  return out;
}

// "out:kernel:stride,..."
std::vector<ConvLayerSpec> parse_conv(const std::string& text) {
  std::vector<ConvLayerSpec> conv;
  std::istringstream in(text);
  std::string layer;
  while (std::getline(in, layer, ',')) {
    std::istringstream parts(trim(layer));
    std::string a, b, c, extra;
    if (!std::getline(parts, a, ':') || !std::getline(parts, b, ':') || !std::getline(parts, c, ':') ||
        std::getline(parts, extra)) {
      throw ConfigError("model.conv: expected out:kernel:stride, got '" + layer + "'");
    }
    conv.push_back({parse_number<Index>("model.conv", a), parse_number<Index>("model.conv", b),
                    parse_number<Index>("model.conv", c)});
  }
  return conv;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
  explicit_keys_.insert(key);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    try {
      set_assignment(body);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> k;
    for (const auto& [key, field] : fields()) k.push_back(key);
    return k;
  }();
  return names;
}

}  // namespace markovtype
