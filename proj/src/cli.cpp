#include "markovtype/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "markovtype/checkpoint.hpp"
#include "markovtype/config.hpp"
#include "markovtype/io.hpp"
#include "markovtype/reports.hpp"

namespace markovtype {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<std::string> kMethods = {"markovtype", "rb1d"};
const std::vector<std::string> kDiscounts = {"linear", "inv", "inv2", "inv3"};
const std::vector<std::string> kModes = {"threshold", "sweep", "both"};
constexpr const char* kSeedEnv = "MARKOVTYPER_SEED";
constexpr const char* kResolvedConfig = "run.conf";

// Flags every command shares.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& seed_help) {
  cmd->add_option("--config", flags.config, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", flags.sets, "override one config key (key=value); repeatable");
  cmd->add_option("--out", flags.out, "output directory")->required();
  flags.seed_opt = cmd->add_option("--seed", flags.seed, seed_help);
}

RunConfig load_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config.empty()) cfg.load_file(flags.config);
  for (const auto& s : flags.sets) cfg.set_assignment(s);
  return cfg;
}

// --seed, then the config key, then the environment, then 0.
std::uint64_t resolve_seed(const CommonFlags& flags, const RunConfig& cfg, const std::string& key,
                           std::uint64_t config_value) {
  if (flags.seed_opt->count()) return flags.seed;
  if (cfg.is_set(key)) return config_value;
  if (const char* env = std::getenv(kSeedEnv)) {
    const std::string text = env;
    std::uint64_t seed = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
      throw ConfigError(std::string(kSeedEnv) + ": '" + text + "' is not an unsigned integer");
    }
    return seed;
  }
  return 0;
}

fs::path manifest_path(const fs::path& data) {
  if (!fs::exists(data)) throw LoadError("dataset '" + data.string() + "' does not exist");
  return fs::is_directory(data) ? data / "manifest.json" : data;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Configuration problems found after the flags were resolved come from the data
// (a pool too small to split, ...), so they count as runtime errors.
template <typename F>
int run_phase(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    throw std::runtime_error(e.what());
  }
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

// ---------------------------------------------------------------------------
// gen-data

struct GenDataFlags {
  CommonFlags common;
  double delta = 0.0;
  Index channels = 0, samples = 0, count_target = 0, count_nontarget = 0;
  CLI::Option *delta_opt, *channels_opt, *samples_opt, *target_opt, *nontarget_opt;
};

void setup_gen_data(CLI::App* cmd, GenDataFlags& f) {
  add_common(cmd, f.common, "synthetic data seed");
  f.delta_opt = cmd->add_option("--delta", f.delta, "target mean shift (>= 0)");
  f.channels_opt = cmd->add_option("--channels", f.channels, "channels per response");
  f.samples_opt = cmd->add_option("--samples", f.samples, "samples per channel");
  f.target_opt = cmd->add_option("--count-target", f.count_target, "target responses in the pool");
  f.nontarget_opt = cmd->add_option("--count-nontarget", f.count_nontarget, "non-target responses in the pool");
}

int cmd_gen_data(const GenDataFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(f.common);
  if (f.delta_opt->count()) cfg.set("synth.delta", format_double(f.delta));
  if (f.channels_opt->count()) cfg.set("synth.channels", std::to_string(f.channels));
  if (f.samples_opt->count()) cfg.set("synth.samples", std::to_string(f.samples));
  if (f.target_opt->count()) cfg.set("synth.count_target", std::to_string(f.count_target));
  if (f.nontarget_opt->count()) cfg.set("synth.count_nontarget", std::to_string(f.count_nontarget));
  cfg.set("synth.seed", std::to_string(resolve_seed(f.common, cfg, "synth.seed", cfg.synth.seed)));
  cfg.synth.validate();

  return run_phase([&] {
    const fs::path dir = f.common.out;
    save_pools(synth_pools(cfg.synth), dir);
    io::write_text(dir / kResolvedConfig, cfg.dump());
    out << "wrote " << (dir / "manifest.json").string() << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  CommonFlags common;
  std::string data;
  std::string method = "markovtype";
  std::string discount;
  double lambda = 0.0;
  int epochs = 0;
  std::vector<std::uint64_t> seeds;
  CLI::Option *discount_opt, *lambda_opt, *epochs_opt, *seeds_opt;
};

void setup_train(CLI::App* cmd, TrainFlags& f) {
  add_common(cmd, f.common, "split, initialization and training seed");
  cmd->add_option("--data", f.data, "dataset directory or manifest.json")->required();
  cmd->add_option("--method", f.method, "markovtype or rb1d")->check(CLI::IsMember(kMethods));
  f.discount_opt = cmd->add_option("--discount", f.discount, "linear, inv, inv2 or inv3")->check(CLI::IsMember(kDiscounts));
  f.lambda_opt = cmd->add_option("--lambda", f.lambda, "REINFORCE weight (default: tuned value for the discount)");
  f.epochs_opt = cmd->add_option("--epochs", f.epochs, "training epochs (default 200 markovtype, 25 rb1d)");
  f.seeds_opt = cmd->add_option("--seeds", f.seeds, "train one model per seed (comma separated)")->delimiter(',');
  f.seeds_opt->excludes(f.common.seed_opt);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string text = std::string(kHistoryHeader) + "\n";
  for (const auto& r : history) {
    text += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_accuracy) + "," +
            format_double(r.learning_rate) + "\n";
  }
  return text;
}

// Markovtype or rb1d parameters for one seed, trained on the seed's training split.
ParamStore<float> train_one(const std::string& method, const ResponsePool<float>& train_part, const RunConfig& cfg,
                            std::vector<EpochRecord>& history, std::ostream& log) {
  const std::uint64_t seed = cfg.train.seed;
  auto report = [&](const EpochRecord& r) {
    history.push_back(r);
    log << "seed " << seed << " epoch " << r.epoch << " loss " << r.train_loss << " val " << r.val_accuracy << "\n";
  };
  if (method == "markovtype") return train_markovtype(train_part, cfg.model, cfg.train, report).params;

  auto [fit_part, val_part] = split_pool(train_part, cfg.train.val_fraction, seed);
  BinaryTrainConfig bcfg = cfg.rb;
  bcfg.seed = seed;
  const SessionConfig val{cfg.train.val_trials, 1.0, cfg.model.sequences, cfg.model.query_size,
                          splitmix64(seed ^ 0x7e57)};
  return train_binary(fit_part, cfg.model, bcfg,
                      [&](int epoch, double loss, double lr, const ParamStore<float>& params) {
                        RbDecoder decoder(params, cfg.model);
                        report({epoch, loss, sweep_no_threshold(decoder, val_part, val).back(), lr});
                      })
      .params;
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& log) {
  RunConfig cfg = load_config(f.common);
  if (f.discount_opt->count()) cfg.set("train.discount", f.discount);
  if (f.lambda_opt->count()) cfg.set("train.lambda", format_double(f.lambda));
  if (!cfg.is_set("train.lambda")) cfg.train.lambda = default_lambda(cfg.train.discount);
  if (f.epochs_opt->count()) cfg.set(f.method == "rb1d" ? "rb.epochs" : "train.epochs", std::to_string(f.epochs));
  std::vector<std::uint64_t> seeds = f.seeds;
  if (seeds.empty()) seeds.push_back(resolve_seed(f.common, cfg, "train.seed", cfg.train.seed));
  cfg.train.validate();
  cfg.rb.validate();
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw ConfigError("data.test_fraction must lie in (0, 1)");

  return run_phase([&] {
    const ResponsePool<float> pool = load_pools(manifest_path(f.data));
    if (!cfg.is_set("model.channels")) cfg.model.channels = pool.channels();
    if (!cfg.is_set("model.samples")) cfg.model.samples = pool.samples();
    cfg.model.validate();
    if (pool.channels() != cfg.model.channels || pool.samples() != cfg.model.samples) {
      throw DimensionError("dataset responses are " + std::to_string(pool.channels()) + "x" +
                           std::to_string(pool.samples()) + ", model expects " + std::to_string(cfg.model.channels) +
                           "x" + std::to_string(cfg.model.samples));
    }

    const fs::path root = f.common.out;
    make_dir(root);
    for (const std::uint64_t seed : seeds) {
      cfg.train.seed = seed;
      const auto train_part = split_pool(pool, cfg.test_fraction, seed).first;
      std::vector<EpochRecord> history;
      const ParamStore<float> params = train_one(f.method, train_part, cfg, history, log);

      json meta;
      meta["method"] = f.method;
      meta["discount"] = f.method == "rb1d" ? "none" : to_string(cfg.train.discount);
      meta["lambda"] = cfg.train.lambda;
      meta["seed"] = seed;
      meta["test_fraction"] = cfg.test_fraction;
      meta["model"] = cfg.model;
      const fs::path dir = root / seed_dir_name(seed);
      save_checkpoint(params, meta, dir);
      io::write_text(dir / "history.csv", history_csv(history));
      io::write_text(dir / kResolvedConfig, cfg.dump());
      out << "wrote " << dir.string() << "\n";
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  CommonFlags common;
  std::string ckpt;
  std::string data;
  std::string mode = "both";
  double tau = 0.0;
  int trials = 0;
  CLI::Option *tau_opt, *trials_opt;
};

void setup_eval(CLI::App* cmd, EvalFlags& f) {
  add_common(cmd, f.common, "session seed (default: the checkpoint's seed)");
  cmd->add_option("--ckpt", f.ckpt, "checkpoint directory, or a train output holding seed_* checkpoints")->required();
  cmd->add_option("--data", f.data, "dataset directory or manifest.json")->required();
  cmd->add_option("--mode", f.mode, "threshold, sweep or both")->check(CLI::IsMember(kModes));
  f.tau_opt = cmd->add_option("--tau", f.tau, "stopping threshold in (0, 1] (default 0.8)");
  f.trials_opt = cmd->add_option("--trials", f.trials, "selections per session (default 1000)");
}

// The checkpoint itself, or every seed_* checkpoint below it ordered by seed.
std::vector<fs::path> checkpoint_dirs(const fs::path& root) {
  if (fs::exists(root / "params.json")) return {root};
  if (!fs::is_directory(root)) throw LoadError("checkpoint '" + root.string() + "' does not exist");
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed_", 0) != 0 || !fs::exists(entry.path() / "params.json")) continue;
    std::uint64_t seed = 0;
    const auto [end, ec] = std::from_chars(name.data() + 5, name.data() + name.size(), seed);
    if (ec == std::errc() && end == name.data() + name.size()) found.emplace_back(seed, entry.path());
  }
  if (found.empty()) throw LoadError("no checkpoint (params.json) in '" + root.string() + "'");
  std::sort(found.begin(), found.end());
  std::vector<fs::path> dirs;
  for (auto& [seed, path] : found) dirs.push_back(path);
  return dirs;
}

template <typename T>
T meta_field(const json& meta, const char* key, const fs::path& dir) {
  try {
    return meta.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw LoadError((dir / "params.json").string() + ": meta." + key + " missing or malformed");
  }
}

int cmd_eval(const EvalFlags& f, std::ostream& out, std::ostream& log) {
  RunConfig cfg = load_config(f.common);
  if (f.tau_opt->count()) cfg.set("session.tau", format_double(f.tau));
  if (f.trials_opt->count()) cfg.set("session.trials", std::to_string(f.trials));
  cfg.session.validate();

  return run_phase([&] {
    const ResponsePool<float> pool = load_pools(manifest_path(f.data));
    std::vector<SeedReport> reports;
    json sidecar;
    sidecar["mode"] = f.mode;
    sidecar["data"] = f.data;
    sidecar["checkpoints"] = json::array();

    for (const fs::path& dir : checkpoint_dirs(f.ckpt)) {
      const Checkpoint ckpt = load_checkpoint(dir);
      const auto method = meta_field<std::string>(ckpt.meta, "method", dir);
      const auto discount = meta_field<std::string>(ckpt.meta, "discount", dir);
      const auto seed = meta_field<std::uint64_t>(ckpt.meta, "seed", dir);
      const auto test_fraction = meta_field<double>(ckpt.meta, "test_fraction", dir);
      ModelConfig model;
      try {
        model = ckpt.meta.at("model").get<ModelConfig>();
        model.validate();
      } catch (const std::exception& e) {
        throw LoadError((dir / "params.json").string() + ": meta.model: " + e.what());
      }
      if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
        throw LoadError((dir / "params.json").string() + ": unknown method '" + method + "'");
      }
      if (pool.channels() != model.channels || pool.samples() != model.samples) {
        throw DimensionError("dataset responses are " + std::to_string(pool.channels()) + "x" +
                             std::to_string(pool.samples()) + ", checkpoint " + dir.string() + " expects " +
                             std::to_string(model.channels) + "x" + std::to_string(model.samples));
      }

      SessionConfig session = cfg.session;
      if (!cfg.is_set("session.sequences")) session.sequences = model.sequences;
      if (!cfg.is_set("session.query_size")) session.query_size = model.query_size;
      session.seed = resolve_seed(f.common, cfg, "session.seed", cfg.session.seed);
      if (!f.common.seed_opt->count() && !cfg.is_set("session.seed")) session.seed = seed;

      std::unique_ptr<Decoder> decoder;
      if (method == "rb1d") decoder = std::make_unique<RbDecoder>(ckpt.params, model);
      else decoder = std::make_unique<MarkovTypeDecoder>(ckpt.params, model);

      const auto test_part = split_pool(pool, test_fraction, seed).second;
      SessionResult result;
      std::vector<double> sweep;
      if (f.mode != "sweep") result = run_session(*decoder, test_part, session);
      if (f.mode != "threshold") sweep = sweep_no_threshold(*decoder, test_part, session);
      reports.push_back(make_seed_report(method, discount, seed, decoder->num_params(), result, sweep));
      log << method_label(method, discount) << " seed " << seed << ": accuracy " << reports.back().accuracy
          << " n_tau " << reports.back().n_tau << "\n";

      sidecar["checkpoints"].push_back({{"path", dir.string()},
                                        {"method", method},
                                        {"discount", discount},
                                        {"seed", seed},
                                        {"session_seed", session.seed},
                                        {"trials", session.trials},
                                        {"tau", session.tau},
                                        {"sequences", session.sequences},
                                        {"query_size", session.query_size},
                                        {"model", model}});
    }

    const fs::path dir = f.common.out;
    export_reports(reports, dir);
    sidecar["config"] = json::object();
    std::istringstream lines(cfg.dump());
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find(" = ");
      sidecar["config"][line.substr(0, eq)] = line.substr(eq + 3);
    }
    io::write_text(dir / "session.json", sidecar.dump(2) + "\n");
    io::write_text(dir / kResolvedConfig, cfg.dump());
    out << "wrote " << dir.string() << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// report

struct ReportFlags {
  CommonFlags common;
  std::vector<std::string> inputs;
};

void setup_report(CLI::App* cmd, ReportFlags& f) {
  cmd->add_option("--in", f.inputs, "eval output directories or seeds.csv files")->required();
  cmd->add_option("--config", f.common.config, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.common.sets, "override one config key (key=value); repeatable");
  cmd->add_option("--out", f.common.out, "output directory")->required();
}

int cmd_report(const ReportFlags& f, std::ostream& out) {
  const RunConfig cfg = load_config(f.common);
  std::vector<SeedReport> merged;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::string> origin;
  for (const auto& input : f.inputs) {
    const fs::path file = fs::is_directory(input) ? fs::path(input) / "seeds.csv" : fs::path(input);
    if (!fs::exists(file)) throw LoadError("no seeds.csv in '" + input + "'");
    for (auto& r : read_seed_reports(file)) {
      const auto key = std::make_tuple(r.method, r.discount, r.seed);
      if (const auto it = origin.find(key); it != origin.end()) {
        throw LoadError(file.string() + ": " + method_label(r.method, r.discount) + " seed " + std::to_string(r.seed) +
                        " already read from " + it->second);
      }
      origin[key] = file.string();
      merged.push_back(std::move(r));
    }
  }
  if (merged.empty()) throw LoadError("no seed rows in the inputs");
  try {
    export_reports(merged, f.common.out);
  } catch (const DimensionError& e) {
    throw LoadError(std::string("inputs do not share one schema: ") + e.what());
  }
  io::write_text(fs::path(f.common.out) / kResolvedConfig, cfg.dump());
  out << "wrote " << f.common.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recursive posterior decoding for ERP typing: synthetic data, training, evaluation, reports",
               "markovtyper"};
  app.require_subcommand(1);
  GenDataFlags gen;
  TrainFlags train;
  EvalFlags eval;
  ReportFlags report;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write synthetic response pools");
  CLI::App* train_cmd = app.add_subcommand("train", "train markovtype or rb1d models, one per seed");
  CLI::App* eval_cmd = app.add_subcommand("eval", "run typing sessions and export report CSVs");
  CLI::App* report_cmd = app.add_subcommand("report", "merge per-seed rows of several evaluations");
  setup_gen_data(gen_cmd, gen);
  setup_train(train_cmd, train);
  setup_eval(eval_cmd, eval);
  setup_report(report_cmd, report);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*eval_cmd) return cmd_eval(eval, out, err);
    return cmd_report(report, out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace markovtype
