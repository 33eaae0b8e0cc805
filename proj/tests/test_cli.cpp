#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <sstream>

#include "markovtype/cli.hpp"
#include "markovtype/config.hpp"
#include "markovtype/io.hpp"
#include "markovtype/reports.hpp"
#include "test_support.hpp"

using namespace markovtype;
using markovtype::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small enough that a training epoch takes milliseconds.
const char* kSmallConfig =
    "# small model\n"
    "model.alphabet = 5\n"
    "model.query_size = 2\n"
    "model.sequences = 3\n"
    "model.feature_length = 4\n"
    "model.hidden = 8\n"
    "model.conv = 2:3:1, 2:3:1, 2:2:1, 2:2:1, 2:1:1\n"
    "train.batches_per_epoch = 3\n"
    "train.val_trials = 20\n";

struct Workspace {
  fs::path root;
  std::string data, config;

  explicit Workspace(const std::string& name, double delta = 3.0) : root(scratch_dir(name)) {
    data = (root / "data").string();
    config = (root / "small.conf").string();
    io::write_text(config, kSmallConfig);
    const Run r = cli({"gen-data", "--delta", format_double(delta), "--seed", "0", "--channels", "2", "--samples", "12",
                       "--count-target", "40", "--count-nontarget", "120", "--out", data});
    REQUIRE(r.code == 0);
  }

  std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string read(const fs::path& p) { return io::read_text(p); }

std::size_t rows(const fs::path& csv) {
  std::istringstream in(read(csv));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n - 1;
}

}  // namespace

TEST_CASE("RunConfig: default hyperparameters") {
  const RunConfig cfg;
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.train.epochs == 200);
  CHECK(cfg.rb.epochs == 25);
  CHECK(cfg.train.decay == 0.97);
  CHECK(cfg.rb.decay == 0.97);
  CHECK(cfg.train.batch == 28);
  CHECK(cfg.rb.batch == 28);
  CHECK(cfg.session.tau == 0.8);
  CHECK(cfg.session.trials == 1000);
  CHECK(cfg.model.alphabet == 28);
  CHECK(cfg.model.query_size == 10);
  CHECK(cfg.model.sequences == 10);
}

TEST_CASE("RunConfig: keys, overrides, round trip and rejection") {
  RunConfig cfg;
  CHECK(RunConfig::keys().size() == 35);
  cfg.set("model.conv", "4:3:1,4:3:1,4:3:1,4:3:1,4:3:1");
  CHECK(cfg.model.conv[2] == ConvLayerSpec{4, 3, 1});
  cfg.set_assignment("train.discount = inv3");
  CHECK(cfg.train.discount == DiscountKind::inv3);
  cfg.set("synth.seed", "18446744073709551615");
  CHECK(cfg.synth.seed == 18446744073709551615ull);
  CHECK(cfg.is_set("train.discount"));
  CHECK_FALSE(cfg.is_set("train.lambda"));

  RunConfig again;
  const fs::path dir = scratch_dir("cli_config");
  io::write_text(dir / "a.conf", cfg.dump());
  again.load_file(dir / "a.conf");
  CHECK(again.dump() == cfg.dump());

  CHECK_THROWS_AS(cfg.set("model.colour", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "ten"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "10x"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.discount", "cubic"), ConfigError);
  CHECK_THROWS_AS(cfg.set("model.conv", "4:3,4:3:1"), ConfigError);
  CHECK_THROWS_AS(cfg.set_assignment("train.epochs"), ConfigError);
  io::write_text(dir / "bad.conf", "train.epochs = 3\nnot.a.key = 1\n");
  try {
    again.load_file(dir / "bad.conf");
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.conf:2") != std::string::npos);
  }
}

TEST_CASE("gen-data: loadable pools, byte-identical reruns, usage errors") {
  const fs::path dir = scratch_dir("cli_gen");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(cli({"gen-data", "--delta", "3", "--seed", "0", "--out", a}).code == 0);
  CHECK(fs::exists(fs::path(a) / "manifest.json"));
  CHECK(fs::exists(fs::path(a) / "target.f32"));
  CHECK(fs::exists(fs::path(a) / "nontarget.f32"));
  const ResponsePool<float> pool = load_pools(fs::path(a) / "manifest.json");
  const SynthConfig defaults;
  CHECK(pool.channels() == defaults.channels);
  CHECK(pool.count_target() == defaults.count_target);

  REQUIRE(cli({"gen-data", "--delta", "3", "--seed", "0", "--out", b}).code == 0);
  for (const char* f : {"manifest.json", "target.f32", "nontarget.f32", "run.conf"}) {
    CHECK(read(fs::path(a) / f) == read(fs::path(b) / f));
  }
  RunConfig resolved;
  resolved.load_file(fs::path(a) / "run.conf");
  CHECK(resolved.synth.delta == 3.0);

  const Run negative = cli({"gen-data", "--delta", "-1", "--out", (dir / "c").string()});
  CHECK(negative.code == 2);
  CHECK_FALSE(fs::exists(dir / "c" / "manifest.json"));
  CHECK(cli({"gen-data", "--out", (dir / "c").string(), "--bogus"}).code == 2);
  CHECK(cli({"gen-data"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("gen-data: seed falls back to MARKOVTYPER_SEED") {
  const fs::path dir = scratch_dir("cli_env");
  REQUIRE(cli({"gen-data", "--seed", "7", "--count-target", "5", "--out", (dir / "flag").string()}).code == 0);
  ::setenv("MARKOVTYPER_SEED", "7", 1);
  const Run env = cli({"gen-data", "--count-target", "5", "--out", (dir / "env").string()});
  ::setenv("MARKOVTYPER_SEED", "seven", 1);
  const Run bad = cli({"gen-data", "--count-target", "5", "--out", (dir / "bad").string()});
  ::unsetenv("MARKOVTYPER_SEED");
  REQUIRE(env.code == 0);
  CHECK(read(dir / "flag" / "target.f32") == read(dir / "env" / "target.f32"));
  CHECK(bad.code == 2);
}

TEST_CASE("train: usage and data errors") {
  const Workspace ws("cli_train_errors");
  const Run bogus = cli({"train", "--data", ws.data, "--method", "bogus", "--out", ws.path("t")});
  CHECK(bogus.code == 2);
  CHECK(bogus.err.find("markovtype") != std::string::npos);
  CHECK(bogus.err.find("rb1d") != std::string::npos);
  CHECK(cli({"train", "--data", ws.data, "--discount", "quadratic", "--out", ws.path("t")}).code == 2);
  CHECK(cli({"train", "--data", ws.data, "--config", ws.config, "--set", "train.nope=1", "--out", ws.path("t")}).code == 2);

  const Run missing = cli({"train", "--data", ws.path("no_such_dataset"), "--out", ws.path("t")});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("no_such_dataset") != std::string::npos);

  // Explicit model dimensions that disagree with the dataset.
  CHECK(cli({"train", "--data", ws.data, "--config", ws.config, "--set", "model.channels=3", "--epochs", "1", "--out",
             ws.path("t")})
            .code == 1);
}

TEST_CASE("train: outputs, resolved config and per-discount lambda") {
  const Workspace ws("cli_train");
  const Run r = cli({"train", "--data", ws.data, "--config", ws.config, "--discount", "inv2", "--epochs", "2",
                     "--seeds", "0,1", "--out", ws.path("t")});
  REQUIRE(r.code == 0);
  for (const char* seed : {"seed_0", "seed_1"}) {
    const fs::path dir = fs::path(ws.path("t")) / seed;
    CHECK(fs::exists(dir / "params.json"));
    CHECK(fs::exists(dir / "params.f32"));
    CHECK(rows(dir / "history.csv") == 2);
    CHECK(read(dir / "history.csv").rfind(std::string(kHistoryHeader) + "\n", 0) == 0);
    RunConfig resolved;
    resolved.load_file(dir / "run.conf");
    CHECK(resolved.train.lambda == default_lambda(DiscountKind::inv2));
    CHECK(resolved.train.epochs == 2);
    CHECK(resolved.model.channels == 2);
    CHECK(resolved.model.samples == 12);
  }

  const Run explicit_lambda = cli({"train", "--data", ws.data, "--config", ws.config, "--discount", "inv2", "--lambda",
                                   "0.07", "--epochs", "1", "--out", ws.path("l")});
  REQUIRE(explicit_lambda.code == 0);
  RunConfig resolved;
  resolved.load_file(fs::path(ws.path("l")) / "seed_0" / "run.conf");
  CHECK(resolved.train.lambda == 0.07);

  REQUIRE(cli({"train", "--data", ws.data, "--config", ws.config, "--method", "rb1d", "--epochs", "3", "--seed", "4",
               "--out", ws.path("r")})
              .code == 0);
  const fs::path rb = fs::path(ws.path("r")) / "seed_4";
  CHECK(rows(rb / "history.csv") == 3);
  RunConfig rb_resolved;
  rb_resolved.load_file(rb / "run.conf");
  CHECK(rb_resolved.rb.epochs == 3);
  CHECK(rb_resolved.train.epochs == 200);
}

TEST_CASE("train: two-epoch smoke run with the default model finishes within a minute") {
  const fs::path dir = scratch_dir("cli_smoke");
  REQUIRE(cli({"gen-data", "--delta", "1", "--count-target", "60", "--count-nontarget", "300", "--out",
               (dir / "d").string()})
              .code == 0);
  const auto start = std::chrono::steady_clock::now();
  const Run r = cli({"train", "--data", (dir / "d").string(), "--epochs", "2", "--out", (dir / "t").string()});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(r.code == 0);
  CAPTURE(seconds);
  CHECK(seconds < 60.0);
}

TEST_CASE("eval: modes, usage errors and shape mismatch") {
  const Workspace ws("cli_eval");
  REQUIRE(cli({"train", "--data", ws.data, "--config", ws.config, "--epochs", "1", "--seeds", "0,1,2,3,4", "--out",
               ws.path("t")})
              .code == 0);

  const Run threshold = cli({"eval", "--ckpt", ws.path("t/seed_0"), "--data", ws.data, "--mode", "threshold", "--tau",
                             "0.8", "--trials", "1000", "--out", ws.path("e1")});
  REQUIRE(threshold.code == 0);
  const fs::path e1 = ws.path("e1");
  CHECK(rows(e1 / "summary.csv") == 1);
  CHECK(rows(e1 / "histogram.csv") == 3);
  CHECK(rows(e1 / "sweep.csv") == 0);
  const auto seeds = read_seed_reports(e1 / "seeds.csv");
  REQUIRE(seeds.size() == 1);
  CHECK(seeds[0].trials == 1000);
  CHECK(seeds[0].n_tau >= 1.0);
  CHECK(seeds[0].n_tau <= 3.0);
  CHECK(fs::exists(e1 / "session.json"));

  const Run all = cli({"eval", "--ckpt", ws.path("t"), "--data", ws.data, "--trials", "60", "--out", ws.path("e5")});
  REQUIRE(all.code == 0);
  const auto summary = read_summary(fs::path(ws.path("e5")) / "summary.csv");
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].method == "markovtype");
  CHECK(summary[0].discount == "linear");
  CHECK(read(fs::path(ws.path("e5")) / "summary.csv").find("\xC2\xB1") != std::string::npos);
  CHECK(read_seed_reports(fs::path(ws.path("e5")) / "seeds.csv").size() == 5);
  CHECK(rows(fs::path(ws.path("e5")) / "sweep.csv") == 3);
  const std::string sidecar = read(fs::path(ws.path("e5")) / "session.json");
  CHECK(sidecar.find("\"session_seed\": 4") != std::string::npos);
  CHECK(sidecar.find("\"session.tau\": \"0.8\"") != std::string::npos);

  const Run sweep = cli({"eval", "--ckpt", ws.path("t"), "--data", ws.data, "--mode", "sweep", "--trials", "30",
                         "--out", ws.path("es")});
  REQUIRE(sweep.code == 0);
  CHECK(rows(fs::path(ws.path("es")) / "summary.csv") == 0);
  CHECK(rows(fs::path(ws.path("es")) / "sweep.csv") == 3);

  CHECK(cli({"eval", "--ckpt", ws.path("t"), "--data", ws.data, "--tau", "1.1", "--out", ws.path("x")}).code == 2);
  CHECK(cli({"eval", "--ckpt", ws.path("t"), "--data", ws.data, "--tau", "0", "--out", ws.path("x")}).code == 2);
  CHECK(cli({"eval", "--ckpt", ws.path("t"), "--data", ws.data, "--mode", "fast", "--out", ws.path("x")}).code == 2);
  CHECK(cli({"eval", "--ckpt", ws.path("nothing"), "--data", ws.data, "--out", ws.path("x")}).code == 1);

  const fs::path other = fs::path(ws.path("other"));
  REQUIRE(cli({"gen-data", "--channels", "3", "--samples", "12", "--count-target", "10", "--count-nontarget", "30",
               "--out", other.string()})
              .code == 0);
  const Run mismatch = cli({"eval", "--ckpt", ws.path("t"), "--data", other.string(), "--out", ws.path("x")});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("3x12") != std::string::npos);
}

TEST_CASE("report: merging, grouping and input errors") {
  const Workspace ws("cli_report");
  REQUIRE(cli({"train", "--data", ws.data, "--config", ws.config, "--epochs", "1", "--seeds", "0,1,2,3,4", "--out",
               ws.path("m")})
              .code == 0);
  REQUIRE(cli({"train", "--data", ws.data, "--config", ws.config, "--method", "rb1d", "--epochs", "1", "--seeds",
               "0,1", "--out", ws.path("r")})
              .code == 0);
  REQUIRE(cli({"eval", "--ckpt", ws.path("m"), "--data", ws.data, "--trials", "40", "--out", ws.path("em")}).code == 0);
  REQUIRE(cli({"eval", "--ckpt", ws.path("r"), "--data", ws.data, "--trials", "40", "--out", ws.path("er")}).code == 0);

  REQUIRE(cli({"report", "--in", ws.path("em"), "--out", ws.path("one")}).code == 0);
  CHECK(rows(fs::path(ws.path("one")) / "summary.csv") == 1);
  CHECK(read(fs::path(ws.path("one")) / "summary.csv") == read(fs::path(ws.path("em")) / "summary.csv"));

  REQUIRE(cli({"report", "--in", ws.path("em"), ws.path("er"), "--out", ws.path("mixed")}).code == 0);
  const auto summary = read_summary(fs::path(ws.path("mixed")) / "summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].method == "markovtype");
  CHECK(summary[1].method == "rb1d");
  CHECK(summary[1].discount == "none");
  CHECK(rows(fs::path(ws.path("mixed")) / "histogram.csv") == 6);

  fs::create_directories(ws.path("empty"));
  CHECK(cli({"report", "--in", ws.path("empty"), "--out", ws.path("x")}).code == 1);
  io::write_text(ws.path("header_only.csv"), std::string(kSeedsHeader) + "\n");
  CHECK(cli({"report", "--in", ws.path("header_only.csv"), "--out", ws.path("x")}).code == 1);

  io::write_text(ws.path("bad.csv"), "method,seed\nmarkovtype,0\n");
  const Run bad = cli({"report", "--in", ws.path("em"), ws.path("bad.csv"), "--out", ws.path("x")});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("bad.csv") != std::string::npos);

  const Run dup = cli({"report", "--in", ws.path("em"), ws.path("em"), "--out", ws.path("x")});
  CHECK(dup.code == 1);
  CHECK(dup.err.find("seeds.csv") != std::string::npos);
}

TEST_CASE("train + eval reruns produce byte-identical outputs") {
  const Workspace ws("cli_determinism");
  for (const char* run : {"a", "b"}) {
    const std::string t = ws.path(std::string(run) + "_train");
    REQUIRE(cli({"train", "--data", ws.data, "--config", ws.config, "--epochs", "2", "--seeds", "0,1", "--out", t})
                .code == 0);
    REQUIRE(cli({"eval", "--ckpt", t, "--data", ws.data, "--trials", "80", "--out", ws.path(std::string(run) + "_eval")})
                .code == 0);
  }
  for (const char* f : {"seeds.csv", "summary.csv", "histogram.csv", "sweep.csv", "run.conf"}) {
    CAPTURE(f);
    CHECK(read(fs::path(ws.path("a_eval")) / f) == read(fs::path(ws.path("b_eval")) / f));
  }
  for (const char* f : {"history.csv", "params.f32", "run.conf"}) {
    CAPTURE(f);
    CHECK(read(fs::path(ws.path("a_train")) / "seed_1" / f) == read(fs::path(ws.path("b_train")) / "seed_1" / f));
  }
}
