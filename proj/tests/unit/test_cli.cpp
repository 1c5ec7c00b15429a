#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../common/fixtures.hpp"
#include "pairnet/cli.hpp"
#include "pairnet/config.hpp"
#include "pairnet/errors.hpp"
#include "pairnet/eval.hpp"

using namespace pairnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "pairnet");
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTinyConfig =
    "gen.n_clips = 8\n"
    "gen.frames = 8\n"
    "gen.height = 8\n"
    "gen.width = 8\n"
    "gen.mel_bins = 8\n"
    "model.feature_dim = 8\n"
    "model.heads = 2\n"
    "model.video_conv_channels = 4\n"
    "model.video_blocks = 1\n"
    "model.audio_blocks = 3\n"
    "model.audio_conv_channels = 8\n"
    "train.epochs = 1\n"
    "train.frame_budget = 16\n"
    "train.val_fraction = 0.25\n";

}  // namespace

TEST_CASE("synth then inspect reports the corpus shape") {
  const auto dir = fixture::scratch_dir("cli_synth");
  write_file(dir / "s.cfg", kTinyConfig);
  const auto synth = run({"synth", "--spec", (dir / "s.cfg").string(), "--out", (dir / "d").string()});
  REQUIRE(synth.code == kExitOk);
  CHECK(fs::exists(dir / "d" / "corpus.pair"));
  CHECK(fs::exists(dir / "d" / "run.cfg"));
  const auto prov = slurp(dir / "d" / "provenance.txt");
  CHECK(prov.find(kArtifactVersion) != std::string::npos);
  CHECK(prov.find("seed = 1") != std::string::npos);

  const auto inspect = run({"inspect", (dir / "d").string()});
  CHECK(inspect.code == kExitOk);
  CHECK(inspect.out.find("clips: 8") != std::string::npos);
  CHECK(inspect.out.find("video [8 x 8 x 8]") != std::string::npos);
  CHECK(inspect.out.find("audio [32 x 8]") != std::string::npos);

  // The echoed config regenerates the same corpus.
  const auto again = run({"synth", "--spec", (dir / "d" / "run.cfg").string(), "--out", (dir / "e").string()});
  REQUIRE(again.code == kExitOk);
  CHECK(slurp(dir / "e" / "corpus.pair") == slurp(dir / "d" / "corpus.pair"));
}

TEST_CASE("usage and configuration errors map to exit codes") {
  const auto dir = fixture::scratch_dir("cli_errors");
  write_file(dir / "s.cfg", kTinyConfig);
  REQUIRE(run({"synth", "--spec", (dir / "s.cfg").string(), "--out", (dir / "d").string()}).code == 0);

  CHECK(run({"frobnicate"}).code == kExitUsage);
  const auto flag = run({"synth", "--spec", (dir / "s.cfg").string(), "--out", "x", "--bogus"});
  CHECK(flag.code == kExitUsage);
  CHECK(flag.err.starts_with("pairnet: error[usage_error]: "));

  write_file(dir / "bad.cfg", std::string(kTinyConfig) + "train.alpha0 = 1.2\n");
  const auto bad = run({"train", "--config", (dir / "bad.cfg").string(), "--data", (dir / "d").string(),
                        "--out", (dir / "run").string()});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("train.alpha0") != std::string::npos);
  CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);
  CHECK_FALSE(fs::exists(dir / "run" / "checkpoint_final.pair"));

  write_file(dir / "unknown.cfg", "gen.colour = 3\n");
  const auto unknown = run({"synth", "--spec", (dir / "unknown.cfg").string(), "--out", (dir / "u").string()});
  CHECK(unknown.code == kExitConfig);
  CHECK(unknown.err.find("gen.colour") != std::string::npos);

  const auto missing = run({"inspect", (dir / "nope.pair").string()});
  CHECK(missing.code == kExitRuntime);
}

TEST_CASE("seed precedence is flag, then environment, then config") {
  const auto dir = fixture::scratch_dir("cli_seed");
  write_file(dir / "s.cfg", std::string(kTinyConfig) + "gen.seed = 5\n");
  auto seed_of = [&](const std::string& sub, std::vector<std::string> extra) {
    std::vector<std::string> args = {"synth", "--spec", (dir / "s.cfg").string(), "--out", (dir / sub).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(run(args).code == 0);
    return parse_run_config(slurp(dir / sub / "run.cfg")).gen.seed;
  };
  ::unsetenv("PAIRNET_SEED");
  CHECK(seed_of("a", {}) == 5);
  ::setenv("PAIRNET_SEED", "11", 1);
  CHECK(seed_of("b", {}) == 11);
  CHECK(seed_of("c", {"--seed", "13"}) == 13);
  ::setenv("PAIRNET_SEED", "eleven", 1);
  CHECK(run({"synth", "--spec", (dir / "s.cfg").string(), "--out", (dir / "d").string()}).code == kExitConfig);
  ::unsetenv("PAIRNET_SEED");
}

TEST_CASE("train, eval, diagnose and inspect a run directory") {
  const auto dir = fixture::scratch_dir("cli_pipeline");
  write_file(dir / "s.cfg", kTinyConfig);
  REQUIRE(run({"synth", "--spec", (dir / "s.cfg").string(), "--out", (dir / "d").string()}).code == 0);
  const auto train = run({"train", "--config", (dir / "s.cfg").string(), "--data", (dir / "d").string(),
                          "--out", (dir / "run").string()});
  REQUIRE(train.code == kExitOk);
  CHECK(fs::exists(dir / "run" / "checkpoint_final.pair"));
  CHECK(fs::exists(dir / "run" / "metrics.csv"));
  CHECK(fs::exists(dir / "run" / "run.cfg"));

  const auto ckpt = (dir / "run" / "checkpoint_final.pair").string();
  const auto eval = run({"eval", "--checkpoint", ckpt, "--data", (dir / "d").string(), "--out", (dir / "ev").string()});
  REQUIRE(eval.code == kExitOk);
  const auto report = read_metrics_row(dir / "ev" / "metrics.csv");
  CHECK(report.n_frames == 64);

  const auto diag = run({"diagnose", "--checkpoint", ckpt, "--checkpoint", ckpt, "--data", (dir / "d").string(),
                         "--out", (dir / "diag").string()});
  REQUIRE(diag.code == kExitOk);
  CHECK(fs::exists(dir / "diag" / "imbalance.csv"));

  CHECK(run({"inspect", ckpt}).code == kExitOk);
  CHECK(run({"inspect", (dir / "run").string()}).code == kExitOk);
  CHECK(run({"keys"}).out.find("train.alpha0") != std::string::npos);
}

TEST_CASE("config text round-trips every key") {
  RunConfig cfg;
  cfg.train.lr0 = 0.0123;
  cfg.model.encoder.video_conv_channels = {3, 5, 7};
  cfg.gen.p_stay = 0.85;
  const auto text = format_run_config(cfg);
  const auto parsed = parse_run_config(text);
  CHECK(format_run_config(parsed) == text);
  for (const auto& k : config_keys()) CHECK(get_config_value(parsed, k.key) == get_config_value(cfg, k.key));
  CHECK_THROWS_AS(parse_run_config("train.epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
}
