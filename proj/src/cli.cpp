#include "pairnet/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "pairnet/config.hpp"
#include "pairnet/container.hpp"
#include "pairnet/errors.hpp"
#include "pairnet/eval.hpp"
#include "pairnet/training.hpp"

namespace pairnet {
namespace {

namespace fs = std::filesystem;

constexpr const char* kCorpusFile = "corpus.pair";

fs::path resolve_corpus(const fs::path& path) {
  return fs::is_directory(path) ? path / kCorpusFile : path;
}

/// flag > PAIRNET_SEED > config file.
void apply_seed(RunConfig& config, const std::string& seed_key, const std::string& seed_flag) {
  if (!seed_flag.empty()) {
    set_config_value(config, seed_key, seed_flag);
  } else if (const char* env = std::getenv("PAIRNET_SEED"); env != nullptr && *env != '\0') {
    try {
      set_config_value(config, seed_key, env);
    } catch (const ConfigError& e) {
      throw ConfigError("PAIRNET_SEED", e.detail());
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

void write_provenance(const fs::path& dir, const RunConfig& config, const std::string& command,
                      const std::string& seed_key) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  write_text(dir / "run.cfg", format_run_config(config));
  write_text(dir / "provenance.txt", std::string("version = ") + kArtifactVersion +
                                         "\ncommand = " + command + "\nseed_key = " + seed_key +
                                         "\nseed = " + get_config_value(config, seed_key) + "\n");
}

struct LoadedModel {
  RunConfig config;
  TrainState state;
};

LoadedModel load_model(const fs::path& checkpoint_path) {
  const auto checkpoint = load_checkpoint(checkpoint_path);
  RunConfig config = parse_run_config(checkpoint.config_text);
  config.validate();
  TrainState state = init_train_state(config.model, config.train);
  restore_checkpoint(checkpoint, state);
  return {config, std::move(state)};
}

std::string join_dims(std::initializer_list<std::size_t> dims) {
  std::string s = "[";
  for (auto d : dims) s += (s.size() > 1 ? " x " : "") + std::to_string(d);
  return s + "]";
}

void inspect_corpus(const fs::path& path, std::ostream& out) {
  const auto clips = read_corpus(path);
  std::map<std::string, std::size_t> shapes;
  std::size_t frames = 0, positives = 0;
  for (const auto& c : clips) {
    ++shapes["video " + join_dims({c.frames, c.height, c.width}) + "  audio " +
             join_dims({c.audio_frames, c.mel_bins}) + "  labels " + join_dims({c.frames})];
    frames += c.frames;
    for (auto l : c.labels) positives += static_cast<std::size_t>(l);
  }
  out << "corpus: " << path.string() << '\n' << "clips: " << clips.size() << '\n';
  for (const auto& [shape, count] : shapes) out << "  " << count << " x " << shape << '\n';
  out << "frames: " << frames << '\n';
  if (frames > 0)
    out << "positive_rate: " << static_cast<double>(positives) / static_cast<double>(frames) << '\n';
  if (!clips.empty() && !clips.front().meta.empty()) {
    out << "meta[" << clips.front().clip_id << "]:";
    for (const auto& [k, v] : clips.front().meta) out << ' ' << k << '=' << v;
    out << '\n';
  }
}

void inspect_checkpoint(const fs::path& path, std::ostream& out) {
  auto [config, state] = load_model(path);
  const auto& params = state.model.parameters();
  std::size_t frozen = 0, frozen_scalars = 0;
  for (const auto& p : params)
    if (p.frozen) {
      ++frozen;
      frozen_scalars += static_cast<std::size_t>(p.value.size());
    }
  out << "checkpoint: " << path.string() << '\n'
      << "step: " << state.step << "\nepochs_completed: " << state.epoch << '\n'
      << "parameters: " << params.size() << " tensors, " << params.scalar_count() << " scalars\n"
      << "frozen: " << frozen << " tensors, " << frozen_scalars << " scalars\n"
      << "history_rows: " << state.history.size() << '\n'
      << "--- config ---\n"
      << format_run_config(config);
}

bool is_checkpoint(const fs::path& path) {
  try {
    const auto records = read_container(path);
    return !records.empty() && records.front().id == "__state__";
  } catch (const FormatError&) {
    return false;
  }
}

std::string command_line(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual active speaker detection: synthetic corpora, training, evaluation.",
               "pairnet"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 configuration error.\n"
      "Config files are flat 'section.key = value' text; run `pairnet keys` for every key.\n"
      "PAIRNET_SEED overrides the config seed; --seed overrides both.");

  std::string spec_file, config_file, data_path, out_dir, seed_flag, resume_path, test_path;
  std::vector<std::string> checkpoints;
  std::string inspect_path;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus into <out>/corpus.pair");
  synth->add_option("--spec", spec_file, "Run config with gen.* keys")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed_flag, "Override gen.seed");

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoints and metrics.csv");
  train->add_option("--config", config_file, "Run config file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data_path, "Corpus file or synth output directory")->required();
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--seed", seed_flag, "Override train.seed");
  train->add_option("--resume", resume_path, "Continue from a checkpoint of the same run")
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", resume_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "Corpus file or directory")->required();
  eval->add_option("--out", out_dir, "Report directory")->required();

  auto* diagnose = app.add_subcommand(
      "diagnose", "Evaluate one or more checkpoints and compare modality balance across runs");
  diagnose->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  diagnose->add_option("--data", data_path, "Held-out corpus file or directory")->required();
  diagnose->add_option("--out", out_dir, "Report directory")->required();

  auto* inspect = app.add_subcommand("inspect", "Describe a corpus, checkpoint or run directory");
  inspect->add_option("path", inspect_path, "File or directory")->required();

  auto* keys = app.add_subcommand("keys", "List every configuration key with its default");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pairnet: error[usage_error]: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      RunConfig config = load_run_config(spec_file);
      apply_seed(config, "gen.seed", seed_flag);
      config.validate();
      const auto clips = generate_corpus(config.gen);
      write_provenance(out_dir, config, command_line(args), "gen.seed");
      write_corpus(clips, fs::path(out_dir) / kCorpusFile);
      out << "wrote " << clips.size() << " clips to " << (fs::path(out_dir) / kCorpusFile).string()
          << '\n';
    } else if (train->parsed()) {
      RunConfig config = load_run_config(config_file);
      apply_seed(config, "train.seed", seed_flag);
      const auto corpus = read_corpus(resolve_corpus(data_path));
      if (corpus.empty()) throw ContractError("train: corpus is empty");
      config.model.encoder.height = static_cast<int>(corpus.front().height);
      config.model.encoder.width = static_cast<int>(corpus.front().width);
      config.model.encoder.mel_bins = static_cast<int>(corpus.front().mel_bins);
      config.gen.frames = static_cast<std::uint32_t>(corpus.front().frames);
      config.validate();
      TrainState state = init_train_state(config.model, config.train);
      if (!resume_path.empty()) restore_checkpoint(load_checkpoint(resume_path), state);
      write_provenance(out_dir, config, command_line(args), "train.seed");
      const std::string config_text = format_run_config(config);
      TrainHooks hooks;
      hooks.on_step = [&](const TrainState&, const MetricRow& row) {
        if (!std::isnan(row.val_map))
          out << "epoch " << row.epoch << " step " << row.step << " L=" << row.loss
              << " val_mAP=" << row.val_map << '\n';
      };
      state = run_training(config.train, std::move(state), corpus, out_dir, config_text, hooks);
      out << "trained " << state.step << " steps; checkpoint "
          << (fs::path(out_dir) / "checkpoint_final.pair").string() << '\n';
    } else if (eval->parsed()) {
      auto [config, state] = load_model(resume_path);
      const auto corpus = read_corpus(resolve_corpus(data_path));
      const auto report = evaluate(state.model, corpus, config.eval.threads);
      emit_report(report, out_dir, state.history);
      write_text(fs::path(out_dir) / "run.cfg", format_run_config(config));
      out << "fused mAP " << report.map_fused << "  AP_v " << report.ap_video << "  AP_a "
          << report.ap_audio << "  mean_JS " << report.mean_js << '\n';
    } else if (diagnose->parsed()) {
      const auto corpus = read_corpus(resolve_corpus(data_path));
      std::vector<ImbalanceRow> rows;
      for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        auto [config, state] = load_model(checkpoints[i]);
        const fs::path ckpt(checkpoints[i]);
        ImbalanceRow row;
        row.label = ckpt.parent_path().filename().string() + "/" + ckpt.stem().string();
        row.alpha0 = config.train.schedule.alpha0;
        row.report = evaluate(state.model, corpus, config.eval.threads);
        emit_report(row.report, fs::path(out_dir) / ("run" + std::to_string(i)), state.history);
        rows.push_back(std::move(row));
      }
      emit_imbalance_report(rows, out_dir);
      std::ifstream table(fs::path(out_dir) / "imbalance.txt");
      out << table.rdbuf();
    } else if (inspect->parsed()) {
      fs::path path(inspect_path);
      if (!fs::exists(path)) throw IoError(path.string(), "no such file or directory");
      if (fs::is_directory(path)) {
        if (fs::exists(path / kCorpusFile)) inspect_corpus(path / kCorpusFile, out);
        if (fs::exists(path / "checkpoint_final.pair"))
          inspect_checkpoint(path / "checkpoint_final.pair", out);
        if (fs::exists(path / "run.cfg")) {
          std::ifstream cfg(path / "run.cfg");
          out << "--- run.cfg ---\n" << cfg.rdbuf();
        }
      } else if (is_checkpoint(path)) {
        inspect_checkpoint(path, out);
      } else {
        inspect_corpus(path, out);
      }
    } else if (keys->parsed()) {
      const RunConfig defaults;
      for (const auto& k : config_keys())
        out << k.key << " = " << get_config_value(defaults, k.key) << "    # " << k.doc << '\n';
    }
  } catch (const ConfigError& e) {
    err << "pairnet: error[" << e.kind() << "]: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    const std::string msg = e.what();
    const auto nl = msg.find('\n');
    err << "pairnet: error[" << e.kind() << "]: " << msg.substr(0, nl) << '\n';
    if (nl != std::string::npos) err << msg.substr(nl + 1) << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "pairnet: error[runtime_error]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace pairnet
