#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pairnet/data.hpp"
#include "pairnet/losses.hpp"
#include "pairnet/model.hpp"

namespace pairnet {

/// Training recipe. Desk-scale defaults; the full-scale recipe is
/// epochs = 4, frame_budget = 1500, lr0 = 5e-5, lr_decay = 0.95.
struct TrainConfig {
  int epochs = 4;
  int frame_budget = 320;
  double lr0 = 5e-3;
  double lr_decay = 0.95;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;
  double unimodal_ce_weight = 1.0;
  std::uint64_t seed = 1;
  FreezeSpec freeze;
  AlignmentSchedule schedule;
  /// Validation mAP every `eval_every` steps (0: only at epoch ends).
  int eval_every = 0;
  /// Trailing fraction of the corpus held out for val_mAP.
  double val_fraction = 0.1;
  /// Worker threads for per-clip gradients. Gradients are reduced in clip
  /// order, so results do not depend on this value.
  int threads = 1;
  /// Stop after this many optimizer steps (0: no limit).
  int max_steps = 0;

  void validate() const;
};

/// Decoupled-weight-decay Adam with bias-corrected moments. Frozen tensors
/// are skipped entirely.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParameterSet& params, double beta1, double beta2, double eps, double weight_decay);

  void step(ParameterSet& params, const Gradients& grads, double lr);

  Gradients first_moment;
  Gradients second_moment;
  std::int64_t steps = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
};

struct MetricRow {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double alpha = 0.0;
  double l_cls = 0.0;
  double l_mm = 0.0;
  double loss = 0.0;
  double val_map = std::numeric_limits<double>::quiet_NaN();
};

std::string format_history(std::span<const MetricRow> history);
std::vector<MetricRow> parse_history(const std::string& text);
void write_history(std::span<const MetricRow> history, const std::filesystem::path& path);

struct TrainState {
  PairNetModel model;
  AdamW optimizer;
  std::int64_t step = 0;
  /// Number of completed epochs; the next epoch to run.
  int epoch = 0;
  std::uint64_t seed = 0;
  std::vector<MetricRow> history;
};

/// Fresh state: model initialized from `model_config`, freeze applied,
/// optimizer moments zero.
TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& config);

double lr_at(const TrainConfig& config, int epoch);

/// Shuffles clip order with `rng`, then packs greedily: a batch closes when
/// the next clip would push it past `frame_budget`. `frames_per_clip[i]` is
/// the length of clip i; returned batches hold clip indices.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> frames_per_clip,
                                                   std::size_t frame_budget, std::mt19937_64& rng);
std::vector<std::vector<std::size_t>> make_batches(std::span<const ClipRecord> corpus,
                                                   std::size_t frame_budget, std::mt19937_64& rng);

/// RNG used to shuffle epoch `epoch`; derived from (seed, epoch) only, so a
/// resumed run shuffles exactly like an uninterrupted one.
std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch);

/// One optimizer step on `batch`. Throws TrainingError (with batch ids and a
/// parameter-norm report) if the loss or gradient is not finite.
LossBreakdown train_step(TrainState& state, std::span<const ClipRecord* const> batch, double lr,
                         double alpha, const TrainConfig& config);

/// Batch gradients (clip contributions reduced in batch order).
LossBreakdown batch_gradients(const PairNetModel& model, std::span<const ClipRecord* const> batch,
                              const LossWeights& weights, int threads, Gradients& grads);

/// Checkpoint: one record per parameter (value, frozen flag, Adam moments)
/// plus a "__state__" record echoing the run config, step/epoch/seed and the
/// metric history.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     std::string_view config_text);

struct LoadedCheckpoint {
  std::string config_text;
  std::vector<Record> records;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
/// Copies parameters, freeze flags, optimizer state, counters and history
/// into `state`, whose model must have the checkpoint's architecture.
void restore_checkpoint(const LoadedCheckpoint& checkpoint, TrainState& state);

struct TrainHooks {
  /// Called after every optimizer step with the freshly appended row.
  std::function<void(const TrainState&, const MetricRow&)> on_step;
};

/// Runs epochs [state.epoch, config.epochs): per-epoch lr and alpha from
/// their closed forms, validation on the trailing val_fraction of `corpus`,
/// a checkpoint per epoch and metrics.csv in `out_dir` (skipped when empty).
TrainState run_training(const TrainConfig& config, TrainState state,
                        std::span<const ClipRecord> corpus, const std::filesystem::path& out_dir,
                        std::string_view config_text = {}, const TrainHooks& hooks = {});

/// Split used by run_training: number of leading clips used for training.
std::size_t training_clip_count(const TrainConfig& config, std::size_t corpus_size);

}  // namespace pairnet
