#include "pairnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "pairnet/errors.hpp"
#include "pairnet/text.hpp"
#include "pairnet/eval.hpp"

namespace pairnet {
namespace {

constexpr const char* kHistoryHeader = "step,epoch,lr,alpha,L_CLS,L_MM,L,val_mAP";
constexpr const char* kStateRecord = "__state__";

NamedArray matrix_array(std::string name, const Mat& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  return {std::move(name),
          {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
          std::move(values)};
}

void load_matrix(const Record& rec, std::string_view name, Mat& into) {
  const auto& a = rec.require(name, DType::kFloat64);
  const auto& v = std::get<std::vector<double>>(a.data);
  if (a.dims.size() != 2 || static_cast<Eigen::Index>(a.dims[0]) != into.rows() ||
      static_cast<Eigen::Index>(a.dims[1]) != into.cols())
    throw FormatError("checkpoint tensor '" + rec.id + "/" + std::string(name) +
                          "' does not match the model architecture",
                      0);
  std::copy(v.begin(), v.end(), into.data());
}

std::string parameter_norm_report(const ParameterSet& params, const Gradients& grads) {
  std::ostringstream os;
  os << "parameter norms (value, grad):";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double pn = params[i].value.norm();
    const double gn = grads.tensors[i].norm();
    if (!std::isfinite(pn) || !std::isfinite(gn) || i < 4 || i + 4 >= params.size())
      os << "\n  " << params[i].name << ": " << pn << ", " << gn;
  }
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1 (got " + std::to_string(epochs) + ")");
  if (frame_budget < 1) throw ConfigError("frame_budget", "must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0", "must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay", "must be within (0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be within [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be within [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip", "must be >= 0");
  if (!(unimodal_ce_weight >= 0.0)) throw ConfigError("unimodal_ce_weight", "must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every", "must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction", "must be within [0, 1)");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  schedule.validate();
}

// ------------------------------------------------------------------ AdamW

AdamW::AdamW(const ParameterSet& params, double b1, double b2, double e, double wd)
    : first_moment(params), second_moment(params), beta1(b1), beta2(b2), eps(e), weight_decay(wd) {}

void AdamW::step(ParameterSet& params, const Gradients& grads, double lr) {
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].frozen) continue;
    auto& m = first_moment.tensors[i];
    auto& v = second_moment.tensors[i];
    const auto& g = grads.tensors[i];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    auto& p = params[i].value;
    const Mat update = (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    p -= lr * (update + weight_decay * p);
  }
}

// ---------------------------------------------------------------- history

std::string format_history(std::span<const MetricRow> history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& r : history)
    out += std::to_string(r.step) + ',' + std::to_string(r.epoch) + ',' + format_real(r.lr) + ',' +
           format_real(r.alpha) + ',' + format_real(r.l_cls) + ',' + format_real(r.l_mm) + ',' + format_real(r.loss) + ',' +
           format_real(r.val_map) + '\n';
  return out;
}

std::vector<MetricRow> parse_history(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != kHistoryHeader) throw FormatError("metric history: unexpected header", 0);
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) c.push_back(cell);
    if (c.size() != 8) throw FormatError("metric history: expected 8 columns", 0);
    MetricRow r;
    r.step = std::stoll(c[0]);
    r.epoch = std::stoi(c[1]);
    r.lr = std::stod(c[2]);
    r.alpha = std::stod(c[3]);
    r.l_cls = std::stod(c[4]);
    r.l_mm = std::stod(c[5]);
    r.loss = std::stod(c[6]);
    r.val_map = std::strtod(c[7].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

void write_history(std::span<const MetricRow> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << format_history(history);
  if (!out) throw IoError(path.string(), "write failed");
}

// --------------------------------------------------------------- batching

double lr_at(const TrainConfig& config, int epoch) {
  return config.lr0 * std::pow(config.lr_decay, epoch);
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  return std::mt19937_64(clip_stream_seed(seed ^ 0xA5A5A5A5DEADBEEFull, static_cast<std::uint64_t>(epoch)));
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> frames_per_clip,
                                                   std::size_t frame_budget, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < frames_per_clip.size(); ++i)
    if (frames_per_clip[i] > frame_budget)
      throw ConfigError("frame_budget", "clip " + std::to_string(i) + " has " +
                                            std::to_string(frames_per_clip[i]) +
                                            " frames, more than the budget of " +
                                            std::to_string(frame_budget));
  std::vector<std::size_t> order(frames_per_clip.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t frames = 0;
  for (auto idx : order) {
    if (!current.empty() && frames + frames_per_clip[idx] > frame_budget) {
      batches.push_back(std::move(current));
      current.clear();
      frames = 0;
    }
    current.push_back(idx);
    frames += frames_per_clip[idx];
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const ClipRecord> corpus,
                                                   std::size_t frame_budget, std::mt19937_64& rng) {
  std::vector<std::size_t> frames(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) frames[i] = corpus[i].frames;
  return make_batches(frames, frame_budget, rng);
}

// --------------------------------------------------------------- stepping

TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& config) {
  config.validate();
  TrainState state{PairNetModel(model_config), AdamW(), 0, 0, config.seed, {}};
  state.model.freeze(config.freeze);
  state.optimizer = AdamW(state.model.parameters(), config.beta1, config.beta2, config.adam_eps,
                          config.weight_decay);
  return state;
}

LossBreakdown batch_gradients(const PairNetModel& model, std::span<const ClipRecord* const> batch,
                              const LossWeights& weights, int threads, Gradients& grads) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, batch.size());
  grads.zero();
  LossBreakdown total;
  // Each clip's gradient is formed in its own buffer and added to the total
  // in batch order, so the sum is the same for any thread count.
  if (workers == 1) {
    Gradients scratch(model.parameters());
    for (const auto* clip : batch) {
      scratch.zero();
      total += model.loss_and_gradients(*clip, weights, scratch);
      grads += scratch;
    }
    return total;
  }
  std::vector<Gradients> per_clip(batch.size(), Gradients(model.parameters()));
  std::vector<LossBreakdown> losses(batch.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < batch.size(); i += workers)
          losses[i] = model.loss_and_gradients(*batch[i], weights, per_clip[i]);
      });
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grads += per_clip[i];
    total += losses[i];
  }
  return total;
}

LossBreakdown train_step(TrainState& state, std::span<const ClipRecord* const> batch, double lr,
                         double alpha, const TrainConfig& config) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must be within [0, 1]");
  double frames = 0.0;
  for (const auto* clip : batch) frames += static_cast<double>(clip->frames);
  const LossWeights weights{alpha, config.unimodal_ce_weight, frames};

  Gradients grads(state.model.parameters());
  LossBreakdown loss;
  std::string failure;
  try {
    loss = batch_gradients(state.model, batch, weights, config.threads, grads);
  } catch (const ContractError& e) {
    // Non-finite parameters trip the head contracts before any loss exists.
    failure = e.what();
    loss.objective = std::numeric_limits<double>::quiet_NaN();
  }
  const double grad_norm_sq = grads.squared_norm();
  if (!std::isfinite(loss.objective) || !std::isfinite(grad_norm_sq)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step << " (L=" << loss.total << ", L_CLS=" << loss.cls
       << ", L_MM=" << loss.mm << ")";
    if (!failure.empty()) os << " [" << failure << "]";
    os << "; batch clips:";
    for (const auto* clip : batch) os << ' ' << clip->clip_id;
    os << '\n' << parameter_norm_report(state.model.parameters(), grads);
    throw TrainingError(os.str());
  }
  if (config.grad_clip > 0.0) {
    const double norm = std::sqrt(grad_norm_sq);
    if (norm > config.grad_clip)
      for (auto& t : grads.tensors) t *= config.grad_clip / norm;
  }
  state.optimizer.step(state.model.parameters(), grads, lr);
  ++state.step;
  return loss;
}

// ------------------------------------------------------------- checkpoint

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     std::string_view config_text) {
  const auto& params = state.model.parameters();
  std::vector<Record> records;
  records.reserve(params.size() + 1);
  Record meta;
  meta.id = kStateRecord;
  meta.arrays.push_back(make_text_array("config", config_text));
  std::ostringstream counters;
  counters << "step=" << state.step << "\nepoch=" << state.epoch << "\nseed=" << state.seed
           << "\noptimizer_steps=" << state.optimizer.steps << '\n';
  meta.arrays.push_back(make_text_array("state", counters.str()));
  meta.arrays.push_back(make_text_array("history", format_history(state.history)));
  records.push_back(std::move(meta));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Record rec;
    rec.id = params[i].name;
    rec.arrays.push_back(matrix_array("value", params[i].value));
    rec.arrays.push_back(
        {"frozen", {1}, std::vector<std::int8_t>{static_cast<std::int8_t>(params[i].frozen)}});
    rec.arrays.push_back(matrix_array("adam_m", state.optimizer.first_moment.tensors[i]));
    rec.arrays.push_back(matrix_array("adam_v", state.optimizer.second_moment.tensors[i]));
    records.push_back(std::move(rec));
  }
  write_container(path, records);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint out;
  out.records = read_container(path);
  if (out.records.empty() || out.records.front().id != kStateRecord)
    throw FormatError(path.string() + ": not a checkpoint (missing state record)", 12);
  out.config_text = text_from_array(out.records.front().require("config", DType::kInt8));
  return out;
}

void restore_checkpoint(const LoadedCheckpoint& checkpoint, TrainState& state) {
  const Record& meta = checkpoint.records.front();
  std::istringstream counters(text_from_array(meta.require("state", DType::kInt8)));
  std::string line;
  while (std::getline(counters, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "step") state.step = std::stoll(value);
    else if (key == "epoch") state.epoch = std::stoi(value);
    else if (key == "seed") state.seed = std::stoull(value);
    else if (key == "optimizer_steps") state.optimizer.steps = std::stoll(value);
  }
  state.history = parse_history(text_from_array(meta.require("history", DType::kInt8)));

  auto& params = state.model.parameters();
  if (state.optimizer.first_moment.tensors.size() != params.size())
    state.optimizer.first_moment = state.optimizer.second_moment = Gradients(params);
  std::size_t restored = 0;
  for (std::size_t r = 1; r < checkpoint.records.size(); ++r) {
    const Record& rec = checkpoint.records[r];
    if (!params.contains(rec.id))
      throw FormatError("checkpoint parameter '" + rec.id + "' is not part of the model", 0);
    const std::size_t i = params.index_of(rec.id);
    load_matrix(rec, "value", params[i].value);
    load_matrix(rec, "adam_m", state.optimizer.first_moment.tensors[i]);
    load_matrix(rec, "adam_v", state.optimizer.second_moment.tensors[i]);
    params[i].frozen = std::get<std::vector<std::int8_t>>(rec.require("frozen", DType::kInt8).data).at(0) != 0;
    ++restored;
  }
  if (restored != params.size())
    throw FormatError("checkpoint holds " + std::to_string(restored) + " of " +
                          std::to_string(params.size()) + " model parameters",
                      0);
}

// ---------------------------------------------------------------- run loop

std::size_t training_clip_count(const TrainConfig& config, std::size_t corpus_size) {
  if (corpus_size < 2 || config.val_fraction <= 0.0) return corpus_size;
  const auto held = static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(corpus_size)));
  return corpus_size - std::clamp<std::size_t>(held, 1, corpus_size - 1);
}

TrainState run_training(const TrainConfig& config, TrainState state,
                        std::span<const ClipRecord> corpus, const std::filesystem::path& out_dir,
                        std::string_view config_text, const TrainHooks& hooks) {
  config.validate();
  if (corpus.empty()) throw ContractError("run_training: corpus is empty");
  const std::size_t n_train = training_clip_count(config, corpus.size());
  const auto train = corpus.subspan(0, n_train);
  const auto val = corpus.subspan(n_train);
  for (const auto& clip : corpus)
    if (clip.frames > static_cast<std::size_t>(config.frame_budget))
      throw ConfigError("frame_budget", "must be >= the longest clip (" +
                                            std::to_string(clip.frames) + " frames)");

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());
  }
  auto validation_map = [&]() {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
      return evaluate(state.model, val, config.threads).map_fused;
    } catch (const UndefinedValueError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  bool stop = false;
  while (state.epoch < config.epochs && !stop) {
    const int epoch = state.epoch;
    const double lr = lr_at(config, epoch);
    const double alpha = alpha_at(config.schedule, epoch);
    auto rng = epoch_rng(state.seed, epoch);
    const auto batches = make_batches(train, static_cast<std::size_t>(config.frame_budget), rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const ClipRecord*> batch;
      for (auto idx : batches[b]) batch.push_back(&train[idx]);
      const LossBreakdown loss = train_step(state, batch, lr, alpha, config);
      MetricRow row{state.step, epoch, lr, alpha, loss.cls, loss.mm, loss.total,
                    std::numeric_limits<double>::quiet_NaN()};
      const bool epoch_end = b + 1 == batches.size();
      stop = config.max_steps > 0 && state.step >= config.max_steps && !epoch_end;
      if ((config.eval_every > 0 && state.step % config.eval_every == 0) || epoch_end || stop)
        row.val_map = validation_map();
      state.history.push_back(row);
      if (hooks.on_step) hooks.on_step(state, row);
      if (stop) break;
    }
    if (stop) break;
    ++state.epoch;
    if (config.max_steps > 0 && state.step >= config.max_steps) stop = true;
    if (!out_dir.empty()) {
      save_checkpoint(out_dir / ("checkpoint_epoch" + std::to_string(state.epoch) + ".pair"),
                      state, config_text);
      write_history(state.history, out_dir / "metrics.csv");
    }
  }
  if (!out_dir.empty()) {
    save_checkpoint(out_dir / "checkpoint_final.pair", state, config_text);
    write_history(state.history, out_dir / "metrics.csv");
  }
  return state;
}

}  // namespace pairnet
