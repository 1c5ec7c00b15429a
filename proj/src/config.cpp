#include "pairnet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "pairnet/errors.hpp"
#include "pairnet/text.hpp"

namespace pairnet {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view text) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(text) + "'");
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw ConfigError(std::string(key), "expected a finite number, got '" + s + "'");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(std::string(key), "expected true/false, got '" + std::string(text) + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_int<int>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

struct Binding {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PAIRNET_INT(KEY, FIELD, TYPE, DOC)                                                 \
  Binding {                                                                                \
    KEY, DOC,                                                                              \
        [](RunConfig& c, std::string_view k, std::string_view v) {                         \
          c.FIELD = parse_int<TYPE>(k, v);                                                 \
        },                                                                                 \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                         \
  }
#define PAIRNET_REAL(KEY, FIELD, DOC)                                                      \
  Binding {                                                                                \
    KEY, DOC,                                                                              \
        [](RunConfig& c, std::string_view k, std::string_view v) {                         \
          c.FIELD = parse_double(k, v);                                                    \
        },                                                                                 \
        [](const RunConfig& c) { return format_real(c.FIELD); }                                    \
  }
#define PAIRNET_BOOL(KEY, FIELD, DOC)                                                      \
  Binding {                                                                                \
    KEY, DOC,                                                                              \
        [](RunConfig& c, std::string_view k, std::string_view v) {                         \
          c.FIELD = parse_bool(k, v);                                                      \
        },                                                                                 \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }         \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      PAIRNET_INT("gen.n_clips", gen.n_clips, std::uint32_t, "number of clips to synthesize"),
      PAIRNET_INT("gen.frames", gen.frames, std::uint32_t, "video frames per clip (T_v)"),
      PAIRNET_INT("gen.audio_rate_ratio", gen.audio_rate_ratio, std::uint32_t,
                  "spectrogram frames per video frame (T_a = ratio * T_v)"),
      PAIRNET_INT("gen.height", gen.height, std::uint32_t, "face crop height (paper scale 112)"),
      PAIRNET_INT("gen.width", gen.width, std::uint32_t, "face crop width (paper scale 112)"),
      PAIRNET_INT("gen.mel_bins", gen.mel_bins, std::uint32_t, "spectrogram bins (paper scale 80)"),
      PAIRNET_REAL("gen.p_stay", gen.p_stay, "probability the speaking chain keeps its state"),
      PAIRNET_REAL("gen.video_snr", gen.video_snr, "mouth-blob amplitude over pixel noise"),
      PAIRNET_REAL("gen.audio_snr", gen.audio_snr, "speech-band energy over spectrogram noise"),
      PAIRNET_REAL("gen.distractor_prob", gen.distractor_prob,
                   "per-frame probability of off-screen speech on silent frames"),
      PAIRNET_REAL("gen.occlusion_prob", gen.occlusion_prob, "per-frame probability of a blank frame"),
      PAIRNET_INT("gen.seed", gen.seed, std::uint64_t, "corpus seed"),

      PAIRNET_INT("model.feature_dim", model.encoder.feature_dim, int, "feature width f"),
      Binding{"model.video_conv_channels", "comma-separated channels of the stride-2 residual stages",
              [](RunConfig& c, std::string_view k, std::string_view v) {
                c.model.encoder.video_conv_channels = parse_int_list(k, v);
              },
              [](const RunConfig& c) {
                std::string s;
                for (int ch : c.model.encoder.video_conv_channels)
                  s += (s.empty() ? "" : ",") + std::to_string(ch);
                return s;
              }},
      PAIRNET_INT("model.video_blocks", model.encoder.video_blocks, int, "video transformer blocks"),
      PAIRNET_INT("model.audio_conv_channels", model.encoder.audio_conv_channels, int,
                  "channels of the first audio convolution"),
      PAIRNET_INT("model.audio_conv1_kernel", model.encoder.audio_conv1_kernel, int, "first audio conv kernel"),
      PAIRNET_INT("model.audio_conv1_stride", model.encoder.audio_conv1_stride, int, "first audio conv stride"),
      PAIRNET_INT("model.audio_conv2_kernel", model.encoder.audio_conv2_kernel, int, "second audio conv kernel"),
      PAIRNET_INT("model.audio_conv2_stride", model.encoder.audio_conv2_stride, int, "second audio conv stride"),
      PAIRNET_INT("model.audio_blocks", model.encoder.audio_blocks, int, "audio transformer blocks"),
      PAIRNET_INT("model.heads", model.encoder.heads, int, "attention heads (must divide feature_dim)"),
      PAIRNET_REAL("model.mlp_ratio", model.encoder.mlp_ratio, "transformer MLP width / feature_dim"),
      PAIRNET_INT("model.max_video_frames", model.encoder.max_video_frames, int,
                  "video positional table length"),
      PAIRNET_INT("model.max_audio_steps", model.encoder.max_audio_steps, int,
                  "audio positional table length (after convolutions)"),
      PAIRNET_INT("model.height", model.encoder.height, int, "input crop height (set from the corpus by train)"),
      PAIRNET_INT("model.width", model.encoder.width, int, "input crop width (set from the corpus by train)"),
      PAIRNET_INT("model.mel_bins", model.encoder.mel_bins, int, "input bins (set from the corpus by train)"),
      PAIRNET_BOOL("model.detach_modality_heads", model.detach_modality_heads,
                   "per-modality heads see detached features"),
      PAIRNET_BOOL("model.probe_modality_heads", model.probe_modality_heads,
                   "per-modality cross-entropy trains the heads only"),
      PAIRNET_INT("model.init_seed", model.init_seed, std::uint64_t, "parameter initialization seed"),

      PAIRNET_INT("train.epochs", train.epochs, int, "training epochs"),
      PAIRNET_INT("train.frame_budget", train.frame_budget, int, "video frames per batch (paper scale 1500)"),
      PAIRNET_REAL("train.lr0", train.lr0, "initial learning rate (paper scale 5e-5)"),
      PAIRNET_REAL("train.lr_decay", train.lr_decay, "per-epoch multiplicative learning-rate decay"),
      PAIRNET_REAL("train.weight_decay", train.weight_decay, "decoupled weight decay"),
      PAIRNET_REAL("train.beta1", train.beta1, "first-moment coefficient"),
      PAIRNET_REAL("train.beta2", train.beta2, "second-moment coefficient"),
      PAIRNET_REAL("train.adam_eps", train.adam_eps, "optimizer epsilon"),
      PAIRNET_REAL("train.grad_clip", train.grad_clip, "global gradient-norm clip (0 = off)"),
      PAIRNET_REAL("train.unimodal_ce_weight", train.unimodal_ce_weight,
                   "weight of the per-modality cross-entropy"),
      PAIRNET_INT("train.seed", train.seed, std::uint64_t, "shuffling seed"),
      PAIRNET_BOOL("train.freeze_audio_convs", train.freeze.freeze_audio_convs,
                   "freeze both audio convolutions"),
      PAIRNET_INT("train.freeze_audio_blocks", train.freeze.freeze_audio_blocks, int,
                  "number of leading audio blocks to freeze"),
      PAIRNET_REAL("train.alpha0", train.schedule.alpha0, "initial alignment-loss weight"),
      PAIRNET_REAL("train.alpha_decay", train.schedule.decay, "per-epoch multiplicative alpha decay"),
      PAIRNET_REAL("train.alpha_floor", train.schedule.floor, "lower bound on alpha"),
      PAIRNET_INT("train.eval_every", train.eval_every, int, "validation interval in steps (0 = epoch end)"),
      PAIRNET_REAL("train.val_fraction", train.val_fraction, "trailing corpus fraction held out"),
      PAIRNET_INT("train.threads", train.threads, int, "gradient worker threads"),
      PAIRNET_INT("train.max_steps", train.max_steps, int, "stop after this many steps (0 = no limit)"),

      PAIRNET_INT("eval.threads", eval.threads, int, "evaluation worker threads"),
  };
  return table;
}

#undef PAIRNET_INT
#undef PAIRNET_REAL
#undef PAIRNET_BOOL

const Binding& find_binding(std::string_view key) {
  for (const auto& b : bindings())
    if (b.key == key) return b;
  throw ConfigError(std::string(key), "unknown configuration key");
}

template <typename Fn>
void with_prefix(const char* prefix, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(prefix) + e.field(), e.detail());
  }
}

}  // namespace

void RunConfig::validate() const {
  with_prefix("gen.", [&] { gen.validate(); });
  with_prefix("model.", [&] { model.validate(); });
  with_prefix("train.", [&] {
    train.validate();
    train.freeze.validate(model.encoder);
  });
  if (static_cast<std::uint64_t>(train.frame_budget) < gen.frames)
    throw ConfigError("train.frame_budget", "must be >= gen.frames");
  if (eval.threads < 1) throw ConfigError("eval.threads", "must be >= 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& b : bindings()) out.push_back({b.key, b.doc});
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_binding(key).set(config, key, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  return find_binding(key).get(config);
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, std::move(base));
}

std::string format_run_config(const RunConfig& config) {
  std::string out = std::string("# ") + kArtifactVersion + " resolved run configuration\n";
  for (const auto& b : bindings()) out += b.key + " = " + b.get(config) + "\n";
  return out;
}

}  // namespace pairnet
