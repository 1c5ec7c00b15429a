#include "pairnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "pairnet/container.hpp"
#include "pairnet/errors.hpp"
#include "pairnet/text.hpp"

namespace pairnet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void check_probability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError(field, "must be a probability in [0, 1] (got " + std::to_string(p) + ")");
}

// Formant-like band pattern over mel bins; peak value 1.
double band_pattern(std::size_t bin, std::size_t bins) {
  const double b = static_cast<double>(bin) / static_cast<double>(bins);
  const double f1 = (b - 0.3) / 0.12;
  const double f2 = (b - 0.6) / 0.08;
  return std::exp(-f1 * f1) + 0.6 * std::exp(-f2 * f2);
}

}  // namespace

void ClipRecord::validate() const {
  if (frames < 1) throw ContractError("clip '" + clip_id + "': frames must be >= 1");
  if (audio_frames < frames)
    throw ContractError("clip '" + clip_id + "': audio_frames must be >= frames");
  if (labels.size() != frames)
    throw ContractError("clip '" + clip_id + "': labels length differs from frames");
  if (video.size() != frames * height * width)
    throw ContractError("clip '" + clip_id + "': video payload does not match shape");
  if (audio.size() != audio_frames * mel_bins)
    throw ContractError("clip '" + clip_id + "': audio payload does not match shape");
  for (auto l : labels)
    if (l != 0 && l != 1) throw ContractError("clip '" + clip_id + "': labels must be 0 or 1");
  for (float v : video)
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw ContractError("clip '" + clip_id + "': video values must be finite and in [0, 1]");
  for (float v : audio)
    if (!std::isfinite(v)) throw ContractError("clip '" + clip_id + "': audio values must be finite");
}

void GenSpec::validate() const {
  if (n_clips < 1) throw ConfigError("n_clips", "must be >= 1");
  if (frames < 1) throw ConfigError("frames", "must be >= 1");
  if (audio_rate_ratio < 1) throw ConfigError("audio_rate_ratio", "must be >= 1");
  if (height < 1) throw ConfigError("height", "must be >= 1");
  if (width < 1) throw ConfigError("width", "must be >= 1");
  if (mel_bins < 1) throw ConfigError("mel_bins", "must be >= 1");
  check_probability(p_stay, "p_stay");
  check_probability(distractor_prob, "distractor_prob");
  check_probability(occlusion_prob, "occlusion_prob");
  if (!(video_snr >= 0.0) || !std::isfinite(video_snr))
    throw ConfigError("video_snr", "must be finite and >= 0");
  if (!(audio_snr >= 0.0) || !std::isfinite(audio_snr))
    throw ConfigError("audio_snr", "must be finite and >= 0");
}

std::uint64_t clip_stream_seed(std::uint64_t seed, std::uint64_t clip_index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(clip_index + 0x632BE59BD9B4E019ull));
}

double mouth_blob(const GenSpec& spec, double y, double x, double cy, double cx) {
  const double sx = std::max(1.0, spec.width / 8.0);
  const double sy = std::max(0.75, spec.height / 14.0);
  const double dx = (x - cx) / sx;
  const double dy = (y - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

ClipRecord generate_clip(const GenSpec& spec, std::uint64_t clip_index) {
  std::mt19937_64 rng(clip_stream_seed(spec.seed, clip_index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ClipRecord clip;
  {
    std::ostringstream id;
    id << "clip_" << std::setw(6) << std::setfill('0') << clip_index;
    clip.clip_id = id.str();
  }
  const std::size_t T = spec.frames, H = spec.height, W = spec.width, M = spec.mel_bins;
  const std::size_t R = spec.audio_rate_ratio;
  clip.frames = T;
  clip.height = H;
  clip.width = W;
  clip.audio_frames = T * R;
  clip.mel_bins = M;
  clip.labels.resize(T);
  clip.video.resize(T * H * W);
  clip.audio.resize(T * R * M);

  // Every draw happens unconditionally and in a fixed order, so changing an
  // SNR or probability knob never shifts the random stream.
  int state = unit(rng) < 0.5 ? 1 : 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double u = unit(rng);
    if (t > 0 && u >= spec.p_stay) state = 1 - state;
    clip.labels[t] = static_cast<std::int8_t>(state);
  }

  const double jitter = std::max(1.0, W / 16.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double openness_draw = unit(rng);
    const double openness = clip.labels[t] ? 0.55 + 0.45 * openness_draw : 0.15 * openness_draw;
    const double cx = W / 2.0 - 0.5 + jitter * (2.0 * unit(rng) - 1.0);
    const double cy = 0.7 * H - 0.5 + jitter * (2.0 * unit(rng) - 1.0);
    const bool occluded = unit(rng) < spec.occlusion_prob;
    float* frame = clip.video.data() + t * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double noise = gauss(rng);
        const double signal = spec.video_snr * openness * mouth_blob(spec, y, x, cy, cx);
        const double v = 0.5 + kVideoNoiseStd * (signal + noise);
        frame[y * W + x] = occluded ? 0.0f : static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    const bool distractor = unit(rng) < spec.distractor_prob;
    const bool energized = clip.labels[t] == 1 || distractor;
    for (std::size_t k = t * R; k < (t + 1) * R; ++k) {
      const double energy_draw = unit(rng);
      const double energy = energized ? 0.5 + 0.5 * energy_draw : 0.0;
      float* row = clip.audio.data() + k * M;
      for (std::size_t b = 0; b < M; ++b) {
        const double noise = gauss(rng);
        row[b] = static_cast<float>(
            kAudioNoiseStd * (spec.audio_snr * energy * band_pattern(b, M) + noise));
      }
    }
  }

  clip.meta["seed"] = std::to_string(spec.seed);
  clip.meta["clip_index"] = std::to_string(clip_index);
  clip.meta["p_stay"] = format_real(spec.p_stay);
  clip.meta["video_snr"] = format_real(spec.video_snr);
  clip.meta["audio_snr"] = format_real(spec.audio_snr);
  clip.meta["distractor_prob"] = format_real(spec.distractor_prob);
  clip.meta["occlusion_prob"] = format_real(spec.occlusion_prob);
  return clip;
}

std::vector<ClipRecord> generate_corpus(const GenSpec& spec) {
  spec.validate();
  std::vector<ClipRecord> clips(spec.n_clips);
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, spec.n_clips);
  if (workers == 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) clips[i] = generate_clip(spec, i);
    return clips;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < clips.size(); i += workers) clips[i] = generate_clip(spec, i);
    });
  }
  return clips;  // jthreads join on destruction before the return value is used
}

void write_corpus(std::span<const ClipRecord> records, const std::filesystem::path& path) {
  std::vector<Record> out;
  out.reserve(records.size());
  for (const auto& clip : records) {
    clip.validate();
    Record rec;
    rec.id = clip.clip_id;
    auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
    rec.arrays.push_back({"video", {u32(clip.frames), u32(clip.height), u32(clip.width)}, clip.video});
    rec.arrays.push_back({"audio", {u32(clip.audio_frames), u32(clip.mel_bins)}, clip.audio});
    rec.arrays.push_back({"labels", {u32(clip.frames)}, clip.labels});
    std::string meta;
    for (const auto& [k, v] : clip.meta) meta += k + "=" + v + "\n";
    rec.arrays.push_back(make_text_array("meta", meta));
    out.push_back(std::move(rec));
  }
  write_container(path, out);
}

std::vector<ClipRecord> read_corpus(const std::filesystem::path& path) {
  const auto records = read_container(path);
  std::vector<ClipRecord> clips;
  clips.reserve(records.size());
  for (const auto& rec : records) {
    ClipRecord clip;
    clip.clip_id = rec.id;
    const auto& video = rec.require("video", DType::kFloat32);
    const auto& audio = rec.require("audio", DType::kFloat32);
    const auto& labels = rec.require("labels", DType::kInt8);
    if (video.dims.size() != 3 || audio.dims.size() != 2 || labels.dims.size() != 1)
      throw FormatError("clip '" + rec.id + "' has arrays of unexpected rank", 0);
    clip.frames = video.dims[0];
    clip.height = video.dims[1];
    clip.width = video.dims[2];
    clip.audio_frames = audio.dims[0];
    clip.mel_bins = audio.dims[1];
    clip.video = std::get<std::vector<float>>(video.data);
    clip.audio = std::get<std::vector<float>>(audio.data);
    clip.labels = std::get<std::vector<std::int8_t>>(labels.data);
    if (const auto* meta = rec.find("meta")) {
      std::istringstream lines(text_from_array(*meta));
      std::string line;
      while (std::getline(lines, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) clip.meta[line.substr(0, eq)] = line.substr(eq + 1);
      }
    }
    try {
      clip.validate();
    } catch (const ContractError& e) {
      throw FormatError(path.string() + ": " + e.what(), 0);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace pairnet
