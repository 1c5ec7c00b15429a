#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pairnet {

/// One labeled audio-visual clip. Video is a stack of face crops
/// [frames x height x width] in [0, 1]; audio is a log-mel-like
/// spectrogram [audio_frames x mel_bins]; one label per video frame.
struct ClipRecord {
  std::string clip_id;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t audio_frames = 0;
  std::size_t mel_bins = 0;
  std::vector<float> video;
  std::vector<float> audio;
  std::vector<std::int8_t> labels;
  std::map<std::string, std::string> meta;

  /// Throws ContractError if any shape or value invariant is broken.
  void validate() const;

  bool operator==(const ClipRecord&) const = default;
};

/// Knobs for the synthetic corpus. Desk-scale defaults; paper scale is
/// height = width = 112, mel_bins = 80.
struct GenSpec {
  std::uint32_t n_clips = 100;
  std::uint32_t frames = 32;
  std::uint32_t audio_rate_ratio = 4;
  std::uint32_t height = 32;
  std::uint32_t width = 32;
  std::uint32_t mel_bins = 32;
  double p_stay = 0.9;
  double video_snr = 2.0;
  double audio_snr = 2.0;
  double distractor_prob = 0.0;
  double occlusion_prob = 0.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Standard deviation of the additive pixel noise; video_snr scales the
/// mouth blob relative to it.
inline constexpr double kVideoNoiseStd = 0.12;
inline constexpr double kAudioNoiseStd = 1.0;

/// Seed of the RNG stream for one clip; a pure function of (seed, index).
std::uint64_t clip_stream_seed(std::uint64_t seed, std::uint64_t clip_index);

ClipRecord generate_clip(const GenSpec& spec, std::uint64_t clip_index);

/// Deterministic in `spec`; clips are generated in parallel with per-clip
/// RNG streams so the output does not depend on scheduling.
std::vector<ClipRecord> generate_corpus(const GenSpec& spec);

/// Unit-peak Gaussian mouth blob centered at (cy, cx); exposed for tests.
double mouth_blob(const GenSpec& spec, double y, double x, double cy, double cx);

void write_corpus(std::span<const ClipRecord> records, const std::filesystem::path& path);
std::vector<ClipRecord> read_corpus(const std::filesystem::path& path);

}  // namespace pairnet
