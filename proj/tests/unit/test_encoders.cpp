#include <doctest.h>

#include <algorithm>
#include <random>

#include "../common/oracles.hpp"
#include "pairnet/encoders.hpp"
#include "pairnet/errors.hpp"

using namespace pairnet;

namespace {

EncoderConfig desk_config() {
  EncoderConfig cfg;
  cfg.feature_dim = 16;
  cfg.heads = 2;
  return cfg;
}

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("video encoder keeps one feature vector per frame") {
  const auto cfg = desk_config();
  ParameterSet params;
  Initializer init(1);
  VideoEncoder enc(params, init, cfg);
  const auto video = random_floats(8 * 32 * 32, 3);
  const Mat z = enc.forward(params, video, 8, 32, 32);
  CHECK(z.rows() == 8);
  CHECK(z.cols() == 16);
  CHECK(z.allFinite());

  const std::vector<float> zeros(8 * 32 * 32, 0.0f);
  CHECK(enc.forward(params, zeros, 8, 32, 32).allFinite());

  CHECK_THROWS_AS(enc.forward(params, video, 8, 16, 64), DimensionError);
  CHECK_THROWS_AS(enc.forward(params, std::span<const float>(video).first(100), 8, 32, 32),
                  DimensionError);
}

TEST_CASE("per-frame frontend is equivariant to frame order") {
  const auto cfg = desk_config();
  ParameterSet params;
  Initializer init(2);
  VideoEncoder enc(params, init, cfg);
  const std::size_t frames = 6, pixels = 32 * 32;
  const auto video = random_floats(frames * pixels, 4);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<float> shuffled(video.size());
  for (std::size_t t = 0; t < frames; ++t)
    std::copy_n(video.begin() + perm[t] * pixels, pixels, shuffled.begin() + t * pixels);
  const Mat a = enc.frontend(params, video, frames);
  const Mat b = enc.frontend(params, shuffled, frames);
  for (std::size_t t = 0; t < frames; ++t) CHECK((b.row(t) - a.row(perm[t])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("audio output length follows the convolution length formula") {
  for (int k1 : {1, 3, 5})
    for (int s1 : {1, 2})
      for (int k2 : {1, 3, 4})
        for (int s2 : {1, 2, 3}) {
          EncoderConfig cfg = desk_config();
          cfg.audio_blocks = 1;
          cfg.mel_bins = 4;
          cfg.audio_conv_channels = 4;
          cfg.audio_conv1_kernel = k1;
          cfg.audio_conv1_stride = s1;
          cfg.audio_conv2_kernel = k2;
          cfg.audio_conv2_stride = s2;
          ParameterSet params;
          Initializer init(5);
          AudioEncoder enc(params, init, cfg);
          for (long t = 1; t <= 40; ++t) {
            const long l1 = oracle::conv_length(t, k1, s1, k1 / 2);
            const long expected = l1 >= 1 ? oracle::conv_length(l1, k2, s2, k2 / 2) : 0;
            if (expected >= 1) {
              CHECK(enc.output_length(t) == static_cast<std::size_t>(expected));
            } else {
              CHECK_THROWS_AS(enc.output_length(t), DimensionError);
            }
          }
        }
}

TEST_CASE("audio encoder shapes") {
  auto cfg = desk_config();
  {
    ParameterSet params;
    Initializer init(6);
    AudioEncoder enc(params, init, cfg);
    const auto audio = random_floats(64 * 32, 7);
    const Mat z = enc.forward(params, audio, 64, 32);
    CHECK(z.rows() == 32);
    CHECK(z.cols() == 16);
    CHECK(z.allFinite());
    CHECK_THROWS_AS(enc.forward(params, audio, 128, 16), DimensionError);
  }
  cfg.audio_conv2_stride = 1;
  ParameterSet params;
  Initializer init(6);
  AudioEncoder enc(params, init, cfg);
  for (std::size_t t : {1u, 7u, 50u}) CHECK(enc.output_length(t) == t);
}

TEST_CASE("freeze partitions parameters exactly") {
  const auto cfg = desk_config();
  ParameterSet params;
  Initializer init(8);
  VideoEncoder video(params, init, cfg);
  AudioEncoder audio(params, init, cfg);

  auto frozen_scalars = [&] {
    std::size_t n = 0;
    for (const auto& p : params)
      if (p.frozen) n += static_cast<std::size_t>(p.value.size());
    return n;
  };
  auto check_partition = [&](const EncoderParameters& part) {
    CHECK(part.frozen.size() + part.trainable.size() == params.size());
    std::vector<std::string> all = part.frozen;
    all.insert(all.end(), part.trainable.begin(), part.trainable.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    for (const auto& name : part.frozen) CHECK(name.starts_with("audio."));
  };

  SUBCASE("desk default: convs and two of four blocks") {
    const auto part = apply_freeze(params, audio, FreezeSpec{true, 2});
    check_partition(part);
    // Config arithmetic: conv weights are [kernel*in x out] plus a bias row.
    const std::size_t f = 16, m = 32, c = 16, h = 32;
    const std::size_t convs = (3 * m * c + c) + (3 * c * f + f);
    const std::size_t block = 2 * f + (f * 3 * f + 3 * f) + (f * f + f) + 2 * f + (f * h + h) + (h * f + f);
    CHECK(frozen_scalars() == convs + 2 * block);
    for (const auto& name : part.frozen)
      CHECK((name.starts_with("audio.conv") || name.starts_with("audio.block0.") ||
             name.starts_with("audio.block1.")));
  }
  SUBCASE("all blocks and convs freeze the whole audio stack except its embeddings and norm") {
    const auto part = apply_freeze(params, audio, FreezeSpec{true, 4});
    check_partition(part);
    for (const auto& p : params)
      if (p.name.starts_with("audio.block") || p.name.starts_with("audio.conv")) CHECK(p.frozen);
  }
  SUBCASE("nothing frozen") {
    const auto part = apply_freeze(params, audio, FreezeSpec{false, 0});
    check_partition(part);
    CHECK(part.frozen.empty());
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(apply_freeze(params, audio, FreezeSpec{true, 5}), ConfigError);
    CHECK_THROWS_AS(apply_freeze(params, audio, FreezeSpec{true, -1}), ConfigError);
  }
  SUBCASE("reapplying resets earlier flags") {
    apply_freeze(params, audio, FreezeSpec{true, 4});
    apply_freeze(params, audio, FreezeSpec{false, 1});
    for (const auto& p : params) CHECK(p.frozen == p.name.starts_with("audio.block0."));
  }
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.feature_dim = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.feature_dim = 2;
  cfg.heads = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.audio_blocks = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpoint import hook copies matching tensors") {
  const auto cfg = desk_config();
  ParameterSet params;
  Initializer init(9);
  AudioEncoder audio(params, init, cfg);
  const auto idx = params.index_of("audio.conv1.bias");
  Record src;
  src.id = "backbone";
  std::vector<double> ones(static_cast<std::size_t>(params[idx].value.size()), 1.0);
  src.arrays.push_back(NamedArray{"encoder.conv1.bias", {1, static_cast<std::uint32_t>(ones.size())}, ones});
  src.arrays.push_back(NamedArray{"encoder.unrelated", {1}, std::vector<double>{2.0}});
  CHECK(import_parameters(params, src, "encoder.", "audio.") == 1);
  CHECK(params[idx].value.isOnes());
}
