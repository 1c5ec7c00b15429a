#pragma once

#include <span>
#include <string>
#include <vector>

#include "pairnet/container.hpp"
#include "pairnet/nn.hpp"

namespace pairnet {

/// Topology of both encoders. Desk-scale defaults; the full-size backbones
/// use 24 transformer blocks per branch.
struct EncoderConfig {
  int feature_dim = 32;
  /// Output channels of each stride-2 residual stage in the per-frame frontend.
  std::vector<int> video_conv_channels = {4, 8};
  int video_blocks = 4;
  int audio_conv_channels = 16;
  int audio_conv1_kernel = 3;
  int audio_conv1_stride = 1;
  int audio_conv2_kernel = 3;
  int audio_conv2_stride = 2;
  int audio_blocks = 4;
  int heads = 4;
  double mlp_ratio = 2.0;
  /// Lengths of the learned positional tables (video frames / audio steps
  /// after the convolutions).
  int max_video_frames = 64;
  int max_audio_steps = 256;
  int height = 32;
  int width = 32;
  int mel_bins = 32;

  void validate() const;
};

/// Prefix freezing of the audio encoder: both 1-D convolutions (optionally)
/// and the first `freeze_audio_blocks` transformer blocks.
struct FreezeSpec {
  bool freeze_audio_convs = true;
  int freeze_audio_blocks = 2;

  void validate(const EncoderConfig& config) const;
};

/// Exhaustive, disjoint split of parameter names after freezing.
struct EncoderParameters {
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;
};

/// Fixed affine normalization applied to pixels before the first conv.
inline constexpr double kVideoInputMean = 0.5;
inline constexpr double kVideoInputScale = 0.25;

/// Per-frame residual conv frontend + temporal transformer.
class VideoEncoder {
 public:
  struct Stage {
    Conv2d main;
    Conv2d second;
    Conv2d shortcut;
  };
  struct StageCache {
    Conv2d::Cache main, second, shortcut;
    Mat main_pre;  // pre-activation of the first conv
    Mat sum_pre;   // pre-activation of the residual sum
  };
  struct Cache {
    std::vector<Mat> stage_inputs;
    std::vector<Conv2d::Shape> stage_shapes;
    std::vector<StageCache> stages;
    Mat pooled;
    std::vector<TransformerBlock::Cache> blocks;
    LayerNorm::Cache final_norm;
  };

  VideoEncoder() = default;
  VideoEncoder(ParameterSet& params, Initializer& init, const EncoderConfig& config);

  /// Per-frame features [T x f] before positional embedding and temporal blocks.
  Mat frontend(const ParameterSet& params, std::span<const float> video, std::size_t frames,
               Cache* cache = nullptr) const;
  /// z_v: [T x f].
  Mat forward(const ParameterSet& params, std::span<const float> video, std::size_t frames,
              std::size_t height, std::size_t width, Cache* cache = nullptr) const;
  void backward(const ParameterSet& params, const Cache& cache, const Mat& dz,
                Gradients& grads) const;

  EncoderConfig config;
  std::vector<Stage> stages;
  Linear to_feature;
  std::size_t position = 0;
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;
};

/// Two 1-D convolutions (GELU) + temporal transformer.
class AudioEncoder {
 public:
  struct Cache {
    Conv1d::Cache conv1, conv2;
    Mat conv1_pre, conv2_pre;
    std::vector<TransformerBlock::Cache> blocks;
    LayerNorm::Cache final_norm;
  };

  AudioEncoder() = default;
  AudioEncoder(ParameterSet& params, Initializer& init, const EncoderConfig& config);

  /// Length after both convolutions; throws DimensionError if the input is
  /// shorter than the receptive field.
  std::size_t output_length(std::size_t audio_frames) const;
  /// z_a: [T_a' x f].
  Mat forward(const ParameterSet& params, std::span<const float> audio, std::size_t audio_frames,
              std::size_t mel_bins, Cache* cache = nullptr) const;
  void backward(const ParameterSet& params, const Cache& cache, const Mat& dz,
                Gradients& grads) const;

  std::vector<std::size_t> conv_parameter_indices() const;

  EncoderConfig config;
  Conv1d conv1;
  Conv1d conv2;
  std::size_t position = 0;
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;
};

/// Marks audio conv parameters (if requested) and the first N audio blocks
/// frozen; everything else, including the whole video encoder, trainable.
EncoderParameters apply_freeze(ParameterSet& params, const AudioEncoder& audio,
                               const FreezeSpec& spec);

/// Checkpoint-import hook: copies every array of `source` whose name, after
/// stripping `strip_prefix` and prepending `add_prefix`, matches a parameter.
/// Shapes must agree. Returns the number of tensors imported. This is where
/// converted pretrained backbone weights would be loaded.
std::size_t import_parameters(ParameterSet& params, const Record& source,
                              std::string_view strip_prefix = {},
                              std::string_view add_prefix = {});

}  // namespace pairnet
