#include "pairnet/encoders.hpp"

#include <algorithm>

#include "pairnet/errors.hpp"

namespace pairnet {
namespace {

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_backward(const Mat& pre, const Mat& dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

Mat add_positions(const ParameterSet& params, std::size_t position, const Mat& x,
                  const char* what) {
  const Mat& table = params[position].value;
  if (x.rows() > table.rows())
    throw DimensionError(std::string(what) + " length " + std::to_string(x.rows()) +
                         " exceeds the positional table (" + std::to_string(table.rows()) + ")");
  return x + table.topRows(x.rows());
}

void accumulate_positions(const ParameterSet& params, std::size_t position, const Mat& dx,
                          Gradients& grads) {
  if (!params[position].frozen) grads.tensors[position].topRows(dx.rows()) += dx;
}

Mat run_blocks(const ParameterSet& params, const std::vector<TransformerBlock>& blocks, Mat x,
               std::vector<TransformerBlock::Cache>* caches) {
  TransformerBlock::Cache scratch;
  if (caches) caches->resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    x = blocks[i].forward(params, x, caches ? (*caches)[i] : scratch);
  return x;
}

Mat backprop_blocks(const ParameterSet& params, const std::vector<TransformerBlock>& blocks,
                    const std::vector<TransformerBlock::Cache>& caches, Mat dx,
                    Gradients& grads) {
  for (std::size_t i = blocks.size(); i-- > 0;)
    dx = blocks[i].backward(params, caches[i], dx, grads);
  return dx;
}

}  // namespace

void EncoderConfig::validate() const {
  if (feature_dim < 4) throw ConfigError("feature_dim", "must be >= 4");
  if (heads < 1) throw ConfigError("heads", "must be >= 1");
  if (feature_dim % heads != 0) throw ConfigError("heads", "must divide feature_dim");
  if (video_blocks < 1) throw ConfigError("video_blocks", "must be >= 1");
  if (audio_blocks < 1) throw ConfigError("audio_blocks", "must be >= 1");
  if (video_conv_channels.empty()) throw ConfigError("video_conv_channels", "must not be empty");
  for (int c : video_conv_channels)
    if (c < 1) throw ConfigError("video_conv_channels", "entries must be >= 1");
  if (audio_conv_channels < 1) throw ConfigError("audio_conv_channels", "must be >= 1");
  if (audio_conv1_kernel < 1) throw ConfigError("audio_conv1_kernel", "must be >= 1");
  if (audio_conv2_kernel < 1) throw ConfigError("audio_conv2_kernel", "must be >= 1");
  if (audio_conv1_stride < 1) throw ConfigError("audio_conv1_stride", "must be >= 1");
  if (audio_conv2_stride < 1) throw ConfigError("audio_conv2_stride", "must be >= 1");
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio", "must be > 0");
  if (max_video_frames < 1) throw ConfigError("max_video_frames", "must be >= 1");
  if (max_audio_steps < 1) throw ConfigError("max_audio_steps", "must be >= 1");
  if (height < 1) throw ConfigError("height", "must be >= 1");
  if (width < 1) throw ConfigError("width", "must be >= 1");
  if (mel_bins < 1) throw ConfigError("mel_bins", "must be >= 1");
}

void FreezeSpec::validate(const EncoderConfig& config) const {
  if (freeze_audio_blocks < 0 || freeze_audio_blocks > config.audio_blocks)
    throw ConfigError("freeze_audio_blocks", "must be in [0, audio_blocks=" +
                                                 std::to_string(config.audio_blocks) + "] (got " +
                                                 std::to_string(freeze_audio_blocks) + ")");
}

// ----------------------------------------------------------- VideoEncoder

VideoEncoder::VideoEncoder(ParameterSet& params, Initializer& init, const EncoderConfig& cfg)
    : config(cfg) {
  int in = 1;
  for (std::size_t s = 0; s < cfg.video_conv_channels.size(); ++s) {
    const int out = cfg.video_conv_channels[s];
    const std::string name = "video.stage" + std::to_string(s);
    stages.push_back({Conv2d(params, init, name + ".conv1", in, out, 3, 2, 1, 2.0),
                      Conv2d(params, init, name + ".conv2", out, out, 3, 1, 1, 1.0),
                      Conv2d(params, init, name + ".shortcut", in, out, 1, 2, 0, 1.0)});
    in = out;
  }
  to_feature = Linear(params, init, "video.to_feature", in, cfg.feature_dim);
  position = params.add("video.position", init.normal(cfg.max_video_frames, cfg.feature_dim, 0.02));
  for (int b = 0; b < cfg.video_blocks; ++b)
    blocks.emplace_back(params, init, "video.block" + std::to_string(b), cfg.feature_dim, cfg.heads,
                        cfg.mlp_ratio);
  final_norm = LayerNorm(params, "video.final_norm", cfg.feature_dim);
}

Mat VideoEncoder::frontend(const ParameterSet& params, std::span<const float> video,
                           std::size_t frames, Cache* cache) const {
  const std::size_t H = config.height, W = config.width;
  Mat x(frames * H * W, 1);
  for (std::size_t i = 0; i < video.size(); ++i)
    x(static_cast<Eigen::Index>(i), 0) = (video[i] - kVideoInputMean) / kVideoInputScale;
  Conv2d::Shape shape{frames, H, W, 1};

  if (cache) {
    cache->stage_inputs.clear();
    cache->stage_shapes.clear();
    cache->stages.assign(stages.size(), {});
  }
  StageCache scratch;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    StageCache& sc = cache ? cache->stages[s] : scratch;
    if (cache) {
      cache->stage_inputs.push_back(x);
      cache->stage_shapes.push_back(shape);
    }
    const auto& st = stages[s];
    sc.main_pre = st.main.forward(params, x, shape, sc.main);
    const auto out_shape = st.main.output_shape(shape);
    const Mat second = st.second.forward(params, relu(sc.main_pre), out_shape, sc.second);
    sc.sum_pre = second + st.shortcut.forward(params, x, shape, sc.shortcut);
    x = relu(sc.sum_pre);
    shape = out_shape;
  }

  // Global average pool per frame.
  const std::size_t pixels = shape.height * shape.width;
  Mat pooled(frames, shape.channels);
  for (std::size_t n = 0; n < frames; ++n)
    pooled.row(n) = x.middleRows(n * pixels, pixels).colwise().mean();
  if (cache) cache->pooled = pooled;
  return to_feature.forward(params, pooled);
}

Mat VideoEncoder::forward(const ParameterSet& params, std::span<const float> video,
                          std::size_t frames, std::size_t height, std::size_t width,
                          Cache* cache) const {
  if (frames < 1) throw DimensionError("video: frames axis must be >= 1");
  if (height != static_cast<std::size_t>(config.height) ||
      width != static_cast<std::size_t>(config.width))
    throw DimensionError("video: height x width is " + std::to_string(height) + "x" +
                         std::to_string(width) + ", encoder expects " +
                         std::to_string(config.height) + "x" + std::to_string(config.width));
  if (video.size() != frames * height * width)
    throw DimensionError("video: payload size does not match frames x height x width");
  Mat z = add_positions(params, position, frontend(params, video, frames, cache), "video frames");
  z = run_blocks(params, blocks, std::move(z), cache ? &cache->blocks : nullptr);
  LayerNorm::Cache scratch;
  return final_norm.forward(params, z, cache ? cache->final_norm : scratch);
}

void VideoEncoder::backward(const ParameterSet& params, const Cache& cache, const Mat& dz,
                            Gradients& grads) const {
  Mat dx = final_norm.backward(params, cache.final_norm, dz, grads);
  dx = backprop_blocks(params, blocks, cache.blocks, std::move(dx), grads);
  accumulate_positions(params, position, dx, grads);
  const Mat dpooled = to_feature.backward(params, cache.pooled, dx, grads);

  const std::size_t frames = static_cast<std::size_t>(dpooled.rows());
  const auto last = stages.back().main.output_shape(cache.stage_shapes.back());
  const std::size_t pixels = last.height * last.width;
  Mat dout(frames * pixels, last.channels);
  for (std::size_t n = 0; n < frames; ++n)
    dout.middleRows(n * pixels, pixels).rowwise() = dpooled.row(n) / static_cast<double>(pixels);

  for (std::size_t s = stages.size(); s-- > 0;) {
    const auto& st = stages[s];
    const auto& sc = cache.stages[s];
    const bool need_input = s > 0;
    const Mat dsum = relu_backward(sc.sum_pre, dout);
    const Mat dmain_act = st.second.backward(params, sc.second, dsum, grads);
    const Mat dmain_pre = relu_backward(sc.main_pre, dmain_act);
    Mat dmain_in = st.main.backward(params, sc.main, dmain_pre, grads, need_input);
    Mat dshort_in = st.shortcut.backward(params, sc.shortcut, dsum, grads, need_input);
    if (need_input) dout = dmain_in + dshort_in;
  }
}

// ----------------------------------------------------------- AudioEncoder

AudioEncoder::AudioEncoder(ParameterSet& params, Initializer& init, const EncoderConfig& cfg)
    : config(cfg),
      conv1(params, init, "audio.conv1", cfg.mel_bins, cfg.audio_conv_channels,
            cfg.audio_conv1_kernel, cfg.audio_conv1_stride, cfg.audio_conv1_kernel / 2, 1.0),
      conv2(params, init, "audio.conv2", cfg.audio_conv_channels, cfg.feature_dim,
            cfg.audio_conv2_kernel, cfg.audio_conv2_stride, cfg.audio_conv2_kernel / 2, 1.0) {
  position = params.add("audio.position", init.normal(cfg.max_audio_steps, cfg.feature_dim, 0.02));
  for (int b = 0; b < cfg.audio_blocks; ++b)
    blocks.emplace_back(params, init, "audio.block" + std::to_string(b), cfg.feature_dim, cfg.heads,
                        cfg.mlp_ratio);
  final_norm = LayerNorm(params, "audio.final_norm", cfg.feature_dim);
}

std::size_t AudioEncoder::output_length(std::size_t audio_frames) const {
  return conv2.output_length(conv1.output_length(audio_frames));
}

Mat AudioEncoder::forward(const ParameterSet& params, std::span<const float> audio,
                          std::size_t audio_frames, std::size_t mel_bins, Cache* cache) const {
  if (mel_bins != static_cast<std::size_t>(config.mel_bins))
    throw DimensionError("audio: mel_bins axis is " + std::to_string(mel_bins) +
                         ", encoder expects " + std::to_string(config.mel_bins));
  if (audio.size() != audio_frames * mel_bins)
    throw DimensionError("audio: payload size does not match audio_frames x mel_bins");
  output_length(audio_frames);  // throws on inputs shorter than the receptive field

  Mat x(audio_frames, mel_bins);
  for (std::size_t i = 0; i < audio.size(); ++i) x.data()[i] = audio[i];
  Cache scratch;
  Cache& c = cache ? *cache : scratch;
  c.conv1_pre = conv1.forward(params, x, c.conv1);
  c.conv2_pre = conv2.forward(params, gelu(c.conv1_pre), c.conv2);
  Mat z = add_positions(params, position, gelu(c.conv2_pre), "audio steps");
  z = run_blocks(params, blocks, std::move(z), cache ? &cache->blocks : nullptr);
  return final_norm.forward(params, z, c.final_norm);
}

void AudioEncoder::backward(const ParameterSet& params, const Cache& cache, const Mat& dz,
                            Gradients& grads) const {
  Mat dx = final_norm.backward(params, cache.final_norm, dz, grads);
  dx = backprop_blocks(params, blocks, cache.blocks, std::move(dx), grads);
  accumulate_positions(params, position, dx, grads);
  // Nothing upstream of a frozen conv stack needs gradients.
  if (params[conv1.weight].frozen && params[conv1.bias].frozen && params[conv2.weight].frozen &&
      params[conv2.bias].frozen)
    return;
  const Mat dconv2 = gelu_backward(cache.conv2_pre, dx);
  const Mat dact1 = conv2.backward(params, cache.conv2, dconv2, grads);
  conv1.backward(params, cache.conv1, gelu_backward(cache.conv1_pre, dact1), grads, false);
}

std::vector<std::size_t> AudioEncoder::conv_parameter_indices() const {
  return {conv1.weight, conv1.bias, conv2.weight, conv2.bias};
}

// ----------------------------------------------------------------- freeze

EncoderParameters apply_freeze(ParameterSet& params, const AudioEncoder& audio,
                               const FreezeSpec& spec) {
  spec.validate(audio.config);
  for (auto& p : params) p.frozen = false;
  if (spec.freeze_audio_convs)
    for (auto i : audio.conv_parameter_indices()) params[i].frozen = true;
  for (int b = 0; b < spec.freeze_audio_blocks; ++b)
    for (auto i : audio.blocks[b].parameter_indices()) params[i].frozen = true;

  EncoderParameters partition;
  for (const auto& p : params) (p.frozen ? partition.frozen : partition.trainable).push_back(p.name);
  return partition;
}

std::size_t import_parameters(ParameterSet& params, const Record& source,
                              std::string_view strip_prefix, std::string_view add_prefix) {
  std::size_t imported = 0;
  for (const auto& array : source.arrays) {
    std::string_view name = array.name;
    if (!name.starts_with(strip_prefix)) continue;
    name.remove_prefix(strip_prefix.size());
    const std::string target = std::string(add_prefix) + std::string(name);
    if (!params.contains(target)) continue;
    auto& p = params[params.index_of(target)];
    if (array.dims.size() != 2 || static_cast<Eigen::Index>(array.dims[0]) != p.value.rows() ||
        static_cast<Eigen::Index>(array.dims[1]) != p.value.cols())
      throw DimensionError("import: shape mismatch for parameter '" + target + "'");
    std::visit(
        [&](const auto& values) {
          for (Eigen::Index i = 0; i < p.value.size(); ++i)
            p.value.data()[i] = static_cast<double>(values[static_cast<std::size_t>(i)]);
        },
        array.data);
    ++imported;
  }
  return imported;
}

}  // namespace pairnet
