#include "pairnet/model.hpp"

#include "pairnet/errors.hpp"

namespace pairnet {

PairNetModel::PairNetModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Initializer init(config_.init_seed);
  const int f = config_.encoder.feature_dim;
  video = VideoEncoder(params_, init, config_.encoder);
  audio = AudioEncoder(params_, init, config_.encoder);
  projection = Linear(params_, init, "fusion.projection", f, f);
  fused_head = Linear(params_, init, "fusion.head", f, kNumClasses);
  video_head = Linear(params_, init, "fusion.video_head", f, kNumClasses);
  audio_head = Linear(params_, init, "fusion.audio_head", f, kNumClasses);
}

PredictionSequence PairNetModel::predict(const ClipRecord& clip) const {
  PredictionSequence out;
  run(clip, nullptr, nullptr, &out);
  return out;
}

LossBreakdown PairNetModel::loss(const ClipRecord& clip, const LossWeights& weights) const {
  return run(clip, &weights, nullptr, nullptr);
}

LossBreakdown PairNetModel::loss_and_gradients(const ClipRecord& clip, const LossWeights& weights,
                                               Gradients& grads) const {
  return run(clip, &weights, &grads, nullptr);
}

LossBreakdown PairNetModel::run(const ClipRecord& clip, const LossWeights* weights,
                                Gradients* grads, PredictionSequence* predictions) const {
  const bool backprop = grads != nullptr;
  VideoEncoder::Cache video_cache;
  AudioEncoder::Cache audio_cache;

  const Mat z_v = video.forward(params_, clip.video, clip.frames, clip.height, clip.width,
                                backprop ? &video_cache : nullptr);
  const Mat z_a = audio.forward(params_, clip.audio, clip.audio_frames, clip.mel_bins,
                                backprop ? &audio_cache : nullptr);
  const Eigen::Index frames = static_cast<Eigen::Index>(clip.frames);
  if (z_a.rows() < frames)
    throw DimensionError("audio sequence (" + std::to_string(z_a.rows()) +
                         " steps after convolution) is shorter than the video (" +
                         std::to_string(frames) + " frames)");

  const Mat z_v_proj = projection.forward(params_, z_v);
  const PooledSequence pooled = align_audio_with_indices(z_a, frames);

  const Mat logits = fused_logits(z_v_proj, pooled.values, head(fused_head));
  const Mat y = softmax_rows(logits);
  const Mat y_v = classify_modality(z_v_proj, head(video_head));
  const Mat y_a = classify_modality(pooled.values, head(audio_head));

  if (predictions) {
    predictions->y = y;
    predictions->y_v = y_v;
    predictions->y_a = y_a;
    predictions->y_avg = average_predictions(y_v, y_a);
  }
  if (!weights) return {};

  const Mat labels = one_hot(clip.labels);
  const double share = static_cast<double>(frames) / weights->frames_in_batch;
  const double alpha = weights->alpha;
  const double u = weights->unimodal_weight;

  LossBreakdown out;
  out.cls = share * cls_loss(y, labels);
  out.cls_modality = u * share * (cls_loss(y_v, labels) + cls_loss(y_a, labels));
  out.mm = share * alignment_loss(y_v, y_a);
  out.total = combined_loss(out.cls, out.mm, alpha);
  out.objective = out.total + (1.0 - alpha) * out.cls_modality;
  if (!backprop) return out;

  const double w_cls = (1.0 - alpha) * share;
  const Mat dlogits = w_cls * cls_loss_logit_grad(y, labels);
  const auto [gv, ga] = alignment_loss_prob_grad(y_v, y_a);
  const Mat mm_v = alpha * share * softmax_backward(y_v, gv);
  const Mat mm_a = alpha * share * softmax_backward(y_a, ga);
  const Mat ce_v = w_cls * u * cls_loss_logit_grad(y_v, labels);
  const Mat ce_a = w_cls * u * cls_loss_logit_grad(y_a, labels);

  Mat dfused = fused_head.backward(params_, z_v_proj + pooled.values, dlogits, *grads);
  Mat dv_head = video_head.backward(params_, z_v_proj, ce_v + mm_v, *grads);
  Mat da_head = audio_head.backward(params_, pooled.values, ce_a + mm_a, *grads);
  if (config_.probe_modality_heads) {
    dv_head = mm_v * params_[video_head.weight].value.transpose();
    da_head = mm_a * params_[audio_head.weight].value.transpose();
  }

  Mat dz_v_proj = dfused;
  Mat dz_a_pooled = dfused;
  if (!config_.detach_modality_heads) {
    dz_v_proj += dv_head;
    dz_a_pooled += da_head;
  }
  const Mat dz_v = projection.backward(params_, z_v, dz_v_proj, *grads);
  const Mat dz_a = align_audio_backward(pooled, dz_a_pooled, z_a.rows());
  video.backward(params_, video_cache, dz_v, *grads);
  audio.backward(params_, audio_cache, dz_a, *grads);
  return out;
}

}  // namespace pairnet
