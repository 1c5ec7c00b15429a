#pragma once

#include <cstdint>

#include "pairnet/data.hpp"
#include "pairnet/encoders.hpp"
#include "pairnet/fusion.hpp"
#include "pairnet/losses.hpp"

namespace pairnet {

struct ModelConfig {
  EncoderConfig encoder;
  /// When set, the per-modality heads see detached features: L_MM and the
  /// unimodal cross-entropy then only train the heads, not the encoders.
  bool detach_modality_heads = false;
  /// When set, the per-modality cross-entropy trains only the heads (a
  /// probe), so the encoders are driven by the fused cross-entropy and the
  /// alignment term alone.
  bool probe_modality_heads = true;
  std::uint64_t init_seed = 7;

  void validate() const { encoder.validate(); }
};

/// Weights for one clip's contribution to a batch objective.
struct LossWeights {
  double alpha = 0.0;
  /// Weight of the per-modality cross-entropy terms. Zero leaves only the
  /// fused cross-entropy.
  double unimodal_weight = 1.0;
  /// Total frames n in the batch; every per-frame term is divided by it.
  double frames_in_batch = 1.0;
};

/// Batch-level loss values. `cls` is the fused cross-entropy, `mm` the
/// alignment term and `total = (1 - alpha) cls + alpha mm`. `cls_modality`
/// is the weighted per-modality cross-entropy; `objective` adds
/// (1 - alpha) cls_modality to `total` and is the value whose gradient is
/// accumulated (exactly so when the heads are not probes).
struct LossBreakdown {
  double cls = 0.0;
  double cls_modality = 0.0;
  double mm = 0.0;
  double total = 0.0;
  double objective = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    cls += o.cls;
    cls_modality += o.cls_modality;
    mm += o.mm;
    total += o.total;
    objective += o.objective;
    return *this;
  }
};

/// Video encoder + projection, audio encoder + adaptive max pooling,
/// additive fusion with a fused head and one head per modality.
class PairNetModel {
 public:
  explicit PairNetModel(const ModelConfig& config);

  PredictionSequence predict(const ClipRecord& clip) const;

  /// Forward-only loss of one clip under `weights`.
  LossBreakdown loss(const ClipRecord& clip, const LossWeights& weights) const;
  /// Loss plus accumulation of dL/dtheta into `grads` (frozen tensors untouched).
  LossBreakdown loss_and_gradients(const ClipRecord& clip, const LossWeights& weights,
                                   Gradients& grads) const;

  EncoderParameters freeze(const FreezeSpec& spec) { return apply_freeze(params_, audio, spec); }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const ModelConfig& config() const { return config_; }

  ClassifierHead head(const Linear& layer) const {
    return {params_[layer.weight].value, params_[layer.bias].value};
  }

  VideoEncoder video;
  AudioEncoder audio;
  Linear projection;
  Linear fused_head;
  Linear video_head;
  Linear audio_head;

 private:
  LossBreakdown run(const ClipRecord& clip, const LossWeights* weights, Gradients* grads,
                    PredictionSequence* predictions) const;

  ModelConfig config_;
  ParameterSet params_;
};

}  // namespace pairnet
