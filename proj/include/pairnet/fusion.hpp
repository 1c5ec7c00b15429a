#pragma once

#include <utility>
#include <vector>

#include "pairnet/nn.hpp"

namespace pairnet {

inline constexpr int kNumClasses = 2;  // 0 = not speaking, 1 = speaking

/// Affine classifier: softmax(z W + b) with W [f x 2], b [1 x 2].
struct ClassifierHead {
  Mat weight;
  Mat bias;

  void validate(Eigen::Index feature_dim) const;
};

/// Per-frame class distributions for one clip (or a concatenation of clips).
struct PredictionSequence {
  Mat y;      // fused
  Mat y_v;    // video-only head
  Mat y_a;    // audio-only head
  Mat y_avg;  // (y_v + y_a) / 2

  Eigen::Index frames() const { return y.rows(); }
  /// Throws ContractError unless every row of every tensor is a probability
  /// vector (within 1e-6) and y_avg is the mean of y_v and y_a.
  void validate() const;
};

/// z_v' = z_v W + b per frame.
Mat project_video(const Mat& z_v, const Mat& weight, const Mat& bias);

/// Input range [begin, end) pooled into output step `i`:
/// [floor(i * in / out), ceil((i + 1) * in / out)).
std::pair<Eigen::Index, Eigen::Index> pool_window(Eigen::Index i, Eigen::Index in_length,
                                                  Eigen::Index out_length);

struct PooledSequence {
  Mat values;                         // [T_v x f]
  std::vector<Eigen::Index> argmax;   // source row per (step, channel), row-major
};

/// Adaptive temporal max pooling of z_a [T_a' x f] onto `frames` steps.
/// Ties resolve to the earliest source row.
PooledSequence align_audio_with_indices(const Mat& z_a, Eigen::Index frames);
Mat align_audio(const Mat& z_a, Eigen::Index frames);
/// Routes each pooled gradient to its argmax source row.
Mat align_audio_backward(const PooledSequence& pooled, const Mat& dpooled, Eigen::Index in_length);

/// softmax(W (z_v' + z_a') + b).
Mat fused_logits(const Mat& z_v_proj, const Mat& z_a_pooled, const ClassifierHead& head);
Mat fuse_and_classify(const Mat& z_v_proj, const Mat& z_a_pooled, const ClassifierHead& head);
Mat classify_modality(const Mat& z, const ClassifierHead& head);
/// Elementwise mean of two row-stochastic tensors.
Mat average_predictions(const Mat& y_v, const Mat& y_a);

/// Throws ContractError unless every row is nonnegative and sums to 1 within `tol`.
void require_row_stochastic(const Mat& y, double tol, const char* what);

}  // namespace pairnet
