#include "pairnet/fusion.hpp"

#include <cmath>
#include <string>

#include "pairnet/errors.hpp"

namespace pairnet {
namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shapes [" + std::to_string(a.rows()) + " x " +
                         std::to_string(a.cols()) + "] and [" + std::to_string(b.rows()) + " x " +
                         std::to_string(b.cols()) + "] differ (time x feature)");
}

}  // namespace

void ClassifierHead::validate(Eigen::Index feature_dim) const {
  if (weight.rows() != feature_dim || weight.cols() != kNumClasses)
    throw DimensionError("classifier head weight must be [feature x 2]");
  if (bias.rows() != 1 || bias.cols() != kNumClasses)
    throw DimensionError("classifier head bias must be [1 x 2]");
  if (!weight.allFinite() || !bias.allFinite())
    throw ContractError("classifier head parameters must be finite");
}

void require_row_stochastic(const Mat& y, double tol, const char* what) {
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    if ((y.row(r).array() < -tol).any() || !y.row(r).allFinite())
      throw ContractError(std::string(what) + ": row " + std::to_string(r) +
                          " has negative or non-finite entries");
    if (std::abs(y.row(r).sum() - 1.0) > tol)
      throw ContractError(std::string(what) + ": row " + std::to_string(r) +
                          " does not sum to 1");
  }
}

void PredictionSequence::validate() const {
  require_same_shape(y, y_v, "predictions");
  require_same_shape(y, y_a, "predictions");
  require_same_shape(y, y_avg, "predictions");
  require_row_stochastic(y, 1e-6, "y");
  require_row_stochastic(y_v, 1e-6, "y_v");
  require_row_stochastic(y_a, 1e-6, "y_a");
  require_row_stochastic(y_avg, 1e-6, "y_avg");
  if (((y_avg - 0.5 * (y_v + y_a)).array().abs() > 1e-12).any())
    throw ContractError("y_avg is not the mean of y_v and y_a");
}

Mat project_video(const Mat& z_v, const Mat& weight, const Mat& bias) {
  if (z_v.cols() != weight.rows())
    throw DimensionError("project_video: feature axis is " + std::to_string(z_v.cols()) +
                         ", projection expects " + std::to_string(weight.rows()));
  Mat out = z_v * weight;
  out.rowwise() += bias.row(0);
  return out;
}

std::pair<Eigen::Index, Eigen::Index> pool_window(Eigen::Index i, Eigen::Index in_length,
                                                  Eigen::Index out_length) {
  const Eigen::Index begin = (i * in_length) / out_length;
  const Eigen::Index end = ((i + 1) * in_length + out_length - 1) / out_length;
  return {begin, end};
}

PooledSequence align_audio_with_indices(const Mat& z_a, Eigen::Index frames) {
  if (z_a.rows() < 1) throw DimensionError("align_audio: audio time axis is empty");
  if (frames < 1) throw DimensionError("align_audio: target time axis must be >= 1");
  const Eigen::Index f = z_a.cols();
  PooledSequence out{Mat(frames, f), std::vector<Eigen::Index>(frames * f)};
  for (Eigen::Index i = 0; i < frames; ++i) {
    const auto [begin, end] = pool_window(i, z_a.rows(), frames);
    for (Eigen::Index c = 0; c < f; ++c) {
      Eigen::Index best = begin;
      for (Eigen::Index t = begin + 1; t < end; ++t)
        if (z_a(t, c) > z_a(best, c)) best = t;
      out.values(i, c) = z_a(best, c);
      out.argmax[i * f + c] = best;
    }
  }
  return out;
}

Mat align_audio(const Mat& z_a, Eigen::Index frames) {
  return align_audio_with_indices(z_a, frames).values;
}

Mat align_audio_backward(const PooledSequence& pooled, const Mat& dpooled, Eigen::Index in_length) {
  const Eigen::Index f = dpooled.cols();
  Mat dz = Mat::Zero(in_length, f);
  for (Eigen::Index i = 0; i < dpooled.rows(); ++i)
    for (Eigen::Index c = 0; c < f; ++c) dz(pooled.argmax[i * f + c], c) += dpooled(i, c);
  return dz;
}

Mat fused_logits(const Mat& z_v_proj, const Mat& z_a_pooled, const ClassifierHead& head) {
  require_same_shape(z_v_proj, z_a_pooled, "fuse_and_classify");
  head.validate(z_v_proj.cols());
  Mat logits = (z_v_proj + z_a_pooled) * head.weight;
  logits.rowwise() += head.bias.row(0);
  return logits;
}

Mat fuse_and_classify(const Mat& z_v_proj, const Mat& z_a_pooled, const ClassifierHead& head) {
  return softmax_rows(fused_logits(z_v_proj, z_a_pooled, head));
}

Mat classify_modality(const Mat& z, const ClassifierHead& head) {
  head.validate(z.cols());
  Mat logits = z * head.weight;
  logits.rowwise() += head.bias.row(0);
  return softmax_rows(logits);
}

Mat average_predictions(const Mat& y_v, const Mat& y_a) {
  require_same_shape(y_v, y_a, "average_predictions");
  require_row_stochastic(y_v, 1e-6, "average_predictions(y_v)");
  require_row_stochastic(y_a, 1e-6, "average_predictions(y_a)");
  return 0.5 * (y_v + y_a);
}

}  // namespace pairnet
