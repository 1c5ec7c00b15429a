#include "pairnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pairnet/errors.hpp"
#include "pairnet/fusion.hpp"

namespace pairnet {
namespace {

void require_pair(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": input shapes differ");
  if (a.rows() < 1) throw ContractError(std::string(what) + ": n must be >= 1");
}

// p * log(p / q) with 0 log 0 = 0 and an eps-clamped denominator.
double kl_term(double p, double q) {
  if (p <= 0.0) return 0.0;
  return p * (std::log(p) - std::log(std::max(q, kLogClamp)));
}

}  // namespace

Mat one_hot(std::span<const std::int8_t> labels) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(labels.size()), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("labels must be 0 or 1");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

double cls_loss(const Mat& y, const Mat& labels) {
  require_pair(y, labels, "cls_loss");
  double total = 0.0;
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (labels(r, c) != 0.0) total -= labels(r, c) * std::log(std::max(y(r, c), kLogClamp));
  return total / static_cast<double>(y.rows());
}

Mat cls_loss_logit_grad(const Mat& y, const Mat& labels) {
  require_pair(y, labels, "cls_loss");
  return (y - labels) / static_cast<double>(y.rows());
}

Eigen::VectorXd alignment_loss_per_frame(const Mat& y_v, const Mat& y_a) {
  require_pair(y_v, y_a, "alignment_loss");
  require_row_stochastic(y_v, 1e-4, "alignment_loss(y_v)");
  require_row_stochastic(y_a, 1e-4, "alignment_loss(y_a)");
  Eigen::VectorXd js(y_v.rows());
  for (Eigen::Index r = 0; r < y_v.rows(); ++r) {
    double kv = 0.0, ka = 0.0;
    for (Eigen::Index c = 0; c < y_v.cols(); ++c) {
      const double m = 0.5 * (y_v(r, c) + y_a(r, c));
      kv += kl_term(y_v(r, c), m);
      ka += kl_term(y_a(r, c), m);
    }
    // Rounding can push an exact zero slightly negative.
    js(r) = std::max(0.0, 0.5 * kv + 0.5 * ka);
  }
  return js;
}

double alignment_loss(const Mat& y_v, const Mat& y_a) {
  return alignment_loss_per_frame(y_v, y_a).mean();
}

std::pair<Mat, Mat> alignment_loss_prob_grad(const Mat& y_v, const Mat& y_a) {
  require_pair(y_v, y_a, "alignment_loss");
  const double inv_n = 1.0 / static_cast<double>(y_v.rows());
  Mat gv(y_v.rows(), y_v.cols()), ga(y_a.rows(), y_a.cols());
  // d/dp [0.5 KL(p||m) + 0.5 KL(q||m)] = 0.5 log(p / m); the m-terms cancel.
  for (Eigen::Index r = 0; r < y_v.rows(); ++r) {
    for (Eigen::Index c = 0; c < y_v.cols(); ++c) {
      const double m = std::max(0.5 * (y_v(r, c) + y_a(r, c)), kLogClamp);
      gv(r, c) = 0.5 * inv_n * std::log(std::max(y_v(r, c), kLogClamp) / m);
      ga(r, c) = 0.5 * inv_n * std::log(std::max(y_a(r, c), kLogClamp) / m);
    }
  }
  return {gv, ga};
}

Mat softmax_backward(const Mat& y, const Mat& dy) {
  const Eigen::VectorXd dot = y.cwiseProduct(dy).rowwise().sum();
  return y.cwiseProduct(dy - dot.replicate(1, dy.cols()));
}

double combined_loss(double l_cls, double l_mm, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("alpha", "must be within [0, 1] (got " + std::to_string(alpha) + ")");
  return (1.0 - alpha) * l_cls + alpha * l_mm;
}

void AlignmentSchedule::validate() const {
  if (!(alpha0 >= 0.0 && alpha0 <= 1.0))
    throw ConfigError("alpha0", "must be within [0, 1] (got " + std::to_string(alpha0) + ")");
  if (!(decay > 0.0 && decay <= 1.0))
    throw ConfigError("alpha_decay", "must be within (0, 1] (got " + std::to_string(decay) + ")");
  if (!(floor >= 0.0 && floor <= 1.0))
    throw ConfigError("alpha_floor", "must be within [0, 1] (got " + std::to_string(floor) + ")");
}

double alpha_at(const AlignmentSchedule& schedule, int epoch) {
  return std::max(schedule.floor, schedule.alpha0 * std::pow(schedule.decay, epoch));
}

}  // namespace pairnet
