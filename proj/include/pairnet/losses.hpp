#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "pairnet/nn.hpp"

namespace pairnet {

inline constexpr double kLogClamp = 1e-12;

/// One-hot [n x 2] from 0/1 labels.
Mat one_hot(std::span<const std::int8_t> labels);

/// Mean negative log-likelihood: -(1/n) sum_j labels_j . log(max(y_j, eps)).
double cls_loss(const Mat& y, const Mat& labels);
/// Gradient of cls_loss w.r.t. the logits that produced y: (y - labels) / n.
Mat cls_loss_logit_grad(const Mat& y, const Mat& labels);

/// Per-frame Jensen-Shannon divergence (nats) between y_v and y_a, i.e.
/// 0.5 KL(y_v || m) + 0.5 KL(y_a || m) with m = (y_v + y_a) / 2, averaged
/// over frames. Rows must sum to 1 within 1e-4.
double alignment_loss(const Mat& y_v, const Mat& y_a);
/// Per-frame JS divergences (not averaged).
Eigen::VectorXd alignment_loss_per_frame(const Mat& y_v, const Mat& y_a);
/// Gradients of alignment_loss w.r.t. y_v and y_a (probability space).
std::pair<Mat, Mat> alignment_loss_prob_grad(const Mat& y_v, const Mat& y_a);

/// Pulls a probability-space gradient back through the softmax.
Mat softmax_backward(const Mat& y, const Mat& dy);

/// (1 - alpha) l_cls + alpha l_mm; alpha must lie in [0, 1].
double combined_loss(double l_cls, double l_mm, double alpha);

/// alpha(e) = max(floor, alpha0 * decay^e).
struct AlignmentSchedule {
  double alpha0 = 0.8;
  double decay = 0.95;
  double floor = 0.0;

  void validate() const;
};

double alpha_at(const AlignmentSchedule& schedule, int epoch);

}  // namespace pairnet
