#include <doctest.h>

#include <cmath>
#include <random>

#include "../common/oracles.hpp"
#include "pairnet/errors.hpp"
#include "pairnet/fusion.hpp"

using namespace pairnet;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("projection is a per-frame affine map") {
  std::mt19937_64 rng(1);
  const Mat z = random_mat(5, 4, rng);
  CHECK(project_video(z, Mat::Identity(4, 4), Mat::Zero(1, 4)) == z);

  Mat x(3, 4);
  x << 1, 2, 0, -1,
       0.5, 0, 3, 2,
       -2, 1, 1, 0;
  Mat w(4, 4);
  w << 1, 0, 0.5, 0,
       0, 2, 0, 0,
       0, 0, 1, -1,
       1, 0, 0, 1;
  Mat b(1, 4);
  b << 0.1, 0.2, 0.3, 0.4;
  Mat expected(3, 4);
  // Row i: sum_k x(i,k) w(k,j) + b(j), worked by hand.
  expected << 1 * 1 + -1 * 1 + 0.1, 2 * 2 + 0.2, 1 * 0.5 + 0.3, -1 * 1 + 0.4,
              0.5 + 2 + 0.1, 0 + 0.2, 0.25 + 3 + 0.3, -3 + 2 + 0.4,
              -2 + 0 + 0.1, 2 + 0.2, -1 + 1 + 0.3, -1 + 0.4;
  CHECK((project_video(x, w, b) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(project_video(x, Mat::Identity(3, 3), Mat::Zero(1, 3)), DimensionError);
}

TEST_CASE("adaptive max pooling windows") {
  Mat z(6, 1);
  z << 1, 5, 2, 9, 3, 4;
  const Mat y = align_audio(z, 3);
  CHECK(y(0, 0) == 5);
  CHECK(y(1, 0) == 9);
  CHECK(y(2, 0) == 4);

  CHECK(pool_window(0, 5, 2) == std::pair<Eigen::Index, Eigen::Index>{0, 3});
  CHECK(pool_window(1, 5, 2) == std::pair<Eigen::Index, Eigen::Index>{2, 5});

  std::mt19937_64 rng(2);
  const Mat same = random_mat(7, 3, rng);
  CHECK(align_audio(same, 7) == same);
  CHECK_THROWS_AS(align_audio(Mat(0, 3), 2), DimensionError);

  for (long in = 1; in <= 20; ++in)
    for (long out = 1; out <= in; ++out) {
      const Mat x = random_mat(in, 2, rng);
      CHECK(align_audio(x, out) == oracle::pool(x, out));
    }
}

TEST_CASE("pooling ties route gradients to the earliest row") {
  Mat z(4, 1);
  z << 2, 2, 1, 1;
  const auto pooled = align_audio_with_indices(z, 2);
  CHECK(pooled.argmax[0] == 0);
  CHECK(pooled.argmax[1] == 2);
  const Mat grad = align_audio_backward(pooled, Mat::Ones(2, 1), 4);
  CHECK(grad(0, 0) == 1);
  CHECK(grad(1, 0) == 0);
  CHECK(grad(2, 0) == 1);
  CHECK(grad(3, 0) == 0);
}

TEST_CASE("fusion head") {
  ClassifierHead head{Mat::Zero(4, 2), Mat::Zero(1, 2)};
  const Mat zeros = Mat::Zero(3, 4);
  const Mat y0 = fuse_and_classify(zeros, zeros, head);
  CHECK((y0.array() == 0.5).all());

  ClassifierHead ln3{Mat::Zero(1, 2), Mat::Zero(1, 2)};
  ln3.weight(0, 0) = std::log(3.0);
  const Mat y = fuse_and_classify(row({0.25}), row({0.75}), ln3);
  CHECK(y(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(0.25).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = random_mat(6, 4, rng, 5.0), b = random_mat(6, 4, rng, 5.0);
    ClassifierHead h{random_mat(4, 2, rng, 3.0), random_mat(1, 2, rng)};
    const Mat ab = fuse_and_classify(a, b, h);
    CHECK(ab == fuse_and_classify(b, a, h));
    CHECK_NOTHROW(require_row_stochastic(ab, 1e-6, "y"));
    CHECK_NOTHROW(require_row_stochastic(classify_modality(a, h), 1e-6, "y_v"));
  }
  // Extreme logits stay finite thanks to max subtraction.
  ClassifierHead big{Mat::Constant(1, 2, 0.0), row({1e4, -1e4})};
  const Mat yb = classify_modality(row({0.0}), big);
  CHECK(yb.allFinite());
  CHECK(yb(0, 0) == 1.0);
  CHECK_THROWS_AS(fuse_and_classify(Mat::Zero(3, 4), Mat::Zero(2, 4), head), DimensionError);
}

TEST_CASE("prediction averaging") {
  CHECK(average_predictions(row({1, 0}), row({0, 1})) == row({0.5, 0.5}));
  CHECK(average_predictions(row({1, 0}), row({0.5, 0.5})) == row({0.75, 0.25}));
  const Mat p = row({0.3, 0.7});
  CHECK(average_predictions(p, p) == p);
  CHECK_THROWS_AS(average_predictions(row({0.8, 0.8}), p), ContractError);
  CHECK_THROWS_AS(average_predictions(row({1.2, -0.2}), p), ContractError);

  PredictionSequence seq{p, p, row({0.5, 0.5}), row({0.4, 0.6})};
  CHECK_NOTHROW(seq.validate());
  seq.y_avg = row({0.3, 0.7});
  CHECK_THROWS_AS(seq.validate(), ContractError);
}

TEST_CASE("head and projection gradients match finite differences") {
  // Scalar objective: sum_{t,c} g(t,c) * y(t,c) for y = softmax((z_v W_p + b_p + z_a) W + b).
  std::mt19937_64 rng(4);
  const Eigen::Index T = 5, f = 4;
  const Mat z_v = random_mat(T, f, rng), z_a = random_mat(T, f, rng), g = random_mat(T, 2, rng);
  Mat wp = random_mat(f, f, rng, 0.5), bp = random_mat(1, f, rng, 0.1);
  ClassifierHead head{random_mat(f, 2, rng), random_mat(1, 2, rng)};

  auto objective = [&] {
    return (fuse_and_classify(project_video(z_v, wp, bp), z_a, head).array() * g.array()).sum();
  };

  // Analytic: dy -> dlogits via the softmax Jacobian, then chain rule by hand.
  const Mat fused = project_video(z_v, wp, bp) + z_a;
  const Mat y = fuse_and_classify(project_video(z_v, wp, bp), z_a, head);
  Mat dlogits(T, 2);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double dot = (y.row(t).array() * g.row(t).array()).sum();
    for (int c = 0; c < 2; ++c) dlogits(t, c) = y(t, c) * (g(t, c) - dot);
  }
  const Mat dW = fused.transpose() * dlogits;
  const Mat db = dlogits.colwise().sum();
  const Mat dfused = dlogits * head.weight.transpose();
  const Mat dWp = z_v.transpose() * dfused;
  const Mat dbp = dfused.colwise().sum();

  const double h = 1e-6;
  auto check = [&](Mat& param, const Mat& analytic) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + h;
      const double up = objective();
      param.data()[i] = saved - h;
      const double down = objective();
      param.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(numeric - analytic.data()[i]) <= 1e-4 * std::max(1e-3, std::abs(numeric)));
    }
  };
  check(head.weight, dW);
  check(head.bias, db);
  check(wp, dWp);
  check(bp, dbp);
}
