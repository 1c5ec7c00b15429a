#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "../common/fixtures.hpp"
#include "../common/oracles.hpp"
#include "pairnet/errors.hpp"
#include "pairnet/eval.hpp"
#include "pairnet/training.hpp"

using namespace pairnet;

namespace {

double ap(const std::vector<double>& s, const std::vector<int>& l) {
  std::vector<std::int8_t> labels(l.begin(), l.end());
  return average_precision(s, labels);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(std::abs(ap({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 1}) - (1.0 + 2.0 / 3 + 3.0 / 4) / 3) < 1e-12);
  CHECK(std::abs(ap({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 1}) - 0.805556) < 1e-6);
  CHECK(ap({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(ap({0.1, 0.5, 0.3}, {1, 1, 1}) == 1.0);
  // Ties keep the original order: the earlier frame ranks first.
  CHECK(ap({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK(ap({0.5, 0.5}, {1, 0}) == 1.0);
  CHECK_THROWS_AS(ap({0.3, 0.2}, {0, 0}), UndefinedValueError);
  CHECK_THROWS_AS(ap({}, {}), ContractError);
  CHECK_THROWS_AS(ap({std::nan(""), 0.2}, {1, 0}), ContractError);
}

TEST_CASE("average precision matches the brute-force oracle exhaustively") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 1; n <= 10; ++n) {
    for (unsigned pattern = 1; pattern < (1u << n); ++pattern) {
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) labels[i] = (pattern >> i) & 1;
      std::vector<double> scores(n), ties(n);
      for (int i = 0; i < n; ++i) {
        scores[i] = u(rng);
        ties[i] = coarse(rng) / 4.0;
      }
      CHECK(std::abs(ap(scores, labels) - oracle::average_precision(scores, labels)) <= 1e-9);
      CHECK(std::abs(ap(ties, labels) - oracle::average_precision(ties, labels)) <= 1e-9);
    }
  }
}

TEST_CASE("average precision is invariant under monotone transforms") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution b(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(30), t1(30), t2(30);
    std::vector<int> l(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = u(rng);
      l[i] = b(rng);
      t1[i] = std::exp(5 * s[i]) - 3;
      t2[i] = std::atan(s[i] * 7) * 2 + 1;
    }
    l[0] = 1;
    const double base = ap(s, l);
    CHECK(ap(t1, l) == base);
    CHECK(ap(t2, l) == base);
  }
}

TEST_CASE("precision-recall points follow positive ranks") {
  std::vector<std::int8_t> labels = {1, 0, 1, 1};
  const std::vector<double> scores = {0.9, 0.8, 0.7, 0.6};
  const auto curve = precision_recall_curve(scores, labels);
  REQUIRE(curve.size() == 3);
  CHECK(curve[1].precision == doctest::Approx(2.0 / 3));
  CHECK(curve[1].recall == doctest::Approx(2.0 / 3));
  CHECK(curve[2].recall == 1.0);
  CHECK(curve[0].threshold == 0.9);
}

TEST_CASE("reports from synthetic scores") {
  SUBCASE("oracle fused scores") {
    FrameScores s;
    s.labels = {1, 0, 0, 1, 1};
    s.fused = {1, 0, 0, 1, 1};
    s.video = {0.9, 0.2, 0.4, 0.7, 0.6};
    s.audio = {0.2, 0.4, 0.1, 0.9, 0.3};
    s.js = {0.1, 0.0, 0.05, 0.02, 0.0};
    const auto r = report_from_scores(s);
    CHECK(r.map_fused == 1.0);
    CHECK(r.mean_js == doctest::Approx(0.034));
    CHECK(r.ap_gap == doctest::Approx(std::abs(r.ap_video - r.ap_audio)));
    CHECK(r.prevalence == doctest::Approx(0.6));
    CHECK(r.n_frames == 5);
  }
  SUBCASE("constant scores rank frames in their original order") {
    FrameScores s;
    s.labels = {0, 1, 0, 1};
    s.fused = s.video = s.audio = {0.5, 0.5, 0.5, 0.5};
    s.js = {0, 0, 0, 0};
    const auto r = report_from_scores(s);
    CHECK(r.map_fused == oracle::average_precision({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}));
    CHECK(r.ap_gap == 0.0);
    CHECK(r.mean_js == 0.0);
  }
  SUBCASE("constant scores approach the prevalence for exchangeable labels") {
    std::mt19937_64 rng(8);
    std::bernoulli_distribution b(0.3);
    FrameScores s;
    for (int i = 0; i < 20000; ++i) s.labels.push_back(b(rng));
    s.fused = s.video = s.audio = s.js = std::vector<double>(s.labels.size(), 0.5);
    const auto r = report_from_scores(s);
    std::vector<int> l(s.labels.begin(), s.labels.end());
    CHECK(std::abs(r.map_fused - oracle::average_precision(s.fused, l)) <= 1e-9);
    CHECK(std::abs(r.map_fused - r.prevalence) < 0.02);
  }
}

TEST_CASE("evaluate on a trained tiny model") {
  const auto gen = fixture::tiny_gen(6);
  const auto clips = generate_corpus(gen);
  const auto state = init_train_state(fixture::tiny_model(gen), fixture::tiny_train());
  const auto& model = state.model;

  const auto r = evaluate(model, clips);
  CHECK(r.n_frames == 6 * gen.frames);
  for (double v : {r.map_fused, r.ap_video, r.ap_audio}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(r.mean_js >= 0.0);
  CHECK(r.mean_js <= std::log(2.0));

  // Threads change nothing.
  const auto r3 = evaluate(model, clips, 3);
  CHECK(r3.map_fused == r.map_fused);
  CHECK(r3.mean_js == r.mean_js);

  // A one-clip corpus agrees with AP on that clip's frames.
  std::vector<ClipRecord> one = {clips[0]};
  if (std::count(clips[0].labels.begin(), clips[0].labels.end(), 1) > 0) {
    const auto pred = model.predict(clips[0]);
    std::vector<double> s(pred.y.rows());
    for (Eigen::Index t = 0; t < pred.y.rows(); ++t) s[t] = pred.y(t, 1);
    CHECK(evaluate(model, one).map_fused == average_precision(s, clips[0].labels));
  }
}

TEST_CASE("emitted reports round-trip and are deterministic") {
  const auto gen = fixture::tiny_gen(6);
  const auto clips = generate_corpus(gen);
  const auto state = init_train_state(fixture::tiny_model(gen), fixture::tiny_train());
  const auto r = evaluate(state.model, clips);
  const auto root = fixture::scratch_dir("emit");
  const auto a = root / "nested" / "a", b = root / "b";
  std::vector<MetricRow> history = {{1, 0, 1e-3, 0.8, 0.7, 0.1, 0.22, 0.6}};
  emit_report(r, a, history);
  emit_report(r, b, history);
  for (const char* name :
       {"metrics.csv", "summary.txt", "pr_fused.csv", "pr_video.csv", "pr_audio.csv", "training_curve.csv"}) {
    REQUIRE(std::filesystem::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const auto parsed = read_metrics_row(a / "metrics.csv");
  CHECK(std::abs(parsed.map_fused - r.map_fused) <= 1e-9);
  CHECK(std::abs(parsed.ap_video - r.ap_video) <= 1e-9);
  CHECK(std::abs(parsed.ap_audio - r.ap_audio) <= 1e-9);
  CHECK(std::abs(parsed.ap_gap - r.ap_gap) <= 1e-9);
  CHECK(std::abs(parsed.mean_js - r.mean_js) <= 1e-9);
  CHECK(parsed.n_frames == r.n_frames);

  std::vector<ImbalanceRow> rows = {{"alpha0=0", 0.0, r}, {"alpha0=0.8", 0.8, r}};
  emit_imbalance_report(rows, root / "imb");
  CHECK(std::filesystem::exists(root / "imb" / "imbalance.csv"));
  CHECK(std::filesystem::exists(root / "imb" / "imbalance.txt"));
}
