#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairnet/data.hpp"
#include "pairnet/model.hpp"

namespace pairnet {

struct MetricRow;

/// Frame-level average precision of the positive class: the mean, over
/// positive frames, of precision at that frame's rank when frames are sorted
/// by descending score. Equal scores keep their original order.
/// Throws UndefinedValueError when there are no positives.
double average_precision(std::span<const double> scores, std::span<const std::int8_t> labels);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per positive frame, in rank order (the points AP averages over).
std::vector<PrPoint> precision_recall_curve(std::span<const double> scores,
                                            std::span<const std::int8_t> labels);

struct EvalReport {
  double map_fused = 0.0;
  double ap_video = 0.0;
  double ap_audio = 0.0;
  double ap_gap = 0.0;   // |ap_video - ap_audio|
  double mean_js = 0.0;  // mean per-frame JS(y_v, y_a), nats
  std::size_t n_frames = 0;
  double prevalence = 0.0;
  std::vector<PrPoint> curve_fused;
  std::vector<PrPoint> curve_video;
  std::vector<PrPoint> curve_audio;
};

/// Speaking-class scores of every frame, concatenated in corpus order.
struct FrameScores {
  std::vector<double> fused;
  std::vector<double> video;
  std::vector<double> audio;
  std::vector<double> js;
  std::vector<std::int8_t> labels;
};

FrameScores collect_scores(const PairNetModel& model, std::span<const ClipRecord> corpus,
                           int threads = 1);
EvalReport report_from_scores(const FrameScores& scores);
EvalReport evaluate(const PairNetModel& model, std::span<const ClipRecord> corpus, int threads = 1);

/// Writes summary.txt, metrics.csv, pr_{fused,video,audio}.csv and, when a
/// training history is given, training_curve.csv. Creates `dir` if needed.
void emit_report(const EvalReport& report, const std::filesystem::path& dir,
                 std::span<const MetricRow> history = {});

/// Parses the single data row of a metrics.csv written by emit_report.
EvalReport read_metrics_row(const std::filesystem::path& metrics_csv);

/// One row of the per-alpha imbalance comparison.
struct ImbalanceRow {
  std::string label;
  double alpha0 = 0.0;
  EvalReport report;
};

/// Writes imbalance.csv and imbalance.txt into `dir`.
void emit_imbalance_report(std::span<const ImbalanceRow> rows, const std::filesystem::path& dir);

}  // namespace pairnet
