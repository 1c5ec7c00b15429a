#include "pairnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "pairnet/errors.hpp"
#include "pairnet/text.hpp"
#include "pairnet/training.hpp"

namespace pairnet {
namespace {

std::vector<std::size_t> rank_order(std::span<const double> scores,
                                    std::span<const std::int8_t> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("average_precision: scores and labels differ in length");
  if (scores.empty()) throw ContractError("average_precision: n must be >= 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw ContractError("average_precision: scores must be finite");
  if (std::none_of(labels.begin(), labels.end(), [](std::int8_t l) { return l == 1; }))
    throw UndefinedValueError("average_precision: no positive labels, AP is undefined");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void write_curve(const std::vector<PrPoint>& curve, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "threshold,precision,recall\n";
  for (const auto& p : curve)
    out << format_real(p.threshold) << ',' << format_real(p.precision) << ',' << format_real(p.recall) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

constexpr const char* kMetricsHeader =
    "map_fused,ap_video,ap_audio,ap_gap,mean_js,n_frames,prevalence";

std::string metrics_row(const EvalReport& r) {
  return format_real(r.map_fused) + ',' + format_real(r.ap_video) + ',' + format_real(r.ap_audio) + ',' + format_real(r.ap_gap) +
         ',' + format_real(r.mean_js) + ',' + std::to_string(r.n_frames) + ',' + format_real(r.prevalence);
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const std::int8_t> labels) {
  const auto order = rank_order(scores, labels);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(hits);
}

std::vector<PrPoint> precision_recall_curve(std::span<const double> scores,
                                            std::span<const std::int8_t> labels) {
  const auto order = rank_order(scores, labels);
  const auto positives =
      static_cast<double>(std::count(labels.begin(), labels.end(), std::int8_t{1}));
  std::vector<PrPoint> curve;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 1) continue;
    ++hits;
    curve.push_back({scores[order[rank]], static_cast<double>(hits) / static_cast<double>(rank + 1),
                     static_cast<double>(hits) / positives});
  }
  return curve;
}

FrameScores collect_scores(const PairNetModel& model, std::span<const ClipRecord> corpus,
                           int threads) {
  if (corpus.empty()) throw ContractError("evaluate: corpus is empty");
  std::vector<PredictionSequence> predictions(corpus.size());
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, corpus.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) predictions[i] = model.predict(corpus[i]);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < corpus.size(); i += workers)
          predictions[i] = model.predict(corpus[i]);
      });
  }

  FrameScores out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = predictions[i];
    const Eigen::VectorXd js = alignment_loss_per_frame(p.y_v, p.y_a);
    for (Eigen::Index t = 0; t < p.frames(); ++t) {
      out.fused.push_back(p.y(t, 1));
      out.video.push_back(p.y_v(t, 1));
      out.audio.push_back(p.y_a(t, 1));
      out.js.push_back(js(t));
    }
    out.labels.insert(out.labels.end(), corpus[i].labels.begin(), corpus[i].labels.end());
  }
  return out;
}

EvalReport report_from_scores(const FrameScores& s) {
  EvalReport r;
  r.map_fused = average_precision(s.fused, s.labels);
  r.ap_video = average_precision(s.video, s.labels);
  r.ap_audio = average_precision(s.audio, s.labels);
  r.ap_gap = std::abs(r.ap_video - r.ap_audio);
  r.n_frames = s.labels.size();
  r.mean_js = std::accumulate(s.js.begin(), s.js.end(), 0.0) / static_cast<double>(s.js.size());
  r.prevalence = static_cast<double>(std::count(s.labels.begin(), s.labels.end(), std::int8_t{1})) /
                 static_cast<double>(s.labels.size());
  r.curve_fused = precision_recall_curve(s.fused, s.labels);
  r.curve_video = precision_recall_curve(s.video, s.labels);
  r.curve_audio = precision_recall_curve(s.audio, s.labels);
  return r;
}

EvalReport evaluate(const PairNetModel& model, std::span<const ClipRecord> corpus, int threads) {
  return report_from_scores(collect_scores(model, corpus, threads));
}

void emit_report(const EvalReport& report, const std::filesystem::path& dir,
                 std::span<const MetricRow> history) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());

  {
    auto out = open_out(dir / "metrics.csv");
    out << kMetricsHeader << '\n' << metrics_row(report) << '\n';
  }
  {
    auto out = open_out(dir / "summary.txt");
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "frames evaluated : " << report.n_frames << '\n'
        << "positive rate    : " << report.prevalence << '\n'
        << "fused mAP        : " << report.map_fused << '\n'
        << "video-head AP    : " << report.ap_video << '\n'
        << "audio-head AP    : " << report.ap_audio << '\n'
        << "|AP_v - AP_a|    : " << report.ap_gap << '\n'
        << "mean JS(y_v,y_a) : " << report.mean_js << " nats\n";
  }
  write_curve(report.curve_fused, dir / "pr_fused.csv");
  write_curve(report.curve_video, dir / "pr_video.csv");
  write_curve(report.curve_audio, dir / "pr_audio.csv");
  if (!history.empty()) write_history(history, dir / "training_curve.csv");
}

EvalReport read_metrics_row(const std::filesystem::path& metrics_csv) {
  std::ifstream in(metrics_csv);
  if (!in) throw IoError(metrics_csv.string(), "cannot open for reading");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  if (header != kMetricsHeader) throw IoError(metrics_csv.string(), "unexpected header");
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  if (cells.size() != 7) throw IoError(metrics_csv.string(), "expected 7 columns");
  EvalReport r;
  r.map_fused = std::stod(cells[0]);
  r.ap_video = std::stod(cells[1]);
  r.ap_audio = std::stod(cells[2]);
  r.ap_gap = std::stod(cells[3]);
  r.mean_js = std::stod(cells[4]);
  r.n_frames = std::stoull(cells[5]);
  r.prevalence = std::stod(cells[6]);
  return r;
}

void emit_imbalance_report(std::span<const ImbalanceRow> rows, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  {
    auto out = open_out(dir / "imbalance.csv");
    out << "label,alpha0," << kMetricsHeader << '\n';
    for (const auto& r : rows) out << r.label << ',' << format_real(r.alpha0) << ',' << metrics_row(r.report) << '\n';
  }
  auto out = open_out(dir / "imbalance.txt");
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %7s %9s %8s %8s %8s %9s\n", "run", "alpha0", "fused_mAP",
                "AP_v", "AP_a", "gap", "mean_JS");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %7.3f %9.4f %8.4f %8.4f %8.4f %9.5f\n",
                  r.label.c_str(), r.alpha0, r.report.map_fused, r.report.ap_video,
                  r.report.ap_audio, r.report.ap_gap, r.report.mean_js);
    out << line;
  }
}

}  // namespace pairnet
