#include "fedmoment/metrics.h"

#include <algorithm>
#include <cmath>

#include "fedmoment/common.h"

namespace fedmoment {

namespace {

void RequireMatchingCounts(const PredictionBatch& predictions, std::span<const Interval> gts) {
  Require(predictions.size() == gts.size(), "prediction and ground-truth counts differ (" +
                                                std::to_string(predictions.size()) + " vs " +
                                                std::to_string(gts.size()) + ")");
  Require(!gts.empty(), "recall needs at least one sample");
}

}  // namespace

void Validate(const ScoringConfig& cfg) {
  Require(!cfg.thresholds.empty(), "scoring thresholds must not be empty");
  Require(cfg.thresholds.size() == cfg.weights.size(),
          "scoring thresholds and weights differ in length");
  for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
    Require(cfg.thresholds[i] > 0.0 && cfg.thresholds[i] < 1.0,
            "scoring thresholds must lie in (0, 1)");
    Require(i == 0 || cfg.thresholds[i] > cfg.thresholds[i - 1],
            "scoring thresholds must be strictly increasing");
    Require(cfg.weights[i] >= 0.0 && std::isfinite(cfg.weights[i]),
            "scoring weights must be nonnegative");
  }
}

double Iou(const Interval& pred, const Interval& gt) {
  Require(pred.start <= pred.end && gt.start <= gt.end, "IoU of an inverted interval");
  const double inter = std::max(0.0, std::min(pred.end, gt.end) - std::max(pred.start, gt.start));
  const double uni = (pred.end - pred.start) + (gt.end - gt.start) - inter;
  if (uni <= 0.0) return (pred.start == gt.start && pred.end == gt.end) ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Interval> GroundTruths(std::span<const MomentSample> samples) {
  std::vector<Interval> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.gt_start, s.gt_end});
  return out;
}

double RecallAt1(const PredictionBatch& predictions, std::span<const Interval> gts, double m) {
  RequireMatchingCounts(predictions, gts);
  Require(m > 0.0 && m <= 1.0, "recall threshold must lie in (0, 1]");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (Iou({predictions[i].start, predictions[i].end}, gts[i]) > m) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gts.size());
}

double RawCScore(const PredictionBatch& predictions, std::span<const Interval> gts,
                 const ScoringConfig& cfg) {
  Validate(cfg);
  RequireMatchingCounts(predictions, gts);
  std::vector<double> ious(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    ious[i] = Iou({predictions[i].start, predictions[i].end}, gts[i]);
  }
  double score = 0.0;
  for (std::size_t h = 0; h < cfg.thresholds.size(); ++h) {
    const auto hits = std::count_if(ious.begin(), ious.end(),
                                    [&](double v) { return v > cfg.thresholds[h]; });
    score += static_cast<double>(hits) / static_cast<double>(ious.size()) * cfg.weights[h];
  }
  return score;
}

std::vector<ClientScore> AttentionWeights(std::span<const RawScore> raw_scores) {
  Require(!raw_scores.empty(), "attention weights need at least one client");
  std::vector<RawScore> sorted(raw_scores.begin(), raw_scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const RawScore& a, const RawScore& b) { return a.client_id < b.client_id; });
  double max_score = -INFINITY;
  for (const auto& r : sorted) {
    Require(std::isfinite(r.score),
            "raw score of client " + std::to_string(r.client_id) + " is not finite");
    max_score = std::max(max_score, r.score);
  }
  std::vector<ClientScore> out;
  out.reserve(sorted.size());
  double total = 0.0;
  for (const auto& r : sorted) {
    const double e = std::exp(r.score - max_score);
    out.push_back({r.client_id, r.score, e});
    total += e;
  }
  for (auto& c : out) c.attention /= total;
  return out;
}

}  // namespace fedmoment
