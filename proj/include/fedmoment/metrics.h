#ifndef FEDMOMENT_METRICS_H_
#define FEDMOMENT_METRICS_H_

#include <span>
#include <vector>

#include "fedmoment/datagen.h"
#include "fedmoment/localizer.h"

namespace fedmoment {

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

// IoU thresholds h and indicator weights e_h used to score client models on
// the c-validation set.
struct ScoringConfig {
  std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> weights{0.1, 0.2, 0.2, 0.4, 0.1};
};

void Validate(const ScoringConfig& cfg);

struct ClientScore {
  int client_id = 0;
  double raw_score = 0.0;
  double attention = 0.0;

  friend bool operator==(const ClientScore&, const ClientScore&) = default;
};

struct RawScore {
  int client_id = 0;
  double score = 0.0;
};

// 1 for identical degenerate intervals, 0 for any other zero-length union.
double Iou(const Interval& pred, const Interval& gt);

std::vector<Interval> GroundTruths(std::span<const MomentSample> samples);

// Fraction of samples whose IoU is strictly greater than m.
double RecallAt1(const PredictionBatch& predictions, std::span<const Interval> gts, double m);

// sum_h RecallAt1(h) * e_h.
double RawCScore(const PredictionBatch& predictions, std::span<const Interval> gts,
                 const ScoringConfig& cfg);

// Softmax across clients with max subtraction, ordered by client_id.
std::vector<ClientScore> AttentionWeights(std::span<const RawScore> raw_scores);

}  // namespace fedmoment

#endif  // FEDMOMENT_METRICS_H_
