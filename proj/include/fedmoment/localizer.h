#ifndef FEDMOMENT_LOCALIZER_H_
#define FEDMOMENT_LOCALIZER_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedmoment/datagen.h"
#include "fedmoment/temporal.h"

namespace fedmoment {

// Shape of the toy localizer: concat(video, query) -> tanh hidden layer ->
// {start logit, length logit, 16 class logits}.
struct ModelLayout {
  std::size_t d_v = 0;
  std::size_t d_q = 0;
  std::size_t hidden = 0;

  static constexpr std::size_t kHeads = 2 + kNumTemporalClasses;

  std::size_t input_dim() const { return d_v + d_q; }
  std::size_t ParameterCount() const;
  std::uint64_t Digest() const;

  // Offsets of each block inside the flat vector, in storage order.
  std::size_t hidden_weights_offset() const { return 0; }
  std::size_t hidden_bias_offset() const { return input_dim() * hidden; }
  std::size_t head_weights_offset() const { return hidden_bias_offset() + hidden; }
  std::size_t head_bias_offset() const { return head_weights_offset() + hidden * kHeads; }
};

// Flat model weights, the unit of handoff and aggregation.
struct ParameterVector {
  std::vector<double> values;
  std::uint64_t layout_digest = 0;

  std::size_t size() const { return values.size(); }
  bool AllFinite() const;

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;
};

struct Prediction {
  double start = 0.0;
  double end = 0.0;
  TemporalDistribution class_probs;
};

using PredictionBatch = std::vector<Prediction>;

struct TrainConfig {
  int local_epochs = 10;
  double learning_rate = 0.05;
  double lambda_dis = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

void Validate(const TrainConfig& cfg);

ParameterVector InitModel(const ModelLayout& layout, std::uint64_t seed);
ParameterVector ZeroModel(const ModelLayout& layout);

PredictionBatch Forward(const ModelLayout& layout, const ParameterVector& params,
                        std::span<const MomentSample> samples);

struct LossAndGradient {
  double loss = 0.0;
  double localization = 0.0;
  double gap = 0.0;  // KL(q_batch || p), before lambda scaling
  std::vector<double> gradient;
};

// Mean squared endpoint error plus lambda_dis * KL(mean class_probs || p).
LossAndGradient LocalLoss(const ModelLayout& layout, const ParameterVector& params,
                          std::span<const MomentSample> batch, const TemporalDistribution& p,
                          double lambda_dis);

// Mini-batch gradient descent over cfg.local_epochs epochs, reshuffled each
// epoch from cfg.seed. Throws DivergenceError on a non-finite parameter.
ParameterVector ClientUpdate(const ModelLayout& layout, const ParameterVector& init,
                             const ClientDataset& data, const TemporalDistribution& p,
                             const TrainConfig& cfg);

// Binary form: layout digest as a little-endian u64, then the values as
// little-endian IEEE-754 doubles.
void WriteParameters(std::ostream& out, const ParameterVector& params);
ParameterVector ReadParameters(std::istream& in);
std::string ParametersToText(const ParameterVector& params);

}  // namespace fedmoment

#endif  // FEDMOMENT_LOCALIZER_H_
