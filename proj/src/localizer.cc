#include "fedmoment/localizer.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fedmoment/common.h"

namespace fedmoment {

namespace {

double Logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void RequireCompatible(const ModelLayout& layout, const ParameterVector& params) {
  Require(params.layout_digest == layout.Digest(), "parameter layout digest does not match model");
  Require(params.size() == layout.ParameterCount(), "parameter count does not match model layout");
}

void RequireDims(const ModelLayout& layout, const MomentSample& s) {
  if (s.video_features.size() != layout.d_v || s.query_features.size() != layout.d_q) {
    throw PreconditionError("sample " + std::to_string(s.sample_id) +
                            " has feature dimensions (" + std::to_string(s.video_features.size()) +
                            ", " + std::to_string(s.query_features.size()) +
                            ") but the model expects (" + std::to_string(layout.d_v) + ", " +
                            std::to_string(layout.d_q) + ")");
  }
}

// Forward state for one sample, kept for the backward pass.
struct Activations {
  std::vector<double> input;
  std::vector<double> hidden;
  double start_sig = 0.0;
  double length_sig = 0.0;
  double start = 0.0;
  double end = 0.0;
  ClassVector probs{};
};

class Network {
 public:
  Network(const ModelLayout& layout, const std::vector<double>& w) : layout_(layout), w_(w) {}

  void Run(const MomentSample& s, Activations& act) const {
    const std::size_t in_dim = layout_.input_dim();
    const std::size_t hid = layout_.hidden;
    act.input.resize(in_dim);
    std::copy(s.video_features.begin(), s.video_features.end(), act.input.begin());
    std::copy(s.query_features.begin(), s.query_features.end(), act.input.begin() + layout_.d_v);

    act.hidden.resize(hid);
    const double* w1 = w_.data() + layout_.hidden_weights_offset();
    const double* b1 = w_.data() + layout_.hidden_bias_offset();
    for (std::size_t j = 0; j < hid; ++j) {
      double a = b1[j];
      const double* row = w1 + j * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) a += row[i] * act.input[i];
      act.hidden[j] = std::tanh(a);
    }

    double z[ModelLayout::kHeads];
    const double* w2 = w_.data() + layout_.head_weights_offset();
    const double* b2 = w_.data() + layout_.head_bias_offset();
    for (std::size_t o = 0; o < ModelLayout::kHeads; ++o) {
      double v = b2[o];
      const double* row = w2 + o * hid;
      for (std::size_t j = 0; j < hid; ++j) v += row[j] * act.hidden[j];
      z[o] = v;
    }

    act.start_sig = Logistic(z[0]);
    act.length_sig = Logistic(z[1]);
    act.start = act.start_sig;
    act.end = std::clamp(act.start + (1.0 - act.start) * act.length_sig, act.start, 1.0);

    const double* logits = z + 2;
    const double max_logit = *std::max_element(logits, logits + kNumTemporalClasses);
    double total = 0.0;
    for (int x = 0; x < kNumTemporalClasses; ++x) {
      act.probs[x] = std::exp(logits[x] - max_logit);
      total += act.probs[x];
    }
    for (int x = 0; x < kNumTemporalClasses; ++x) {
      act.probs[x] = std::max(act.probs[x] / total, std::numeric_limits<double>::min());
    }
  }

  // Adds the contribution of one sample, given upstream derivatives of the
  // loss with respect to the start logit, length logit and class logits.
  void Backward(const Activations& act, const double* dz, std::vector<double>& grad) const {
    const std::size_t in_dim = layout_.input_dim();
    const std::size_t hid = layout_.hidden;
    const double* w2 = w_.data() + layout_.head_weights_offset();
    double* g1 = grad.data() + layout_.hidden_weights_offset();
    double* gb1 = grad.data() + layout_.hidden_bias_offset();
    double* g2 = grad.data() + layout_.head_weights_offset();
    double* gb2 = grad.data() + layout_.head_bias_offset();

    for (std::size_t o = 0; o < ModelLayout::kHeads; ++o) {
      gb2[o] += dz[o];
      double* row = g2 + o * hid;
      for (std::size_t j = 0; j < hid; ++j) row[j] += dz[o] * act.hidden[j];
    }
    for (std::size_t j = 0; j < hid; ++j) {
      double dh = 0.0;
      for (std::size_t o = 0; o < ModelLayout::kHeads; ++o) dh += w2[o * hid + j] * dz[o];
      const double da = dh * (1.0 - act.hidden[j] * act.hidden[j]);
      gb1[j] += da;
      double* row = g1 + j * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) row[i] += da * act.input[i];
    }
  }

 private:
  const ModelLayout& layout_;
  const std::vector<double>& w_;
};

// Loss and gradient over a batch given by pointers, so training can work on
// shuffled index order without copying samples.
LossAndGradient EvaluateBatch(const ModelLayout& layout, const ParameterVector& params,
                              std::span<const MomentSample* const> batch,
                              const ClassVector& p, double lambda_dis,
                              std::vector<Activations>& acts) {
  const Network net(layout, params.values);
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  acts.resize(n);

  LossAndGradient out;
  ClassVector q{};
  for (std::size_t i = 0; i < n; ++i) {
    net.Run(*batch[i], acts[i]);
    const double rs = acts[i].start - batch[i]->gt_start;
    const double re = acts[i].end - batch[i]->gt_end;
    out.localization += (rs * rs + re * re) * inv_n;
    for (int x = 0; x < kNumTemporalClasses; ++x) q[x] += acts[i].probs[x] * inv_n;
  }
  out.gap = KlDivergence(q, p);
  out.loss = out.localization + lambda_dis * out.gap;

  ClassVector dprob{};
  if (lambda_dis != 0.0) {
    const ClassVector g = KlGradient(q, p);
    for (int x = 0; x < kNumTemporalClasses; ++x) dprob[x] = lambda_dis * g[x] * inv_n;
  }

  out.gradient.assign(params.size(), 0.0);
  double dz[ModelLayout::kHeads];
  for (std::size_t i = 0; i < n; ++i) {
    const Activations& a = acts[i];
    const double rs = a.start - batch[i]->gt_start;
    const double re = a.end - batch[i]->gt_end;
    const double d_start = 2.0 * inv_n * (rs + re * (1.0 - a.length_sig));
    const double d_length = 2.0 * inv_n * re * (1.0 - a.start);
    dz[0] = d_start * a.start_sig * (1.0 - a.start_sig);
    dz[1] = d_length * a.length_sig * (1.0 - a.length_sig);
    double inner = 0.0;
    for (int x = 0; x < kNumTemporalClasses; ++x) inner += a.probs[x] * dprob[x];
    for (int x = 0; x < kNumTemporalClasses; ++x) dz[2 + x] = a.probs[x] * (dprob[x] - inner);
    net.Backward(a, dz, out.gradient);
  }
  return out;
}

}  // namespace

std::size_t ModelLayout::ParameterCount() const {
  return input_dim() * hidden + hidden + hidden * kHeads + kHeads;
}

std::uint64_t ModelLayout::Digest() const {
  Fnv1a h;
  h.Update("fedmoment/mlp-tanh-v1");
  h.Update(static_cast<std::uint64_t>(d_v));
  h.Update(static_cast<std::uint64_t>(d_q));
  h.Update(static_cast<std::uint64_t>(hidden));
  return h.digest();
}

bool ParameterVector::AllFinite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void Validate(const TrainConfig& cfg) {
  Require(cfg.local_epochs >= 1, "local_epochs must be at least 1");
  Require(cfg.batch_size >= 1, "batch_size must be at least 1");
  Require(cfg.learning_rate >= 0.0 && std::isfinite(cfg.learning_rate),
          "learning_rate must be a nonnegative real");
  Require(cfg.lambda_dis >= 0.0 && std::isfinite(cfg.lambda_dis),
          "lambda_dis must be a nonnegative real");
}

ParameterVector InitModel(const ModelLayout& layout, std::uint64_t seed) {
  Require(layout.d_v >= 1 && layout.d_q >= 1 && layout.hidden >= 1,
          "model dimensions must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  ParameterVector params;
  params.layout_digest = layout.Digest();
  params.values.resize(layout.ParameterCount());
  for (double& v : params.values) v = dist(rng);
  return params;
}

ParameterVector ZeroModel(const ModelLayout& layout) {
  ParameterVector params;
  params.layout_digest = layout.Digest();
  params.values.assign(layout.ParameterCount(), 0.0);
  return params;
}

PredictionBatch Forward(const ModelLayout& layout, const ParameterVector& params,
                        std::span<const MomentSample> samples) {
  RequireCompatible(layout, params);
  const Network net(layout, params.values);
  PredictionBatch out;
  out.reserve(samples.size());
  Activations act;
  for (const auto& s : samples) {
    RequireDims(layout, s);
    net.Run(s, act);
    double total = std::accumulate(act.probs.begin(), act.probs.end(), 0.0);
    ClassVector probs = act.probs;
    for (double& m : probs) m /= total;
    out.push_back({act.start, act.end, TemporalDistribution::FromMass(probs)});
  }
  return out;
}

LossAndGradient LocalLoss(const ModelLayout& layout, const ParameterVector& params,
                          std::span<const MomentSample> batch, const TemporalDistribution& p,
                          double lambda_dis) {
  RequireCompatible(layout, params);
  Require(!batch.empty(), "local loss needs a nonempty batch");
  Require(p.StrictlyPositive(), "population distribution must be strictly positive");
  std::vector<const MomentSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) {
    RequireDims(layout, s);
    ptrs.push_back(&s);
  }
  std::vector<Activations> acts;
  return EvaluateBatch(layout, params, ptrs, p.mass(), lambda_dis, acts);
}

ParameterVector ClientUpdate(const ModelLayout& layout, const ParameterVector& init,
                             const ClientDataset& data, const TemporalDistribution& p,
                             const TrainConfig& cfg) {
  Validate(cfg);
  RequireCompatible(layout, init);
  Require(!data.samples.empty(), "client dataset is empty");
  Require(p.StrictlyPositive(), "population distribution must be strictly positive");
  for (const auto& s : data.samples) RequireDims(layout, s);

  ParameterVector params = init;
  std::mt19937_64 rng(cfg.seed);
  std::vector<const MomentSample*> order;
  order.reserve(data.size());
  for (const auto& s : data.samples) order.push_back(&s);

  std::vector<Activations> acts;
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t n = std::min(batch_size, order.size() - begin);
      const LossAndGradient lg = EvaluateBatch(
          layout, params, std::span(order).subspan(begin, n), p.mass(), cfg.lambda_dis, acts);
      for (std::size_t i = 0; i < params.size(); ++i) {
        params.values[i] -= cfg.learning_rate * lg.gradient[i];
      }
    }
    if (!params.AllFinite()) {
      throw DivergenceError("client " + std::to_string(data.client_id) +
                            " diverged during local epoch " + std::to_string(epoch + 1) +
                            " (learning_rate=" + FormatReal9(cfg.learning_rate) + ")");
    }
  }
  return params;
}

void WriteParameters(std::ostream& out, const ParameterVector& params) {
  auto put_u64 = [&out](std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  };
  put_u64(params.layout_digest);
  for (double v : params.values) put_u64(std::bit_cast<std::uint64_t>(v));
}

ParameterVector ReadParameters(std::istream& in) {
  auto get_u64 = [&in](std::uint64_t& v) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return true;
  };
  ParameterVector params;
  Require(get_u64(params.layout_digest), "parameter file is missing its layout digest");
  std::uint64_t bits = 0;
  while (get_u64(bits)) params.values.push_back(std::bit_cast<double>(bits));
  Require(in.gcount() == 0, "parameter file has a truncated trailing value");
  return params;
}

std::string ParametersToText(const ParameterVector& params) {
  std::ostringstream out;
  out << "layout_digest=" << FormatHex64(params.layout_digest) << " count=" << params.size() << '\n';
  char buf[40];
  for (double v : params.values) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
  return out.str();
}

}  // namespace fedmoment
