#include "fedmoment/temporal.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fedmoment/common.h"

namespace fedmoment {

namespace {

ClassVector UniformMass() {
  ClassVector mass;
  mass.fill(1.0 / kNumTemporalClasses);
  return mass;
}

void RequirePositive(const TemporalDistribution& d, const char* name) {
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    if (!(d[x] > 0.0)) {
      throw PreconditionError(std::string(name) + " has a non-positive entry at class " +
                              std::to_string(x));
    }
  }
}

}  // namespace

TemporalDistribution::TemporalDistribution() : mass_(UniformMass()) {}

TemporalDistribution TemporalDistribution::FromMass(const ClassVector& mass) {
  double total = 0.0;
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    Require(std::isfinite(mass[x]) && mass[x] >= 0.0,
            "temporal distribution entry " + std::to_string(x) + " is negative or non-finite");
    total += mass[x];
  }
  Require(std::abs(total - 1.0) <= 1e-9,
          "temporal distribution does not sum to 1 (sum=" + FormatReal9(total) + ")");
  return TemporalDistribution(mass);
}

TemporalDistribution TemporalDistribution::Uniform() { return TemporalDistribution(); }

TemporalDistribution TemporalDistribution::UniformFeasible() {
  ClassVector mass{};
  int feasible = 0;
  for (int x = 0; x < kNumTemporalClasses; ++x) feasible += IsFeasibleClass(x);
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    mass[x] = IsFeasibleClass(x) ? 1.0 / feasible : 0.0;
  }
  return TemporalDistribution(mass);
}

TemporalDistribution TemporalDistribution::PointMass(int temporal_class) {
  Require(temporal_class >= 0 && temporal_class < kNumTemporalClasses,
          "temporal class out of range");
  ClassVector mass{};
  mass[temporal_class] = 1.0;
  return TemporalDistribution(mass);
}

bool TemporalDistribution::StrictlyPositive() const {
  for (double m : mass_) {
    if (!(m > 0.0)) return false;
  }
  return true;
}

std::string TemporalDistribution::Serialize() const {
  std::string out;
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    if (x) out += ',';
    out += FormatReal9(mass_[x]);
  }
  return out;
}

TemporalDistribution TemporalDistribution::Parse(const std::string& line) {
  ClassVector mass{};
  std::istringstream in(line);
  std::string field;
  int x = 0;
  while (std::getline(in, field, ',')) {
    Require(x < kNumTemporalClasses, "too many temporal distribution fields");
    mass[x++] = std::stod(field);
  }
  Require(x == kNumTemporalClasses, "expected 16 temporal distribution fields");
  // Parsed values carry 9 significant digits; renormalize the rounding away.
  double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  Require(std::abs(total - 1.0) <= 1e-7, "temporal distribution does not sum to 1");
  for (double& m : mass) m /= total;
  return FromMass(mass);
}

std::uint64_t ClassCounts::Total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

int QuarterOf(double timepoint) {
  const int q = static_cast<int>(std::floor(kNumQuarters * timepoint));
  return std::min(q, kNumQuarters - 1);
}

int AssignTemporalClass(double start, double end) {
  Require(start >= 0.0 && end <= 1.0, "timepoints must lie in [0, 1]");
  Require(start <= end, "moment start exceeds end");
  return kNumQuarters * QuarterOf(start) + QuarterOf(end);
}

bool IsFeasibleClass(int temporal_class) {
  return temporal_class % kNumQuarters >= temporal_class / kNumQuarters;
}

TemporalDistribution CountsToDistribution(const ClassCounts& counts, bool smooth) {
  const std::uint64_t add = smooth ? 1 : 0;
  const std::uint64_t total = counts.Total() + add * kNumTemporalClasses;
  Require(total > 0, "cannot normalize all-zero class counts without smoothing");
  ClassVector mass{};
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    mass[x] = static_cast<double>(counts.counts[x] + add) / static_cast<double>(total);
  }
  return TemporalDistribution::FromMass(mass);
}

TemporalDistribution PopulationDistribution(std::span<const WeightedDistribution> clients) {
  Require(!clients.empty(), "population distribution needs at least one client");
  std::uint64_t n = 0;
  for (const auto& c : clients) {
    Require(c.size >= 1, "client size must be at least 1");
    n += c.size;
  }
  ClassVector mass{};
  for (const auto& c : clients) {
    const double w = static_cast<double>(c.size) / static_cast<double>(n);
    for (int x = 0; x < kNumTemporalClasses; ++x) mass[x] += w * c.distribution[x];
  }
  return TemporalDistribution::FromMass(mass);
}

double KlDivergence(const ClassVector& q, const ClassVector& p) {
  double kl = 0.0;
  for (int x = 0; x < kNumTemporalClasses; ++x) kl += q[x] * std::log(q[x] / p[x]);
  return kl;
}

ClassVector KlGradient(const ClassVector& q, const ClassVector& p) {
  ClassVector g;
  for (int x = 0; x < kNumTemporalClasses; ++x) g[x] = std::log(q[x] / p[x]) + 1.0;
  return g;
}

double TemporalGapLoss(const TemporalDistribution& q_pred, const TemporalDistribution& p) {
  RequirePositive(q_pred, "predicted distribution");
  RequirePositive(p, "population distribution");
  // Rounding can push a true zero slightly negative.
  return std::max(0.0, KlDivergence(q_pred.mass(), p.mass()));
}

ClassVector GapLossGradient(const TemporalDistribution& q_pred, const TemporalDistribution& p) {
  RequirePositive(q_pred, "predicted distribution");
  RequirePositive(p, "population distribution");
  return KlGradient(q_pred.mass(), p.mass());
}

}  // namespace fedmoment
