#ifndef FEDMOMENT_TEMPORAL_H_
#define FEDMOMENT_TEMPORAL_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace fedmoment {

// Each timepoint falls into one of kNumQuarters equal segments of the
// normalized video; the (start, end) quarter pair indexes a temporal class.
inline constexpr int kNumQuarters = 4;
inline constexpr int kNumTemporalClasses = kNumQuarters * kNumQuarters;

using ClassVector = std::array<double, kNumTemporalClasses>;

// Probability mass over the temporal classes. Construct through
// FromMass (validating) or the helpers below.
class TemporalDistribution {
 public:
  TemporalDistribution();  // uniform

  // Throws PreconditionError unless every entry is >= 0 and the entries
  // sum to 1 within 1e-9.
  static TemporalDistribution FromMass(const ClassVector& mass);
  static TemporalDistribution Uniform();
  // Uniform over the classes reachable with start <= end.
  static TemporalDistribution UniformFeasible();
  static TemporalDistribution PointMass(int temporal_class);

  double operator[](int temporal_class) const { return mass_[temporal_class]; }
  const ClassVector& mass() const { return mass_; }
  bool StrictlyPositive() const;

  // 16 comma-separated reals, 9 significant digits.
  std::string Serialize() const;
  static TemporalDistribution Parse(const std::string& line);

  friend bool operator==(const TemporalDistribution&,
                         const TemporalDistribution&) = default;

 private:
  explicit TemporalDistribution(const ClassVector& mass) : mass_(mass) {}
  ClassVector mass_;
};

struct ClassCounts {
  std::array<std::uint64_t, kNumTemporalClasses> counts{};

  void Add(int temporal_class) { ++counts[temporal_class]; }
  std::uint64_t Total() const;
};

int QuarterOf(double timepoint);

// class = 4 * start_quarter + end_quarter; a timepoint of exactly 1.0 maps to
// the last quarter.
int AssignTemporalClass(double start, double end);

// True when the class can be produced by some start <= end.
bool IsFeasibleClass(int temporal_class);

// With smooth=true every count is incremented by one before normalizing.
TemporalDistribution CountsToDistribution(const ClassCounts& counts,
                                          bool smooth);

struct WeightedDistribution {
  std::uint64_t size;  // n_k
  TemporalDistribution distribution;
};

// p = sum_k (n_k / n) q_k.
TemporalDistribution PopulationDistribution(
    std::span<const WeightedDistribution> clients);

// KL(q_pred || p) in nats. Both arguments must be strictly positive.
double TemporalGapLoss(const TemporalDistribution& q_pred,
                       const TemporalDistribution& p);

// d KL(q || p) / d q(x) = ln(q(x) / p(x)) + 1, with q entries treated as
// free coordinates.
ClassVector GapLossGradient(const TemporalDistribution& q_pred,
                            const TemporalDistribution& p);

// Unchecked kernels for callers (the localizer) that hold a positive,
// normalized mass computed in-line.
double KlDivergence(const ClassVector& q, const ClassVector& p);
ClassVector KlGradient(const ClassVector& q, const ClassVector& p);

}  // namespace fedmoment

#endif  // FEDMOMENT_TEMPORAL_H_
