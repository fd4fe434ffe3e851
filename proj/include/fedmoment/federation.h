#ifndef FEDMOMENT_FEDERATION_H_
#define FEDMOMENT_FEDERATION_H_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedmoment/datagen.h"
#include "fedmoment/localizer.h"
#include "fedmoment/metrics.h"
#include "fedmoment/temporal.h"

namespace fedmoment {

enum class AggregationMode { kCValidationSoftmax, kUniform };

struct RunConfig {
  int num_clients = 16;
  int num_groups = 1;
  int rounds = 120;
  double participation_fraction = 1.0;
  bool regroup_each_round = false;
  double unit_client_cost = 1.0;
  AggregationMode aggregation_mode = AggregationMode::kCValidationSoftmax;
  std::uint64_t seed = 0;

  std::size_t hidden_units = 32;
  double cval_fraction = 0.01;
  ScoringConfig scoring;
};

void Validate(const RunConfig& cfg);

// Ordered client-id lists; the order inside a group is its execution order.
struct GroupPlan {
  std::vector<std::vector<int>> groups;

  std::size_t MaxGroupSize() const;
  std::size_t ClientCount() const;
};

// Thresholds m reported for the global model every round.
inline constexpr std::array<double, 3> kReportThresholds{0.3, 0.5, 0.7};

struct RoundReport {
  int round_index = 0;
  std::vector<ClientScore> client_scores;  // ascending client_id, participants only
  std::array<double, kReportThresholds.size()> recall{};
  double simulated_time = 0.0;
  double wall_clock = 0.0;  // seconds; informational only

  // R(1, m) for m in kReportThresholds.
  double RecallAt(double m) const;
};

// Everything a round needs besides the current global model.
struct FederatedTask {
  ModelLayout layout;
  std::vector<ClientDataset> clients;  // clients[k].client_id == k
  TemporalDistribution population;
  std::vector<MomentSample> c_validation;
  std::vector<MomentSample> test_set;  // global metrics; falls back to c_validation when empty
};

struct ScheduleOptions {
  std::size_t max_threads = 1;
  // Serial execution order of group indices; empty means plan order.
  std::vector<std::size_t> group_order;
};

struct HandoffEvent {
  int round_index;
  std::size_t group_index;
  std::size_t position;  // within the group's execution order
  int client_id;
  const ParameterVector& init;
  const ParameterVector& trained;
};

struct RoundHooks {
  // Called once per client turn, possibly from a worker thread.
  std::function<void(const HandoffEvent&)> on_client_trained;
  // Called by RunExperiment after each aggregation.
  std::function<void(int round_index, const ParameterVector& global)> on_round_complete;
};

struct RoundResult {
  ParameterVector new_global;
  RoundReport report;  // simulated_time holds this round's cost only
};

struct ClientSnapshot {
  int client_id = 0;
  ParameterVector params;
};

GroupPlan MakeGroups(int num_clients, int num_groups, std::uint64_t seed);

// Seed for a client's local shuffling in a given round.
std::uint64_t ClientTrainSeed(std::uint64_t run_seed, int round_index, int client_id);

RoundResult RunRound(const ParameterVector& global, const GroupPlan& plan,
                     const FederatedTask& task, const RunConfig& cfg, const TrainConfig& tcfg,
                     int round_index, const ScheduleOptions& options = {},
                     const RoundHooks& hooks = {});

// Entrywise sum_k a_k * w_k accumulated in ascending client_id order.
ParameterVector Aggregate(std::span<const ClientSnapshot> snapshots,
                          std::span<const ClientScore> weights);

// Groups run concurrently and clients inside a group serially, so a round
// costs u * (largest group size).
double SimulateTime(const GroupPlan& plan, double unit_cost);

struct FederatedData {
  std::vector<ClientDataset> clients;
  std::vector<MomentSample> test_set;
};

struct ExperimentResult {
  std::vector<RoundReport> reports;
  ParameterVector final_global;
  GroupPlan initial_plan;
  TemporalDistribution population;
};

// Server preamble (q_k, p, c-validation set, groups, w^0) followed by
// cfg.rounds rounds. Report simulated_time is cumulative.
ExperimentResult RunExperiment(const RunConfig& cfg, const TrainConfig& tcfg,
                               const FederatedData& data, const ScheduleOptions& options = {},
                               const RoundHooks& hooks = {});

// First 1-based round whose trailing 3-round mean (shorter at the start) is
// within 0.01 of the largest such mean. Series shorter than 3 return their
// length.
int RoundsToConvergence(std::span<const double> series);
int RoundsToConvergence(std::span<const RoundReport> reports, double m);

struct TradeoffRow {
  int num_groups = 0;
  int rounds_needed = 0;
  double per_round_time = 0.0;
  double total_time = 0.0;
  double ratio = 0.0;  // total_time / total_time at G = C
};

struct GroupRounds {
  int num_groups;
  int rounds_needed;
};

// Requires an entry with num_groups == num_clients as the ratio baseline.
std::vector<TradeoffRow> TradeoffTable(int num_clients, double unit_cost,
                                       std::span<const GroupRounds> entries, std::uint64_t seed);

// round,simulated_time,R(1,0.3),R(1,0.5),R(1,0.7),a_0..a_{C-1}
void WriteRoundsCsv(std::ostream& out, std::span<const RoundReport> reports, int num_clients);
void WriteTradeoffCsv(std::ostream& out, std::span<const TradeoffRow> rows);

}  // namespace fedmoment

#endif  // FEDMOMENT_FEDERATION_H_
