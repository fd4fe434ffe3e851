#include "fedmoment/federation.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "fedmoment/common.h"

namespace fedmoment {

namespace {

// Stream tags for seeds derived from RunConfig::seed.
constexpr std::uint64_t kGroupStream = 11;
constexpr std::uint64_t kRegroupStream = 12;
constexpr std::uint64_t kParticipationStream = 13;
constexpr std::uint64_t kTrainStream = 14;
constexpr std::uint64_t kInitStream = 15;
constexpr std::uint64_t kCValidationStream = 16;

std::vector<int> Participants(const RunConfig& cfg, int round_index) {
  std::vector<int> ids(static_cast<std::size_t>(cfg.num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (cfg.participation_fraction >= 1.0) return ids;
  const auto take = static_cast<std::size_t>(std::max(
      1.0, std::ceil(cfg.participation_fraction * cfg.num_clients - 1e-9)));
  std::mt19937_64 rng(DeriveSeed(cfg.seed, kParticipationStream, static_cast<std::uint64_t>(round_index)));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(take);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// The plan actually executed in a round: the fixed plan filtered to this
// round's participants, or a fresh grouping when regrouping.
GroupPlan RoundPlan(const GroupPlan& base, const RunConfig& cfg, int round_index) {
  const std::vector<int> active = Participants(cfg, round_index);
  if (cfg.regroup_each_round) {
    const int groups = std::min<int>(cfg.num_groups, static_cast<int>(active.size()));
    GroupPlan local = MakeGroups(static_cast<int>(active.size()), groups,
                                 DeriveSeed(cfg.seed, kRegroupStream, static_cast<std::uint64_t>(round_index)));
    for (auto& g : local.groups) {
      for (int& slot : g) slot = active[static_cast<std::size_t>(slot)];
    }
    return local;
  }
  if (active.size() == static_cast<std::size_t>(cfg.num_clients)) return base;
  const std::set<int> keep(active.begin(), active.end());
  GroupPlan filtered;
  for (const auto& g : base.groups) {
    std::vector<int> kept;
    std::copy_if(g.begin(), g.end(), std::back_inserter(kept), [&](int c) { return keep.count(c) > 0; });
    if (!kept.empty()) filtered.groups.push_back(std::move(kept));
  }
  return filtered;
}

void ValidatePlan(const GroupPlan& plan, std::size_t num_clients) {
  std::vector<bool> seen(num_clients, false);
  for (const auto& g : plan.groups) {
    Require(!g.empty(), "group plan contains an empty group");
    for (int c : g) {
      Require(c >= 0 && static_cast<std::size_t>(c) < num_clients,
              "group plan names unknown client " + std::to_string(c));
      Require(!seen[static_cast<std::size_t>(c)],
              "group plan lists client " + std::to_string(c) + " twice");
      seen[static_cast<std::size_t>(c)] = true;
    }
  }
}

std::size_t ThreadCount(const ScheduleOptions& options, std::size_t work_items) {
  return std::max<std::size_t>(1, std::min(options.max_threads, work_items));
}

}  // namespace

void Validate(const RunConfig& cfg) {
  Require(cfg.num_clients >= 1, "num_clients must be at least 1");
  Require(cfg.num_groups >= 1 && cfg.num_groups <= cfg.num_clients,
          "num_groups must lie in [1, num_clients]");
  Require(cfg.rounds >= 1, "rounds must be at least 1");
  Require(cfg.participation_fraction > 0.0 && cfg.participation_fraction <= 1.0,
          "participation_fraction must lie in (0, 1]");
  Require(cfg.unit_client_cost > 0.0 && std::isfinite(cfg.unit_client_cost),
          "unit_client_cost must be positive");
  Require(cfg.hidden_units >= 1, "hidden_units must be at least 1");
  Require(cfg.cval_fraction > 0.0 && cfg.cval_fraction <= 1.0,
          "cval_fraction must lie in (0, 1]");
  Validate(cfg.scoring);
}

std::size_t GroupPlan::MaxGroupSize() const {
  std::size_t m = 0;
  for (const auto& g : groups) m = std::max(m, g.size());
  return m;
}

std::size_t GroupPlan::ClientCount() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

double RoundReport::RecallAt(double m) const {
  for (std::size_t i = 0; i < kReportThresholds.size(); ++i) {
    if (kReportThresholds[i] == m) return recall[i];
  }
  throw PreconditionError("R(1, m) is only reported for m in {0.3, 0.5, 0.7}");
}

GroupPlan MakeGroups(int num_clients, int num_groups, std::uint64_t seed) {
  Require(num_clients >= 1, "num_clients must be at least 1");
  Require(num_groups >= 1 && num_groups <= num_clients,
          "num_groups (" + std::to_string(num_groups) + ") must lie in [1, num_clients=" +
              std::to_string(num_clients) + "]");
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  GroupPlan plan;
  const int base = num_clients / num_groups;
  const int extra = num_clients % num_groups;
  auto it = ids.begin();
  for (int g = 0; g < num_groups; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    plan.groups.emplace_back(it, it + size);
    it += size;
  }
  return plan;
}

std::uint64_t ClientTrainSeed(std::uint64_t run_seed, int round_index, int client_id) {
  return DeriveSeed(DeriveSeed(run_seed, kTrainStream), static_cast<std::uint64_t>(round_index),
                    static_cast<std::uint64_t>(client_id));
}

RoundResult RunRound(const ParameterVector& global, const GroupPlan& plan,
                     const FederatedTask& task, const RunConfig& cfg, const TrainConfig& tcfg,
                     int round_index, const ScheduleOptions& options, const RoundHooks& hooks) {
  const auto wall_start = std::chrono::steady_clock::now();
  const std::size_t num_clients = task.clients.size();
  ValidatePlan(plan, num_clients);
  Require(!task.c_validation.empty(), "c-validation set is empty");
  for (std::size_t k = 0; k < num_clients; ++k) {
    Require(task.clients[k].client_id == static_cast<int>(k), "clients must be indexed by client_id");
  }

  // Slots indexed by client_id; each is written by exactly one group worker.
  std::vector<ParameterVector> snapshots(num_clients);
  std::vector<double> raw(num_clients, 0.0);
  std::vector<char> trained(num_clients, 0);  // not vector<bool>: written concurrently
  const std::vector<Interval> cval_gts = GroundTruths(task.c_validation);

  auto run_group = [&](std::size_t g) {
    const ParameterVector* current = &global;
    const auto& order = plan.groups[g];
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const int k = order[pos];
      TrainConfig local = tcfg;
      local.seed = ClientTrainSeed(cfg.seed, round_index, k);
      snapshots[k] = ClientUpdate(task.layout, *current, task.clients[k], task.population, local);
      raw[k] = RawCScore(Forward(task.layout, snapshots[k], task.c_validation), cval_gts, cfg.scoring);
      trained[k] = 1;
      if (hooks.on_client_trained) {
        hooks.on_client_trained({round_index, g, pos, k, *current, snapshots[k]});
      }
      current = &snapshots[k];
    }
  };

  const std::size_t num_groups = plan.groups.size();
  const std::size_t threads = ThreadCount(options, num_groups);
  if (threads <= 1) {
    std::vector<std::size_t> order = options.group_order;
    if (order.empty()) {
      order.resize(num_groups);
      std::iota(order.begin(), order.end(), 0);
    }
    Require(order.size() == num_groups &&
                std::set<std::size_t>(order.begin(), order.end()).size() == num_groups &&
                *std::max_element(order.begin(), order.end()) < num_groups,
            "group_order must be a permutation of the plan's groups");
    for (std::size_t g : order) run_group(g);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(num_groups);
    {
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&] {
          for (std::size_t g = next++; g < num_groups; g = next++) {
            try {
              run_group(g);
            } catch (...) {
              errors[g] = std::current_exception();
            }
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<RawScore> raw_scores;
  std::vector<ClientSnapshot> taken;
  for (std::size_t k = 0; k < num_clients; ++k) {
    if (!trained[k]) continue;
    raw_scores.push_back({static_cast<int>(k), raw[k]});
    taken.push_back({static_cast<int>(k), std::move(snapshots[k])});
  }

  RoundResult result;
  result.report.round_index = round_index;
  result.report.client_scores = AttentionWeights(raw_scores);
  if (cfg.aggregation_mode == AggregationMode::kUniform) {
    const double share = 1.0 / static_cast<double>(raw_scores.size());
    for (auto& s : result.report.client_scores) s.attention = share;
  }
  result.new_global = Aggregate(taken, result.report.client_scores);

  const auto& eval = task.test_set.empty() ? task.c_validation : task.test_set;
  const PredictionBatch preds = Forward(task.layout, result.new_global, eval);
  const std::vector<Interval> gts = GroundTruths(eval);
  for (std::size_t i = 0; i < kReportThresholds.size(); ++i) {
    result.report.recall[i] = RecallAt1(preds, gts, kReportThresholds[i]);
  }
  result.report.simulated_time = SimulateTime(plan, cfg.unit_client_cost);
  result.report.wall_clock =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

ParameterVector Aggregate(std::span<const ClientSnapshot> snapshots,
                          std::span<const ClientScore> weights) {
  Require(!snapshots.empty(), "nothing to aggregate");
  Require(snapshots.size() == weights.size(), "snapshot and weight counts differ");

  std::vector<const ClientSnapshot*> ordered;
  for (const auto& s : snapshots) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientSnapshot* a, const ClientSnapshot* b) { return a->client_id < b->client_id; });
  std::vector<const ClientScore*> w;
  for (const auto& s : weights) w.push_back(&s);
  std::sort(w.begin(), w.end(),
            [](const ClientScore* a, const ClientScore* b) { return a->client_id < b->client_id; });

  double weight_sum = 0.0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    Require(ordered[i]->client_id == w[i]->client_id,
            "weights do not cover the same clients as the snapshots");
    Require(i == 0 || ordered[i]->client_id != ordered[i - 1]->client_id,
            "duplicate snapshot for client " + std::to_string(ordered[i]->client_id));
    Require(ordered[i]->params.layout_digest == ordered[0]->params.layout_digest &&
                ordered[i]->params.size() == ordered[0]->params.size(),
            "snapshot layouts do not match");
    weight_sum += w[i]->attention;
  }
  Require(std::abs(weight_sum - 1.0) <= 1e-9,
          "aggregation weights sum to " + FormatReal9(weight_sum) + ", not 1");

  ParameterVector out;
  out.layout_digest = ordered[0]->params.layout_digest;
  out.values.assign(ordered[0]->params.size(), 0.0);
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    const double a = w[k]->attention;
    const auto& v = ordered[k]->params.values;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += a * v[i];
  }
  return out;
}

double SimulateTime(const GroupPlan& plan, double unit_cost) {
  Require(unit_cost > 0.0, "unit client cost must be positive");
  return unit_cost * static_cast<double>(plan.MaxGroupSize());
}

ExperimentResult RunExperiment(const RunConfig& cfg, const TrainConfig& tcfg,
                               const FederatedData& data, const ScheduleOptions& options,
                               const RoundHooks& hooks) {
  Validate(cfg);
  Validate(tcfg);
  Require(data.clients.size() == static_cast<std::size_t>(cfg.num_clients),
          "data holds " + std::to_string(data.clients.size()) + " clients but num_clients is " +
              std::to_string(cfg.num_clients));
  Require(!data.clients.front().samples.empty(), "client 0 holds no samples");

  FederatedTask task;
  const MomentSample& probe = data.clients.front().samples.front();
  task.layout = {probe.video_features.size(), probe.query_features.size(), cfg.hidden_units};
  task.clients = data.clients;
  std::sort(task.clients.begin(), task.clients.end(),
            [](const ClientDataset& a, const ClientDataset& b) { return a.client_id < b.client_id; });
  task.test_set = data.test_set;

  std::vector<WeightedDistribution> local;
  for (const auto& c : task.clients) {
    local.push_back({c.size(), CountsToDistribution(c.TemporalCounts(), /*smooth=*/true)});
  }
  task.population = PopulationDistribution(local);
  task.c_validation =
      BuildCValidation(task.clients, cfg.cval_fraction, DeriveSeed(cfg.seed, kCValidationStream));

  ExperimentResult result;
  result.population = task.population;
  result.initial_plan = MakeGroups(cfg.num_clients, cfg.num_groups, DeriveSeed(cfg.seed, kGroupStream));
  ParameterVector global = InitModel(task.layout, DeriveSeed(cfg.seed, kInitStream));

  double elapsed = 0.0;
  for (int t = 1; t <= cfg.rounds; ++t) {
    const GroupPlan plan = RoundPlan(result.initial_plan, cfg, t);
    RoundResult r = RunRound(global, plan, task, cfg, tcfg, t, options, hooks);
    elapsed += r.report.simulated_time;
    r.report.simulated_time = elapsed;
    global = std::move(r.new_global);
    if (hooks.on_round_complete) hooks.on_round_complete(t, global);
    result.reports.push_back(std::move(r.report));
  }
  result.final_global = std::move(global);
  return result;
}

int RoundsToConvergence(std::span<const double> series) {
  Require(!series.empty(), "convergence needs at least one round");
  const std::size_t n = series.size();
  if (n < 3) return static_cast<int>(n);
  std::vector<double> trailing(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t first = t >= 2 ? t - 2 : 0;
    double sum = 0.0;
    for (std::size_t i = first; i <= t; ++i) sum += series[i];
    trailing[t] = sum / static_cast<double>(t - first + 1);
  }
  const double best = *std::max_element(trailing.begin(), trailing.end());
  for (std::size_t t = 0; t < n; ++t) {
    if (trailing[t] >= best - 0.01) return static_cast<int>(t + 1);
  }
  return static_cast<int>(n);
}

int RoundsToConvergence(std::span<const RoundReport> reports, double m) {
  std::vector<double> series;
  for (const auto& r : reports) series.push_back(r.RecallAt(m));
  return RoundsToConvergence(series);
}

std::vector<TradeoffRow> TradeoffTable(int num_clients, double unit_cost,
                                       std::span<const GroupRounds> entries, std::uint64_t seed) {
  std::vector<TradeoffRow> rows;
  double baseline = -1.0;
  for (const auto& e : entries) {
    Require(e.rounds_needed >= 1, "rounds_needed must be at least 1");
    const GroupPlan plan = MakeGroups(num_clients, e.num_groups, seed);
    TradeoffRow row;
    row.num_groups = e.num_groups;
    row.rounds_needed = e.rounds_needed;
    row.per_round_time = SimulateTime(plan, unit_cost);
    row.total_time = row.per_round_time * e.rounds_needed;
    if (e.num_groups == num_clients) baseline = row.total_time;
    rows.push_back(row);
  }
  Require(baseline > 0.0, "tradeoff table needs the fully parallel G = C entry as its baseline");
  for (auto& row : rows) row.ratio = row.total_time / baseline;
  return rows;
}

void WriteRoundsCsv(std::ostream& out, std::span<const RoundReport> reports, int num_clients) {
  out << "round,simulated_time,R1_0.3,R1_0.5,R1_0.7";
  for (int k = 0; k < num_clients; ++k) out << ",a_" << k;
  out << '\n';
  for (const auto& r : reports) {
    out << r.round_index << ',' << FormatFixed(r.simulated_time, 6);
    for (double v : r.recall) out << ',' << FormatFixed(v, 6);
    std::vector<double> attention(static_cast<std::size_t>(num_clients), 0.0);
    for (const auto& s : r.client_scores) attention[static_cast<std::size_t>(s.client_id)] = s.attention;
    for (double a : attention) out << ',' << FormatFixed(a, 6);
    out << '\n';
  }
}

void WriteTradeoffCsv(std::ostream& out, std::span<const TradeoffRow> rows) {
  out << "G,rounds_needed,total_time,ratio_vs_parallel\n";
  for (const auto& r : rows) {
    out << r.num_groups << ',' << r.rounds_needed << ',' << FormatFixed(r.total_time, 6) << ','
        << FormatFixed(r.ratio, 6) << '\n';
  }
}

}  // namespace fedmoment
