#include "fedmoment/runner.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fedmoment/common.h"
#include "fedmoment/localizer.h"

namespace fedmoment {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kCorpusStream = 101;
constexpr std::uint64_t kPartitionStream = 102;
constexpr std::uint64_t kTestStream = 103;

std::ostream& Log(const RunnerOptions& options) {
  static std::ostream null_stream(nullptr);
  return options.log ? *options.log : null_stream;
}

void WriteFile(const fs::path& path, const std::string& contents, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

std::string MetricKey(double m) { return "R1@" + FormatFixed(m, 1); }

template <typename Fn>
int Guard(const RunnerOptions& options, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const std::exception& e) {
    (options.log ? *options.log : std::cerr) << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

PreparedData PrepareData(const ExperimentSpec& spec) {
  PreparedData out;
  out.corpus = GenerateCorpus(spec.data.n_total, spec.data.d_v, spec.data.d_q,
                              DeriveSeed(spec.seed, kCorpusStream), spec.data.class_mix,
                              spec.data.num_scenes);
  out.corpus_digest = CorpusDigest(out.corpus);
  // The held-out split shares the planted map but not the sample stream.
  out.federated.test_set = GenerateSamples(out.corpus.map, spec.data.n_test, spec.data.class_mix,
                                           DeriveSeed(spec.seed, kTestStream), spec.data.n_total,
                                           spec.data.num_scenes);
  PartitionConfig pcfg;
  pcfg.num_clients = spec.run.num_clients;
  pcfg.alpha = spec.data.alpha;
  pcfg.seed = DeriveSeed(spec.seed, kPartitionStream);
  pcfg.label_mode = spec.data.label_mode;
  out.federated.clients = PartitionDirichlet(out.corpus.samples, pcfg);
  return out;
}

FederatedData Centralize(const FederatedData& data) {
  FederatedData out;
  out.test_set = data.test_set;
  ClientDataset all;
  all.client_id = 0;
  for (const auto& c : data.clients) {
    all.samples.insert(all.samples.end(), c.samples.begin(), c.samples.end());
  }
  std::sort(all.samples.begin(), all.samples.end(),
            [](const MomentSample& a, const MomentSample& b) { return a.sample_id < b.sample_id; });
  out.clients.push_back(std::move(all));
  return out;
}

std::size_t ThreadsFromEnvironment() {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FEDMOMENT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) threads = static_cast<std::size_t>(v);
  }
  return threads;
}

RunOutputs RunAndWrite(const ExperimentSpec& spec, const FederatedData& data,
                       std::uint64_t corpus_digest, const fs::path& dir,
                       const RunnerOptions& options) {
  fs::create_directories(dir);
  ScheduleOptions schedule;
  schedule.max_threads = options.max_threads;
  RoundHooks hooks;
  hooks.on_round_complete = [&](int round, const ParameterVector&) {
    Log(options) << "  [" << dir.filename().string() << "] round " << round << "/" << spec.run.rounds
                 << '\n';
  };

  RunOutputs out;
  out.result = RunExperiment(spec.run, spec.train, data, schedule, hooks);
  out.rounds_to_convergence = RoundsToConvergence(out.result.reports, spec.convergence_m);

  std::ostringstream csv;
  WriteRoundsCsv(csv, out.result.reports, spec.run.num_clients);
  WriteFile(dir / "rounds.csv", csv.str());

  std::ostringstream model;
  WriteParameters(model, out.result.final_global);
  WriteFile(dir / "final_model.bin", model.str(), /*binary=*/true);

  const RoundReport& last = out.result.reports.back();
  nlohmann::ordered_json summary;
  summary["num_clients"] = spec.run.num_clients;
  summary["num_groups"] = spec.run.num_groups;
  summary["rounds"] = spec.run.rounds;
  summary["aggregation_mode"] =
      spec.run.aggregation_mode == AggregationMode::kUniform ? "uniform" : "c_validation_softmax";
  summary["lambda_dis"] = spec.train.lambda_dis;
  summary["seed"] = spec.seed;
  for (double m : kReportThresholds) summary["final_metrics"][MetricKey(m)] = last.RecallAt(m);
  summary["convergence_m"] = spec.convergence_m;
  summary["rounds_to_convergence"] = out.rounds_to_convergence;
  summary["total_simulated_time"] = last.simulated_time;
  summary["corpus_digest"] = FormatHex64(corpus_digest);
  summary["population_distribution"] = out.result.population.Serialize();
  summary["model_parameters"] = out.result.final_global.size();
  WriteFile(dir / "summary.json", summary.dump(2) + "\n");
  return out;
}

int CmdRun(const ExperimentSpec& spec, const RunnerOptions& options) {
  if (spec.sweep) return CmdSweep(spec, options);
  return Guard(options, [&] {
    const PreparedData data = PrepareData(spec);
    const RunOutputs out = RunAndWrite(spec, data.federated, data.corpus_digest, spec.output_dir, options);
    const RoundReport& last = out.result.reports.back();
    Log(options) << "final R(1,0.3)=" << FormatFixed(last.recall[0], 4)
                 << " R(1,0.5)=" << FormatFixed(last.recall[1], 4)
                 << " R(1,0.7)=" << FormatFixed(last.recall[2], 4)
                 << " rounds_to_convergence=" << out.rounds_to_convergence << '\n';
  });
}

int CmdSweep(const ExperimentSpec& spec, const RunnerOptions& options) {
  return Guard(options, [&] {
    std::vector<int> groups = spec.sweep.value_or(std::vector<int>{});
    if (groups.empty()) {
      for (int g = 1; g < spec.run.num_clients; g *= 2) groups.push_back(g);
    }
    if (std::find(groups.begin(), groups.end(), spec.run.num_clients) == groups.end()) {
      Log(options) << "sweep: adding G=" << spec.run.num_clients << " as the ratio baseline\n";
      groups.push_back(spec.run.num_clients);
    }
    const PreparedData data = PrepareData(spec);
    std::vector<GroupRounds> entries;
    for (int g : groups) {
      ExperimentSpec one = spec;
      one.sweep.reset();
      one.run.num_groups = g;
      const RunOutputs out = RunAndWrite(one, data.federated, data.corpus_digest,
                                         fs::path(spec.output_dir) / ("G" + std::to_string(g)), options);
      entries.push_back({g, out.rounds_to_convergence});
    }
    const auto rows = TradeoffTable(spec.run.num_clients, spec.run.unit_client_cost, entries, spec.seed);
    std::ostringstream csv;
    WriteTradeoffCsv(csv, rows);
    fs::create_directories(spec.output_dir);
    WriteFile(fs::path(spec.output_dir) / "tradeoff.csv", csv.str());
    Log(options) << csv.str();
  });
}

ExperimentSpec FedAvgArm(const ExperimentSpec& spec) {
  ExperimentSpec arm = spec;
  arm.sweep.reset();
  arm.run.num_groups = spec.run.num_clients;
  arm.run.aggregation_mode = AggregationMode::kUniform;
  arm.train.lambda_dis = 0.0;
  return arm;
}

ExperimentSpec CentralizedArm(const ExperimentSpec& spec) {
  ExperimentSpec arm = spec;
  arm.sweep.reset();
  arm.run.num_clients = 1;
  arm.run.num_groups = 1;
  arm.run.participation_fraction = 1.0;
  return arm;
}

void WriteCompareTable(std::ostream& out, const RoundReport& centralized, const RoundReport& fedavg,
                       const RoundReport& fedvmr) {
  out << "| Metric | Centralized | FedAvg | FedVMR |\n";
  out << "|---|---|---|---|\n";
  for (double m : {0.7, 0.5, 0.3}) {
    out << "| IoU>" << FormatFixed(m, 1) << " | " << FormatFixed(100.0 * centralized.RecallAt(m), 2)
        << " | " << FormatFixed(100.0 * fedavg.RecallAt(m), 2) << " | "
        << FormatFixed(100.0 * fedvmr.RecallAt(m), 2) << " |\n";
  }
}

int CmdCompare(const ExperimentSpec& spec, const RunnerOptions& options) {
  return Guard(options, [&] {
    const PreparedData data = PrepareData(spec);
    const fs::path root = spec.output_dir;
    ExperimentSpec fedvmr = spec;
    fedvmr.sweep.reset();
    const ExperimentSpec fedavg = FedAvgArm(spec);
    const ExperimentSpec central = CentralizedArm(spec);

    // Each arm starts from freshly prepared inputs; no model state is shared.
    const RunOutputs c = RunAndWrite(central, Centralize(data.federated), data.corpus_digest,
                                     root / "centralized", options);
    const RunOutputs a = RunAndWrite(fedavg, data.federated, data.corpus_digest, root / "fedavg", options);
    const RunOutputs v = RunAndWrite(fedvmr, data.federated, data.corpus_digest, root / "fedvmr", options);

    std::ostringstream csv;
    csv << "round";
    for (const char* arm : {"centralized", "fedavg", "fedvmr"}) {
      for (double m : kReportThresholds) csv << ',' << arm << "_R1_" << FormatFixed(m, 1);
    }
    csv << '\n';
    for (std::size_t t = 0; t < v.result.reports.size(); ++t) {
      csv << (t + 1);
      for (const RunOutputs* arm : {&c, &a, &v}) {
        for (double r : arm->result.reports[t].recall) csv << ',' << FormatFixed(r, 6);
      }
      csv << '\n';
    }
    WriteFile(root / "compare_rounds.csv", csv.str());

    std::ostringstream md;
    md << "Final-round R(1, m) on the held-out split (percent), " << spec.run.num_clients
       << " clients, " << spec.run.rounds << " rounds.\n\n";
    WriteCompareTable(md, c.result.reports.back(), a.result.reports.back(), v.result.reports.back());
    md << "\nRounds to convergence (R(1," << FormatFixed(spec.convergence_m, 1)
       << ")): centralized " << c.rounds_to_convergence << ", FedAvg " << a.rounds_to_convergence
       << ", FedVMR " << v.rounds_to_convergence << "\n";
    WriteFile(root / "compare_summary.md", md.str());

    nlohmann::ordered_json summary;
    for (const auto& [name, arm] : {std::pair{"centralized", &c}, {"fedavg", &a}, {"fedvmr", &v}}) {
      auto& j = summary[name];
      j["corpus_digest"] = FormatHex64(data.corpus_digest);
      for (double m : kReportThresholds) j["final_metrics"][MetricKey(m)] = arm->result.reports.back().RecallAt(m);
      j["rounds_to_convergence"] = arm->rounds_to_convergence;
      j["total_simulated_time"] = arm->result.reports.back().simulated_time;
    }
    WriteFile(root / "compare_summary.json", summary.dump(2) + "\n");
    Log(options) << md.str();
  });
}

}  // namespace fedmoment
