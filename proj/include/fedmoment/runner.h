#ifndef FEDMOMENT_RUNNER_H_
#define FEDMOMENT_RUNNER_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedmoment/datagen.h"
#include "fedmoment/experiment_spec.h"
#include "fedmoment/federation.h"

namespace fedmoment {

struct PreparedData {
  Corpus corpus;  // training corpus before partitioning
  FederatedData federated;
  std::uint64_t corpus_digest = 0;
};

// Generates the corpus and held-out split from the planted map and
// partitions the corpus across spec.run.num_clients clients.
PreparedData PrepareData(const ExperimentSpec& spec);

// Collapses all clients into one client holding every sample.
FederatedData Centralize(const FederatedData& data);

struct RunnerOptions {
  std::size_t max_threads = 1;
  std::ostream* log = nullptr;
};

// Reads FEDMOMENT_THREADS; defaults to the hardware concurrency.
std::size_t ThreadsFromEnvironment();

struct RunOutputs {
  ExperimentResult result;
  int rounds_to_convergence = 0;
};

// Runs one experiment on prepared data and writes rounds.csv,
// final_model.bin and summary.json into dir.
RunOutputs RunAndWrite(const ExperimentSpec& spec, const FederatedData& data,
                       std::uint64_t corpus_digest, const std::filesystem::path& dir,
                       const RunnerOptions& options);

// CLI verbs; each returns a process exit status.
int CmdRun(const ExperimentSpec& spec, const RunnerOptions& options);
int CmdSweep(const ExperimentSpec& spec, const RunnerOptions& options);
int CmdCompare(const ExperimentSpec& spec, const RunnerOptions& options);

// The three comparison arms derived from one spec.
ExperimentSpec FedAvgArm(const ExperimentSpec& spec);
ExperimentSpec CentralizedArm(const ExperimentSpec& spec);

void WriteCompareTable(std::ostream& out, const RoundReport& centralized, const RoundReport& fedavg,
                       const RoundReport& fedvmr);

}  // namespace fedmoment

#endif  // FEDMOMENT_RUNNER_H_
