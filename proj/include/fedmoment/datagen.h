#ifndef FEDMOMENT_DATAGEN_H_
#define FEDMOMENT_DATAGEN_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedmoment/temporal.h"

namespace fedmoment {

// One synthetic video/query pair with its ground-truth normalized moment.
struct MomentSample {
  std::vector<double> video_features;
  std::vector<double> query_features;
  double gt_start = 0.0;
  double gt_end = 0.0;
  int temporal_class = 0;
  int scene = 0;  // secondary categorical label used by the scene partition
  std::uint64_t sample_id = 0;

  friend bool operator==(const MomentSample&, const MomentSample&) = default;
};

// The hidden generator: features = matrix * (start, end) + bias + noise.
// Matrices are row-major with two columns.
struct PlantedMap {
  std::size_t d_v = 0;
  std::size_t d_q = 0;
  std::vector<double> video_matrix;
  std::vector<double> video_bias;
  std::vector<double> query_matrix;
  std::vector<double> query_bias;
  double noise_stddev = 0.05;
  std::uint64_t seed = 0;

  std::uint64_t Digest() const;
};

struct Corpus {
  PlantedMap map;
  std::vector<MomentSample> samples;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<MomentSample> samples;  // ascending sample_id

  std::size_t size() const { return samples.size(); }
  ClassCounts TemporalCounts() const;
};

enum class LabelMode { kTemporalClass, kSyntheticScene };

struct PartitionConfig {
  int num_clients = 16;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::kTemporalClass;
};

// alpha at or below this value selects the one-label-per-client shard rule.
inline constexpr double kDegenerateAlpha = 1e-9;
inline constexpr int kDefaultNumScenes = 16;

PlantedMap MakePlantedMap(std::size_t d_v, std::size_t d_q, std::uint64_t seed);

// Draws samples from an existing map; ids are first_id, first_id + 1, ...
// class_mix may only carry mass on classes reachable with start <= end.
std::vector<MomentSample> GenerateSamples(const PlantedMap& map, std::size_t n,
                                          const TemporalDistribution& class_mix,
                                          std::uint64_t seed, std::uint64_t first_id = 0,
                                          int num_scenes = kDefaultNumScenes);

Corpus GenerateCorpus(std::size_t n_total, std::size_t d_v, std::size_t d_q,
                      std::uint64_t seed, const TemporalDistribution& class_mix,
                      int num_scenes = kDefaultNumScenes);

int LabelOf(const MomentSample& sample, LabelMode mode);

// Non-IID split. For alpha > kDegenerateAlpha each label's samples are
// shuffled and cut at the cumulative Dirichlet(alpha) proportions; otherwise
// each label goes wholly to one client, round-robin in label order. Empty
// clients then take one sample from the currently largest client.
std::vector<ClientDataset> PartitionDirichlet(std::span<const MomentSample> samples,
                                              const PartitionConfig& cfg);

// ceil(fraction * n_k) uniformly chosen copies from each client, ordered by
// (client_id, sample_id). Clients keep their originals.
std::vector<MomentSample> BuildCValidation(std::span<const ClientDataset> clients,
                                           double fraction, std::uint64_t seed);

std::size_t CValidationCount(std::size_t n_k, double fraction);

// Line-oriented text: a '#' header with d_v, d_q, seed and map digest, then
// one comma-separated sample per line:
//   sample_id,temporal_class,scene,gt_start,gt_end,v_0..v_{d_v-1},q_0..q_{d_q-1}
// Partition files prefix each sample line with its client_id.
void WriteCorpus(std::ostream& out, const Corpus& corpus);
void WritePartition(std::ostream& out, const PlantedMap& map,
                    std::span<const ClientDataset> clients);
// Reads back a corpus file. The planted map itself is not stored; the returned
// map carries only dimensions and seed.
Corpus ReadCorpus(std::istream& in);

std::uint64_t CorpusDigest(const Corpus& corpus);

}  // namespace fedmoment

#endif  // FEDMOMENT_DATAGEN_H_
