#include "fedmoment/datagen.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fedmoment/common.h"

namespace fedmoment {

namespace {

constexpr std::uint64_t kMapStream = 1;
constexpr std::uint64_t kPartitionStream = 2;

std::vector<double> UniformVector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

void SortById(std::vector<MomentSample>& samples) {
  std::sort(samples.begin(), samples.end(),
            [](const MomentSample& a, const MomentSample& b) { return a.sample_id < b.sample_id; });
}

void WriteHeader(std::ostream& out, const char* kind, const PlantedMap& map) {
  out << "# fedmoment-" << kind << " d_v=" << map.d_v << " d_q=" << map.d_q
      << " seed=" << map.seed << " map_digest=" << FormatHex64(map.Digest()) << '\n';
}

void WriteSampleFields(std::ostream& out, const MomentSample& s) {
  out << s.sample_id << ',' << s.temporal_class << ',' << s.scene << ',' << FormatReal9(s.gt_start)
      << ',' << FormatReal9(s.gt_end);
  for (double v : s.video_features) out << ',' << FormatReal9(v);
  for (double q : s.query_features) out << ',' << FormatReal9(q);
  out << '\n';
}

}  // namespace

std::uint64_t PlantedMap::Digest() const {
  Fnv1a h;
  h.Update(static_cast<std::uint64_t>(d_v));
  h.Update(static_cast<std::uint64_t>(d_q));
  for (const auto* block : {&video_matrix, &video_bias, &query_matrix, &query_bias}) {
    for (double v : *block) h.Update(v);
  }
  h.Update(noise_stddev);
  return h.digest();
}

ClassCounts ClientDataset::TemporalCounts() const {
  ClassCounts c;
  for (const auto& s : samples) c.Add(s.temporal_class);
  return c;
}

PlantedMap MakePlantedMap(std::size_t d_v, std::size_t d_q, std::uint64_t seed) {
  Require(d_v >= 1 && d_q >= 1, "feature dimensions must be at least 1");
  std::mt19937_64 rng(DeriveSeed(seed, kMapStream));
  PlantedMap map;
  map.d_v = d_v;
  map.d_q = d_q;
  map.seed = seed;
  map.video_matrix = UniformVector(rng, 2 * d_v, -1.0, 1.0);
  map.video_bias = UniformVector(rng, d_v, -0.5, 0.5);
  map.query_matrix = UniformVector(rng, 2 * d_q, -1.0, 1.0);
  map.query_bias = UniformVector(rng, d_q, -0.5, 0.5);
  return map;
}

std::vector<MomentSample> GenerateSamples(const PlantedMap& map, std::size_t n,
                                          const TemporalDistribution& class_mix,
                                          std::uint64_t seed, std::uint64_t first_id,
                                          int num_scenes) {
  Require(n >= 1, "sample count must be at least 1");
  Require(num_scenes >= 1, "scene count must be at least 1");
  for (int x = 0; x < kNumTemporalClasses; ++x) {
    Require(class_mix[x] == 0.0 || IsFeasibleClass(x),
            "class mix puts mass on temporal class " + std::to_string(x) +
                ", whose end quarter precedes its start quarter");
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick_class(class_mix.mass().begin(), class_mix.mass().end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_scene(0, num_scenes - 1);
  std::normal_distribution<double> noise(0.0, map.noise_stddev);

  auto project = [&](const std::vector<double>& matrix, const std::vector<double>& bias,
                     double s, double e) {
    std::vector<double> out(bias.size());
    for (std::size_t i = 0; i < bias.size(); ++i) {
      out[i] = matrix[2 * i] * s + matrix[2 * i + 1] * e + bias[i] + noise(rng);
    }
    return out;
  };

  std::vector<MomentSample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    MomentSample& s = samples[i];
    const int cell = pick_class(rng);
    const double width = 1.0 / kNumQuarters;
    double start = (cell / kNumQuarters + unit(rng)) * width;
    double end = (cell % kNumQuarters + unit(rng)) * width;
    if (start > end) std::swap(start, end);
    s.gt_start = std::clamp(start, 0.0, 1.0);
    s.gt_end = std::clamp(end, 0.0, 1.0);
    s.temporal_class = AssignTemporalClass(s.gt_start, s.gt_end);
    s.scene = pick_scene(rng);
    s.video_features = project(map.video_matrix, map.video_bias, s.gt_start, s.gt_end);
    s.query_features = project(map.query_matrix, map.query_bias, s.gt_start, s.gt_end);
    s.sample_id = first_id + i;
  }
  return samples;
}

Corpus GenerateCorpus(std::size_t n_total, std::size_t d_v, std::size_t d_q, std::uint64_t seed,
                      const TemporalDistribution& class_mix, int num_scenes) {
  Corpus corpus;
  corpus.map = MakePlantedMap(d_v, d_q, seed);
  corpus.samples = GenerateSamples(corpus.map, n_total, class_mix, DeriveSeed(seed, 0), 0,
                                   num_scenes);
  return corpus;
}

int LabelOf(const MomentSample& sample, LabelMode mode) {
  return mode == LabelMode::kTemporalClass ? sample.temporal_class : sample.scene;
}

std::vector<ClientDataset> PartitionDirichlet(std::span<const MomentSample> samples,
                                              const PartitionConfig& cfg) {
  Require(cfg.num_clients >= 1, "num_clients must be at least 1");
  Require(cfg.alpha >= 0.0 && std::isfinite(cfg.alpha), "alpha must be a nonnegative real");
  Require(static_cast<std::size_t>(cfg.num_clients) <= samples.size(),
          "more clients (" + std::to_string(cfg.num_clients) + ") than samples (" +
              std::to_string(samples.size()) + ")");

  const auto num_clients = static_cast<std::size_t>(cfg.num_clients);
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_label[LabelOf(samples[i], cfg.label_mode)].push_back(i);
  }

  std::vector<std::vector<std::size_t>> assigned(num_clients);
  std::mt19937_64 rng(DeriveSeed(cfg.seed, kPartitionStream));
  std::size_t label_index = 0;
  for (auto& [label, indices] : by_label) {
    if (cfg.alpha <= kDegenerateAlpha) {
      auto& dst = assigned[label_index % num_clients];
      dst.insert(dst.end(), indices.begin(), indices.end());
      ++label_index;
      continue;
    }
    std::shuffle(indices.begin(), indices.end(), rng);
    std::gamma_distribution<double> gamma(cfg.alpha, 1.0);
    std::vector<double> proportions(num_clients);
    for (double& p : proportions) p = gamma(rng);
    const double total = std::accumulate(proportions.begin(), proportions.end(), 0.0);
    if (!(total > 0.0)) {
      // Every draw underflowed; the alpha -> 0 limit puts the label on one client.
      std::uniform_int_distribution<std::size_t> pick(0, num_clients - 1);
      std::fill(proportions.begin(), proportions.end(), 0.0);
      proportions[pick(rng)] = 1.0;
    } else {
      for (double& p : proportions) p /= total;
    }
    std::size_t begin = 0;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      cumulative += proportions[k];
      std::size_t end = k + 1 == num_clients
                            ? indices.size()
                            : std::min(indices.size(),
                                       static_cast<std::size_t>(cumulative * indices.size()));
      end = std::max(end, begin);
      assigned[k].insert(assigned[k].end(), indices.begin() + begin, indices.begin() + end);
      begin = end;
    }
    ++label_index;
  }

  std::vector<ClientDataset> clients(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    clients[k].client_id = static_cast<int>(k);
    for (std::size_t i : assigned[k]) clients[k].samples.push_back(samples[i]);
    SortById(clients[k].samples);
  }

  for (auto& empty : clients) {
    if (!empty.samples.empty()) continue;
    auto largest = std::max_element(
        clients.begin(), clients.end(),
        [](const ClientDataset& a, const ClientDataset& b) { return a.size() < b.size(); });
    empty.samples.push_back(std::move(largest->samples.back()));
    largest->samples.pop_back();
  }
  return clients;
}

std::size_t CValidationCount(std::size_t n_k, double fraction) {
  // The tolerance keeps products such as 0.07 * 100 from rounding up past 7.
  const double raw = std::ceil(fraction * static_cast<double>(n_k) - 1e-9);
  return std::min(n_k, static_cast<std::size_t>(std::max(raw, 0.0)));
}

std::vector<MomentSample> BuildCValidation(std::span<const ClientDataset> clients,
                                           double fraction, std::uint64_t seed) {
  Require(fraction > 0.0 && fraction <= 1.0, "c-validation fraction must lie in (0, 1]");
  std::vector<const ClientDataset*> ordered;
  for (const auto& c : clients) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientDataset* a, const ClientDataset* b) { return a->client_id < b->client_id; });

  std::vector<MomentSample> out;
  for (const ClientDataset* client : ordered) {
    const std::size_t n = client->size();
    const std::size_t take = CValidationCount(n, fraction);
    std::mt19937_64 rng(DeriveSeed(seed, static_cast<std::uint64_t>(client->client_id)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<MomentSample> chosen;
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(client->samples[idx[i]]);
    SortById(chosen);
    out.insert(out.end(), chosen.begin(), chosen.end());
  }
  return out;
}

void WriteCorpus(std::ostream& out, const Corpus& corpus) {
  WriteHeader(out, "corpus", corpus.map);
  for (const auto& s : corpus.samples) WriteSampleFields(out, s);
}

void WritePartition(std::ostream& out, const PlantedMap& map,
                    std::span<const ClientDataset> clients) {
  WriteHeader(out, "partition", map);
  for (const auto& c : clients) {
    for (const auto& s : c.samples) {
      out << c.client_id << ',';
      WriteSampleFields(out, s);
    }
  }
}

Corpus ReadCorpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  Require(static_cast<bool>(std::getline(in, line)) && line.rfind("# fedmoment-corpus", 0) == 0,
          "missing corpus header");
  std::istringstream header(line.substr(std::string("# fedmoment-corpus").size()));
  std::string token;
  while (header >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "d_v") corpus.map.d_v = std::stoull(value);
    if (key == "d_q") corpus.map.d_q = std::stoull(value);
    if (key == "seed") corpus.map.seed = std::stoull(value);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    while (std::getline(row, token, ',')) fields.push_back(token);
    Require(fields.size() == 5 + corpus.map.d_v + corpus.map.d_q,
            "corpus line " + std::to_string(line_no) + ": wrong field count");
    MomentSample s;
    s.sample_id = std::stoull(fields[0]);
    s.temporal_class = std::stoi(fields[1]);
    s.scene = std::stoi(fields[2]);
    s.gt_start = std::stod(fields[3]);
    s.gt_end = std::stod(fields[4]);
    for (std::size_t i = 0; i < corpus.map.d_v; ++i) s.video_features.push_back(std::stod(fields[5 + i]));
    for (std::size_t i = 0; i < corpus.map.d_q; ++i) {
      s.query_features.push_back(std::stod(fields[5 + corpus.map.d_v + i]));
    }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

std::uint64_t CorpusDigest(const Corpus& corpus) {
  std::ostringstream text;
  WriteCorpus(text, corpus);
  Fnv1a h;
  h.Update(text.str());
  return h.digest();
}

}  // namespace fedmoment
