#include "fedmoment/datagen.h"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fedmoment/common.h"

namespace fedmoment {
namespace {

// P(|X - np| <= k * sd) for X ~ Binomial(n, p), by exact summation.
double BinomialCentralMass(int n, double p, double k) {
  const double mean = n * p;
  const double sd = std::sqrt(n * p * (1 - p));
  double mass = 0.0;
  for (int x = 0; x <= n; ++x) {
    if (std::abs(x - mean) > k * sd) continue;
    mass += std::exp(std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) +
                     x * std::log(p) + (n - x) * std::log1p(-p));
  }
  return mass;
}

double TotalVariation(const std::map<int, double>& a, const std::map<int, double>& b) {
  std::set<int> keys;
  for (const auto& [k, v] : a) keys.insert(k);
  for (const auto& [k, v] : b) keys.insert(k);
  double tv = 0.0;
  for (int k : keys) {
    const double x = a.count(k) ? a.at(k) : 0.0;
    const double y = b.count(k) ? b.at(k) : 0.0;
    tv += std::abs(x - y);
  }
  return 0.5 * tv;
}

std::map<int, double> Histogram(const std::vector<MomentSample>& samples, LabelMode mode) {
  std::map<int, double> h;
  for (const auto& s : samples) h[LabelOf(s, mode)] += 1.0 / samples.size();
  return h;
}

std::string Serialize(const Corpus& c) {
  std::ostringstream out;
  WriteCorpus(out, c);
  return out.str();
}

TEST(GenerateCorpusTest, ClassCountsWithinBinomialBand) {
  // Ten reachable classes at 1/10 each: the union bound over classes of the
  // exact 4-sigma tail must leave at least 0.99.
  const int n = 1600;
  const double p = 0.1;
  const double per_class_tail = 1.0 - BinomialCentralMass(n, p, 4.0);
  ASSERT_LE(10 * per_class_tail, 0.01);
  const double band = 4.0 * std::sqrt(n * p * (1 - p));  // 48

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Corpus c = GenerateCorpus(n, 4, 3, seed, TemporalDistribution::UniformFeasible());
    std::map<int, int> counts;
    for (const auto& s : c.samples) ++counts[s.temporal_class];
    EXPECT_EQ(counts.size(), 10u);
    for (const auto& [cls, count] : counts) {
      EXPECT_TRUE(IsFeasibleClass(cls));
      EXPECT_LE(std::abs(count - n * p), band) << "seed " << seed << " class " << cls;
    }
  }
}

TEST(GenerateCorpusTest, PointMassStaysInItsCell) {
  const Corpus c = GenerateCorpus(10, 4, 3, 1, TemporalDistribution::PointMass(0));
  ASSERT_EQ(c.samples.size(), 10u);
  for (const auto& s : c.samples) {
    EXPECT_GE(s.gt_start, 0.0);
    EXPECT_LE(s.gt_end, 0.25);
    EXPECT_LE(s.gt_start, s.gt_end);
    EXPECT_EQ(s.temporal_class, 0);
  }
}

TEST(GenerateCorpusTest, SameSeedIsByteIdentical) {
  const auto mix = TemporalDistribution::UniformFeasible();
  EXPECT_EQ(Serialize(GenerateCorpus(200, 5, 4, 42, mix)), Serialize(GenerateCorpus(200, 5, 4, 42, mix)));
  EXPECT_NE(Serialize(GenerateCorpus(200, 5, 4, 42, mix)), Serialize(GenerateCorpus(200, 5, 4, 43, mix)));
}

TEST(GenerateCorpusTest, SamplesSatisfyInvariants) {
  const Corpus c = GenerateCorpus(2000, 6, 2, 8, TemporalDistribution::UniformFeasible());
  std::set<std::uint64_t> ids;
  for (const auto& s : c.samples) {
    EXPECT_LE(0.0, s.gt_start);
    EXPECT_LE(s.gt_start, s.gt_end);
    EXPECT_LE(s.gt_end, 1.0);
    EXPECT_EQ(s.temporal_class, AssignTemporalClass(s.gt_start, s.gt_end));
    EXPECT_EQ(s.video_features.size(), 6u);
    EXPECT_EQ(s.query_features.size(), 2u);
    ids.insert(s.sample_id);
  }
  EXPECT_EQ(ids.size(), c.samples.size());
}

TEST(GenerateCorpusTest, FeaturesFollowPlantedMapWithNoise) {
  const Corpus c = GenerateCorpus(3000, 8, 4, 2, TemporalDistribution::UniformFeasible());
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& s : c.samples) {
    for (std::size_t i = 0; i < c.map.d_v; ++i) {
      const double clean = c.map.video_matrix[2 * i] * s.gt_start +
                           c.map.video_matrix[2 * i + 1] * s.gt_end + c.map.video_bias[i];
      sum_sq += (s.video_features[i] - clean) * (s.video_features[i] - clean);
      ++count;
    }
  }
  EXPECT_NEAR(std::sqrt(sum_sq / count), 0.05, 0.002);
}

TEST(GenerateCorpusTest, RejectsUnreachableClassMass) {
  EXPECT_THROW(GenerateCorpus(100, 4, 4, 0, TemporalDistribution::Uniform()), PreconditionError);
  EXPECT_THROW(GenerateCorpus(100, 4, 4, 0, TemporalDistribution::PointMass(4)), PreconditionError);
}

TEST(PartitionDirichletTest, AlphaZeroGivesSingleClassClients) {
  const Corpus c = GenerateCorpus(3200, 4, 2, 3, TemporalDistribution::UniformFeasible(), 16);
  for (LabelMode mode : {LabelMode::kSyntheticScene, LabelMode::kTemporalClass}) {
    const auto clients = PartitionDirichlet(c.samples, {16, 0.0, 5, mode});
    ASSERT_EQ(clients.size(), 16u);
    std::set<int> labels_seen;
    for (const auto& client : clients) {
      ASSERT_GE(client.size(), 1u);
      const auto h = Histogram(client.samples, mode);
      EXPECT_EQ(h.size(), 1u) << "client " << client.client_id;
      labels_seen.insert(h.begin()->first);
    }
    // Scenes: 16 labels, one per client. Temporal: only 10 classes exist.
    EXPECT_EQ(labels_seen.size(), mode == LabelMode::kSyntheticScene ? 16u : 10u);
  }
}

TEST(PartitionDirichletTest, AlphaZeroRoundRobinsLabels) {
  const Corpus c = GenerateCorpus(800, 4, 2, 3, TemporalDistribution::UniformFeasible(), 16);
  const auto clients = PartitionDirichlet(c.samples, {8, 0.0, 1, LabelMode::kSyntheticScene});
  for (const auto& client : clients) {
    for (const auto& s : client.samples) EXPECT_EQ(s.scene % 8, client.client_id);
  }
}

TEST(PartitionDirichletTest, LargeAlphaTracksGlobalHistogram) {
  const Corpus c = GenerateCorpus(16000, 4, 2, 4, TemporalDistribution::UniformFeasible(), 16);
  for (LabelMode mode : {LabelMode::kTemporalClass, LabelMode::kSyntheticScene}) {
    const auto global = Histogram(c.samples, mode);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto clients = PartitionDirichlet(c.samples, {16, 1000.0, seed, mode});
      for (const auto& client : clients) {
        EXPECT_LE(TotalVariation(Histogram(client.samples, mode), global), 0.05)
            << "seed " << seed << " client " << client.client_id;
      }
    }
  }
}

TEST(PartitionDirichletTest, SingleClientTakesEverything) {
  const Corpus c = GenerateCorpus(300, 4, 2, 4, TemporalDistribution::UniformFeasible());
  for (double alpha : {0.0, 0.1, 10.0}) {
    const auto clients = PartitionDirichlet(c.samples, {1, alpha, 2, LabelMode::kTemporalClass});
    ASSERT_EQ(clients.size(), 1u);
    EXPECT_EQ(clients[0].samples, c.samples);
  }
}

TEST(PartitionDirichletTest, IsExactSetPartition) {
  const Corpus c = GenerateCorpus(1000, 3, 2, 6, TemporalDistribution::UniformFeasible());
  for (double alpha : {0.0, 1e-6, 0.05, 0.5, 5.0, 1000.0}) {
    for (int num_clients : {1, 3, 16, 50}) {
      const auto clients = PartitionDirichlet(c.samples, {num_clients, alpha, 9, LabelMode::kTemporalClass});
      std::multiset<std::uint64_t> ids;
      for (const auto& client : clients) {
        EXPECT_GE(client.size(), 1u);
        for (const auto& s : client.samples) ids.insert(s.sample_id);
      }
      ASSERT_EQ(ids.size(), c.samples.size());
      std::uint64_t expect = 0;
      for (std::uint64_t id : ids) EXPECT_EQ(id, expect++);
    }
  }
}

TEST(PartitionDirichletTest, MoreClientsThanSamplesIsAnError) {
  const Corpus c = GenerateCorpus(5, 3, 2, 6, TemporalDistribution::UniformFeasible());
  EXPECT_THROW(PartitionDirichlet(c.samples, {6, 1.0, 0, LabelMode::kTemporalClass}), PreconditionError);
}

TEST(PartitionDirichletTest, Deterministic) {
  const Corpus c = GenerateCorpus(500, 3, 2, 6, TemporalDistribution::UniformFeasible());
  auto text = [&](std::uint64_t seed) {
    std::ostringstream out;
    WritePartition(out, c.map, PartitionDirichlet(c.samples, {7, 0.3, seed, LabelMode::kTemporalClass}));
    return out.str();
  };
  EXPECT_EQ(text(1), text(1));
  EXPECT_NE(text(1), text(2));
}

std::vector<ClientDataset> EqualClients(int num_clients, int per_client) {
  const Corpus c = GenerateCorpus(num_clients * per_client, 3, 2, 1, TemporalDistribution::UniformFeasible());
  std::vector<ClientDataset> clients(num_clients);
  for (int k = 0; k < num_clients; ++k) {
    clients[k].client_id = k;
    clients[k].samples.assign(c.samples.begin() + k * per_client, c.samples.begin() + (k + 1) * per_client);
  }
  return clients;
}

TEST(BuildCValidationTest, OnePercentOfHundredIsOne) {
  const auto clients = EqualClients(16, 100);
  const auto cval = BuildCValidation(clients, 0.01, 3);
  ASSERT_EQ(cval.size(), 16u);
  for (int k = 0; k < 16; ++k) {
    EXPECT_GE(cval[k].sample_id, static_cast<std::uint64_t>(k * 100));
    EXPECT_LT(cval[k].sample_id, static_cast<std::uint64_t>((k + 1) * 100));
  }
}

TEST(BuildCValidationTest, FullFractionIsWholeCorpus) {
  const auto clients = EqualClients(4, 25);
  const auto cval = BuildCValidation(clients, 1.0, 3);
  ASSERT_EQ(cval.size(), 100u);
  for (std::size_t i = 0; i < cval.size(); ++i) EXPECT_EQ(cval[i].sample_id, i);
}

TEST(BuildCValidationTest, TinyClientContributesOne) {
  EXPECT_EQ(CValidationCount(1, 0.01), 1u);
  EXPECT_EQ(CValidationCount(100, 0.07), 7u);
  EXPECT_EQ(CValidationCount(101, 0.01), 2u);
  auto clients = EqualClients(1, 1);
  EXPECT_EQ(BuildCValidation(clients, 0.01, 0).size(), 1u);
}

TEST(BuildCValidationTest, SizeAndOrdering) {
  const Corpus c = GenerateCorpus(997, 3, 2, 2, TemporalDistribution::UniformFeasible());
  const auto clients = PartitionDirichlet(c.samples, {13, 0.5, 4, LabelMode::kTemporalClass});
  for (double fraction : {0.01, 0.05, 0.33, 1.0}) {
    const auto cval = BuildCValidation(clients, fraction, 11);
    std::size_t expected = 0;
    std::map<std::uint64_t, int> owner;
    for (const auto& cl : clients) {
      expected += static_cast<std::size_t>(std::ceil(fraction * cl.size() - 1e-9));
      for (const auto& s : cl.samples) owner[s.sample_id] = cl.client_id;
    }
    ASSERT_EQ(cval.size(), expected);
    for (std::size_t i = 1; i < cval.size(); ++i) {
      const auto a = std::pair(owner[cval[i - 1].sample_id], cval[i - 1].sample_id);
      const auto b = std::pair(owner[cval[i].sample_id], cval[i].sample_id);
      EXPECT_LT(a, b);
    }
  }
  EXPECT_THROW(BuildCValidation(clients, 0.0, 1), PreconditionError);
  EXPECT_THROW(BuildCValidation(clients, 1.5, 1), PreconditionError);
}

TEST(CorpusTextTest, HeaderAndReadBack) {
  const Corpus c = GenerateCorpus(50, 3, 2, 77, TemporalDistribution::UniformFeasible());
  const std::string text = Serialize(c);
  EXPECT_EQ(text.rfind("# fedmoment-corpus d_v=3 d_q=2 seed=77 map_digest=" + FormatHex64(c.map.Digest()), 0), 0u);
  std::istringstream in(text);
  const Corpus back = ReadCorpus(in);
  ASSERT_EQ(back.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].sample_id, c.samples[i].sample_id);
    EXPECT_EQ(back.samples[i].temporal_class, c.samples[i].temporal_class);
    EXPECT_NEAR(back.samples[i].gt_start, c.samples[i].gt_start, 1e-8);
    EXPECT_NEAR(back.samples[i].video_features[2], c.samples[i].video_features[2], 1e-8);
  }
  // Re-serializing the parsed corpus reproduces the sample lines exactly.
  const std::string again = Serialize(back);
  EXPECT_EQ(again.substr(again.find('\n')), text.substr(text.find('\n')));
}

}  // namespace
}  // namespace fedmoment
