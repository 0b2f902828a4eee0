#include <gtest/gtest.h>

#include <ctxd_scdv/synthetic.hpp>
#include <ctxd_scdv/wsd.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ctxd;

TEST(Planted, NoiselessVectorsEqualSenseDirections) {
  PlantedSpec spec;
  spec.noise = 0.0;
  spec.docs_per_class = 20;
  const auto data = generate_planted(spec);
  for (const auto& r : data.store.records()) {
    const int sense = data.truth.at({r.doc_id, r.token_index});
    const Vector& dir = data.directions.at({r.token, sense});
    for (std::size_t j = 0; j < r.vec.size(); ++j) EXPECT_EQ(r.vec[j], static_cast<float>(dir[static_cast<Eigen::Index>(j)]));
  }
}

TEST(Planted, ShapeAndSplits) {
  PlantedSpec spec;
  const auto data = generate_planted(spec);
  EXPECT_EQ(data.corpus.size(), 400u);
  EXPECT_EQ(data.corpus.ids_in_split(Split::kTrain).size(), 320u);
  EXPECT_EQ(data.corpus.label_set(), (std::vector<std::string>{"class0", "class1"}));
  EXPECT_EQ(data.store.size(), 400u * 20u);
  EXPECT_EQ(data.ambiguous_words.size(), 10u);
  EXPECT_NO_THROW(validate_alignment(data.store, data.corpus));
  // Sense directions of an ambiguous word are orthogonal.
  for (const auto& w : data.ambiguous_words)
    EXPECT_NEAR(data.directions.at({w, 0}).dot(data.directions.at({w, 1})), 0.0, 1e-12);
}

TEST(Planted, SameSeedSameData) {
  PlantedSpec spec;
  spec.docs_per_class = 25;
  const auto a = generate_planted(spec);
  const auto b = generate_planted(spec);
  EXPECT_EQ(encode_store(a.store), encode_store(b.store));
  spec.seed = 8;
  EXPECT_NE(encode_store(generate_planted(spec).store), encode_store(a.store));
}

TEST(Planted, InfeasibleSpecsRejected) {
  PlantedSpec spec;
  spec.senses_per_ambiguous_word = 3;
  EXPECT_THROW(generate_planted(spec), ConfigError);
  spec = {};
  spec.vocab_size = 11;
  EXPECT_THROW(generate_planted(spec), ConfigError);
  spec = {};
  spec.train_fraction = 1.0;
  EXPECT_THROW(generate_planted(spec), ConfigError);
}

TEST(Planted, SenseCountsRecovered) {
  PlantedSpec spec;
  const auto data = generate_planted(spec);
  const auto inv = induce_senses(data.store, WsdConfig{});
  int recovered = 0;
  for (const auto& w : data.ambiguous_words) recovered += inv.find(w)->k() == 2;
  EXPECT_GE(recovered, 10 * 95 / 100);
}

TEST(Ari, AgreesWithPairCounting) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> a(40), b(40);
    for (auto& v : a) v = static_cast<int>(uniform_index(rng, 3));
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = uniform01(rng) < 0.7 ? a[i] : static_cast<int>(uniform_index(rng, 4));
    EXPECT_NEAR(adjusted_rand_index(a, b), oracle::adjusted_rand_index(a, b), 1e-12);
  }
}

TEST(Ari, RelabelingIsPerfect) {
  EXPECT_EQ(adjusted_rand_index({0, 0, 1, 1, 2}, {5, 5, 3, 3, 9}), 1.0);
}

TEST(SenseFixture, ContextCosinesAsSpecified) {
  const auto data = sense_example_fixture(reference_sense_examples());
  for (const auto& ex : reference_sense_examples()) {
    const double c = data.directions.at({ex.word, 0}).dot(data.directions.at({ex.word, 1}));
    EXPECT_NEAR(c, ex.cosine, 1e-12) << ex.word;
    EXPECT_EQ(data.store.occurrence_count(ex.word), 24u);
  }
}
