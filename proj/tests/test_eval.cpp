#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include <ctxd_scdv/eval.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ctxd;

namespace {

struct Labeled {
  Corpus corpus;
  DocumentVectorSet dv;
};

// Gaussian blobs around one random center per class; `train_per_class`
// training and `test_per_class` test documents per class.
Labeled blobs(int classes, int train_per_class, int test_per_class, int dim, double spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> centers;
  for (int c = 0; c < classes; ++c) centers.push_back(testutil::random_unit(rng, dim) * 3.0);
  std::vector<Document> docs;
  std::vector<Vector> rows;
  const int per = train_per_class + test_per_class;
  for (int i = 0; i < per; ++i)
    for (int c = 0; c < classes; ++c) {
      Document d;
      d.source_id = static_cast<std::int64_t>(docs.size());
      d.tokens = {"t"};
      d.label = "class" + std::to_string(c);
      d.split = i < train_per_class ? Split::kTrain : Split::kTest;
      docs.push_back(std::move(d));
      Vector v = centers[static_cast<std::size_t>(c)];
      for (auto& x : v) x += spread * standard_normal(rng);
      rows.push_back(v);
    }
  Labeled out{Corpus(std::move(docs)), {}};
  out.dv.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) out.dv.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

}  // namespace

TEST(Metrics, AccuracyAndMacroF1) {
  const std::vector<int> truth{0, 0, 1, 1, 2};
  const std::vector<int> pred{0, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(accuracy(truth, pred), 3.0 / 5.0);
  // Per class F1: 0 -> 2*1/(2+1+1)=0.5, 1 -> 2*2/(4+1+0)=0.8, 2 -> 0.
  EXPECT_NEAR(macro_f1(truth, pred), (0.5 + 0.8 + 0.0) / 3.0, 1e-15);
  EXPECT_THROW(accuracy(truth, std::vector<int>{0}), DataError);
}

TEST(Pearson, HandCasesAreExact) {
  const std::vector<double> gold{0.5, 3.0, 1.25, 4.75, 2.0};
  std::vector<double> neg(gold.size());
  std::transform(gold.begin(), gold.end(), neg.begin(), [](double v) { return -v; });
  EXPECT_EQ(pearson(gold, gold), 1.0);
  EXPECT_EQ(pearson(neg, gold), -1.0);
  EXPECT_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
}

TEST(Pearson, MatchesTwoPassFormula) {
  Rng rng(3);
  std::vector<double> x(50), y(50);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = standard_normal(rng);
    y[i] = 0.5 * x[i] + standard_normal(rng);
  }
  EXPECT_NEAR(pearson(x, y), oracle::pearson(x, y), 1e-12);
}

TEST(Pearson, ZeroVarianceIsError) {
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), NumericError);
}

TEST(LinearSvm, OneDimensionalSeparable) {
  Matrix x(40, 1);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i < 20 ? -1.0 : 1.0;
    y[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
  }
  for (double C : default_C_grid()) {
    const auto m = train_linear(x, y, 2, C, 1);
    EXPECT_EQ(m.predict_rows(x), y) << "C=" << C;
  }
}

TEST(LinearSvm, SingleClassAndNanRejected) {
  Matrix x = Matrix::Ones(5, 2);
  EXPECT_THROW(train_linear(x, {0, 0, 0, 0, 0}, 2, 1.0, 1), DataError);
  x(2, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_linear(x, {0, 1, 0, 1, 0}, 2, 1.0, 1), DataError);
}

TEST(LinearSvm, SeparableBlobsAtEveryC) {
  const auto data = blobs(3, 60, 40, 10, 0.3, 5);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  const auto test = labeled_split(data.corpus, Split::kTest);
  const Matrix xtr = gather_rows(data.dv, train.ids);
  const Matrix xte = gather_rows(data.dv, test.ids);
  for (double C : default_C_grid()) {
    const auto m = train_linear(xtr, train.y, 3, C, 2);
    EXPECT_GE(accuracy(test.y, m.predict_rows(xte)), 0.99) << "C=" << C;
  }
}

TEST(LinearSvm, Deterministic) {
  const auto data = blobs(2, 30, 5, 4, 1.0, 6);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  const Matrix x = gather_rows(data.dv, train.ids);
  const auto a = train_linear(x, train.y, 2, 1.0, 9);
  const auto b = train_linear(x, train.y, 2, 1.0, 9);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(TuneC, SingleValueGrid) {
  const auto data = blobs(2, 10, 2, 3, 0.1, 1);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  EXPECT_EQ(tune_C(gather_rows(data.dv, train.ids), train.y, 2, {3.5}, 1).best_C, 3.5);
  EXPECT_THROW(tune_C(gather_rows(data.dv, train.ids), train.y, 2, {}, 1), ConfigError);
}

TEST(TuneC, SeparableDataPicksSmallestC) {
  const auto data = blobs(3, 25, 2, 6, 0.1, 2);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  const auto r = tune_C(gather_rows(data.dv, train.ids), train.y, 3, default_C_grid(), 4);
  ASSERT_EQ(r.scores.size(), default_C_grid().size());
  for (const auto& [C, score] : r.scores) EXPECT_EQ(score, 1.0) << "C=" << C;
  EXPECT_EQ(r.best_C, 0.01);
}

TEST(TuneC, TieGoesToSmallerRegardlessOfOrder) {
  const auto data = blobs(2, 20, 2, 4, 0.1, 3);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  const Matrix x = gather_rows(data.dv, train.ids);
  EXPECT_EQ(tune_C(x, train.y, 2, {10.0, 1.0}, 1).best_C, 1.0);
  EXPECT_EQ(tune_C(x, train.y, 2, {1.0, 10.0}, 1).best_C, 1.0);
}

TEST(StratifiedFolds, BalancedPerClass) {
  std::vector<int> y;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 17 + 5 * c; ++i) y.push_back(c);
  const auto folds = stratified_folds(y, 5, 11);
  std::map<int, std::map<int, int>> count;  // class -> fold -> n
  std::map<int, int> fold_size;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++count[y[i]][folds[i]];
    ++fold_size[folds[i]];
  }
  for (const auto& [c, per_fold] : count) {
    int lo = 1 << 30, hi = 0;
    for (int f = 0; f < 5; ++f) {
      const int n = per_fold.count(f) ? per_fold.at(f) : 0;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    EXPECT_LE(hi - lo, 1) << "class " << c;
  }
  int lo = 1 << 30, hi = 0;
  for (const auto& [f, n] : fold_size) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  EXPECT_LE(hi - lo, 1);
}

TEST(Subsample, NestedAcrossFractions) {
  const auto data = blobs(4, 37, 1, 2, 1.0, 4);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::vector<std::size_t> prev;
    for (double f : {0.1, 0.2, 0.3, 0.4, 0.5, 1.0}) {
      const auto cur = nested_subsample(train, f, seed);
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end())) << "f=" << f;
      // ceil(f * 37) per class.
      EXPECT_EQ(cur.size(), 4u * static_cast<std::size_t>(std::ceil(f * 37 - 1e-9))) << "f=" << f;
      prev = cur;
    }
  }
}

TEST(Subsample, TooSmallToCoverClassesIsError) {
  const auto data = blobs(5, 4, 1, 2, 1.0, 4);
  const auto train = labeled_split(data.corpus, Split::kTrain);
  EXPECT_THROW(nested_subsample(train, 0.1, 1), DataError);
  EXPECT_THROW(nested_subsample(train, 0.0, 1), ConfigError);
}

TEST(Classification, SeparableCorpusScoresPerfectly) {
  const auto data = blobs(2, 40, 20, 8, 0.2, 7);
  ClassifyConfig cfg;
  cfg.repeats = 2;
  const auto run = evaluate_classification(data.dv, data.corpus, cfg);
  EXPECT_EQ(run.protocol, "full");
  ASSERT_EQ(run.per_run.size(), 2u);
  EXPECT_EQ(run.mean().at("accuracy"), 100.0);
  EXPECT_EQ(run.mean().at("macro_f1"), 100.0);
  cfg.fraction = 0.1;
  EXPECT_EQ(evaluate_classification(data.dv, data.corpus, cfg).protocol, "limited");
}

TEST(FewShot, IdenticalMembersGivePerfectAccuracy) {
  auto data = blobs(3, 10, 5, 4, 0.0, 8);
  const auto run = few_shot(data.dv, data.corpus, {5, 3, 1, ProtoMetric::kCosine});
  for (double v : run.values("accuracy")) EXPECT_EQ(v, 100.0);
}

TEST(FewShot, TooFewExamplesIsError) {
  auto data = blobs(2, 12, 3, 4, 0.5, 9);
  EXPECT_THROW(few_shot(data.dv, data.corpus, {20, 1, 1, ProtoMetric::kCosine}), DataError);
}

TEST(FewShot, NearestPrototypeMatchesScan) {
  Rng rng(10);
  for (int instance = 0; instance < 100; ++instance) {
    const int classes = 2 + instance % 5, d = 3 + instance % 4;
    Matrix protos(classes, d);
    for (int c = 0; c < classes; ++c) protos.row(c) = testutil::random_unit(rng, d).transpose() * (0.5 + uniform01(rng));
    const auto rows = oracle::to_rows(protos);
    for (int q = 0; q < 20; ++q) {
      const Vector x = testutil::random_unit(rng, d);
      EXPECT_EQ(nearest_prototype(protos, x, ProtoMetric::kCosine),
                oracle::nearest_prototype(rows, std::vector<double>(x.begin(), x.end())));
    }
  }
}

TEST(FewShot, AllShotsEqualClassMeanOracle) {
  // With every training example used, the prototypes are the class means
  // whatever the sampling, so accuracy is fixed by the oracle.
  const auto data = blobs(3, 6, 30, 5, 2.0, 11);
  const auto run = few_shot(data.dv, data.corpus, {6, 2, 3, ProtoMetric::kCosine});
  const auto train = labeled_split(data.corpus, Split::kTrain);
  const auto test = labeled_split(data.corpus, Split::kTest);
  oracle::Rows protos(3, std::vector<double>(5, 0.0));
  for (std::size_t i = 0; i < train.ids.size(); ++i)
    for (int j = 0; j < 5; ++j) protos[static_cast<std::size_t>(train.y[i])][static_cast<std::size_t>(j)] += data.dv.vectors(static_cast<Eigen::Index>(train.ids[i]), j) / 6.0;
  int hit = 0;
  for (std::size_t i = 0; i < test.ids.size(); ++i) {
    const Vector x = data.dv.row(test.ids[i]);
    hit += oracle::nearest_prototype(protos, std::vector<double>(x.begin(), x.end())) == test.y[i];
  }
  for (double v : run.values("accuracy")) EXPECT_NEAR(v, 100.0 * hit / static_cast<double>(test.ids.size()), 1e-12);
}

TEST(ConceptMatch, PerfectOracleEmbeddings) {
  DocumentVectorSet dv;
  dv.vectors = Matrix::Identity(4, 4);
  dv.vectors.row(2) = dv.vectors.row(0);
  dv.vectors.row(3) = dv.vectors.row(1);
  // (0,2) and (1,3) match with cosine 1; (0,3) and (1,2) are orthogonal.
  const std::vector<ConceptPair> pairs{{0, 2, true}, {1, 3, true}, {0, 3, false}, {1, 2, false}};
  const auto r = concept_match(dv, pairs);
  EXPECT_EQ(r.accuracy, 100.0);
  EXPECT_EQ(r.f1, 100.0);
  EXPECT_GT(r.threshold, 0.0);
  EXPECT_LE(r.threshold, 1.0);
}

TEST(ConceptMatch, IdenticalScoresGiveAllPositiveBaseline) {
  DocumentVectorSet dv;
  dv.vectors = Matrix::Ones(6, 3);
  const std::vector<ConceptPair> pairs{{0, 1, true}, {2, 3, false}, {4, 5, false}, {0, 5, true}, {1, 2, false}};
  const auto r = concept_match(dv, pairs);
  // Predict everything positive: tp=2, fp=3 -> F1 = 4/7.
  EXPECT_NEAR(r.f1, 100.0 * 4.0 / 7.0, 1e-12);
}

TEST(ConceptMatch, ZeroVectorIsNonMatchWithWarning) {
  DocumentVectorSet dv;
  dv.vectors = Matrix::Ones(3, 2);
  dv.vectors.row(2).setZero();
  testutil::WarningCapture warnings;
  const auto r = concept_match(dv, {{0, 1, true}, {0, 2, true}});
  EXPECT_EQ(warnings.messages.size(), 1u);
  EXPECT_NEAR(r.f1, 100.0 * 2.0 / 3.0, 1e-12);
}

TEST(Sts, PerTaskAndMacroAverage) {
  DocumentVectorSet dv;
  dv.vectors = Matrix(4, 2);
  dv.vectors << 1, 0, 1, 1, 0, 1, -1, 0.2;
  std::vector<StsPair> pairs;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      const double c = cosine(as_span(dv.row(a)), as_span(dv.row(b)));
      pairs.push_back({a, b, 2.5 + 2.5 * c, "same"});
      pairs.push_back({a, b, 2.5 - 2.5 * c, "flipped"});
    }
  const auto r = sts_eval(dv, pairs);
  EXPECT_NEAR(r.per_task.at("same"), 1.0, 1e-12);
  EXPECT_NEAR(r.per_task.at("flipped"), -1.0, 1e-12);
  EXPECT_NEAR(r.average, 0.0, 1e-12);
}

TEST(Sts, GoldOutOfRangeRejected) {
  DocumentVectorSet dv;
  dv.vectors = Matrix::Identity(2, 2);
  EXPECT_THROW(sts_eval(dv, {{0, 1, 7.0, "x"}, {0, 0, 1.0, "x"}}), DataError);
}

TEST(EvalRun, JsonRoundTripAndStatistics) {
  EvalRun run;
  run.protocol = "fewshot";
  run.config = {{"shots", 5}};
  run.metric_names = {"accuracy"};
  run.per_run = {{{"accuracy", 90.0}}, {{"accuracy", 94.0}}};
  EXPECT_EQ(run.mean().at("accuracy"), 92.0);
  EXPECT_NEAR(run.stddev().at("accuracy"), std::sqrt(8.0), 1e-12);
  const auto back = EvalRun::from_json(run.to_json());
  EXPECT_EQ(back.to_json(), run.to_json());
}
