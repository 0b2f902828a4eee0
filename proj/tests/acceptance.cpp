// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Runs without network access or transformer models.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <ctxd_scdv/anisotropy.hpp>
#include <ctxd_scdv/docvec.hpp>
#include <ctxd_scdv/eval.hpp>
#include <ctxd_scdv/gmm.hpp>
#include <ctxd_scdv/pipeline.hpp>
#include <ctxd_scdv/synthetic.hpp>
#include <ctxd_scdv/wsd.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ctxd;
namespace fs = std::filesystem;

namespace {

// Collects failed checks for one criterion; the first few are printed.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Matrix gaussian_rows(int n, int d, Rng& rng) {
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = standard_normal(rng);
  return x;
}

// ---------------------------------------------------------------- 1

void gmm_correctness(Check& c) {
  Rng rng(1001);
  double worst_sum = 0.0, worst_drop = 0.0, worst_post = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = 20 + static_cast<int>(uniform_index(rng, 481));  // 20..500
    const int d = 1 + static_cast<int>(uniform_index(rng, 16));
    int k = 1 + static_cast<int>(uniform_index(rng, 8));
    k = std::min(k, n);
    // Mixture of k random blobs with random scales.
    Matrix centers = gaussian_rows(k, d, rng) * 3.0;
    Matrix x(n, d);
    for (int i = 0; i < n; ++i) {
      const auto o = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(k)));
      for (int j = 0; j < d; ++j) x(i, j) = centers(o, j) + (0.3 + static_cast<double>(j % 3)) * standard_normal(rng);
    }
    const auto fit = fit_gmm(x, k, derive_seed(7, "acceptance-gmm", static_cast<std::uint64_t>(inst)));
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
      const double drop = fit.log_likelihood[i - 1] - fit.log_likelihood[i];
      worst_drop = std::max(worst_drop, drop);
      c.expect(drop <= 1e-8, "instance " + std::to_string(inst) + ": log-likelihood fell by " + fmt(drop) +
                                 " at iteration " + std::to_string(i));
    }
    const Matrix post = posteriors(fit.model, x);
    const Matrix cov = fit.model.covariance();
    const std::vector<double> w(fit.model.weights.data(), fit.model.weights.data() + k);
    for (Eigen::Index i = 0; i < post.rows(); ++i) {
      const double s = post.row(i).sum();
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      c.expect(std::abs(s - 1.0) <= 1e-6, "instance " + std::to_string(inst) + ": posterior row sums to " + fmt(s, 12));
      std::vector<double> xi(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) xi[static_cast<std::size_t>(j)] = x(i, j);
      const auto ref = oracle::bayes_posterior(fit.model.means, cov, w, xi);
      for (int o = 0; o < k; ++o) {
        const double diff = std::abs(post(i, o) - ref[static_cast<std::size_t>(o)]);
        worst_post = std::max(worst_post, diff);
        c.expect(diff <= 1e-10, "instance " + std::to_string(inst) + ": posterior differs from Bayes formula by " +
                                    fmt(diff));
      }
    }
  }
  c.note("50 instances; max |row sum - 1| " + fmt(worst_sum) + ", max LL drop " + fmt(worst_drop) +
         ", max posterior diff " + fmt(worst_post));
}

// ---------------------------------------------------------------- 2

void wsd_correctness(Check& c) {
  PlantedSpec spec;  // sigma 0.05
  const auto data = generate_planted(spec);
  WsdConfig cfg;
  cfg.tau = 0.8;
  const auto inv = induce_senses(data.store, cfg);

  int recovered = 0;
  double min_ari = 1.0;
  for (const auto& word : data.ambiguous_words) {
    const auto* w = inv.find(word);
    recovered += w->k() == spec.senses_per_ambiguous_word;
    std::vector<int> truth, got;
    for (const auto& t : w->tags) {
      truth.push_back(data.truth.at({t.doc_id, t.token_index}));
      got.push_back(static_cast<int>(t.sense));
    }
    min_ari = std::min(min_ari, oracle::adjusted_rand_index(truth, got));
  }
  const double share = static_cast<double>(recovered) / static_cast<double>(data.ambiguous_words.size());
  c.expect(share >= 0.95, "sense count recovered for " + fmt(100 * share) + "% of ambiguous words");
  c.expect(min_ari >= 0.9, "minimum per-word ARI " + fmt(min_ari));

  double max_cos = -1.0;
  std::size_t mismatched = 0, checked = 0;
  for (const auto& w : inv.words()) {
    const auto cents = oracle::to_rows(w.centroids);
    for (std::size_t a = 0; a < cents.size(); ++a)
      for (std::size_t b = a + 1; b < cents.size(); ++b) max_cos = std::max(max_cos, oracle::cosine(cents[a], cents[b]));
    const auto occ = data.store.occurrences_of(w.word);
    for (std::size_t i = 0; i < occ.size(); ++i) {
      const std::vector<double> x(occ[i].vec.begin(), occ[i].vec.end());
      mismatched += w.tags[i].sense != oracle::nearest_centroid(cents, x);
      ++checked;
    }
  }
  c.expect(max_cos < cfg.tau, "a centroid pair has cosine " + fmt(max_cos) + " >= tau");
  c.expect(mismatched == 0, std::to_string(mismatched) + " occurrences not tagged with their nearest centroid");
  c.note("recovery " + fmt(100 * share) + "%, min ARI " + fmt(min_ari) + ", max centroid cosine " + fmt(max_cos) +
         ", fixed point on " + std::to_string(checked) + " occurrences");
}

// ---------------------------------------------------------------- 3

void composition_correctness(Check& c) {
  PlantedSpec spec;
  spec.docs_per_class = 80;
  const auto data = generate_planted(spec);
  const auto inv = induce_senses(data.store, WsdConfig{});
  const auto entries = sense_vocabulary(inv);
  const Matrix words = sense_matrix(entries, inv.dim());
  const auto t = fit_anisotropy(words, 6);
  const int K = 5;
  const auto fit = fit_gmm(apply_anisotropy_rows(t, words), K, 3);
  const auto streams = inv.tagged_streams(data.corpus);
  const auto idf = compute_idf(streams);
  const auto table = build_word_topic_table(inv, t, fit.model, idf, IdfDomain::kSense);
  const auto set = build_document_vectors(streams, table, Averaging::kOccurrence);
  const std::size_t d = inv.dim();

  c.expect(set.dim() == static_cast<std::size_t>(K) * d,
           "document vectors have dimension " + std::to_string(set.dim()) + ", expected K*d = " + std::to_string(K * d));

  // idf by direct document counting.
  std::map<std::string, oracle::TokenInfo> info;
  for (const auto& e : entries) {
    const auto* entry = table.find(e.token);
    if (!entry) continue;
    std::size_t df = 0;
    for (const auto& s : streams) df += std::find(s.begin(), s.end(), e.token) != s.end();
    const double expected_idf = std::log(static_cast<double>(streams.size()) / static_cast<double>(df));
    c.expect(std::abs(entry->idf - expected_idf) <= 1e-15, "idf of " + e.token);
    info[e.token] = {std::vector<double>(entry->vec.begin(), entry->vec.end()),
                     std::vector<double>(entry->posterior.begin(), entry->posterior.end()), entry->idf};
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto ref = oracle::document_vector(streams[i], info, static_cast<std::size_t>(K), d);
    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      diff = std::max(diff, std::abs(set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - ref[j]));
      scale = std::max(scale, std::abs(ref[j]));
    }
    const double rel = scale > 0.0 ? diff / scale : diff;
    worst = std::max(worst, rel);
    c.expect(rel <= 1e-12, "document " + std::to_string(i) + " differs from recomputation by " + fmt(rel) + " relative");
  }

  // A one-token document is that token's word-topic vector.
  std::size_t singles = 0;
  for (const auto& [tok, _] : info) {
    const auto one = build_document_vectors({{tok}}, table, Averaging::kOccurrence);
    c.expect(one.row(0) == table.word_topic_vector(tok), "single-occurrence document of " + tok);
    ++singles;
  }

  // Context pairs below the threshold become two senses.
  std::string split;
  for (const auto& ex : reference_sense_examples()) {
    const auto fx = sense_example_fixture({ex});
    WsdConfig cfg;
    cfg.tau = 0.8;
    const auto fx_inv = induce_senses(fx.store, cfg);
    const int k = fx_inv.find(ex.word)->k();
    c.expect(k == 2, "'" + ex.word + "' (context cosine " + fmt(ex.cosine, 2) + ") got " + std::to_string(k) + " senses");
    split += " " + ex.word + "=" + std::to_string(k);
  }
  c.note("dim " + std::to_string(set.dim()) + ", max relative diff " + fmt(worst) + " over " +
         std::to_string(set.size()) + " documents, " + std::to_string(singles) + " single-token checks, senses:" + split);
}

// ---------------------------------------------------------------- 4

// Cone-shaped data: a shared offset plus a few dominant directions.
Matrix cone_rows(int n, int d, Rng& rng) {
  Matrix x = gaussian_rows(n, d, rng) * 0.3;
  const Vector offset = testutil::random_unit(rng, d) * 2.0;
  for (int comp = 0; comp < 4; ++comp) {
    const Vector dir = testutil::random_unit(rng, d);
    for (int i = 0; i < n; ++i) x.row(i) += (1.6 - 0.3 * comp) * standard_normal(rng) * dir.transpose();
  }
  x.rowwise() += offset.transpose();
  return x;
}

void anisotropy_correctness(Check& c) {
  Rng rng(4004);
  double worst_proj = 0.0;
  std::string cosines;
  int sets = 0;
  for (const auto& [n, d] : std::vector<std::pair<int, int>>{{400, 32}, {150, 64}, {60, 200}, {1000, 16}}) {
    const Matrix x = cone_rows(n, d, rng);
    const double before = mean_pairwise_cosine(x, 100000, 1);
    for (int k : {1, 6}) {
      const auto t = fit_anisotropy(x, k);
      const Matrix y = apply_anisotropy_rows(t, x);
      worst_proj = std::max(worst_proj, (y * t.components.transpose()).cwiseAbs().maxCoeff());
      for (int probe = 0; probe < 20; ++probe) {
        Vector p(d);
        for (auto& v : p) v = 5.0 * standard_normal(rng);
        const Vector q = apply_anisotropy(t, std::vector<double>(p.begin(), p.end()));
        worst_proj = std::max(worst_proj, (t.components * q).cwiseAbs().maxCoeff());
      }
      const double after = mean_pairwise_cosine(y, 100000, 1);
      c.expect(after < before, std::to_string(n) + "x" + std::to_string(d) + " k=" + std::to_string(k) +
                                   ": mean cosine " + fmt(before) + " -> " + fmt(after));
      cosines += " " + fmt(before, 3) + "->" + fmt(after, 3);
    }
    ++sets;
  }
  c.expect(worst_proj < 1e-9, "projection onto a removed component " + fmt(worst_proj));
  c.note(std::to_string(sets) + " sets, max projection " + fmt(worst_proj) + ", mean cosine" + cosines);
}

// ---------------------------------------------------------------- 5

PipelineConfig planted_config(const std::string& root, const std::string& work) {
  PipelineConfig cfg;
  cfg.corpus = root + "/corpus.jsonl";
  cfg.store = root + "/store.ceb";
  cfg.work_dir = work;
  cfg.K = 4;
  return cfg;
}

void end_to_end(Check& c) {
  testutil::TempDir dir;
  PlantedSpec spec;  // 2 classes x 200 documents
  const auto data = generate_planted(spec);
  save_corpus_jsonl(data.corpus, dir.file("corpus.jsonl"));
  write_store(data.store, dir.file("store.ceb"));

  const auto cfg = planted_config(dir.path().string(), dir.file("work"));
  const auto r = run_pipeline(cfg);
  double full = -1, limited = -1, shot5 = -1;
  for (const auto& run : r.runs) {
    const double acc = run.mean().at("accuracy");
    if (run.protocol == "full") full = acc;
    if (run.protocol == "limited" && std::abs(run.config["fraction"].get<double>() - 0.1) < 1e-12) limited = acc;
    if (run.protocol == "fewshot" && run.config["shots"].get<int>() == 5) shot5 = acc;
  }
  c.expect(r.vectors.size() == 400, "expected 400 document vectors");
  c.expect(full >= 95.0, "full-data accuracy " + fmt(full));
  c.expect(limited >= 90.0, "10% accuracy " + fmt(limited));
  c.expect(shot5 >= 90.0, "5-shot accuracy " + fmt(shot5));

  // Every repeat's subsamples grow by inclusion.
  const auto corpus = load_corpus(cfg.work_dir + "/corpus.jsonl", CorpusFormat::kJsonl);
  const auto train = labeled_split(corpus, Split::kTrain);
  int chains = 0;
  for (int rep = 0; rep < cfg.eval.repeats_limited; ++rep) {
    const auto seed = derive_seed(derive_seed(cfg.seed, "eval"), "classify", static_cast<std::uint64_t>(rep));
    std::vector<std::size_t> prev;
    for (double f : {0.1, 0.2, 0.3, 0.4, 0.5, 1.0}) {
      const auto cur = nested_subsample(train, f, seed);
      c.expect(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()),
               "repeat " + std::to_string(rep) + ": subsample at " + fmt(f) + " is not a superset");
      prev = cur;
    }
    ++chains;
  }
  // The recorded training sizes follow the same chain.
  for (const auto& run : r.runs)
    if (run.protocol == "limited" || run.protocol == "full")
      for (std::size_t rep = 0; rep < run.per_run.size(); ++rep) {
        const auto seed = derive_seed(derive_seed(cfg.seed, "eval"), "classify", rep);
        const auto expect = nested_subsample(train, run.config["fraction"].get<double>(), seed).size();
        c.expect(run.per_run[rep]["train_size"].get<std::size_t>() == expect, "recorded train size mismatch");
      }

  // Second run in a fresh directory with a different worker count.
  const auto cfg2 = planted_config(dir.path().string(), dir.file("work2"));
  const char* prev_threads = std::getenv("CTXD_SCDV_THREADS");
  const std::string saved = prev_threads ? prev_threads : "";
  ::setenv("CTXD_SCDV_THREADS", "3", 1);
  run_pipeline(cfg2);
  if (prev_threads) ::setenv("CTXD_SCDV_THREADS", saved.c_str(), 1);
  else ::unsetenv("CTXD_SCDV_THREADS");
  int identical = 0;
  for (const char* f : {"docvec.dvb", "senses.jsonl", "gmm.gmb", "aniso.atb", "results/classify_100.json",
                        "results/classify_10.json", "results/fewshot_5.json"}) {
    const bool same = testutil::read_bytes(cfg.work_dir + "/" + f) == testutil::read_bytes(cfg2.work_dir + "/" + f);
    c.expect(same, std::string(f) + " differs between runs");
    identical += same;
  }
  c.note("full " + fmt(full) + "%, 10% " + fmt(limited) + "%, 5-shot " + fmt(shot5) + "%, " + std::to_string(chains) +
         " nested chains, " + std::to_string(identical) + "/7 artifacts byte-identical on rerun");
}

// ---------------------------------------------------------------- 6

void eval_harness(Check& c) {
  // Pearson.
  const std::vector<double> gold{0.0, 1.5, 2.0, 3.25, 5.0};
  std::vector<double> neg;
  for (double g : gold) neg.push_back(-g);
  c.expect(pearson(gold, gold) == 1.0, "pearson(gold, gold) != 1");
  c.expect(pearson(neg, gold) == -1.0, "pearson(-gold, gold) != -1");
  c.expect(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == 1.0, "pearson on (1,2),(2,4),(3,6)");

  // Few-shot predictions against a from-scratch prototype scan.
  Rng rng(6006);
  std::size_t compared = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int classes = 2 + static_cast<int>(uniform_index(rng, 5));
    const int shots = 1 + static_cast<int>(uniform_index(rng, 5));
    const int dim = 2 + static_cast<int>(uniform_index(rng, 12));
    std::vector<Document> docs;
    std::vector<Vector> rows;
    std::vector<Vector> centers;
    for (int k = 0; k < classes; ++k) centers.push_back(testutil::random_unit(rng, dim));
    for (int i = 0; i < 12; ++i)
      for (int k = 0; k < classes; ++k) {
        Document d;
        d.source_id = static_cast<std::int64_t>(docs.size());
        d.tokens = {"x"};
        d.label = "c" + std::to_string(k);
        d.split = i < 8 ? Split::kTrain : Split::kTest;
        docs.push_back(std::move(d));
        Vector v = centers[static_cast<std::size_t>(k)];
        for (auto& e : v) e += 0.8 * standard_normal(rng);
        rows.push_back(v);
      }
    const Corpus corpus(std::move(docs));
    DocumentVectorSet dv;
    dv.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) dv.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    FewShotConfig fc;
    fc.shots = shots;
    fc.repeats = 2;
    fc.seed = static_cast<std::uint64_t>(inst);
    fc.record_predictions = true;
    const auto run = few_shot(dv, corpus, fc);
    const auto test = labeled_split(corpus, Split::kTest);
    const auto& labels = corpus.label_set();
    for (const auto& row : run.per_run) {
      const auto support = row["support"].get<std::vector<std::vector<std::size_t>>>();
      const auto pred = row["predictions"].get<std::vector<int>>();
      oracle::Rows protos(static_cast<std::size_t>(classes), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
      for (int k = 0; k < classes; ++k) {
        const auto& ids = support[static_cast<std::size_t>(k)];
        std::set<std::size_t> distinct(ids.begin(), ids.end());
        c.expect(ids.size() == static_cast<std::size_t>(shots) && distinct.size() == ids.size(), "support size");
        for (std::size_t id : ids) {
          const auto& doc = corpus.doc(id);
          c.expect(doc.split == Split::kTrain && *doc.label == labels[static_cast<std::size_t>(k)],
                   "support document from the wrong class or split");
          for (int j = 0; j < dim; ++j) protos[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] += dv.vectors(static_cast<Eigen::Index>(id), j) / shots;
        }
      }
      for (std::size_t i = 0; i < test.ids.size(); ++i) {
        const Vector x = dv.row(test.ids[i]);
        const int want = oracle::nearest_prototype(protos, std::vector<double>(x.begin(), x.end()));
        c.expect(pred[i] == want, "instance " + std::to_string(inst) + ": prediction differs from oracle");
        ++compared;
      }
    }
  }

  // tune_C: perfectly separable folds tie at F1 = 1 and the smallest C wins,
  // whatever order the grid is given in.
  {
    Matrix x(60, 3);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
      y[static_cast<std::size_t>(i)] = i % 3;
      x.row(i) = Eigen::RowVector3d::Unit(i % 3) * 5.0 + 0.1 * Eigen::RowVector3d(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    }
    const auto res = tune_C(x, y, 3, {100.0, 1.0, 0.01, 10.0, 0.1}, 5);
    bool all_perfect = true;
    for (const auto& [C, s] : res.scores) all_perfect = all_perfect && s == 1.0;
    c.expect(all_perfect, "separable data did not score F1 = 1 at every C");
    c.expect(res.best_C == 0.01, "tie-break chose C = " + fmt(res.best_C));
  }
  // Stratification: per class, fold counts differ by at most one.
  int label_sets = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> y;
    const int classes = 2 + trial % 5;
    for (int k = 0; k < classes; ++k)
      for (int i = 0, n = 5 + static_cast<int>(uniform_index(rng, 40)); i < n; ++i) y.push_back(k);
    shuffle(y.begin(), y.end(), rng);
    const auto folds = stratified_folds(y, 5, static_cast<std::uint64_t>(trial));
    for (int k = 0; k < classes; ++k) {
      std::vector<int> count(5, 0);
      for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == k) ++count[static_cast<std::size_t>(folds[i])];
      const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
      c.expect(*hi - *lo <= 1, "class " + std::to_string(k) + " unevenly spread over folds");
    }
    ++label_sets;
  }
  c.note("pearson +1/-1 exact, " + std::to_string(compared) + " few-shot predictions checked, tie-break C=0.01, " +
         std::to_string(label_sets) + " stratified label sets");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"1 GMM correctness", gmm_correctness},
      {"2 WSD correctness", wsd_correctness},
      {"3 Composition correctness", composition_correctness},
      {"4 Anisotropy", anisotropy_correctness},
      {"5 End-to-end planted pipeline", end_to_end},
      {"6 Eval harness oracles", eval_harness},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      testutil::WarningCapture quiet;
      fn(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << fmt(secs, 3) << " s)";
    for (const auto& n : c.notes) std::cout << ": " << n;
    std::cout << '\n';
    for (std::size_t i = 0; i < std::min<std::size_t>(c.failures.size(), 5); ++i) std::cout << "    " << c.failures[i] << '\n';
    if (c.failures.size() > 5) std::cout << "    ... " << c.failures.size() - 5 << " more\n";
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
