#pragma once

// Evaluation protocols: CV-tuned one-vs-rest linear SVM (full and limited
// data), prototypical few-shot, concept matching and STS correlation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "docvec.hpp"
#include "error.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "vector_math.hpp"

namespace ctxd {

// ---------------------------------------------------------------- metrics

inline double accuracy(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw DataError("accuracy: label vectors are empty or differ in length");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Unweighted mean of per-class F1 over the classes that occur in either
/// vector. A class with no true or predicted positives among them scores 0.
inline double macro_f1(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw DataError("macro_f1: label vectors are empty or differ in length");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(pred.begin(), pred.end());
  double total = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      else if (pred[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return total / static_cast<double>(classes.size());
}

/// Binary F1 with `true` as the positive class.
inline double binary_f1(const std::vector<bool>& truth, const std::vector<bool>& pred) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (truth[i]) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

/// Sample Pearson correlation. Zero variance in either input is an error.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: inputs differ in length");
  if (x.size() < 2) throw DataError("pearson: need at least 2 pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw NumericError("pearson: correlation undefined for zero-variance scores");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------- linear SVM

struct LinearModel {
  Matrix weights;  // classes x features
  Vector bias;     // classes
  double C = 1.0;

  int num_classes() const { return static_cast<int>(weights.rows()); }

  Vector scores(const Eigen::Ref<const Vector>& x) const { return weights * x + bias; }

  /// argmax score; ties go to the lowest class index (smallest label, since
  /// class indices follow the sorted label set).
  int predict(const Eigen::Ref<const Vector>& x) const {
    const Vector s = scores(x);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < s.size(); ++c)
      if (s[c] > s[best]) best = c;
    return static_cast<int>(best);
  }

  std::vector<int> predict_rows(const Matrix& x) const {
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(x.row(i).transpose());
    return out;
  }
};

struct LinearSvmConfig {
  int epochs = 100;
};

namespace detail {

// Pegasos-style subgradient descent on
//   lambda/2 |(w, b)|^2 + 1/n sum_i max(0, 1 - y_i (w.x_i + b)),  lambda = 1/(C n)
// with step 1/(lambda t) and the ball projection. w is kept as scale * v so the
// shrink step costs O(1).
inline void train_binary(const Matrix& x, const std::vector<double>& y, double lambda,
                         const std::vector<std::vector<std::size_t>>& orders,
                         Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> w_out, double& b_out) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(x.cols());
  double scale = 1.0;
  double b = 0.0;
  double sq = 0.0;  // |(w, b)|^2
  std::uint64_t t = 0;
  const double radius2 = 1.0 / lambda;
  for (const auto& order : orders) {
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const auto row = x.row(static_cast<Eigen::Index>(i));
      double wx = scale * v.dot(row);
      const double margin = y[i] * (wx + b);
      const double shrink = 1.0 - 1.0 / static_cast<double>(t);
      if (shrink == 0.0) {
        v.setZero();
        scale = 1.0;
        b = 0.0;
        sq = 0.0;
        wx = 0.0;
      } else {
        scale *= shrink;
        b *= shrink;
        sq *= shrink * shrink;
        wx *= shrink;
      }
      if (margin < 1.0) {
        const double step = eta * y[i];
        // |w + step x|^2 = |w|^2 + 2 step w.x + step^2 |x|^2
        sq += 2.0 * step * wx + step * step * row.squaredNorm();
        v += (step / scale) * row;
        const double nb = b + step;
        sq += nb * nb - b * b;
        b = nb;
      }
      if (sq > radius2) {
        const double f = std::sqrt(radius2 / sq);
        scale *= f;
        b *= f;
        sq = radius2;
      }
      if (scale < 1e-100) {
        v *= scale;
        scale = 1.0;
      }
    }
    sq = scale * scale * v.squaredNorm() + b * b;
  }
  w_out = scale * v;
  b_out = b;
}

}  // namespace detail

/// One-vs-rest L2-regularized hinge-loss classifiers. `y` holds class indices
/// in [0, num_classes).
inline LinearModel train_linear(const Matrix& x, const std::vector<int>& y, int num_classes, double C,
                                std::uint64_t seed, const LinearSvmConfig& cfg = {}) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty())
    throw DataError("train_linear: features and labels differ in count or are empty");
  if (!x.allFinite()) throw DataError("train_linear: features contain NaN or infinite values");
  if (!(C > 0.0)) throw ConfigError("train_linear: C must be > 0");
  std::set<int> present(y.begin(), y.end());
  if (present.size() < 2) throw DataError("train_linear: need at least 2 classes, got " + std::to_string(present.size()));
  for (int c : y)
    if (c < 0 || c >= num_classes) throw DataError("train_linear: class index out of range");

  const std::size_t n = y.size();
  std::vector<std::vector<std::size_t>> orders(static_cast<std::size_t>(cfg.epochs));
  for (int e = 0; e < cfg.epochs; ++e) {
    auto& order = orders[static_cast<std::size_t>(e)];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(e)));
    shuffle(order.begin(), order.end(), rng);
  }
  const double lambda = 1.0 / (C * static_cast<double>(n));
  LinearModel m;
  m.C = C;
  m.weights = Matrix::Zero(num_classes, x.cols());
  m.bias = Vector::Zero(num_classes);
  std::vector<double> target(n);
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) target[i] = y[i] == c ? 1.0 : -1.0;
    double b = 0.0;
    detail::train_binary(x, target, lambda, orders, m.weights.row(c), b);
    m.bias[c] = b;
  }
  return m;
}

/// Fold id per example: each class's examples are shuffled and dealt
/// round-robin, continuing the deal across classes so fold sizes stay even.
inline std::vector<int> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  std::vector<int> out(y.size(), 0);
  std::size_t deal = 0;
  for (auto& [c, idx] : by_class) {
    Rng rng(derive_seed(seed, "fold", static_cast<std::uint64_t>(c)));
    shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) out[i] = static_cast<int>(deal++ % static_cast<std::size_t>(folds));
  }
  return out;
}

struct TuneResult {
  double best_C = 0.0;
  std::vector<std::pair<double, double>> scores;  // (C, mean macro-F1), ascending C
};

inline const std::vector<double>& default_C_grid() {
  static const std::vector<double> grid{0.01, 0.1, 1.0, 10.0, 100.0};
  return grid;
}

/// Stratified 5-fold CV on macro-F1; ties go to the smallest C.
inline TuneResult tune_C(const Matrix& x, const std::vector<int>& y, int num_classes,
                         std::vector<double> grid, std::uint64_t seed, const LinearSvmConfig& cfg = {},
                         int folds = 5) {
  if (grid.empty()) throw ConfigError("tune_C: empty C grid");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  TuneResult r;
  if (grid.size() == 1) {
    r.best_C = grid[0];
    r.scores.emplace_back(grid[0], std::numeric_limits<double>::quiet_NaN());
    return r;
  }
  if (y.size() < static_cast<std::size_t>(folds))
    throw DataError("tune_C: need at least " + std::to_string(folds) + " training examples");
  const auto fold_of = stratified_folds(y, folds, seed);
  // Every (C, fold) fit is independent; each writes its own slot and the
  // reduction below runs in grid order.
  const std::size_t nf = static_cast<std::size_t>(folds);
  std::vector<double> fold_score(grid.size() * nf, std::numeric_limits<double>::quiet_NaN());
  parallel_for(fold_score.size(), [&](std::size_t job) {
    const double C = grid[job / nf];
    const int f = static_cast<int>(job % nf);
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    if (te.empty()) return;
    std::vector<int> ytr, yte;
    for (auto i : tr) ytr.push_back(y[static_cast<std::size_t>(i)]);
    for (auto i : te) yte.push_back(y[static_cast<std::size_t>(i)]);
    if (std::set<int>(ytr.begin(), ytr.end()).size() < 2) return;
    const Matrix xtr = x(tr, Eigen::all);
    const Matrix xte = x(te, Eigen::all);
    const auto model = train_linear(xtr, ytr, num_classes, C, derive_seed(seed, "cv", static_cast<std::uint64_t>(f)), cfg);
    fold_score[job] = macro_f1(yte, model.predict_rows(xte));
  });
  double best = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double C = grid[g];
    double total = 0.0;
    int used = 0;
    for (std::size_t f = 0; f < nf; ++f) {
      const double v = fold_score[g * nf + f];
      if (std::isnan(v)) continue;
      total += v;
      ++used;
    }
    if (used == 0) throw DataError("tune_C: no usable folds (each training fold needs 2 classes)");
    const double score = total / used;
    r.scores.emplace_back(C, score);
    if (score > best) {
      best = score;
      r.best_C = C;
    }
  }
  return r;
}

// ---------------------------------------------------------------- runs

/// One protocol execution: per-run metric rows plus their mean and sample
/// standard deviation.
struct EvalRun {
  std::string protocol;
  nlohmann::json config = nlohmann::json::object();
  std::vector<nlohmann::json> per_run;
  std::vector<std::string> metric_names;

  std::map<std::string, double> mean() const {
    std::map<std::string, double> out;
    for (const auto& name : metric_names) out[name] = sample_mean(values(name));
    return out;
  }
  std::map<std::string, double> stddev() const {
    std::map<std::string, double> out;
    for (const auto& name : metric_names) out[name] = sample_stddev(values(name));
    return out;
  }
  std::vector<double> values(const std::string& name) const {
    std::vector<double> out;
    for (const auto& r : per_run)
      if (r.contains(name)) out.push_back(r[name].get<double>());
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["protocol"] = protocol;
    j["config"] = config;
    j["per_run"] = per_run;
    j["metrics"] = metric_names;
    j["mean"] = mean();
    j["std"] = stddev();
    return j;
  }

  static EvalRun from_json(const nlohmann::json& j) {
    EvalRun r;
    r.protocol = j.at("protocol").get<std::string>();
    r.config = j.value("config", nlohmann::json::object());
    for (const auto& row : j.at("per_run")) r.per_run.push_back(row);
    r.metric_names = j.at("metrics").get<std::vector<std::string>>();
    return r;
  }

  void write_csv(std::ostream& out) const {
    std::set<std::string> cols;
    for (const auto& r : per_run)
      for (auto it = r.begin(); it != r.end(); ++it) cols.insert(it.key());
    out << "run";
    for (const auto& c : cols) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < per_run.size(); ++i) {
      out << i;
      for (const auto& c : cols) {
        out << ',';
        if (per_run[i].contains(c)) {
          const auto& v = per_run[i][c];
          out << (v.is_string() ? v.get<std::string>() : v.dump());
        }
      }
      out << '\n';
    }
  }
};

/// Labeled documents of one split: row ids and class indices into the
/// corpus label set.
struct LabeledSplit {
  std::vector<std::size_t> ids;
  std::vector<int> y;
};

inline LabeledSplit labeled_split(const Corpus& corpus, Split s) {
  LabeledSplit out;
  const auto& labels = corpus.label_set();
  for (const auto& d : corpus.docs()) {
    if (d.split != s || !d.label) continue;
    const auto it = std::lower_bound(labels.begin(), labels.end(), *d.label);
    out.ids.push_back(d.id);
    out.y.push_back(static_cast<int>(it - labels.begin()));
  }
  return out;
}

inline Matrix gather_rows(const DocumentVectorSet& dv, const std::vector<std::size_t>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), dv.vectors.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= dv.size()) throw DataError("document " + std::to_string(ids[i]) + " has no vector");
    out.row(static_cast<Eigen::Index>(i)) = dv.vectors.row(static_cast<Eigen::Index>(ids[i]));
  }
  return out;
}

/// Stratified nested subsample of `split`: every class keeps the first
/// ceil(fraction * n_c) of a per-class permutation fixed by `seed`, so for a
/// given seed a smaller fraction always yields a subset of a larger one.
inline std::vector<std::size_t> nested_subsample(const LabeledSplit& split, double fraction,
                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < split.ids.size(); ++i) by_class[split.y[i]].push_back(i);
  if (fraction * static_cast<double>(split.ids.size()) < static_cast<double>(by_class.size()))
    throw DataError("fraction " + std::to_string(fraction) + " of " + std::to_string(split.ids.size()) +
                    " training documents cannot cover all " + std::to_string(by_class.size()) + " classes");
  std::vector<std::size_t> out;
  for (auto& [c, idx] : by_class) {
    Rng rng(derive_seed(seed, "subsample", static_cast<std::uint64_t>(c)));
    shuffle(idx.begin(), idx.end(), rng);
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9)), 1, idx.size());
    for (std::size_t i = 0; i < take; ++i) out.push_back(idx[i]);
  }
  std::sort(out.begin(), out.end());
  return out;  // positions into split.ids
}

struct ClassifyConfig {
  double fraction = 1.0;
  int repeats = 5;
  std::uint64_t seed = 42;
  std::vector<double> C_grid = default_C_grid();
  LinearSvmConfig svm;
};

/// Per repeat: nested stratified subsample of the training split, tune C by
/// CV, train, and score accuracy and macro-F1 (both in percent) on the test
/// split.
inline EvalRun evaluate_classification(const DocumentVectorSet& dv, const Corpus& corpus,
                                       const ClassifyConfig& cfg) {
  const auto train = labeled_split(corpus, Split::kTrain);
  const auto test = labeled_split(corpus, Split::kTest);
  if (train.ids.empty() || test.ids.empty())
    throw DataError("classification needs labeled train and test documents");
  if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
  const int num_classes = static_cast<int>(corpus.label_set().size());
  const Matrix xte = gather_rows(dv, test.ids);

  EvalRun run;
  run.protocol = cfg.fraction < 1.0 ? "limited" : "full";
  run.config = {{"fraction", cfg.fraction}, {"repeats", cfg.repeats}, {"seed", cfg.seed},
                {"C_grid", cfg.C_grid}, {"epochs", cfg.svm.epochs}};
  run.metric_names = {"accuracy", "macro_f1"};
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = derive_seed(cfg.seed, "classify", static_cast<std::uint64_t>(r));
    const auto pos = nested_subsample(train, cfg.fraction, seed);
    std::vector<std::size_t> ids;
    std::vector<int> y;
    for (std::size_t p : pos) {
      ids.push_back(train.ids[p]);
      y.push_back(train.y[p]);
    }
    const Matrix xtr = gather_rows(dv, ids);
    const auto tuned = tune_C(xtr, y, num_classes, cfg.C_grid, seed, cfg.svm);
    const auto model = train_linear(xtr, y, num_classes, tuned.best_C, seed, cfg.svm);
    const auto pred = model.predict_rows(xte);
    run.per_run.push_back({{"repeat", r},
                           {"seed", seed},
                           {"train_size", ids.size()},
                           {"C", tuned.best_C},
                           {"accuracy", 100.0 * accuracy(test.y, pred)},
                           {"macro_f1", 100.0 * macro_f1(test.y, pred)}});
  }
  return run;
}

// ---------------------------------------------------------------- few-shot

enum class ProtoMetric { kCosine, kEuclidean };

inline ProtoMetric parse_proto_metric(std::string_view s) {
  if (s == "cosine") return ProtoMetric::kCosine;
  if (s == "euclidean") return ProtoMetric::kEuclidean;
  throw ConfigError("unknown few-shot metric '" + std::string(s) + "' (expected cosine|euclidean)");
}

/// Index of the closest prototype row; ties go to the lowest index.
inline int nearest_prototype(const Matrix& prototypes, const Eigen::Ref<const Vector>& x, ProtoMetric metric) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  const double xn = x.norm();
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    double score;
    if (metric == ProtoMetric::kCosine) {
      const double pn = prototypes.row(c).norm();
      score = (xn > 0.0 && pn > 0.0) ? prototypes.row(c).dot(x) / (pn * xn) : 0.0;
    } else {
      score = -(prototypes.row(c).transpose() - x).squaredNorm();
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(c);
    }
  }
  return best;
}

struct FewShotConfig {
  int shots = 5;
  int repeats = 5;
  std::uint64_t seed = 42;
  ProtoMetric metric = ProtoMetric::kCosine;
  bool record_predictions = false;  // adds "support" and "predictions" to each run row
};

/// K-shot N-way prototypical classification: per repeat, sample `shots`
/// training documents per class, average them into prototypes and label each
/// test document by its nearest prototype.
inline EvalRun few_shot(const DocumentVectorSet& dv, const Corpus& corpus, const FewShotConfig& cfg) {
  if (cfg.shots < 1) throw ConfigError("shots must be >= 1");
  if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
  const auto train = labeled_split(corpus, Split::kTrain);
  const auto test = labeled_split(corpus, Split::kTest);
  if (test.ids.empty()) throw DataError("few-shot needs labeled test documents");
  const auto& labels = corpus.label_set();
  const int num_classes = static_cast<int>(labels.size());
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < train.ids.size(); ++i) by_class[static_cast<std::size_t>(train.y[i])].push_back(train.ids[i]);
  for (int c = 0; c < num_classes; ++c)
    if (by_class[static_cast<std::size_t>(c)].size() < static_cast<std::size_t>(cfg.shots))
      throw DataError("class '" + labels[static_cast<std::size_t>(c)] + "' has " +
                      std::to_string(by_class[static_cast<std::size_t>(c)].size()) + " training examples, fewer than " +
                      std::to_string(cfg.shots) + " shots");

  EvalRun run;
  run.protocol = "fewshot";
  run.config = {{"shots", cfg.shots}, {"repeats", cfg.repeats}, {"seed", cfg.seed},
                {"metric", cfg.metric == ProtoMetric::kCosine ? "cosine" : "euclidean"}};
  run.metric_names = {"accuracy"};
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = derive_seed(cfg.seed, "fewshot", static_cast<std::uint64_t>(r));
    Matrix protos = Matrix::Zero(num_classes, dv.vectors.cols());
    std::vector<std::vector<std::size_t>> support(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
      auto idx = by_class[static_cast<std::size_t>(c)];
      Rng rng(derive_seed(seed, "class", static_cast<std::uint64_t>(c)));
      shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(cfg.shots));
      for (std::size_t id : idx) protos.row(c) += dv.vectors.row(static_cast<Eigen::Index>(id));
      protos.row(c) /= cfg.shots;
      support[static_cast<std::size_t>(c)] = std::move(idx);
    }
    std::vector<int> pred;
    pred.reserve(test.ids.size());
    for (std::size_t id : test.ids) pred.push_back(nearest_prototype(protos, dv.vectors.row(static_cast<Eigen::Index>(id)).transpose(), cfg.metric));
    nlohmann::json row{{"repeat", r}, {"seed", seed}, {"accuracy", 100.0 * accuracy(test.y, pred)}};
    if (cfg.record_predictions) {
      row["support"] = support;
      row["predictions"] = pred;
    }
    run.per_run.push_back(std::move(row));
  }
  return run;
}

// ---------------------------------------------------------------- concept matching

struct ConceptPair {
  std::size_t concept_doc;
  std::size_t project_doc;
  bool match;
};

struct ConceptResult {
  double accuracy = 0.0;   // percent
  double f1 = 0.0;         // percent
  double threshold = 0.0;
};

/// Cosine scores thresholded at theta in {0.00, 0.01, ..., 1.00}; reports the
/// F1-maximizing theta (smallest on ties). A pair with a zero vector is
/// always predicted as a non-match.
inline ConceptResult concept_match(const DocumentVectorSet& dv, const std::vector<ConceptPair>& pairs) {
  if (pairs.empty()) throw DataError("concept_match: no pairs");
  std::vector<double> score(pairs.size());
  std::vector<bool> usable(pairs.size(), true);
  std::vector<bool> truth(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.concept_doc >= dv.size() || p.project_doc >= dv.size())
      throw DataError("concept pair " + std::to_string(i) + " references a document without a vector");
    const Vector a = dv.row(p.concept_doc);
    const Vector b = dv.row(p.project_doc);
    truth[i] = p.match;
    if (a.norm() == 0.0 || b.norm() == 0.0) {
      usable[i] = false;
      log_warning("concept pair " + std::to_string(i) + " has a zero document vector; scored as non-match");
      continue;
    }
    score[i] = cosine(as_span(a), as_span(b));
  }
  ConceptResult best{0.0, -1.0, 0.0};
  std::vector<bool> pred(pairs.size());
  for (int step = 0; step <= 100; ++step) {
    const double theta = step / 100.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pred[i] = usable[i] && score[i] >= theta;
      correct += pred[i] == truth[i];
    }
    const double f1 = 100.0 * binary_f1(truth, pred);
    if (f1 > best.f1) best = {100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size()), f1, theta};
  }
  return best;
}

// ---------------------------------------------------------------- STS

struct StsPair {
  std::size_t a;
  std::size_t b;
  double gold;
  std::string task;
};

struct StsResult {
  std::map<std::string, double> per_task;  // Pearson r
  double average = 0.0;                    // macro average over tasks
};

/// Cosine of the two sentence vectors against the gold scores, per task and
/// macro-averaged.
inline StsResult sts_eval(const DocumentVectorSet& dv, const std::vector<StsPair>& pairs) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_task;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.a >= dv.size() || p.b >= dv.size())
      throw DataError("STS pair " + std::to_string(i) + " references a document without a vector");
    if (!(p.gold >= 0.0 && p.gold <= 5.0))
      throw DataError("STS pair " + std::to_string(i) + " has gold score outside [0, 5]");
    auto& [machine, gold] = by_task[p.task];
    machine.push_back(cosine(as_span(dv.row(p.a)), as_span(dv.row(p.b))));
    gold.push_back(p.gold);
  }
  if (by_task.empty()) throw DataError("sts_eval: no pairs");
  StsResult r;
  for (const auto& [task, mg] : by_task) {
    try {
      r.per_task[task] = pearson(mg.first, mg.second);
    } catch (const Error& e) {
      throw NumericError("STS task '" + task + "': " + e.what());
    }
    r.average += r.per_task[task];
  }
  r.average /= static_cast<double>(r.per_task.size());
  return r;
}

}  // namespace ctxd
