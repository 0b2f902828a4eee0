#pragma once

// Word-sense induction over contextual occurrence vectors.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "embed_store.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "spherical_kmeans.hpp"
#include "vector_math.hpp"

namespace ctxd {

struct SenseLimits {
  int k_max = 10;
  int min_occurrences = 10;
  int min_cluster_size = 5;
};

struct SenseSelection {
  int k = 1;
  Matrix centroids;              // k x d, unit rows
  std::vector<int> assignments;  // 0-based
};

/// Largest cosine between two distinct centroid rows (-inf for k = 1).
inline double max_pairwise_cosine(const Matrix& centroids) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < centroids.rows(); ++a)
    for (Eigen::Index b = a + 1; b < centroids.rows(); ++b)
      best = std::max(best, centroids.row(a).dot(centroids.row(b)));
  return best;
}

/// Incremental k: accept the largest k <= k_max whose centroids are pairwise
/// less similar than tau and whose clusters all have >= min_cluster_size
/// members. Stops at the first k that fails and returns k - 1.
inline SenseSelection select_sense_count(const Matrix& vectors, double tau, std::uint64_t seed,
                                         const SenseLimits& limits = {}) {
  if (vectors.rows() < 1) throw DataError("select_sense_count: no occurrence vectors");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  auto run = [&](int k) { return spherical_kmeans(vectors, k, derive_seed(seed, "k", static_cast<std::uint64_t>(k))); };

  KMeansResult best = run(1);
  SenseSelection sel{1, best.centroids, best.assignments};
  if (vectors.rows() < limits.min_occurrences) return sel;

  const int k_cap = static_cast<int>(std::min<Eigen::Index>(limits.k_max, vectors.rows()));
  for (int k = 2; k <= k_cap; ++k) {
    KMeansResult cand = run(k);
    if (!(max_pairwise_cosine(cand.centroids) < tau)) break;
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : cand.assignments) ++sizes[static_cast<std::size_t>(a)];
    if (*std::min_element(sizes.begin(), sizes.end()) < limits.min_cluster_size) break;
    sel = {k, std::move(cand.centroids), std::move(cand.assignments)};
  }
  return sel;
}

/// 1-based index of the max-cosine centroid; ties go to the lowest id.
inline std::uint32_t nearest_sense(const Matrix& centroids, std::span<const float> vec) {
  Vector x(static_cast<Eigen::Index>(vec.size()));
  for (std::size_t i = 0; i < vec.size(); ++i) x[static_cast<Eigen::Index>(i)] = vec[i];
  const double n = x.norm();
  if (!(n > 0.0)) throw DataError("occurrence vector has zero norm");
  x /= n;
  Eigen::Index best = 0;
  double best_sim = centroids.row(0).dot(x);
  for (Eigen::Index j = 1; j < centroids.rows(); ++j) {
    const double s = centroids.row(j).dot(x);
    if (s > best_sim) {
      best_sim = s;
      best = j;
    }
  }
  return static_cast<std::uint32_t>(best + 1);
}

struct SenseTag {
  std::uint32_t doc_id;
  std::uint32_t token_index;
  std::uint32_t sense;  // 1-based

  bool operator==(const SenseTag&) const = default;
};

struct WordSenses {
  std::string word;
  Matrix centroids;                 // k x d, unit rows
  std::vector<SenseTag> tags;       // (doc, token) order
  std::vector<std::size_t> counts;  // occurrences per sense

  int k() const { return static_cast<int>(centroids.rows()); }
};

inline std::string sense_token(const std::string& word, std::uint32_t sense) {
  return word + "#" + std::to_string(sense);
}

class SenseInventory {
 public:
  SenseInventory() = default;
  SenseInventory(std::vector<WordSenses> words, double tau) : words_(std::move(words)), tau_(tau) {
    std::sort(words_.begin(), words_.end(),
              [](const WordSenses& a, const WordSenses& b) { return a.word < b.word; });
    for (std::size_t w = 0; w < words_.size(); ++w) {
      auto& ws = words_[w];
      if (ws.centroids.rows() < 1) throw DataError("word '" + ws.word + "' has no senses");
      if (dim_ == 0) dim_ = static_cast<std::size_t>(ws.centroids.cols());
      if (static_cast<std::size_t>(ws.centroids.cols()) != dim_)
        throw DataError("word '" + ws.word + "' has centroids of inconsistent dimension");
      ws.counts.assign(static_cast<std::size_t>(ws.k()), 0);
      for (const auto& t : ws.tags) {
        if (t.sense < 1 || t.sense > static_cast<std::uint32_t>(ws.k()))
          throw DataError("word '" + ws.word + "' has tag with sense " + std::to_string(t.sense) +
                          " outside [1, " + std::to_string(ws.k()) + "]");
        ++ws.counts[t.sense - 1];
        if (!tag_index_.emplace(std::make_pair(t.doc_id, t.token_index), std::make_pair(w, t.sense)).second)
          throw DataError("occurrence (doc " + std::to_string(t.doc_id) + ", token " +
                          std::to_string(t.token_index) + ") tagged twice");
      }
      index_.emplace(ws.word, w);
    }
  }

  const std::vector<WordSenses>& words() const { return words_; }
  std::size_t dim() const { return dim_; }
  double tau() const { return tau_; }

  const WordSenses* find(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? nullptr : &words_[it->second];
  }

  /// Sense-tagged token ("w#j") of an occurrence, or nullopt when the
  /// occurrence has no stored vector.
  std::optional<std::string> tagged_token(std::uint32_t doc, std::uint32_t tok) const {
    auto it = tag_index_.find({doc, tok});
    if (it == tag_index_.end()) return std::nullopt;
    return sense_token(words_[it->second.first].word, it->second.second);
  }

  std::optional<std::uint32_t> sense_of(std::uint32_t doc, std::uint32_t tok) const {
    auto it = tag_index_.find({doc, tok});
    if (it == tag_index_.end()) return std::nullopt;
    return it->second.second;
  }

  /// Token streams with every tagged occurrence rewritten as "w#j"; untagged
  /// occurrences are dropped.
  std::vector<std::vector<std::string>> tagged_streams(const Corpus& corpus) const {
    std::vector<std::vector<std::string>> out(corpus.size());
    for (const auto& d : corpus.docs()) {
      for (std::size_t t = 0; t < d.tokens.size(); ++t) {
        if (auto tok = tagged_token(static_cast<std::uint32_t>(d.id), static_cast<std::uint32_t>(t)))
          out[d.id].push_back(std::move(*tok));
      }
    }
    return out;
  }

  /// Share of surface words with each sense count.
  std::map<int, double> polysemy_distribution() const {
    std::map<int, double> out;
    if (words_.empty()) return out;
    for (const auto& w : words_) out[w.k()] += 1.0;
    for (auto& [k, v] : out) v /= static_cast<double>(words_.size());
    return out;
  }

  bool operator==(const SenseInventory& o) const {
    if (words_.size() != o.words_.size()) return false;
    for (std::size_t i = 0; i < words_.size(); ++i) {
      const auto& a = words_[i];
      const auto& b = o.words_[i];
      if (a.word != b.word || a.tags != b.tags || a.centroids.rows() != b.centroids.rows() ||
          a.centroids.cols() != b.centroids.cols() || a.centroids != b.centroids)
        return false;
    }
    return true;
  }

 private:
  std::vector<WordSenses> words_;
  std::map<std::string, std::size_t> index_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<std::size_t, std::uint32_t>> tag_index_;
  std::size_t dim_ = 0;
  double tau_ = 0.8;
};

/// Tags every occurrence of every word in `centroids_by_word` with its nearest
/// sense. A word without stored occurrences is an alignment error.
inline std::vector<WordSenses> assign_senses(const EmbeddingStore& store,
                                             std::vector<std::pair<std::string, Matrix>> centroids_by_word) {
  std::vector<WordSenses> out(centroids_by_word.size());
  parallel_for(out.size(), [&](std::size_t w) {
    auto& [word, centroids] = centroids_by_word[w];
    const auto occ = store.occurrences_of(word);
    if (occ.empty()) throw DataError("no stored vectors for word '" + word + "'");
    WordSenses ws;
    ws.word = word;
    ws.tags.reserve(occ.size());
    for (const auto& o : occ) ws.tags.push_back({o.doc_id, o.token_index, nearest_sense(centroids, o.vec)});
    ws.centroids = std::move(centroids);
    out[w] = std::move(ws);
  });
  return out;
}

struct WsdConfig {
  double tau = 0.8;
  std::uint64_t seed = 42;
  SenseLimits limits;
  bool single_sense = false;  // weight_avg ablation: k = 1 for every word
};

inline Matrix occurrence_matrix(const std::vector<Occurrence>& occ, std::size_t dim) {
  Matrix x(static_cast<Eigen::Index>(occ.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < occ.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = occ[i].vec[j];
  return x;
}

/// Full word-sense induction: per word, choose the sense count and centroids,
/// then tag each occurrence with its nearest centroid. Words are processed
/// independently with per-word seeds, so the result does not depend on the
/// worker count.
inline SenseInventory induce_senses(const EmbeddingStore& store, const WsdConfig& cfg) {
  const auto words = store.words();
  std::vector<std::pair<std::string, Matrix>> centroids(words.size());
  parallel_for(words.size(), [&](std::size_t w) {
    const auto occ = store.occurrences_of(words[w]);
    const Matrix x = occurrence_matrix(occ, store.dim());
    const std::uint64_t seed = derive_seed(cfg.seed, words[w]);
    Matrix c;
    try {
      if (cfg.single_sense) {
        c = spherical_kmeans(x, 1, derive_seed(seed, "k", 1)).centroids;
      } else {
        c = select_sense_count(x, cfg.tau, seed, cfg.limits).centroids;
      }
    } catch (const DataError& e) {
      throw DataError("word '" + words[w] + "': " + e.what());
    }
    centroids[w] = {words[w], std::move(c)};
  });
  return SenseInventory(assign_senses(store, std::move(centroids)), cfg.tau);
}

// JSONL: {"w": word, "k": int, "centroids": [[...]], "tags": [[doc, tok, sense], ...]}.
// Centroids are written at full double precision so a reloaded inventory is
// bit-identical to the in-memory one.

inline void write_inventory(const SenseInventory& inv, std::ostream& out) {
  for (const auto& w : inv.words()) {
    nlohmann::json j;
    j["w"] = w.word;
    j["k"] = w.k();
    auto& cs = j["centroids"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.centroids.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(w.centroids.cols()));
      for (Eigen::Index c = 0; c < w.centroids.cols(); ++c) row[static_cast<std::size_t>(c)] = w.centroids(r, c);
      cs.push_back(row);
    }
    auto& tags = j["tags"] = nlohmann::json::array();
    for (const auto& t : w.tags) tags.push_back({t.doc_id, t.token_index, t.sense});
    out << j.dump() << '\n';
  }
}

inline void save_inventory(const SenseInventory& inv, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_inventory(inv, out);
}

inline SenseInventory load_inventory(const std::string& path, double tau) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sense inventory '" + path + "'");
  std::vector<WordSenses> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      WordSenses ws;
      ws.word = j.at("w").get<std::string>();
      const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
      if (rows.empty() || static_cast<int>(rows.size()) != j.at("k").get<int>())
        throw FormatError("\"k\" does not match the number of centroids");
      ws.centroids = stack_rows(rows);
      for (const auto& t : j.at("tags"))
        ws.tags.push_back({t.at(0).get<std::uint32_t>(), t.at(1).get<std::uint32_t>(), t.at(2).get<std::uint32_t>()});
      words.push_back(std::move(ws));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return SenseInventory(std::move(words), tau);
}

/// One entry per (word, sense): the sense-tagged token, its centroid and how
/// many occurrences carry that tag. Ordered by (word, sense).
struct SenseEntry {
  std::string token;
  std::string word;
  std::uint32_t sense;
  Vector vec;
  std::size_t count;
};

inline std::vector<SenseEntry> sense_vocabulary(const SenseInventory& inv) {
  std::vector<SenseEntry> out;
  for (const auto& w : inv.words())
    for (int j = 0; j < w.k(); ++j)
      out.push_back({sense_token(w.word, static_cast<std::uint32_t>(j + 1)), w.word,
                     static_cast<std::uint32_t>(j + 1), w.centroids.row(j).transpose(),
                     w.counts[static_cast<std::size_t>(j)]});
  return out;
}

}  // namespace ctxd
