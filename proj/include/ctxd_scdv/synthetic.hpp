#pragma once

// Planted-structure corpora and embedding stores for exercising the pipeline
// without a transformer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "embed_store.hpp"
#include "error.hpp"
#include "random.hpp"
#include "vector_math.hpp"

namespace ctxd {

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DataError("adjusted_rand_index: labelings differ in length");
  if (a.size() < 2) return 1.0;
  auto choose2 = [](double n) { return n * (n - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, n] : joint) index += choose2(n);
  for (const auto& [_, n] : ra) sa += choose2(n);
  for (const auto& [_, n] : rb) sb += choose2(n);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max_index = (sa + sb) / 2.0;
  if (max_index == expected) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

struct PlantedSpec {
  int num_classes = 2;
  int docs_per_class = 200;
  int vocab_size = 40;
  int ambiguous_word_count = 10;
  int senses_per_ambiguous_word = 2;
  int dim = 64;
  double noise = 0.05;  // per-coordinate Gaussian sigma before renormalization
  int doc_length = 20;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
};

struct PlantedData {
  Corpus corpus;
  EmbeddingStore store;
  /// Planted sense (0-based) of every occurrence, keyed by (doc, token).
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> truth;
  std::vector<std::string> ambiguous_words;
  /// Planted direction per (word, sense).
  std::map<std::pair<std::string, int>, Vector> directions;
};

namespace detail {

// `count` unit vectors; consecutive groups of up to `dim` are mutually
// orthogonal (Gram-Schmidt on Gaussian draws).
inline std::vector<Vector> orthogonal_directions(int count, int dim, Rng& rng) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    const std::size_t block_start = out.size();
    const int block = std::min(dim, count - static_cast<int>(out.size()));
    for (int b = 0; b < block; ++b) {
      for (;;) {
        Vector v(dim);
        for (int j = 0; j < dim; ++j) v[j] = standard_normal(rng);
        for (std::size_t p = block_start; p < out.size(); ++p) v -= v.dot(out[p]) * out[p];
        for (std::size_t p = block_start; p < out.size(); ++p) v -= v.dot(out[p]) * out[p];
        const double n = v.norm();
        if (n > 1e-6) {
          out.push_back(v / n);
          break;
        }
      }
    }
  }
  return out;
}

inline std::vector<float> noisy_unit(const Vector& dir, double sigma, Rng& rng) {
  Vector v = dir;
  if (sigma > 0.0)
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += sigma * standard_normal(rng);
  v.normalize();
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index j = 0; j < v.size(); ++j) out[static_cast<std::size_t>(j)] = static_cast<float>(v[j]);
  return out;
}

}  // namespace detail

/// Vocabulary layout: `ambiguous_word_count` ambiguous words ("ambN"), then
/// the remaining words split evenly into one class-specific group per class
/// ("cC wN") and a shared group ("shrN"). A document of class c draws tokens
/// uniformly from its class group, the shared group and the ambiguous words;
/// an ambiguous word takes sense (c mod senses) in class c documents. Sense
/// directions of one word are always orthogonal; all directions are when
/// their count does not exceed `dim`.
inline PlantedData generate_planted(const PlantedSpec& spec) {
  if (spec.num_classes < 1 || spec.docs_per_class < 1 || spec.doc_length < 1 || spec.dim < 2)
    throw ConfigError("planted spec: counts must be positive");
  if (spec.senses_per_ambiguous_word < 1 || spec.senses_per_ambiguous_word > spec.num_classes)
    throw ConfigError("planted spec: senses_per_ambiguous_word must lie in [1, num_classes]");
  if (spec.senses_per_ambiguous_word > spec.dim)
    throw ConfigError("planted spec: more senses than dimensions");
  if (spec.ambiguous_word_count < 0 || spec.ambiguous_word_count > spec.vocab_size)
    throw ConfigError("planted spec: ambiguous_word_count must lie in [0, vocab_size]");
  const int rest = spec.vocab_size - spec.ambiguous_word_count;
  const int group = rest / (spec.num_classes + 1);
  if (spec.num_classes > 1 && group < 1)
    throw ConfigError("planted spec: vocabulary too small for one class-specific word per class");
  if (!(spec.noise >= 0.0)) throw ConfigError("planted spec: noise must be >= 0");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("planted spec: train_fraction must lie in (0, 1)");

  Rng rng(derive_seed(spec.seed, "planted"));
  PlantedData data;

  struct WordInfo {
    std::string name;
    int first_dir;
    int senses;
  };
  std::vector<WordInfo> ambiguous, shared;
  std::vector<std::vector<WordInfo>> by_class(static_cast<std::size_t>(spec.num_classes));
  int dir_count = 0;
  for (int a = 0; a < spec.ambiguous_word_count; ++a) {
    ambiguous.push_back({"amb" + std::to_string(a), dir_count, spec.senses_per_ambiguous_word});
    dir_count += spec.senses_per_ambiguous_word;
  }
  for (int c = 0; c < spec.num_classes; ++c)
    for (int w = 0; w < group; ++w) by_class[static_cast<std::size_t>(c)].push_back({"c" + std::to_string(c) + "w" + std::to_string(w), dir_count++, 1});
  for (int w = 0; w < rest - group * spec.num_classes; ++w) shared.push_back({"shr" + std::to_string(w), dir_count++, 1});

  // Ambiguous words come first, so their senses never straddle a block when
  // senses divide dim; otherwise re-orthogonalize each word's senses below.
  auto dirs = detail::orthogonal_directions(dir_count, spec.dim, rng);
  for (const auto& w : ambiguous) {
    for (int s = 0; s < w.senses; ++s) {
      Vector& v = dirs[static_cast<std::size_t>(w.first_dir + s)];
      for (int p = 0; p < s; ++p) v -= v.dot(dirs[static_cast<std::size_t>(w.first_dir + p)]) * dirs[static_cast<std::size_t>(w.first_dir + p)];
      v.normalize();
    }
  }
  auto record_dirs = [&](const WordInfo& w) {
    for (int s = 0; s < w.senses; ++s) data.directions[{w.name, s}] = dirs[static_cast<std::size_t>(w.first_dir + s)];
  };
  for (const auto& w : ambiguous) {
    record_dirs(w);
    data.ambiguous_words.push_back(w.name);
  }
  for (const auto& g : by_class)
    for (const auto& w : g) record_dirs(w);
  for (const auto& w : shared) record_dirs(w);

  // Interleave classes so document order carries no label information.
  std::vector<int> doc_class;
  for (int i = 0; i < spec.docs_per_class; ++i)
    for (int c = 0; c < spec.num_classes; ++c) doc_class.push_back(c);
  const int train_per_class = std::max(1, static_cast<int>(std::floor(spec.train_fraction * spec.docs_per_class)));

  std::vector<Document> docs;
  std::vector<EmbeddingRecord> records;
  std::vector<int> seen(static_cast<std::size_t>(spec.num_classes), 0);
  for (std::size_t d = 0; d < doc_class.size(); ++d) {
    const int c = doc_class[d];
    std::vector<const WordInfo*> pool;
    for (const auto& w : by_class[static_cast<std::size_t>(c)]) pool.push_back(&w);
    for (const auto& w : shared) pool.push_back(&w);
    for (const auto& w : ambiguous) pool.push_back(&w);
    Document doc;
    doc.source_id = static_cast<std::int64_t>(d);
    doc.label = "class" + std::to_string(c);
    doc.split = seen[static_cast<std::size_t>(c)]++ < train_per_class ? Split::kTrain : Split::kTest;
    for (int t = 0; t < spec.doc_length; ++t) {
      const WordInfo& w = *pool[uniform_index(rng, pool.size())];
      const int sense = w.senses > 1 ? c % w.senses : 0;
      doc.tokens.push_back(w.name);
      EmbeddingRecord r;
      r.doc_id = static_cast<std::uint32_t>(d);
      r.token_index = static_cast<std::uint32_t>(t);
      r.token = w.name;
      r.vec = detail::noisy_unit(dirs[static_cast<std::size_t>(w.first_dir + sense)], spec.noise, rng);
      records.push_back(std::move(r));
      data.truth[{r.doc_id, r.token_index}] = sense;
    }
    docs.push_back(std::move(doc));
  }
  data.corpus = Corpus(std::move(docs));
  data.store = EmbeddingStore(static_cast<std::uint32_t>(spec.dim), std::move(records));
  return data;
}

/// Word-sense example sentences with a fixed cosine between the two contexts
/// of each target word; every sentence is repeated `copies` times.
struct SenseExample {
  std::string word;
  std::string sentence_a;
  std::string sentence_b;
  double cosine;  // between the two context directions
};

inline const std::vector<SenseExample>& reference_sense_examples() {
  static const std::vector<SenseExample> examples{
      {"subject", "The math subject is difficult", "He sent the mail without subject", 0.71},
      {"apple", "The stocks of Apple have increased", "I eat an apple everyday", 0.67},
      {"unit", "Metre is unit of Distance", "He is in 1st unit", 0.78},
  };
  return examples;
}

/// Builds a corpus and store in which each example's target word occurs in
/// its two sentences with context directions at the example's cosine. All
/// other words get one direction each.
inline PlantedData sense_example_fixture(const std::vector<SenseExample>& examples, int copies = 12,
                                         int dim = 16, double noise = 0.002, std::uint64_t seed = 11) {
  if (copies < 1) throw ConfigError("sense fixture: copies must be >= 1");
  Rng rng(derive_seed(seed, "sense-fixture"));
  PlantedData data;
  std::map<std::string, Vector> plain;
  std::vector<Vector> basis = detail::orthogonal_directions(dim, dim, rng);
  std::size_t next_basis = 0;
  auto fresh_direction = [&]() -> Vector {
    if (next_basis < basis.size()) return basis[next_basis++];
    Vector v(dim);
    for (int j = 0; j < dim; ++j) v[j] = standard_normal(rng);
    return v.normalized();
  };
  for (const auto& ex : examples) {
    const Vector a = fresh_direction();
    const Vector b_perp = fresh_direction();
    const Vector b = ex.cosine * a + std::sqrt(1.0 - ex.cosine * ex.cosine) * b_perp;
    data.directions[{ex.word, 0}] = a;
    data.directions[{ex.word, 1}] = b;
    data.ambiguous_words.push_back(ex.word);
  }
  std::vector<Document> docs;
  std::vector<EmbeddingRecord> records;
  for (int copy = 0; copy < copies; ++copy) {
    for (const auto& ex : examples) {
      for (int which = 0; which < 2; ++which) {
        Document doc;
        doc.source_id = static_cast<std::int64_t>(docs.size());
        doc.tokens = tokenize(which == 0 ? ex.sentence_a : ex.sentence_b);
        doc.label = ex.word + (which == 0 ? "_a" : "_b");
        doc.split = copy % 4 == 3 ? Split::kTest : Split::kTrain;
        const auto doc_id = static_cast<std::uint32_t>(docs.size());
        for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
          const auto& tok = doc.tokens[t];
          Vector dir;
          int sense = 0;
          if (tok == ex.word) {
            sense = which;
            dir = data.directions[{ex.word, which}];
          } else {
            if (!plain.count(tok)) plain[tok] = fresh_direction();
            dir = plain[tok];
          }
          records.push_back({doc_id, static_cast<std::uint32_t>(t), tok, detail::noisy_unit(dir, noise, rng)});
          data.truth[{doc_id, static_cast<std::uint32_t>(t)}] = sense;
        }
        docs.push_back(std::move(doc));
      }
    }
  }
  data.corpus = Corpus(std::move(docs));
  data.store = EmbeddingStore(static_cast<std::uint32_t>(dim), std::move(records));
  return data;
}

}  // namespace ctxd
