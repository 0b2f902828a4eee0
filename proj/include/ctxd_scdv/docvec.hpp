#pragma once

// Word-topic and document vector composition.
//
// DVB1 layout, little-endian: "DVB1" | u32 dim (= K*d)
//   then per document: u32 doc_id | dim x f32

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "vector_math.hpp"

namespace ctxd {

/// Block o (length d) of the result is idf * posteriors[o] * word_vec.
inline Vector build_word_topic_vector(std::span<const double> word_vec,
                                      std::span<const double> posteriors, double idf) {
  if (word_vec.empty() || posteriors.empty())
    throw DataError("build_word_topic_vector: empty word vector or posterior");
  if (!(idf >= 0.0)) throw DataError("build_word_topic_vector: idf must be >= 0");
  const auto d = word_vec.size();
  Vector out(static_cast<Eigen::Index>(d * posteriors.size()));
  for (std::size_t o = 0; o < posteriors.size(); ++o) {
    const double scale = idf * posteriors[o];
    for (std::size_t j = 0; j < d; ++j) out[static_cast<Eigen::Index>(o * d + j)] = scale * word_vec[j];
  }
  return out;
}

enum class Averaging { kOccurrence, kUniqueType };

/// Per sense-tagged token: its static vector, GMM posterior and idf. Word-topic
/// vectors are formed on demand so the K*d-wide table is never materialized.
class WordTopicTable {
 public:
  struct Entry {
    Vector vec;        // d
    Vector posterior;  // K
    double idf = 0.0;
  };

  WordTopicTable(std::size_t num_components, std::size_t dim) : k_(num_components), d_(dim) {}

  void add(const std::string& token, Vector vec, Vector posterior, double idf) {
    if (static_cast<std::size_t>(vec.size()) != d_ || static_cast<std::size_t>(posterior.size()) != k_)
      throw DataError("word-topic entry '" + token + "' has mismatched length");
    if (!(idf >= 0.0)) throw DataError("word-topic entry '" + token + "' has negative idf");
    entries_[token] = Entry{std::move(vec), std::move(posterior), idf};
  }

  const Entry* find(const std::string& token) const {
    auto it = entries_.find(token);
    return it == entries_.end() ? nullptr : &it->second;
  }

  Vector word_topic_vector(const std::string& token) const {
    const Entry* e = find(token);
    if (!e) throw DataError("no word-topic entry for '" + token + "'");
    return build_word_topic_vector(as_span(e->vec), as_span(e->posterior), e->idf);
  }

  std::size_t num_components() const { return k_; }
  std::size_t dim() const { return d_; }
  std::size_t width() const { return k_ * d_; }
  std::size_t size() const { return entries_.size(); }

  /// Mean of word-topic vectors over a document's tokens. Tokens without an
  /// entry are skipped and excluded from the denominator; with no usable
  /// token the result is the zero vector. `usable` receives the count.
  Vector document_vector(const std::vector<std::string>& tokens, Averaging mode,
                         std::size_t* usable = nullptr) const {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : tokens)
      if (entries_.count(t)) ++counts[t];
    std::size_t n = 0;
    for (const auto& [t, c] : counts) n += mode == Averaging::kOccurrence ? c : 1;
    if (usable) *usable = n;
    Vector out = Vector::Zero(static_cast<Eigen::Index>(width()));
    if (n == 0) return out;
    for (const auto& [t, c] : counts) {
      const Entry& e = entries_.at(t);
      const double weight = (mode == Averaging::kOccurrence ? static_cast<double>(c) : 1.0) * e.idf;
      for (std::size_t o = 0; o < k_; ++o) {
        const double s = weight * e.posterior[static_cast<Eigen::Index>(o)];
        if (s == 0.0) continue;
        out.segment(static_cast<Eigen::Index>(o * d_), static_cast<Eigen::Index>(d_)) += s * e.vec;
      }
    }
    out /= static_cast<double>(n);
    return out;
  }

 private:
  std::size_t k_;
  std::size_t d_;
  std::map<std::string, Entry> entries_;
};

/// One row per corpus document, in doc-id order.
struct DocumentVectorSet {
  Matrix vectors;              // N x (K*d)
  std::size_t num_components = 0;
  std::size_t word_dim = 0;
  std::string config_hash;

  std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
  Vector row(std::size_t i) const { return vectors.row(static_cast<Eigen::Index>(i)).transpose(); }
};

/// Builds every document vector; documents are independent and run in
/// parallel. Documents with no usable tokens get a zero vector and a warning.
inline DocumentVectorSet build_document_vectors(const std::vector<std::vector<std::string>>& streams,
                                                const WordTopicTable& table, Averaging mode) {
  DocumentVectorSet set;
  set.num_components = table.num_components();
  set.word_dim = table.dim();
  set.vectors = Matrix::Zero(static_cast<Eigen::Index>(streams.size()),
                             static_cast<Eigen::Index>(table.width()));
  std::vector<char> empty(streams.size(), 0);
  parallel_for(streams.size(), [&](std::size_t i) {
    std::size_t usable = 0;
    set.vectors.row(static_cast<Eigen::Index>(i)) = table.document_vector(streams[i], mode, &usable).transpose();
    empty[i] = usable == 0;
  });
  for (std::size_t i = 0; i < streams.size(); ++i)
    if (empty[i]) log_warning("document " + std::to_string(i) + " has no embedded tokens; using a zero vector");
  return set;
}

/// Zeroes entries with |v| < (p/100) * t, t = mean over documents of
/// (|max entry| + |min entry|) / 2.
inline DocumentVectorSet sparsify(const DocumentVectorSet& in, double p) {
  if (!(p >= 0.0 && p < 100.0)) throw ConfigError("sparsify: percentage must lie in [0, 100)");
  DocumentVectorSet out = in;
  if (in.vectors.rows() == 0 || in.vectors.cols() == 0) return out;
  double t = 0.0;
  for (Eigen::Index i = 0; i < in.vectors.rows(); ++i)
    t += (std::abs(in.vectors.row(i).maxCoeff()) + std::abs(in.vectors.row(i).minCoeff())) / 2.0;
  t /= static_cast<double>(in.vectors.rows());
  const double threshold = p / 100.0 * t;
  out.vectors = (in.vectors.array().abs() < threshold).select(0.0, in.vectors);
  return out;
}

inline constexpr std::string_view kDocVecMagic = "DVB1";

inline std::string encode_document_vectors(const DocumentVectorSet& set) {
  binio::Writer w;
  w.bytes(kDocVecMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(i));
    for (Eigen::Index j = 0; j < set.vectors.cols(); ++j) w.put<float>(static_cast<float>(set.vectors(i, j)));
  }
  return w.data();
}

inline void save_document_vectors(const DocumentVectorSet& set, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_document_vectors(set));
  w.save(path);
}

/// Document ids in the file must cover 0..N-1 exactly once.
inline DocumentVectorSet load_document_vectors(const std::string& path) {
  auto in = binio::Reader::from_file(path);
  if (in.size() < kDocVecMagic.size() || in.bytes(kDocVecMagic.size(), "magic") != kDocVecMagic)
    throw FormatError(path + ": bad magic (expected \"DVB1\")");
  const auto dim = in.get<std::uint32_t>("header dim");
  std::map<std::uint32_t, std::vector<float>> rows;
  while (!in.at_end()) {
    const auto start = in.offset();
    try {
      const auto id = in.get<std::uint32_t>("record doc_id");
      std::vector<float> v(dim);
      for (auto& f : v) f = in.get<float>("record vector");
      if (!rows.emplace(id, std::move(v)).second)
        throw FormatError(path + ": duplicate doc_id " + std::to_string(id));
    } catch (const FormatError& e) {
      throw FormatError(std::string(e.what()) + " (record starting at byte offset " + std::to_string(start) + ")");
    }
  }
  DocumentVectorSet set;
  set.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  std::uint32_t expect = 0;
  for (const auto& [id, v] : rows) {
    if (id != expect) throw FormatError(path + ": document ids are not dense (missing " + std::to_string(expect) + ")");
    for (std::uint32_t j = 0; j < dim; ++j) set.vectors(id, j) = v[j];
    ++expect;
  }
  set.word_dim = dim;
  set.num_components = 1;
  return set;
}

inline void export_document_vectors_csv(const DocumentVectorSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "doc_id";
  for (std::size_t j = 0; j < set.dim(); ++j) out << ",v" << j;
  out << '\n';
  out.precision(9);
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < set.vectors.cols(); ++j) out << ',' << static_cast<float>(set.vectors(i, j));
    out << '\n';
  }
}

}  // namespace ctxd
