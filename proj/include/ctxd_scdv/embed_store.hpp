#pragma once

// Contextual embedding store: one vector per (document, token position).
//
// CEB1 layout, little-endian:
//   "CEB1" | u16 version (=1) | u32 dim
//   then until EOF: u32 doc_id | u32 token_index | u16 L | L bytes UTF-8 token
//                   | dim x f32

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "corpus.hpp"
#include "error.hpp"

namespace ctxd {

inline constexpr std::string_view kStoreMagic = "CEB1";
inline constexpr std::uint16_t kStoreVersion = 1;

struct EmbeddingRecord {
  std::uint32_t doc_id = 0;
  std::uint32_t token_index = 0;
  std::string token;
  std::vector<float> vec;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct Occurrence {
  std::uint32_t doc_id;
  std::uint32_t token_index;
  std::span<const float> vec;
};

class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  /// Validates equal dimensionality and unique (doc_id, token_index) keys,
  /// then indexes records by surface token.
  EmbeddingStore(std::uint32_t dim, std::vector<EmbeddingRecord> records)
      : dim_(dim), records_(std::move(records)) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> keys;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.vec.size() != dim_)
        throw DataError("record (doc " + std::to_string(r.doc_id) + ", token " +
                        std::to_string(r.token_index) + ") has dimension " +
                        std::to_string(r.vec.size()) + ", store dimension is " +
                        std::to_string(dim_));
      if (r.token.empty() || r.token.size() > 0xFFFF)
        throw DataError("record (doc " + std::to_string(r.doc_id) + ", token " +
                        std::to_string(r.token_index) + ") has invalid token length");
      if (!keys.emplace(r.doc_id, r.token_index).second)
        throw DataError("duplicate record for (doc " + std::to_string(r.doc_id) +
                        ", token " + std::to_string(r.token_index) + ")");
      by_word_[r.token].push_back(i);
    }
    for (auto& [word, idx] : by_word_) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = records_[a];
        const auto& rb = records_[b];
        return std::tie(ra.doc_id, ra.token_index) < std::tie(rb.doc_id, rb.token_index);
      });
    }
  }

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  /// Surface words in lexicographic order.
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(by_word_.size());
    for (const auto& [w, _] : by_word_) out.push_back(w);
    return out;
  }

  /// All records of `word` in (doc_id, token_index) order; empty when absent.
  std::vector<Occurrence> occurrences_of(const std::string& word) const {
    std::vector<Occurrence> out;
    auto it = by_word_.find(word);
    if (it == by_word_.end()) return out;
    out.reserve(it->second.size());
    for (std::size_t i : it->second) {
      const auto& r = records_[i];
      out.push_back({r.doc_id, r.token_index, std::span<const float>(r.vec)});
    }
    return out;
  }

  std::size_t occurrence_count(const std::string& word) const {
    auto it = by_word_.find(word);
    return it == by_word_.end() ? 0 : it->second.size();
  }

  bool operator==(const EmbeddingStore& o) const {
    return dim_ == o.dim_ && records_ == o.records_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::map<std::string, std::vector<std::size_t>> by_word_;
};

/// Checks every record against the corpus token at its position.
inline void validate_alignment(const EmbeddingStore& store, const Corpus& corpus) {
  for (const auto& r : store.records()) {
    if (r.doc_id >= corpus.size())
      throw DataError("store record references doc " + std::to_string(r.doc_id) +
                      " but corpus has " + std::to_string(corpus.size()) + " documents");
    const auto& toks = corpus.doc(r.doc_id).tokens;
    if (r.token_index >= toks.size())
      throw DataError("store record (doc " + std::to_string(r.doc_id) + ", token " +
                      std::to_string(r.token_index) + ") is past the end of the document (" +
                      std::to_string(toks.size()) + " tokens)");
    if (fold_token(r.token) != toks[r.token_index])
      throw DataError("alignment mismatch at doc " + std::to_string(r.doc_id) + ", token " +
                      std::to_string(r.token_index) + ": store has '" + r.token +
                      "', corpus has '" + toks[r.token_index] + "'");
  }
}

struct StoreReadOptions {
  std::optional<std::uint32_t> expected_dim;
  const Corpus* corpus = nullptr;  // validate alignment when set
};

inline std::string encode_store(const EmbeddingStore& store) {
  binio::Writer w;
  w.bytes(kStoreMagic);
  w.put<std::uint16_t>(kStoreVersion);
  w.put<std::uint32_t>(store.dim());
  for (const auto& r : store.records()) {
    w.put<std::uint32_t>(r.doc_id);
    w.put<std::uint32_t>(r.token_index);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.token.size()));
    w.bytes(r.token);
    for (float f : r.vec) w.put<float>(f);
  }
  return w.data();
}

inline void write_store(const EmbeddingStore& store, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_store(store));
  w.save(path);
}

inline EmbeddingStore decode_store(binio::Reader& in, const StoreReadOptions& opts = {}) {
  if (in.size() < kStoreMagic.size() ||
      in.bytes(kStoreMagic.size(), "magic") != kStoreMagic)
    throw FormatError(in.source() + ": bad magic (expected \"CEB1\")");
  const auto version = in.get<std::uint16_t>("header version");
  if (version != kStoreVersion)
    throw FormatError(in.source() + ": unsupported CEB1 version " + std::to_string(version));
  const auto dim = in.get<std::uint32_t>("header dim");
  if (opts.expected_dim && *opts.expected_dim != dim)
    throw DataError(in.source() + ": dimension mismatch: file has dim " +
                    std::to_string(dim) + ", expected " + std::to_string(*opts.expected_dim));
  std::vector<EmbeddingRecord> records;
  while (!in.at_end()) {
    const std::size_t start = in.offset();
    try {
      EmbeddingRecord r;
      r.doc_id = in.get<std::uint32_t>("record doc_id");
      r.token_index = in.get<std::uint32_t>("record token_index");
      const auto len = in.get<std::uint16_t>("record token length");
      r.token = std::string(in.bytes(len, "record token"));
      r.vec.resize(dim);
      for (auto& f : r.vec) f = in.get<float>("record vector");
      records.push_back(std::move(r));
    } catch (const FormatError& e) {
      throw FormatError(std::string(e.what()) + " (record starting at byte offset " +
                        std::to_string(start) + ")");
    }
  }
  EmbeddingStore store(dim, std::move(records));
  if (opts.corpus) validate_alignment(store, *opts.corpus);
  return store;
}

inline EmbeddingStore read_store(const std::string& path, const StoreReadOptions& opts = {}) {
  auto in = binio::Reader::from_file(path);
  return decode_store(in, opts);
}

// JSONL mirror: {"doc": int, "tok": int, "w": string, "v": [floats]} per line.

inline void write_store_jsonl(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& r : store.records()) {
    nlohmann::json j;
    j["doc"] = r.doc_id;
    j["tok"] = r.token_index;
    j["w"] = r.token;
    j["v"] = r.vec;
    out << j.dump() << '\n';
  }
}

inline EmbeddingStore read_store_jsonl(const std::string& path,
                                       const StoreReadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<EmbeddingRecord> records;
  std::optional<std::uint32_t> dim = opts.expected_dim;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return FormatError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("doc") || !j.contains("tok") || !j.contains("w") ||
        !j.contains("v") || !j["v"].is_array())
      throw fail("expected {\"doc\", \"tok\", \"w\", \"v\"}");
    EmbeddingRecord r;
    try {
      r.doc_id = j["doc"].get<std::uint32_t>();
      r.token_index = j["tok"].get<std::uint32_t>();
      r.token = j["w"].get<std::string>();
      r.vec = j["v"].get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
    if (!dim) dim = static_cast<std::uint32_t>(r.vec.size());
    if (r.vec.size() != *dim)
      throw DataError(path + ":" + std::to_string(lineno) + ": dimension mismatch: record has " +
                      std::to_string(r.vec.size()) + ", expected " + std::to_string(*dim));
    records.push_back(std::move(r));
  }
  EmbeddingStore store(dim.value_or(0), std::move(records));
  if (opts.corpus) validate_alignment(store, *opts.corpus);
  return store;
}

enum class StoreFormat { kCeb1, kJsonl };

inline StoreFormat parse_store_format(std::string_view s) {
  if (s == "ceb1" || s == "ceb") return StoreFormat::kCeb1;
  if (s == "jsonl") return StoreFormat::kJsonl;
  throw ConfigError("unknown embedding format '" + std::string(s) + "' (expected ceb1|jsonl)");
}

inline EmbeddingStore load_store(const std::string& path, StoreFormat fmt,
                                 const StoreReadOptions& opts = {}) {
  return fmt == StoreFormat::kCeb1 ? read_store(path, opts) : read_store_jsonl(path, opts);
}

}  // namespace ctxd
