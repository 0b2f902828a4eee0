#pragma once

// Corpus ingestion: tokenization, JSONL/TSV loading and idf weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace ctxd {

enum class Split { kTrain, kTest };

inline std::string_view to_string(Split s) {
  return s == Split::kTrain ? "train" : "test";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(s) + "' (expected train|test)");
}

struct Document {
  std::size_t id = 0;          // dense position in the corpus
  std::int64_t source_id = 0;  // id as given in the input file
  std::vector<std::string> tokens;
  std::optional<std::string> label;
  Split split = Split::kTrain;

  bool empty() const { return tokens.empty(); }
};

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Decodes one code point at text[i]; advances i. Invalid sequences decode to
// the raw byte value so that no input is dropped.
inline char32_t next_code_point(std::string_view text, std::size_t& i,
                                std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= text.size()) return -1;
    const auto b = static_cast<unsigned char>(text[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  int need = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    need = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    need = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    need = 3;
    cp = b0 & 0x07;
  } else {
    len = 1;
    return b0;
  }
  for (int k = 1; k <= need; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      len = 1;
      return b0;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  len = static_cast<std::size_t>(need) + 1;
  return cp;
}

inline bool is_separator(char32_t cp) {
  if (cp < 0x80) {
    return cp <= 0x20 || cp == 0x7F ||
           (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  return (cp >= 0x80 && cp <= 0xBF) ||  // C1 controls, NBSP, Latin-1 punctuation
         cp == 0xD7 || cp == 0xF7 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x206F) ||  // general punctuation and spaces
         (cp >= 0x3000 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
         (cp >= 0xFF01 && cp <= 0xFF0F) || cp == 0xFEFF;
}

inline char32_t fold_case(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

}  // namespace detail

/// Lowercases without splitting.
inline std::string fold_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size();) {
    std::size_t len = 1;
    const char32_t cp = detail::next_code_point(token, i, len);
    if (len == 1 && static_cast<unsigned char>(token[i]) >= 0x80)
      out.push_back(token[i]);
    else
      detail::append_utf8(out, detail::fold_case(cp));
    i += len;
  }
  return out;
}

/// Lowercase, split on Unicode whitespace and punctuation. No stemming. The
/// extractor applies the same rule when aligning subword pieces to tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = 1;
    const char32_t cp = detail::next_code_point(text, i, len);
    const bool raw_byte = len == 1 && static_cast<unsigned char>(text[i]) >= 0x80;
    if (!raw_byte && detail::is_separator(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (raw_byte) {
      cur.push_back(text[i]);
    } else {
      detail::append_utf8(cur, detail::fold_case(cp));
    }
    i += len;
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class Corpus {
 public:
  Corpus() = default;

  /// Takes documents in input order; assigns dense ids and validates label and
  /// source-id uniqueness.
  explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    std::unordered_set<std::int64_t> seen;
    std::set<std::string> labels;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      docs_[i].id = i;
      if (!seen.insert(docs_[i].source_id).second)
        throw DataError("duplicate document id " + std::to_string(docs_[i].source_id));
      if (docs_[i].label) labels.insert(*docs_[i].label);
      for (const auto& t : docs_[i].tokens) vocab_.insert(t);
    }
    labels_.assign(labels.begin(), labels.end());
  }

  std::size_t size() const { return docs_.size(); }
  const std::vector<Document>& docs() const { return docs_; }
  const Document& doc(std::size_t id) const { return docs_.at(id); }
  const std::set<std::string>& vocab() const { return vocab_; }
  /// Sorted lexicographically.
  const std::vector<std::string>& label_set() const { return labels_; }

  std::vector<std::size_t> ids_in_split(Split s) const {
    std::vector<std::size_t> out;
    for (const auto& d : docs_)
      if (d.split == s) out.push_back(d.id);
    return out;
  }

 private:
  std::vector<Document> docs_;
  std::set<std::string> vocab_;
  std::vector<std::string> labels_;
};

enum class CorpusFormat { kJsonl, kTsv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::kJsonl;
  if (s == "tsv") return CorpusFormat::kTsv;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected jsonl|tsv)");
}

namespace detail {

inline Document parse_jsonl_record(const std::string& line, std::size_t lineno,
                                   const std::string& source) {
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(source + ":" + std::to_string(lineno) + ": " + why);
  };
  nlohmann::json rec;
  try {
    rec = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("invalid JSON: ") + e.what());
  }
  if (!rec.is_object()) throw fail("record is not a JSON object");
  Document doc;
  if (!rec.contains("id") || !rec["id"].is_number_integer())
    throw fail("missing integer field \"id\"");
  doc.source_id = rec["id"].get<std::int64_t>();
  if (rec.contains("tokens")) {
    if (!rec["tokens"].is_array()) throw fail("\"tokens\" must be an array of strings");
    for (const auto& t : rec["tokens"]) {
      if (!t.is_string()) throw fail("\"tokens\" must be an array of strings");
      std::string folded = fold_token(t.get<std::string>());
      if (folded.empty()) throw fail("empty token in \"tokens\"");
      doc.tokens.push_back(std::move(folded));
    }
  } else if (rec.contains("text")) {
    if (!rec["text"].is_string()) throw fail("\"text\" must be a string");
    doc.tokens = tokenize(rec["text"].get<std::string>());
  } else {
    throw fail("record has neither \"tokens\" nor \"text\"");
  }
  if (rec.contains("label") && !rec["label"].is_null()) {
    if (!rec["label"].is_string()) throw fail("\"label\" must be a string");
    doc.label = rec["label"].get<std::string>();
  }
  if (rec.contains("split") && !rec["split"].is_null()) {
    if (!rec["split"].is_string()) throw fail("\"split\" must be a string");
    try {
      doc.split = parse_split(rec["split"].get<std::string>());
    } catch (const DataError& e) {
      throw fail(e.what());
    }
  }
  return doc;
}

}  // namespace detail

inline Corpus parse_corpus(std::istream& in, CorpusFormat format,
                           const std::string& source = "<stream>") {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (format == CorpusFormat::kJsonl) {
      docs.push_back(detail::parse_jsonl_record(line, lineno, source));
    } else {
      // label TAB text [TAB split]
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw FormatError(source + ":" + std::to_string(lineno) +
                          ": expected 'label<TAB>text'");
      Document doc;
      doc.source_id = static_cast<std::int64_t>(docs.size());
      doc.label = line.substr(0, tab);
      if (doc.label->empty())
        throw FormatError(source + ":" + std::to_string(lineno) + ": empty label");
      std::string rest = line.substr(tab + 1);
      if (const auto tab2 = rest.find('\t'); tab2 != std::string::npos) {
        try {
          doc.split = parse_split(rest.substr(tab2 + 1));
        } catch (const DataError& e) {
          throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
        rest.resize(tab2);
      }
      doc.tokens = tokenize(rest);
      docs.push_back(std::move(doc));
    }
  }
  return Corpus(std::move(docs));
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return parse_corpus(in, format, path);
}

/// Writes the normalized (tokenized) corpus as JSONL, keeping the original
/// ids. Reloading it yields the same documents in the same dense order.
inline void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.docs()) {
    nlohmann::json rec;
    rec["id"] = d.source_id;
    rec["tokens"] = d.tokens;
    if (d.label) rec["label"] = *d.label;
    rec["split"] = std::string(to_string(d.split));
    out << rec.dump() << '\n';
  }
}

inline void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_corpus_jsonl(corpus, out);
}

/// idf(t) = ln(N / df(t)). Lookup of an unknown token is an error: every
/// token reaching composition must have been counted here.
class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(std::map<std::string, double> entries, std::size_t num_docs)
      : entries_(std::move(entries)), num_docs_(num_docs) {}

  double lookup(const std::string& token) const {
    auto it = entries_.find(token);
    if (it == entries_.end())
      throw DataError("idf lookup for unknown token '" + token + "'");
    return it->second;
  }
  bool contains(const std::string& token) const { return entries_.count(token) > 0; }
  std::size_t num_docs() const { return num_docs_; }
  const std::map<std::string, double>& entries() const { return entries_; }

 private:
  std::map<std::string, double> entries_;
  std::size_t num_docs_ = 0;
};

/// One token stream per document (surface or sense-tagged tokens).
inline IdfTable compute_idf(const std::vector<std::vector<std::string>>& streams) {
  if (streams.empty()) throw DataError("compute_idf: corpus has no documents");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : streams) {
    std::vector<std::string> uniq(doc.begin(), doc.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& t : uniq) ++df[t];
  }
  const double n = static_cast<double>(streams.size());
  std::map<std::string, double> idf;
  for (const auto& [t, count] : df) idf.emplace(t, std::log(n / static_cast<double>(count)));
  return IdfTable(std::move(idf), streams.size());
}

inline IdfTable compute_idf(const Corpus& corpus) {
  std::vector<std::vector<std::string>> streams;
  streams.reserve(corpus.size());
  for (const auto& d : corpus.docs()) streams.push_back(d.tokens);
  return compute_idf(streams);
}

}  // namespace ctxd
