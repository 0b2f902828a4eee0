#pragma once

// Pipeline configuration: one JSON document, every key optional.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "docvec.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "gmm.hpp"
#include "log.hpp"
#include "random.hpp"
#include "wsd.hpp"

namespace ctxd {

enum class PipelineMode { kCtxd, kWeightAvg };
enum class IdfDomain { kSense, kSurface };
enum class AnisoTarget { kWords, kDocuments };

/// Mixture components per dataset and training-data percentage. Few-shot runs
/// use the 10% column.
inline std::optional<int> tabulated_components(const std::string& dataset, int percent) {
  static const std::map<std::string, std::vector<int>> table{
      {"20ng", {45, 45, 60, 60, 60, 60}},     {"amazon", {30, 30, 30, 30, 30, 30}},
      {"twitter", {30, 45, 45, 45, 45, 45}},  {"bbcsport", {60, 60, 75, 75, 75, 90}},
      {"classic", {30, 30, 30, 30, 30, 30}},  {"recipe-l", {30, 30, 30, 30, 30, 30}},
  };
  static const std::vector<int> percents{10, 20, 30, 40, 50, 100};
  const auto it = table.find(fold_token(dataset));
  if (it == table.end()) return std::nullopt;
  for (std::size_t i = 0; i < percents.size(); ++i)
    if (percents[i] == percent) return it->second[i];
  return std::nullopt;
}

inline constexpr int kFallbackComponents = 30;

struct EvalSettings {
  int repeats_full = 5;
  int repeats_limited = 10;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<int> shots{5, 10, 15, 20};
  int fewshot_repeats = 5;
  ProtoMetric fewshot_metric = ProtoMetric::kCosine;
  std::vector<double> C_grid = default_C_grid();
  int svm_epochs = 100;
  std::string concept_pairs;  // JSONL, optional
  std::string sts_pairs;      // JSONL, optional
};

struct PipelineConfig {
  std::string dataset;
  int data_percent = 100;
  std::string corpus;
  std::string store;
  CorpusFormat corpus_format = CorpusFormat::kJsonl;
  StoreFormat embed_format = StoreFormat::kCeb1;
  std::string work_dir = "work";

  std::uint64_t seed = 42;
  PipelineMode mode = PipelineMode::kCtxd;
  double tau = 0.8;
  SenseLimits wsd_limits;
  int K = 0;  // 0: take it from the dataset table
  GmmConfig gmm;
  std::optional<int> k_aniso = 6;  // nullopt: anisotropy adjustment off
  AnisoTarget aniso_target = AnisoTarget::kWords;
  int aniso_top_words = 1000;
  std::size_t aniso_sample_size = 100000;
  IdfDomain idf_domain = IdfDomain::kSense;
  Averaging averaging = Averaging::kOccurrence;
  std::optional<double> sparsify_p;  // nullopt: off
  EvalSettings eval;

  /// K after applying the dataset table. `percent` defaults to data_percent.
  int components(std::optional<int> percent = std::nullopt) const {
    if (K > 0) return K;
    if (!dataset.empty()) {
      if (auto k = tabulated_components(dataset, percent.value_or(data_percent))) return *k;
    }
    return kFallbackComponents;
  }

  WsdConfig wsd() const {
    WsdConfig w;
    w.tau = tau;
    w.seed = derive_seed(seed, "wsd");
    w.limits = wsd_limits;
    w.single_sense = mode == PipelineMode::kWeightAvg;
    return w;
  }
};

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

inline void check_known_keys(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

}  // namespace detail

inline void validate_config(const PipelineConfig& c);

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::json_get;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::check_known_keys(j,
                           {"dataset", "data_percent", "corpus", "store", "corpus_format", "embed_format", "work_dir",
                            "seed", "mode", "tau", "wsd", "K", "gmm", "k_aniso", "aniso_target", "aniso_top_words",
                            "aniso_sample_size", "idf_domain", "averaging", "sparsify_p", "eval"},
                           "");
  PipelineConfig c;
  if (j.contains("dataset")) c.dataset = json_get<std::string>(j["dataset"], "dataset");
  if (j.contains("data_percent")) c.data_percent = json_get<int>(j["data_percent"], "data_percent");
  if (j.contains("corpus")) c.corpus = json_get<std::string>(j["corpus"], "corpus");
  if (j.contains("store")) c.store = json_get<std::string>(j["store"], "store");
  if (j.contains("corpus_format")) c.corpus_format = parse_corpus_format(json_get<std::string>(j["corpus_format"], "corpus_format"));
  if (j.contains("embed_format")) c.embed_format = parse_store_format(json_get<std::string>(j["embed_format"], "embed_format"));
  if (j.contains("work_dir")) c.work_dir = json_get<std::string>(j["work_dir"], "work_dir");
  if (j.contains("seed")) c.seed = json_get<std::uint64_t>(j["seed"], "seed");
  if (j.contains("mode")) {
    const auto m = json_get<std::string>(j["mode"], "mode");
    if (m == "ctxd") c.mode = PipelineMode::kCtxd;
    else if (m == "weight_avg") c.mode = PipelineMode::kWeightAvg;
    else throw ConfigError("mode must be \"ctxd\" or \"weight_avg\", got \"" + m + "\"");
  }
  if (j.contains("tau")) c.tau = json_get<double>(j["tau"], "tau");
  if (j.contains("wsd")) {
    const auto& w = j["wsd"];
    detail::check_known_keys(w, {"k_max", "min_occurrences", "min_cluster_size"}, "wsd.");
    if (w.contains("k_max")) c.wsd_limits.k_max = json_get<int>(w["k_max"], "wsd.k_max");
    if (w.contains("min_occurrences")) c.wsd_limits.min_occurrences = json_get<int>(w["min_occurrences"], "wsd.min_occurrences");
    if (w.contains("min_cluster_size")) c.wsd_limits.min_cluster_size = json_get<int>(w["min_cluster_size"], "wsd.min_cluster_size");
  }
  if (j.contains("K")) c.K = json_get<int>(j["K"], "K");
  if (j.contains("gmm")) {
    const auto& g = j["gmm"];
    detail::check_known_keys(g, {"max_iters", "tol", "eps", "diagonal"}, "gmm.");
    if (g.contains("max_iters")) c.gmm.max_iters = json_get<int>(g["max_iters"], "gmm.max_iters");
    if (g.contains("tol")) c.gmm.tol = json_get<double>(g["tol"], "gmm.tol");
    if (g.contains("eps")) c.gmm.eps = json_get<double>(g["eps"], "gmm.eps");
    if (g.contains("diagonal")) c.gmm.diagonal = json_get<bool>(g["diagonal"], "gmm.diagonal");
  }
  if (j.contains("k_aniso")) {
    const auto& k = j["k_aniso"];
    if (k.is_string() && k.get<std::string>() == "off") c.k_aniso.reset();
    else if (k.is_null()) c.k_aniso.reset();
    else c.k_aniso = json_get<int>(k, "k_aniso");
  }
  if (j.contains("aniso_target")) {
    const auto t = json_get<std::string>(j["aniso_target"], "aniso_target");
    if (t == "words") c.aniso_target = AnisoTarget::kWords;
    else if (t == "documents") c.aniso_target = AnisoTarget::kDocuments;
    else throw ConfigError("aniso_target must be \"words\" or \"documents\", got \"" + t + "\"");
  }
  if (j.contains("aniso_top_words")) c.aniso_top_words = json_get<int>(j["aniso_top_words"], "aniso_top_words");
  if (j.contains("aniso_sample_size")) c.aniso_sample_size = json_get<std::size_t>(j["aniso_sample_size"], "aniso_sample_size");
  if (j.contains("idf_domain")) {
    const auto d = json_get<std::string>(j["idf_domain"], "idf_domain");
    if (d == "sense") c.idf_domain = IdfDomain::kSense;
    else if (d == "surface") c.idf_domain = IdfDomain::kSurface;
    else throw ConfigError("idf_domain must be \"sense\" or \"surface\", got \"" + d + "\"");
  }
  if (j.contains("averaging")) {
    const auto a = json_get<std::string>(j["averaging"], "averaging");
    if (a == "occurrence") c.averaging = Averaging::kOccurrence;
    else if (a == "unique") c.averaging = Averaging::kUniqueType;
    else throw ConfigError("averaging must be \"occurrence\" or \"unique\", got \"" + a + "\"");
  }
  if (j.contains("sparsify_p")) {
    const auto& p = j["sparsify_p"];
    if (p.is_null() || (p.is_string() && p.get<std::string>() == "off")) c.sparsify_p.reset();
    else c.sparsify_p = json_get<double>(p, "sparsify_p");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    detail::check_known_keys(e,
                             {"repeats_full", "repeats_limited", "fractions", "shots", "fewshot_repeats",
                              "fewshot_metric", "C_grid", "svm_epochs", "concept_pairs", "sts_pairs"},
                             "eval.");
    auto& s = c.eval;
    if (e.contains("repeats_full")) s.repeats_full = json_get<int>(e["repeats_full"], "eval.repeats_full");
    if (e.contains("repeats_limited")) s.repeats_limited = json_get<int>(e["repeats_limited"], "eval.repeats_limited");
    if (e.contains("fractions")) s.fractions = json_get<std::vector<double>>(e["fractions"], "eval.fractions");
    if (e.contains("shots")) s.shots = json_get<std::vector<int>>(e["shots"], "eval.shots");
    if (e.contains("fewshot_repeats")) s.fewshot_repeats = json_get<int>(e["fewshot_repeats"], "eval.fewshot_repeats");
    if (e.contains("fewshot_metric")) s.fewshot_metric = parse_proto_metric(json_get<std::string>(e["fewshot_metric"], "eval.fewshot_metric"));
    if (e.contains("C_grid")) s.C_grid = json_get<std::vector<double>>(e["C_grid"], "eval.C_grid");
    if (e.contains("svm_epochs")) s.svm_epochs = json_get<int>(e["svm_epochs"], "eval.svm_epochs");
    if (e.contains("concept_pairs")) s.concept_pairs = json_get<std::string>(e["concept_pairs"], "eval.concept_pairs");
    if (e.contains("sts_pairs")) s.sts_pairs = json_get<std::string>(e["sts_pairs"], "eval.sts_pairs");
  }
  validate_config(c);
  return c;
}

inline void validate_config(const PipelineConfig& c) {
  if (!(c.tau > 0.0 && c.tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (c.K < 0) throw ConfigError("K must be >= 1 (or 0 to use the dataset table)");
  if (c.data_percent < 1 || c.data_percent > 100) throw ConfigError("data_percent must lie in [1, 100]");
  if (c.k_aniso && *c.k_aniso < 0) throw ConfigError("k_aniso must be >= 0 or \"off\"");
  if (c.wsd_limits.k_max < 1 || c.wsd_limits.min_occurrences < 1 || c.wsd_limits.min_cluster_size < 1)
    throw ConfigError("wsd limits must be >= 1");
  if (c.gmm.max_iters < 0 || !(c.gmm.tol >= 0.0) || !(c.gmm.eps >= 0.0))
    throw ConfigError("gmm settings must be non-negative");
  if (c.sparsify_p && !(*c.sparsify_p >= 0.0 && *c.sparsify_p < 100.0))
    throw ConfigError("sparsify_p must lie in [0, 100)");
  if (c.aniso_top_words < 2) throw ConfigError("aniso_top_words must be >= 2");
  if (c.eval.repeats_full < 1 || c.eval.repeats_limited < 1 || c.eval.fewshot_repeats < 1)
    throw ConfigError("eval repeats must be >= 1");
  if (c.eval.C_grid.empty()) throw ConfigError("eval.C_grid must not be empty");
  for (double C : c.eval.C_grid)
    if (!(C > 0.0)) throw ConfigError("eval.C_grid values must be > 0");
  for (double f : c.eval.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("eval.fractions must lie in (0, 1]");
  for (int s : c.eval.shots)
    if (s < 1) throw ConfigError("eval.shots must be >= 1");
  if (c.eval.svm_epochs < 1) throw ConfigError("eval.svm_epochs must be >= 1");
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  j["data_percent"] = c.data_percent;
  j["corpus"] = c.corpus;
  j["store"] = c.store;
  j["corpus_format"] = c.corpus_format == CorpusFormat::kJsonl ? "jsonl" : "tsv";
  j["embed_format"] = c.embed_format == StoreFormat::kCeb1 ? "ceb1" : "jsonl";
  j["work_dir"] = c.work_dir;
  j["seed"] = c.seed;
  j["mode"] = c.mode == PipelineMode::kCtxd ? "ctxd" : "weight_avg";
  j["tau"] = c.tau;
  j["wsd"] = {{"k_max", c.wsd_limits.k_max},
              {"min_occurrences", c.wsd_limits.min_occurrences},
              {"min_cluster_size", c.wsd_limits.min_cluster_size}};
  j["K"] = c.K;
  j["gmm"] = {{"max_iters", c.gmm.max_iters}, {"tol", c.gmm.tol}, {"eps", c.gmm.eps}, {"diagonal", c.gmm.diagonal}};
  if (c.k_aniso) j["k_aniso"] = *c.k_aniso;
  else j["k_aniso"] = "off";
  j["aniso_target"] = c.aniso_target == AnisoTarget::kWords ? "words" : "documents";
  j["aniso_top_words"] = c.aniso_top_words;
  j["aniso_sample_size"] = c.aniso_sample_size;
  j["idf_domain"] = c.idf_domain == IdfDomain::kSense ? "sense" : "surface";
  j["averaging"] = c.averaging == Averaging::kOccurrence ? "occurrence" : "unique";
  if (c.sparsify_p) j["sparsify_p"] = *c.sparsify_p;
  else j["sparsify_p"] = "off";
  j["eval"] = {{"repeats_full", c.eval.repeats_full},
               {"repeats_limited", c.eval.repeats_limited},
               {"fractions", c.eval.fractions},
               {"shots", c.eval.shots},
               {"fewshot_repeats", c.eval.fewshot_repeats},
               {"fewshot_metric", c.eval.fewshot_metric == ProtoMetric::kCosine ? "cosine" : "euclidean"},
               {"C_grid", c.eval.C_grid},
               {"svm_epochs", c.eval.svm_epochs},
               {"concept_pairs", c.eval.concept_pairs},
               {"sts_pairs", c.eval.sts_pairs}};
  return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Applies "a.b.c=value" to a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &j;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = nlohmann::json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + parts[i] + "' is not an object");
  }
  (*node)[parts.back()] = value;
}

/// Hash of the settings that determine the artifacts up to and including
/// `stage` (ingest, wsd, aniso, gmm, docvec). Evaluation settings never enter.
inline std::string stage_hash(const PipelineConfig& c, std::string_view stage) {
  static const std::vector<std::string_view> order{"ingest", "wsd", "aniso", "gmm", "docvec"};
  const auto pos = std::find(order.begin(), order.end(), stage);
  if (pos == order.end()) throw ConfigError("unknown stage '" + std::string(stage) + "'");
  const auto upto = static_cast<std::size_t>(pos - order.begin());
  const auto full = config_to_json(c);
  nlohmann::json keyed;
  keyed["ingest"] = {full["corpus"], full["store"], full["corpus_format"], full["embed_format"]};
  if (upto >= 1) keyed["wsd"] = {full["seed"], full["mode"], full["tau"], full["wsd"]};
  if (upto >= 2) keyed["aniso"] = {full["k_aniso"], full["aniso_target"]};
  if (upto >= 3) keyed["gmm"] = {c.components(), full["gmm"]};
  if (upto >= 4) keyed["docvec"] = {full["idf_domain"], full["averaging"], full["sparsify_p"]};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(keyed.dump())));
  return buf;
}

inline std::string config_hash(const PipelineConfig& c) { return stage_hash(c, "docvec"); }

}  // namespace ctxd
