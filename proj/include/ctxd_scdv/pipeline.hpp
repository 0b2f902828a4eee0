#pragma once

// Stage orchestration. Every stage reads its inputs from the work directory,
// writes its artifact there together with a "<artifact>.meta.json" sidecar
// holding the stage name and config hash, and refuses upstream artifacts whose
// hash does not match the current config (unless forced).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anisotropy.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "docvec.hpp"
#include "embed_store.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "gmm.hpp"
#include "log.hpp"
#include "report.hpp"
#include "wsd.hpp"

namespace ctxd {

namespace fs = std::filesystem;

struct Workspace {
  fs::path dir;

  fs::path manifest() const { return dir / "ingest.json"; }
  fs::path corpus() const { return dir / "corpus.jsonl"; }
  fs::path inventory() const { return dir / "senses.jsonl"; }
  fs::path polysemy() const { return dir / "polysemy.json"; }
  fs::path aniso() const { return dir / "aniso.atb"; }
  fs::path aniso_report() const { return dir / "aniso.json"; }
  fs::path gmm() const { return dir / "gmm.gmb"; }
  fs::path gmm_report() const { return dir / "gmm.json"; }
  fs::path doc_aniso() const { return dir / "docvec_aniso.atb"; }
  fs::path docvec() const { return dir / "docvec.dvb"; }
  fs::path results() const { return dir / "results"; }
};

inline fs::path meta_path(const fs::path& artifact) {
  return artifact.string() + ".meta.json";
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline void write_meta(const fs::path& artifact, const std::string& stage, const std::string& hash,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = extra;
  j["stage"] = stage;
  j["config_hash"] = hash;
  write_text(meta_path(artifact), j.dump(2) + "\n");
}

/// Checks that `artifact` exists and was produced by `stage` under the same
/// configuration. With `force`, a stale artifact only triggers a warning.
inline void require_artifact(const fs::path& artifact, const std::string& stage, const std::string& hash, bool force) {
  if (!fs::exists(artifact))
    throw DataError("missing artifact '" + artifact.string() + "'; run the '" + stage + "' stage first");
  const auto meta = meta_path(artifact);
  std::string found = "(none)";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_discarded() && j.contains("config_hash") && j["config_hash"].is_string())
      found = j["config_hash"].get<std::string>();
  }
  if (found == hash) return;
  const std::string msg = "artifact '" + artifact.string() + "' from stage '" + stage + "' has config hash " + found +
                          ", current config hashes to " + hash;
  if (!force) throw DataError(msg + "; rerun that stage or pass --force");
  log_warning(msg + " (accepted because of --force)");
}

struct StageContext {
  PipelineConfig cfg;
  Workspace ws;
  bool force = false;
};

inline StageContext make_context(const PipelineConfig& cfg, bool force = false) {
  StageContext ctx{cfg, Workspace{fs::path(cfg.work_dir)}, force};
  std::error_code ec;
  fs::create_directories(ctx.ws.dir, ec);
  if (ec) throw DataError("cannot create work directory '" + cfg.work_dir + "': " + ec.message());
  return ctx;
}

/// Runs `fn`, prefixing any library error with the stage name while keeping
/// its category (and so its exit code).
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string prefix = "stage '" + stage + "': ";
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  }
}

// ---------------------------------------------------------------- ingest

/// Loads and validates the corpus and store, writes the normalized corpus and
/// a manifest pointing at the store.
inline void stage_ingest(const StageContext& ctx) {
  run_stage("ingest", [&] {
    const auto& c = ctx.cfg;
    if (c.corpus.empty()) throw ConfigError("no corpus path configured (--corpus)");
    if (c.store.empty()) throw ConfigError("no embedding store path configured (--store)");
    const Corpus corpus = load_corpus(c.corpus, c.corpus_format);
    StoreReadOptions opts;
    opts.corpus = &corpus;
    const EmbeddingStore store = load_store(c.store, c.embed_format, opts);
    std::size_t empty_docs = 0;
    for (const auto& d : corpus.docs()) empty_docs += d.empty();
    if (empty_docs) log_warning(std::to_string(empty_docs) + " empty documents in the corpus");

    const auto hash = stage_hash(c, "ingest");
    save_corpus_jsonl(corpus, ctx.ws.corpus().string());
    write_meta(ctx.ws.corpus(), "ingest", hash);
    nlohmann::json manifest{{"store", fs::absolute(c.store).string()},
                            {"embed_format", c.embed_format == StoreFormat::kCeb1 ? "ceb1" : "jsonl"},
                            {"dim", store.dim()},
                            {"records", store.size()},
                            {"documents", corpus.size()},
                            {"train", corpus.ids_in_split(Split::kTrain).size()},
                            {"test", corpus.ids_in_split(Split::kTest).size()},
                            {"labels", corpus.label_set()},
                            {"vocabulary", corpus.vocab().size()}};
    write_text(ctx.ws.manifest(), manifest.dump(2) + "\n");
    write_meta(ctx.ws.manifest(), "ingest", hash);
    log_info("ingest: " + std::to_string(corpus.size()) + " documents, " + std::to_string(store.size()) +
             " token vectors of dim " + std::to_string(store.dim()));
  });
}

inline Corpus load_ingested_corpus(const StageContext& ctx) {
  require_artifact(ctx.ws.corpus(), "ingest", stage_hash(ctx.cfg, "ingest"), ctx.force);
  return load_corpus(ctx.ws.corpus().string(), CorpusFormat::kJsonl);
}

inline EmbeddingStore load_ingested_store(const StageContext& ctx, const Corpus& corpus) {
  require_artifact(ctx.ws.manifest(), "ingest", stage_hash(ctx.cfg, "ingest"), ctx.force);
  const auto manifest = read_json_file(ctx.ws.manifest().string());
  StoreReadOptions opts;
  opts.corpus = &corpus;
  opts.expected_dim = manifest.at("dim").get<std::uint32_t>();
  return load_store(manifest.at("store").get<std::string>(),
                    parse_store_format(manifest.at("embed_format").get<std::string>()), opts);
}

// ---------------------------------------------------------------- wsd

inline nlohmann::json polysemy_report(const SenseInventory& inv) {
  nlohmann::json dist = nlohmann::json::object();
  double k3 = 0.0;
  for (const auto& [k, share] : inv.polysemy_distribution()) {
    dist[std::to_string(k)] = 100.0 * share;
    if (k >= 3) k3 += 100.0 * share;
  }
  std::size_t senses = 0;
  for (const auto& w : inv.words()) senses += static_cast<std::size_t>(w.k());
  return {{"tau", inv.tau()},
          {"words", inv.words().size()},
          {"senses", senses},
          {"percent_by_k", dist},
          {"percent_k1", dist.value("1", 0.0)},
          {"percent_k2", dist.value("2", 0.0)},
          {"percent_k3_or_more", k3}};
}

inline SenseInventory stage_wsd(const StageContext& ctx) {
  return run_stage("wsd", [&] {
    const Corpus corpus = load_ingested_corpus(ctx);
    const EmbeddingStore store = load_ingested_store(ctx, corpus);
    SenseInventory inv = induce_senses(store, ctx.cfg.wsd());
    const auto hash = stage_hash(ctx.cfg, "wsd");
    save_inventory(inv, ctx.ws.inventory().string());
    write_meta(ctx.ws.inventory(), "wsd", hash);
    const auto report = polysemy_report(inv);
    write_text(ctx.ws.polysemy(), report.dump(2) + "\n");
    write_meta(ctx.ws.polysemy(), "wsd", hash);
    log_info("wsd: " + std::to_string(inv.words().size()) + " words, " + report["senses"].dump() + " senses");
    return inv;
  });
}

inline SenseInventory load_wsd(const StageContext& ctx) {
  require_artifact(ctx.ws.inventory(), "wsd", stage_hash(ctx.cfg, "wsd"), ctx.force);
  return load_inventory(ctx.ws.inventory().string(), ctx.cfg.tau);
}

inline Matrix sense_matrix(const std::vector<SenseEntry>& entries, std::size_t dim) {
  Matrix x(static_cast<Eigen::Index>(entries.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < entries.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = entries[i].vec.transpose();
  return x;
}

// ---------------------------------------------------------------- aniso

struct AnisoReport {
  std::string status;  // "applied", "off", "documents"
  int k = 0;
  std::size_t measured_vectors = 0;
  double cosine_before = 0.0;
  double cosine_after = 0.0;

  nlohmann::json to_json() const {
    return {{"status", status},
            {"k", k},
            {"measured_vectors", measured_vectors},
            {"mean_cosine_before", cosine_before},
            {"mean_cosine_after", cosine_after}};
  }
};

/// Rows of the sense vectors belonging to the `top` most frequent surface
/// words (ties broken by word).
inline std::vector<std::size_t> top_word_rows(const std::vector<SenseEntry>& entries, int top) {
  std::map<std::string, std::size_t> freq;
  for (const auto& e : entries) freq[e.word] += e.count;
  std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (words.size() > static_cast<std::size_t>(top)) words.resize(static_cast<std::size_t>(top));
  std::set<std::string> keep;
  for (const auto& [w, _] : words) keep.insert(w);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (keep.count(entries[i].word)) rows.push_back(i);
  return rows;
}

inline AnisotropyTransform identity_transform(std::size_t dim) {
  AnisotropyTransform t;
  t.mean = Vector::Zero(static_cast<Eigen::Index>(dim));
  t.components.resize(0, static_cast<Eigen::Index>(dim));
  return t;
}

/// Fits the word-level transform on the sense vectors. When the adjustment is
/// off or targets document vectors, the saved transform is the identity.
inline AnisoReport stage_aniso(const StageContext& ctx) {
  return run_stage("aniso", [&] {
    const SenseInventory inv = load_wsd(ctx);
    const auto entries = sense_vocabulary(inv);
    const Matrix x = sense_matrix(entries, inv.dim());
    AnisoReport report;
    AnisotropyTransform t;
    if (!ctx.cfg.k_aniso) {
      report.status = "off";
      t = identity_transform(inv.dim());
    } else if (ctx.cfg.aniso_target == AnisoTarget::kDocuments) {
      report.status = "documents";
      report.k = *ctx.cfg.k_aniso;
      t = identity_transform(inv.dim());
    } else {
      report.status = "applied";
      report.k = *ctx.cfg.k_aniso;
      t = fit_anisotropy(x, *ctx.cfg.k_aniso);
      const auto rows = top_word_rows(entries, ctx.cfg.aniso_top_words);
      Matrix top(static_cast<Eigen::Index>(rows.size()), x.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) top.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      report.measured_vectors = rows.size();
      if (rows.size() >= 2) {
        const auto seed = derive_seed(ctx.cfg.seed, "aniso-measure");
        report.cosine_before = mean_pairwise_cosine(top, ctx.cfg.aniso_sample_size, seed);
        report.cosine_after = mean_pairwise_cosine(apply_anisotropy_rows(t, top), ctx.cfg.aniso_sample_size, seed);
      }
      log_info("aniso: mean pairwise cosine " + std::to_string(report.cosine_before) + " -> " +
               std::to_string(report.cosine_after));
    }
    const auto hash = stage_hash(ctx.cfg, "aniso");
    save_anisotropy(t, ctx.ws.aniso().string());
    write_meta(ctx.ws.aniso(), "aniso", hash);
    write_text(ctx.ws.aniso_report(), report.to_json().dump(2) + "\n");
    write_meta(ctx.ws.aniso_report(), "aniso", hash);
    return report;
  });
}

inline AnisotropyTransform load_aniso(const StageContext& ctx) {
  require_artifact(ctx.ws.aniso(), "aniso", stage_hash(ctx.cfg, "aniso"), ctx.force);
  return load_anisotropy(ctx.ws.aniso().string());
}

// ---------------------------------------------------------------- gmm

inline GmmFit stage_gmm(const StageContext& ctx) {
  return run_stage("gmm", [&] {
    const SenseInventory inv = load_wsd(ctx);
    const AnisotropyTransform t = load_aniso(ctx);
    const Matrix x = apply_anisotropy_rows(t, sense_matrix(sense_vocabulary(inv), inv.dim()));
    const int K = ctx.cfg.components();
    GmmFit fit = fit_gmm(x, K, derive_seed(ctx.cfg.seed, "gmm"), ctx.cfg.gmm);
    if (!fit.converged)
      log_warning("gmm: EM stopped after " + std::to_string(fit.iterations) + " iterations without converging");
    const auto hash = stage_hash(ctx.cfg, "gmm");
    save_gmm(fit.model, ctx.ws.gmm().string());
    write_meta(ctx.ws.gmm(), "gmm", hash);
    const nlohmann::json report{{"K", K},
                                {"dim", x.cols()},
                                {"vectors", x.rows()},
                                {"iterations", fit.iterations},
                                {"converged", fit.converged},
                                {"mean_log_likelihood", fit.log_likelihood}};
    write_text(ctx.ws.gmm_report(), report.dump(2) + "\n");
    write_meta(ctx.ws.gmm_report(), "gmm", hash);
    log_info("gmm: K=" + std::to_string(K) + ", " + std::to_string(fit.iterations) + " EM iterations");
    return fit;
  });
}

inline GmmModel load_gmm_stage(const StageContext& ctx) {
  require_artifact(ctx.ws.gmm(), "gmm", stage_hash(ctx.cfg, "gmm"), ctx.force);
  return load_gmm(ctx.ws.gmm().string());
}

// ---------------------------------------------------------------- docvec

/// Word-topic table over the sense vocabulary, keyed by sense-tagged token.
/// Senses that tag no occurrence are left out.
inline WordTopicTable build_word_topic_table(const SenseInventory& inv, const AnisotropyTransform& t,
                                             const GmmModel& model, const IdfTable& idf, IdfDomain domain) {
  const auto entries = sense_vocabulary(inv);
  const Matrix x = apply_anisotropy_rows(t, sense_matrix(entries, inv.dim()));
  const Matrix post = posteriors(model, x);
  WordTopicTable table(static_cast<std::size_t>(model.num_components()), inv.dim());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].count == 0) continue;
    const double w = idf.lookup(domain == IdfDomain::kSense ? entries[i].token : entries[i].word);
    table.add(entries[i].token, x.row(static_cast<Eigen::Index>(i)).transpose(),
              post.row(static_cast<Eigen::Index>(i)).transpose(), w);
  }
  return table;
}

inline DocumentVectorSet stage_docvec(const StageContext& ctx) {
  return run_stage("docvec", [&] {
    const Corpus corpus = load_ingested_corpus(ctx);
    const SenseInventory inv = load_wsd(ctx);
    const AnisotropyTransform t = load_aniso(ctx);
    const GmmModel model = load_gmm_stage(ctx);
    const auto streams = inv.tagged_streams(corpus);
    const IdfTable idf = ctx.cfg.idf_domain == IdfDomain::kSense ? compute_idf(streams) : compute_idf(corpus);
    const WordTopicTable table = build_word_topic_table(inv, t, model, idf, ctx.cfg.idf_domain);
    DocumentVectorSet set = build_document_vectors(streams, table, ctx.cfg.averaging);
    if (ctx.cfg.sparsify_p) set = sparsify(set, *ctx.cfg.sparsify_p);
    const auto hash = stage_hash(ctx.cfg, "docvec");
    if (ctx.cfg.k_aniso && ctx.cfg.aniso_target == AnisoTarget::kDocuments) {
      const auto dt = fit_anisotropy(set.vectors, *ctx.cfg.k_aniso);
      set.vectors = apply_anisotropy_rows(dt, set.vectors);
      save_anisotropy(dt, ctx.ws.doc_aniso().string());
      write_meta(ctx.ws.doc_aniso(), "docvec", hash);
    }
    set.config_hash = hash;
    save_document_vectors(set, ctx.ws.docvec().string());
    write_meta(ctx.ws.docvec(), "docvec", hash,
               {{"K", set.num_components}, {"d", set.word_dim}, {"documents", set.size()}});
    log_info("docvec: " + std::to_string(set.size()) + " vectors of dim " + std::to_string(set.dim()));
    return set;
  });
}

inline DocumentVectorSet load_docvec(const StageContext& ctx) {
  const auto hash = stage_hash(ctx.cfg, "docvec");
  require_artifact(ctx.ws.docvec(), "docvec", hash, ctx.force);
  DocumentVectorSet set = load_document_vectors(ctx.ws.docvec().string());
  const auto meta = read_json_file(meta_path(ctx.ws.docvec()).string());
  set.num_components = meta.value("K", std::size_t{1});
  set.word_dim = meta.value("d", set.dim());
  set.config_hash = hash;
  return set;
}

// ---------------------------------------------------------------- eval

/// Maps corpus ids as written in the input file to dense document ids.
inline std::map<std::int64_t, std::size_t> source_index(const Corpus& corpus) {
  std::map<std::int64_t, std::size_t> out;
  for (const auto& d : corpus.docs()) out.emplace(d.source_id, d.id);
  return out;
}

namespace detail {

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::size_t resolve_doc(const std::map<std::int64_t, std::size_t>& index, std::int64_t id) {
  const auto it = index.find(id);
  if (it == index.end()) throw DataError("unknown document id " + std::to_string(id));
  return it->second;
}

}  // namespace detail

/// JSONL lines {"concept": id, "project": id, "match": bool}; ids are corpus ids.
inline std::vector<ConceptPair> load_concept_pairs(const std::string& path, const Corpus& corpus) {
  const auto index = source_index(corpus);
  std::vector<ConceptPair> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
    const auto& m = j.at("match");
    const bool match = m.is_boolean() ? m.get<bool>() : m.get<int>() != 0;
    out.push_back({detail::resolve_doc(index, j.at("concept").get<std::int64_t>()),
                   detail::resolve_doc(index, j.at("project").get<std::int64_t>()), match});
  });
  return out;
}

/// JSONL lines {"a": id, "b": id, "gold": score, "task": name}; "task" is
/// optional and defaults to "sts".
inline std::vector<StsPair> load_sts_pairs(const std::string& path, const Corpus& corpus) {
  const auto index = source_index(corpus);
  std::vector<StsPair> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
    out.push_back({detail::resolve_doc(index, j.at("a").get<std::int64_t>()),
                   detail::resolve_doc(index, j.at("b").get<std::int64_t>()), j.at("gold").get<double>(),
                   j.value("task", std::string("sts"))});
  });
  return out;
}

inline ClassifyConfig classify_config(const PipelineConfig& c, double fraction) {
  ClassifyConfig cc;
  cc.fraction = fraction;
  cc.repeats = fraction < 1.0 ? c.eval.repeats_limited : c.eval.repeats_full;
  cc.seed = derive_seed(c.seed, "eval");
  cc.C_grid = c.eval.C_grid;
  cc.svm.epochs = c.eval.svm_epochs;
  return cc;
}

inline FewShotConfig fewshot_config(const PipelineConfig& c, int shots) {
  FewShotConfig fc;
  fc.shots = shots;
  fc.repeats = c.eval.fewshot_repeats;
  fc.seed = derive_seed(c.seed, "eval");
  fc.metric = c.eval.fewshot_metric;
  return fc;
}

inline EvalRun concept_run(const DocumentVectorSet& dv, const std::vector<ConceptPair>& pairs) {
  const auto r = concept_match(dv, pairs);
  EvalRun run;
  run.protocol = "concept";
  run.config = {{"pairs", pairs.size()}};
  run.metric_names = {"accuracy", "f1"};
  run.per_run.push_back({{"accuracy", r.accuracy}, {"f1", r.f1}, {"threshold", r.threshold}});
  return run;
}

/// Pearson r per task and their average, stored as r x 100 like the other
/// percentage metrics.
inline EvalRun sts_run(const DocumentVectorSet& dv, const std::vector<StsPair>& pairs) {
  const auto r = sts_eval(dv, pairs);
  EvalRun run;
  run.protocol = "sts";
  run.config = {{"pairs", pairs.size()}};
  nlohmann::json row;
  for (const auto& [task, value] : r.per_task) {
    row[task] = 100.0 * value;
    run.metric_names.push_back(task);
  }
  row["average"] = 100.0 * r.average;
  run.metric_names.push_back("average");
  run.per_run.push_back(row);
  return run;
}

inline void save_run(const EvalRun& run, const fs::path& stem, const std::string& hash) {
  fs::create_directories(stem.parent_path());
  auto j = run.to_json();
  j["config_hash"] = hash;
  write_text(stem.string() + ".json", j.dump(2) + "\n");
  std::ofstream csv(stem.string() + ".csv", std::ios::trunc);
  if (!csv) throw DataError("cannot open '" + stem.string() + ".csv' for writing");
  run.write_csv(csv);
}

inline std::string fraction_tag(double f) { return std::to_string(static_cast<int>(std::lround(f * 100.0))); }

/// Classification at each fraction. With more than one fraction, full data
/// is added when missing and a curve CSV is written.
inline std::vector<EvalRun> stage_eval_classify(const StageContext& ctx, std::vector<double> fractions) {
  return run_stage("eval-classify", [&] {
    const Corpus corpus = load_ingested_corpus(ctx);
    const DocumentVectorSet dv = load_docvec(ctx);
    if (fractions.empty()) fractions = {1.0};
    const bool curve = fractions.size() > 1;
    if (curve && std::find(fractions.begin(), fractions.end(), 1.0) == fractions.end()) fractions.push_back(1.0);
    std::vector<EvalRun> runs;
    for (double f : fractions) {
      EvalRun run = evaluate_classification(dv, corpus, classify_config(ctx.cfg, f));
      save_run(run, ctx.ws.results() / ("classify_" + fraction_tag(f)), dv.config_hash);
      runs.push_back(std::move(run));
    }
    if (curve) write_curve_csv(runs, "fraction", (ctx.ws.results() / "limited_curve.csv").string());
    return runs;
  });
}

inline std::vector<EvalRun> stage_eval_fewshot(const StageContext& ctx, std::vector<int> shots) {
  return run_stage("eval-fewshot", [&] {
    const Corpus corpus = load_ingested_corpus(ctx);
    const DocumentVectorSet dv = load_docvec(ctx);
    if (shots.empty()) throw ConfigError("no shot counts given");
    std::vector<EvalRun> runs;
    for (int s : shots) {
      EvalRun run = few_shot(dv, corpus, fewshot_config(ctx.cfg, s));
      save_run(run, ctx.ws.results() / ("fewshot_" + std::to_string(s)), dv.config_hash);
      runs.push_back(std::move(run));
    }
    if (runs.size() > 1) write_curve_csv(runs, "shots", (ctx.ws.results() / "fewshot_curve.csv").string());
    return runs;
  });
}

inline EvalRun stage_eval_concept(const StageContext& ctx, const std::string& pairs_path) {
  return run_stage("eval-concept", [&] {
    if (pairs_path.empty()) throw ConfigError("no concept pair file given (--pairs)");
    const Corpus corpus = load_ingested_corpus(ctx);
    const DocumentVectorSet dv = load_docvec(ctx);
    EvalRun run = concept_run(dv, load_concept_pairs(pairs_path, corpus));
    save_run(run, ctx.ws.results() / "concept", dv.config_hash);
    return run;
  });
}

inline EvalRun stage_eval_sts(const StageContext& ctx, const std::string& pairs_path) {
  return run_stage("eval-sts", [&] {
    if (pairs_path.empty()) throw ConfigError("no STS pair file given (--pairs)");
    const Corpus corpus = load_ingested_corpus(ctx);
    const DocumentVectorSet dv = load_docvec(ctx);
    EvalRun run = sts_run(dv, load_sts_pairs(pairs_path, corpus));
    save_run(run, ctx.ws.results() / "sts", dv.config_hash);
    return run;
  });
}

// ---------------------------------------------------------------- end to end

struct PipelineResult {
  DocumentVectorSet vectors;
  SenseInventory senses;
  AnisoReport aniso;
  GmmFit gmm;
  std::vector<EvalRun> runs;
};

struct RunOptions {
  bool evaluate = true;
  bool force = false;
};

/// ingest -> wsd -> aniso -> gmm -> docvec -> evaluation. Each stage writes
/// and then reloads its artifact, so the returned vectors are exactly what is
/// on disk.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const RunOptions& opts = {}) {
  const StageContext ctx = make_context(cfg, opts.force);
  PipelineResult r;
  stage_ingest(ctx);
  r.senses = stage_wsd(ctx);
  r.aniso = stage_aniso(ctx);
  r.gmm = stage_gmm(ctx);
  stage_docvec(ctx);
  r.vectors = load_docvec(ctx);
  if (!opts.evaluate) return r;

  const Corpus corpus = load_ingested_corpus(ctx);
  const bool labeled = !labeled_split(corpus, Split::kTrain).ids.empty() && !labeled_split(corpus, Split::kTest).ids.empty();
  if (labeled) {
    auto fractions = cfg.eval.fractions;
    auto cls = stage_eval_classify(ctx, fractions.empty() ? std::vector<double>{1.0} : fractions);
    r.runs.insert(r.runs.end(), cls.begin(), cls.end());

    // Shot counts larger than the smallest class are skipped here; the
    // dedicated subcommand reports them as errors instead.
    std::map<int, std::size_t> per_class;
    for (int y : labeled_split(corpus, Split::kTrain).y) ++per_class[y];
    std::size_t smallest = SIZE_MAX;
    for (const auto& [_, n] : per_class) smallest = std::min(smallest, n);
    std::vector<int> shots;
    for (int s : cfg.eval.shots) {
      if (static_cast<std::size_t>(s) <= smallest) shots.push_back(s);
      else log_warning("few-shot: skipping " + std::to_string(s) + " shots (smallest class has " + std::to_string(smallest) + " training documents)");
    }
    if (!shots.empty()) {
      auto fs_runs = stage_eval_fewshot(ctx, shots);
      r.runs.insert(r.runs.end(), fs_runs.begin(), fs_runs.end());
    }
  } else {
    log_warning("corpus has no labeled train/test split; skipping classification protocols");
  }
  if (!cfg.eval.concept_pairs.empty()) r.runs.push_back(stage_eval_concept(ctx, cfg.eval.concept_pairs));
  if (!cfg.eval.sts_pairs.empty()) r.runs.push_back(stage_eval_sts(ctx, cfg.eval.sts_pairs));
  if (!r.runs.empty()) {
    const auto table = merge_runs(r.runs);
    write_text(ctx.ws.results() / "report.md", table.markdown());
    write_text(ctx.ws.results() / "report.csv", table.csv());
  }
  return r;
}

}  // namespace ctxd
