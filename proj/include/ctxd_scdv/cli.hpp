#pragma once

// Command-line front end: `ctxd-scdv <subcommand> --config cfg.json [overrides]`.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "log.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "synthetic.hpp"

namespace ctxd {

/// "0.3", "0.1,0.2,0.5" or an inclusive range "0.1..0.5" (step 0.1, or
/// "0.1..0.5:0.05").
inline std::vector<double> parse_fraction_spec(const std::string& spec) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad fraction '" + s + "' in '" + spec + "'");
    }
  };
  std::vector<double> out;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    std::string hi = spec.substr(dots + 2);
    double step = 0.1;
    if (const auto colon = hi.find(':'); colon != std::string::npos) {
      step = number(hi.substr(colon + 1));
      hi = hi.substr(0, colon);
    }
    const double a = number(spec.substr(0, dots));
    const double b = number(hi);
    if (!(step > 0.0) || b < a) throw ConfigError("bad fraction range '" + spec + "'");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((a + static_cast<double>(i) * step) * 1e9) / 1e9);
  } else {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(number(part));
  }
  for (double f : out)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fraction " + std::to_string(f) + " outside (0, 1]");
  if (out.empty()) throw ConfigError("empty fraction list");
  return out;
}

namespace detail {

// Options shared by every pipeline subcommand; each one maps onto a config key.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> work_dir, corpus, store, corpus_format, embed_format, mode, dataset, k_aniso,
      sparsify, aniso_target, idf_domain, averaging;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<int> K, data_percent;
  bool force = false;
  bool verbose = false;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file");
    app->add_option("--set", sets, "override any config key: key.sub=value (repeatable)");
    app->add_option("--work-dir", work_dir, "directory for stage artifacts");
    app->add_option("--corpus", corpus, "corpus file");
    app->add_option("--store", store, "contextual embedding store");
    app->add_option("--corpus-format", corpus_format, "jsonl | tsv");
    app->add_option("--embed-format", embed_format, "ceb1 | jsonl");
    app->add_option("--seed", seed, "global seed");
    app->add_option("--tau", tau, "sense similarity threshold");
    app->add_option("-K,--components", K, "GMM components (0: dataset table)");
    app->add_option("--dataset", dataset, "dataset name for the component table");
    app->add_option("--data-percent", data_percent, "training-data percentage for the component table");
    app->add_option("--anisotropy-k", k_aniso, "principal directions to remove, or \"off\"");
    app->add_option("--aniso-target", aniso_target, "words | documents");
    app->add_option("--mode", mode, "ctxd | weight_avg");
    app->add_option("--idf-domain", idf_domain, "sense | surface");
    app->add_option("--averaging", averaging, "occurrence | unique");
    app->add_option("--sparsify", sparsify, "sparsification percentage, or \"off\"");
    app->add_flag("--force", force, "accept artifacts produced under a different config");
    app->add_flag("-v,--verbose", verbose, "progress messages");
    app->add_flag("-q,--quiet", quiet, "suppress warnings");
  }

  PipelineConfig resolve() const {
    nlohmann::json j = config_path.empty() ? nlohmann::json::object() : read_json_file(config_path);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    auto set_str = [&](const char* key, const std::optional<std::string>& v) {
      if (v) j[key] = *v;
    };
    set_str("work_dir", work_dir);
    set_str("corpus", corpus);
    set_str("store", store);
    set_str("corpus_format", corpus_format);
    set_str("embed_format", embed_format);
    set_str("mode", mode);
    set_str("dataset", dataset);
    set_str("aniso_target", aniso_target);
    set_str("idf_domain", idf_domain);
    set_str("averaging", averaging);
    if (seed) j["seed"] = *seed;
    if (tau) j["tau"] = *tau;
    if (K) j["K"] = *K;
    if (data_percent) j["data_percent"] = *data_percent;
    auto int_or_off = [&](const char* key, const char* flag, const std::optional<std::string>& v, bool integral) {
      if (!v) return;
      if (*v == "off") {
        j[key] = "off";
        return;
      }
      try {
        std::size_t used = 0;
        if (integral) {
          const int x = std::stoi(*v, &used);
          if (used == v->size()) {
            j[key] = x;
            return;
          }
        } else {
          const double x = std::stod(*v, &used);
          if (used == v->size()) {
            j[key] = x;
            return;
          }
        }
      } catch (const std::exception&) {
      }
      throw ConfigError(std::string(flag) + ": expected a number or \"off\", got '" + *v + "'");
    };
    int_or_off("k_aniso", "--anisotropy-k", k_aniso, true);
    int_or_off("sparsify_p", "--sparsify", sparsify, false);
    for (const auto& s : sets) apply_override(j, s);
    return config_from_json(j);
  }
};

inline void print_runs(std::ostream& out, const std::vector<EvalRun>& runs) {
  out << merge_runs(runs).markdown();
}

}  // namespace detail

/// Parses and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sense-disambiguated composite document vectors from contextual token embeddings", "ctxd-scdv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ctxd-scdv 1.0.0");

  std::vector<std::pair<CLI::App*, std::unique_ptr<detail::CommonOptions>>> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    auto opts = std::make_unique<detail::CommonOptions>();
    opts->attach(s);
    subs.emplace_back(s, std::move(opts));
    return s;
  };

  sub("ingest", "validate corpus and store, write the normalized corpus");
  sub("wsd", "induce word senses and tag every occurrence");
  sub("aniso", "fit the anisotropy adjustment on sense vectors");
  sub("gmm", "fit the tied-covariance mixture on sense vectors");
  CLI::App* docvec = sub("docvec", "compose document vectors");
  std::string docvec_csv;
  docvec->add_option("--csv", docvec_csv, "also export the vectors as CSV");

  CLI::App* classify = sub("eval-classify", "linear classification (full or limited data)");
  std::string fraction_spec = "1.0";
  classify->add_option("--fraction", fraction_spec, "fraction, list, or range such as 0.1..0.5");
  CLI::App* fewshot = sub("eval-fewshot", "prototypical few-shot classification");
  std::vector<int> shots;
  fewshot->add_option("--shots", shots, "shot counts (default from config)")->delimiter(',');
  CLI::App* concept_cmd = sub("eval-concept", "concept/project matching by cosine threshold");
  std::string concept_pairs;
  concept_cmd->add_option("--pairs", concept_pairs, "JSONL of {concept, project, match}");
  CLI::App* sts = sub("eval-sts", "sentence similarity, Pearson correlation");
  std::string sts_pairs;
  sts->add_option("--pairs", sts_pairs, "JSONL of {a, b, gold, task}");
  CLI::App* run = sub("run", "all stages followed by the configured evaluations");
  bool run_no_eval = false;
  run->add_flag("--no-eval", run_no_eval, "stop after document vectors");

  CLI::App* report = app.add_subcommand("report", "merge result JSON files into one table");
  std::vector<std::string> report_inputs;
  std::string report_md, report_csv;
  report->add_option("inputs", report_inputs, "result JSON files")->required();
  report->add_option("--markdown", report_md, "write the Markdown table here instead of stdout");
  report->add_option("--csv", report_csv, "also write a long-format CSV");

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic corpus, store and ground truth");
  PlantedSpec spec;
  std::string synth_out, synth_fixture = "planted", synth_format = "ceb1";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--fixture", synth_fixture, "planted | senses")->check(CLI::IsMember({"planted", "senses"}));
  synth->add_option("--embed-format", synth_format, "ceb1 | jsonl")->check(CLI::IsMember({"ceb1", "jsonl"}));
  synth->add_option("--classes", spec.num_classes);
  synth->add_option("--docs-per-class", spec.docs_per_class);
  synth->add_option("--vocab", spec.vocab_size);
  synth->add_option("--ambiguous", spec.ambiguous_word_count);
  synth->add_option("--senses", spec.senses_per_ambiguous_word);
  synth->add_option("--dim", spec.dim);
  synth->add_option("--noise", spec.noise);
  synth->add_option("--doc-length", spec.doc_length);
  synth->add_option("--train-fraction", spec.train_fraction);
  synth->add_option("--seed", spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (report->parsed()) {
      std::vector<EvalRun> runs;
      for (const auto& p : report_inputs) runs.push_back(load_run(p));
      const auto table = merge_runs(runs);
      if (report_md.empty()) out << table.markdown();
      else write_text(report_md, table.markdown());
      if (!report_csv.empty()) write_text(report_csv, table.csv());
      return 0;
    }
    if (synth->parsed()) {
      const PlantedData data = synth_fixture == "planted" ? generate_planted(spec)
                                                          : sense_example_fixture(reference_sense_examples());
      fs::create_directories(synth_out);
      const fs::path dir(synth_out);
      save_corpus_jsonl(data.corpus, (dir / "corpus.jsonl").string());
      if (synth_format == "ceb1") write_store(data.store, (dir / "store.ceb").string());
      else write_store_jsonl(data.store, (dir / "store.jsonl").string());
      std::ofstream truth(dir / "truth.jsonl", std::ios::trunc);
      for (const auto& [key, sense] : data.truth)
        truth << nlohmann::json{{"doc", key.first}, {"tok", key.second}, {"sense", sense}}.dump() << '\n';
      out << "wrote " << data.corpus.size() << " documents and " << data.store.size() << " token vectors to "
          << synth_out << '\n';
      return 0;
    }

    for (auto& [s, opts] : subs) {
      if (!s->parsed()) continue;
      set_verbose(opts->verbose);
      std::optional<ScopedWarningSink> mute;
      if (opts->quiet) mute.emplace([](const std::string&) {});
      const PipelineConfig cfg = opts->resolve();
      const StageContext ctx = make_context(cfg, opts->force);
      const std::string name = s->get_name();
      if (name == "ingest") {
        stage_ingest(ctx);
        out << "ingested into " << ctx.ws.dir.string() << '\n';
      } else if (name == "wsd") {
        const auto inv = stage_wsd(ctx);
        out << polysemy_report(inv).dump(2) << '\n';
      } else if (name == "aniso") {
        out << stage_aniso(ctx).to_json().dump(2) << '\n';
      } else if (name == "gmm") {
        const auto fit = stage_gmm(ctx);
        out << "K=" << fit.model.num_components() << " d=" << fit.model.dim() << " iterations=" << fit.iterations
            << (fit.converged ? " converged" : " not converged") << '\n';
      } else if (name == "docvec") {
        const auto set = stage_docvec(ctx);
        if (!docvec_csv.empty()) export_document_vectors_csv(set, docvec_csv);
        out << set.size() << " document vectors of dim " << set.dim() << " (K=" << set.num_components
            << ", d=" << set.word_dim << ")\n";
      } else if (name == "eval-classify") {
        detail::print_runs(out, stage_eval_classify(ctx, parse_fraction_spec(fraction_spec)));
      } else if (name == "eval-fewshot") {
        detail::print_runs(out, stage_eval_fewshot(ctx, shots.empty() ? cfg.eval.shots : shots));
      } else if (name == "eval-concept") {
        detail::print_runs(out, {stage_eval_concept(ctx, concept_pairs.empty() ? cfg.eval.concept_pairs : concept_pairs)});
      } else if (name == "eval-sts") {
        detail::print_runs(out, {stage_eval_sts(ctx, sts_pairs.empty() ? cfg.eval.sts_pairs : sts_pairs)});
      } else if (name == "run") {
        RunOptions ro;
        ro.evaluate = !run_no_eval;
        ro.force = opts->force;
        const auto r = run_pipeline(cfg, ro);
        out << r.vectors.size() << " document vectors of dim " << r.vectors.dim() << '\n';
        if (!r.runs.empty()) detail::print_runs(out, r.runs);
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
}

}  // namespace ctxd
