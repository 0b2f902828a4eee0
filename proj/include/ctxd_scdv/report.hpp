#pragma once

// Merging evaluation runs into result tables and figure-ready curves.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "eval.hpp"

namespace ctxd {

/// Row label for a run: an explicit "label" in its config wins, otherwise the
/// protocol plus its defining parameter.
inline std::string run_label(const EvalRun& run) {
  if (run.config.contains("label") && run.config["label"].is_string()) return run.config["label"].get<std::string>();
  if ((run.protocol == "full" || run.protocol == "limited") && run.config.contains("fraction")) {
    const double f = run.config["fraction"].get<double>();
    return run.protocol + " " + std::to_string(static_cast<int>(std::lround(f * 100.0))) + "%";
  }
  if (run.protocol == "fewshot" && run.config.contains("shots"))
    return "fewshot " + std::to_string(run.config["shots"].get<int>()) + "-shot";
  return run.protocol;
}

inline std::string format_fixed(double v, int digits = 2) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct ReportTable {
  struct Cell {
    double mean;
    double stddev;
    std::size_t runs;
  };
  std::vector<std::string> columns;                        // metric names, first-seen order
  std::vector<std::string> rows;                           // run labels
  std::vector<std::map<std::string, Cell>> cells;          // per row

  /// One Markdown table; cells read "mean (std)", missing metrics "-".
  std::string markdown() const {
    std::ostringstream out;
    out << "| run |";
    for (const auto& c : columns) out << ' ' << c << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out << "| " << rows[r] << " |";
      for (const auto& c : columns) {
        const auto it = cells[r].find(c);
        if (it == cells[r].end()) out << " - |";
        else out << ' ' << format_fixed(it->second.mean) << " (" << format_fixed(it->second.stddev) << ") |";
      }
      out << '\n';
    }
    return out.str();
  }

  /// Long format: run,metric,mean,std,runs.
  std::string csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "run,metric,mean,std,runs\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& c : columns) {
        const auto it = cells[r].find(c);
        if (it == cells[r].end()) continue;
        out << '"' << rows[r] << "\"," << c << ',' << it->second.mean << ',' << it->second.stddev << ','
            << it->second.runs << '\n';
      }
    }
    return out.str();
  }
};

inline ReportTable merge_runs(const std::vector<EvalRun>& runs) {
  ReportTable t;
  for (const auto& run : runs) {
    const auto mean = run.mean();
    const auto sd = run.stddev();
    std::map<std::string, ReportTable::Cell> row;
    for (const auto& m : run.metric_names) {
      if (std::find(t.columns.begin(), t.columns.end(), m) == t.columns.end()) t.columns.push_back(m);
      row[m] = {mean.at(m), sd.at(m), run.values(m).size()};
    }
    t.rows.push_back(run_label(run));
    t.cells.push_back(std::move(row));
  }
  return t;
}

inline EvalRun load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open result file '" + path + "'");
  try {
    return EvalRun::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": not an evaluation result: " + e.what());
  }
}

/// Curve with one row per run: x (a config key such as "fraction" or
/// "shots"), then mean and std of every metric. Rows are sorted by x.
inline std::string curve_csv(const std::vector<EvalRun>& runs, const std::string& x_key) {
  std::vector<std::pair<double, const EvalRun*>> points;
  for (const auto& r : runs) {
    if (!r.config.contains(x_key)) throw DataError("run of protocol '" + r.protocol + "' has no '" + x_key + "'");
    points.emplace_back(r.config[x_key].get<double>(), &r);
  }
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Shortest text that reads back to the same double.
  auto num = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  std::ostringstream out;
  out << x_key;
  const auto& metrics = runs.empty() ? std::vector<std::string>{} : runs.front().metric_names;
  for (const auto& m : metrics) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& [x, run] : points) {
    out << num(x);
    const auto mean = run->mean();
    const auto sd = run->stddev();
    for (const auto& m : metrics) out << ',' << num(mean.at(m)) << ',' << num(sd.at(m));
    out << '\n';
  }
  return out.str();
}

inline void write_curve_csv(const std::vector<EvalRun>& runs, const std::string& x_key, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << curve_csv(runs, x_key);
}

}  // namespace ctxd
