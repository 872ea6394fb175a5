// Out-of-sample prediction records, window plans, persistence and joins.
#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <map>
#include <string>
#include <vector>

#include "cspread/core.hpp"
#include "cspread/csv.hpp"
#include "cspread/learners.hpp"
#include "json.hpp"

namespace cspread {

enum class WindowMode { Rolling, Recursive };

inline std::string to_string(WindowMode m) { return m == WindowMode::Rolling ? "rolling" : "recursive"; }

inline WindowMode parse_window_mode(const std::string& s) {
  if (s == "rolling") return WindowMode::Rolling;
  if (s == "recursive") return WindowMode::Recursive;
  throw InvalidArgument("unknown window mode '" + s + "' (expected rolling|recursive)");
}

struct WindowPlan {
  WindowMode mode = WindowMode::Rolling;
  int M = 6;
  int val_len = 0;  // 0: max(1, floor(M/3))
  std::optional<Month> start, end;  // default: panel range

  int resolved_val_len() const { return val_len > 0 ? val_len : std::max(1, M / 3); }

  void validate() const {
    std::vector<std::string> errs;
    if (M < 2) errs.push_back("window length M must be >= 2");
    const int v = resolved_val_len();
    if (v < 1 || v >= M) errs.push_back("val_len must satisfy 1 <= val_len < M");
    if (start && end && *end < *start) errs.push_back("window start is after end");
    if (!errs.empty()) {
      std::string msg = "invalid window plan:";
      for (const auto& e : errs) msg += " " + e + ";";
      throw InvalidArgument(msg);
    }
  }
};

struct PredictionEntry {
  std::string bond_id;
  Month month;
  double actual = 0.0;
  double predicted = 0.0;
  double benchmark = 0.0;
};

struct MonthChoice {
  Month month;
  LearnerSpec spec;
  double val_rmse = 0.0;
  std::size_t n_train = 0, n_val = 0, n_pred = 0;
  std::string benchmark_note;  // non-empty when the benchmark fell back to the window mean
};

struct Gap {
  Month month;
  std::string reason;
};

struct PredictionSet {
  std::string model;        // learner name, or "benchmark"
  std::string feature_set;  // "traditional" | "all"
  std::string benchmark_column = "rating_code";
  WindowPlan plan;
  std::vector<PredictionEntry> entries;  // sorted by (month, bond_id)
  std::vector<MonthChoice> choices;
  std::vector<Gap> gaps;   // months skipped
  std::vector<Gap> notes;  // months predicted with a recorded caveat

  // The benchmark column viewed as a model of its own.
  PredictionSet as_benchmark() const {
    PredictionSet b = *this;
    b.model = "benchmark";
    b.choices.clear();
    for (auto& e : b.entries) e.predicted = e.benchmark;
    return b;
  }
};

inline void sort_entries(std::vector<PredictionEntry>& v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.month != b.month) return a.month < b.month;
    return a.bond_id < b.bond_id;
  });
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void write_predictions_csv(std::ostream& out, const PredictionSet& p) {
  csv::write_record(out, {"bond_id", "month", "actual", "predicted", "benchmark"});
  for (const auto& e : p.entries)
    csv::write_record(out, {e.bond_id, e.month.str(), format_double(e.actual), format_double(e.predicted),
                            format_double(e.benchmark)});
}

inline nlohmann::json to_json(const LearnerSpec& s) {
  return {{"kind", to_string(s.kind)}, {"n_trees", s.n_trees},         {"max_depth", s.max_depth},
          {"learning_rate", s.learning_rate}, {"lambda", s.lambda}, {"alpha", s.alpha},
          {"gamma", s.gamma},         {"min_leaf", s.min_leaf},       {"max_features", s.max_features},
          {"bootstrap", s.bootstrap}, {"seed", s.seed}};
}

inline LearnerSpec learner_spec_from_json(const nlohmann::json& j) {
  LearnerSpec s;
  s.kind = parse_learner(j.at("kind").get<std::string>());
  s.n_trees = j.value("n_trees", s.n_trees);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.lambda = j.value("lambda", s.lambda);
  s.alpha = j.value("alpha", s.alpha);
  s.gamma = j.value("gamma", s.gamma);
  s.min_leaf = j.value("min_leaf", s.min_leaf);
  s.max_features = j.value("max_features", s.max_features);
  s.bootstrap = j.value("bootstrap", s.bootstrap);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline nlohmann::json to_json(const WindowPlan& p) {
  nlohmann::json j = {{"mode", to_string(p.mode)}, {"M", p.M}, {"val_len", p.resolved_val_len()}};
  if (p.start) j["start"] = p.start->str();
  if (p.end) j["end"] = p.end->str();
  return j;
}

inline nlohmann::json metadata_json(const PredictionSet& p) {
  nlohmann::json j;
  j["model"] = p.model;
  j["feature_set"] = p.feature_set;
  j["benchmark_column"] = p.benchmark_column;
  j["plan"] = to_json(p.plan);
  j["n_entries"] = p.entries.size();
  auto& ch = j["choices"] = nlohmann::json::array();
  for (const auto& c : p.choices) {
    nlohmann::json r = {{"month", c.month.str()},   {"spec", to_json(c.spec)},   {"label", describe(c.spec)},
                        {"val_rmse", c.val_rmse},   {"n_train", c.n_train},     {"n_val", c.n_val},
                        {"n_pred", c.n_pred}};
    if (!c.benchmark_note.empty()) r["benchmark_note"] = c.benchmark_note;
    ch.push_back(std::move(r));
  }
  auto& gaps = j["gaps"] = nlohmann::json::array();
  for (const auto& g : p.gaps) gaps.push_back({{"month", g.month.str()}, {"reason", g.reason}});
  auto& notes = j["notes"] = nlohmann::json::array();
  for (const auto& g : p.notes) notes.push_back({{"month", g.month.str()}, {"note", g.reason}});
  return j;
}

inline void save_predictions(const PredictionSet& p, const std::string& csv_path) {
  {
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write '" + csv_path + "'");
    write_predictions_csv(out, p);
  }
  std::ofstream meta(csv_path + ".json");
  if (!meta) throw Error("cannot write '" + csv_path + ".json'");
  meta << metadata_json(p).dump(2) << '\n';
}

inline PredictionSet read_predictions_csv(const std::string& path) {
  const auto t = csv::read_file(path);
  const auto cb = t.column("bond_id"), cm = t.column("month"), ca = t.column("actual"), cp = t.column("predicted"),
             cx = t.column("benchmark");
  if (cb < 0 || cm < 0 || ca < 0 || cp < 0 || cx < 0)
    throw InvalidArgument("'" + path + "' lacks one of bond_id, month, actual, predicted, benchmark");
  PredictionSet p;
  p.model = path;
  for (const auto& r : t.rows)
    p.entries.push_back({r[cb], Month::parse(r[cm]), parse_double_or_missing(r[ca]), parse_double_or_missing(r[cp]),
                         parse_double_or_missing(r[cx])});
  std::ifstream meta(path + ".json");
  if (meta) {
    const auto j = nlohmann::json::parse(meta, nullptr, false);
    if (!j.is_discarded()) {
      p.model = j.value("model", p.model);
      p.feature_set = j.value("feature_set", p.feature_set);
    }
  }
  sort_entries(p.entries);
  return p;
}

// ---------------------------------------------------------------------------
// Joins
// ---------------------------------------------------------------------------

struct Paired {
  std::vector<PredictionEntry> a, b;  // same keys, same order
  std::size_t dropped_a = 0, dropped_b = 0;
};

inline Paired align(const PredictionSet& pa, const PredictionSet& pb) {
  auto a = pa.entries, b = pb.entries;
  sort_entries(a);
  sort_entries(b);
  Paired out;
  std::size_t i = 0, j = 0;
  auto less = [](const PredictionEntry& x, const PredictionEntry& y) {
    if (x.month != y.month) return x.month < y.month;
    return x.bond_id < y.bond_id;
  };
  while (i < a.size() && j < b.size()) {
    if (less(a[i], b[j])) {
      ++i;
      ++out.dropped_a;
    } else if (less(b[j], a[i])) {
      ++j;
      ++out.dropped_b;
    } else {
      out.a.push_back(a[i++]);
      out.b.push_back(b[j++]);
    }
  }
  out.dropped_a += a.size() - i;
  out.dropped_b += b.size() - j;
  if (out.a.empty()) throw Error("align: prediction sets '" + pa.model + "' and '" + pb.model + "' share no keys");
  return out;
}

}  // namespace cspread
