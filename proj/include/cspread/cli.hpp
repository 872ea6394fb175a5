// Command-line orchestration: subcommands, JSON config files, logging, run
// manifests and machine-readable error reports.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cspread/evalstats.hpp"
#include "cspread/explain.hpp"
#include "cspread/harness.hpp"
#include "cspread/mechanism.hpp"
#include "cspread/model_io.hpp"
#include "cspread/panel.hpp"
#include "cspread/rating.hpp"
#include "cspread/report.hpp"
#include "cspread/synth.hpp"
#include "json.hpp"

namespace cspread::cli {

inline constexpr const char* kVersion = "1.0.0";

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsage = 2;

// Raised for configuration problems; carries every violation found.
class UsageError : public Error {
 public:
  explicit UsageError(std::vector<std::string> v) : Error(join(v)), violations(std::move(v)) {}
  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Logging: CSPREAD_LOG = error | warn | info | debug (default warn).
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("CSPREAD_LOG");
  if (!v) return LogLevel::Warn;
  const std::string s = v;
  if (s == "error") return LogLevel::Error;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

class Logger {
 public:
  Logger(std::ostream& sink, LogLevel level) : sink_(sink), level_(level) {}
  void log(LogLevel l, const std::string& msg) const {
    static const char* tags[] = {"error", "warn", "info", "debug"};
    if (l <= level_) sink_ << "[" << tags[static_cast<int>(l)] << "] " << msg << '\n';
  }
  void warn(const std::string& m) const { log(LogLevel::Warn, m); }
  void info(const std::string& m) const { log(LogLevel::Info, m); }

 private:
  std::ostream& sink_;
  LogLevel level_;
};

// ---------------------------------------------------------------------------
// Hashing and artifact bookkeeping
// ---------------------------------------------------------------------------

inline std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

struct Artifacts {
  std::filesystem::path dir;
  std::vector<std::string> inputs, outputs;

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void input(const std::string& p) { inputs.push_back(p); }

  void write_text(const std::string& name, const std::string& text) {
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p + "'");
    out << text;
    outputs.push_back(p);
  }
  void write_json(const std::string& name, const nlohmann::json& j) { write_text(name, j.dump(2) + "\n"); }
  template <class Fn>
  void write_csv(const std::string& name, Fn&& body) {
    std::ostringstream s;
    body(s);
    write_text(name, s.str());
  }
  void record(const std::string& p) { outputs.push_back(p); }
};

// ---------------------------------------------------------------------------
// Config files: JSON object keys become --key tokens inserted after the
// subcommand name, so flags given on the command line win (last one taken).
// ---------------------------------------------------------------------------

struct ConfigInjection {
  std::vector<std::string> args;  // rewritten argv without --config
  std::string config_path;
  std::vector<std::string> keys;  // option names supplied by the file
};

inline ConfigInjection inject_config(std::vector<std::string> args, const std::vector<std::string>& subcommands) {
  ConfigInjection out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      out.config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      out.config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  out.args = args;
  if (out.config_path.empty()) return out;

  std::ifstream in(out.config_path);
  if (!in) throw UsageError({"cannot open config file '" + out.config_path + "'"});
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw UsageError({"config file '" + out.config_path + "' is not a JSON object"});

  std::vector<std::string> tokens, violations;
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    out.keys.push_back(name);
    const std::string flag = "--" + name;
    auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      tokens.push_back(flag + "=" + (value.get<bool>() ? "true" : "false"));
    } else if (value.is_array()) {
      tokens.push_back(flag);
      for (const auto& e : value) {
        if (e.is_structured()) violations.push_back("config key '" + key + "': nested values are not supported");
        tokens.push_back(scalar(e));
      }
    } else if (value.is_object()) {
      violations.push_back("config key '" + key + "': objects are not supported");
    } else {
      tokens.push_back(flag);
      tokens.push_back(scalar(value));
    }
  }
  if (!violations.empty()) throw UsageError(violations);
  auto pos = std::find_first_of(out.args.begin() + (out.args.empty() ? 0 : 1), out.args.end(), subcommands.begin(),
                                subcommands.end());
  if (pos == out.args.end()) throw UsageError({"--config requires a subcommand"});
  out.args.insert(pos + 1, tokens.begin(), tokens.end());
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline const char* kPanelMetaFormat = "cspread-panel-meta";

// Aux columns named in a panel sidecar, merged with the requested ones.
inline PanelSchema input_schema(const std::string& path, const std::vector<std::string>& aux) {
  PanelSchema schema;
  if (std::ifstream meta(path + ".json"); meta) {
    const auto j = nlohmann::json::parse(meta, nullptr, false);
    if (j.is_object() && j.value("format", "") == kPanelMetaFormat && j.contains("aux_columns"))
      schema.aux_columns = j["aux_columns"].get<std::vector<std::string>>();
  }
  for (const auto& a : aux)
    if (std::find(schema.aux_columns.begin(), schema.aux_columns.end(), a) == schema.aux_columns.end())
      schema.aux_columns.push_back(a);
  return schema;
}

// Loads a panel CSV; preprocesses it unless its sidecar marks it as done.
inline Panel load_input_panel(const std::string& path, Artifacts& art, const Logger& log,
                              const std::vector<std::string>& aux = {}) {
  art.input(path);
  Panel p = load_panel(path, input_schema(path, aux));
  std::ifstream meta(path + ".json");
  if (meta) {
    const auto j = nlohmann::json::parse(meta, nullptr, false);
    if (!j.is_discarded() && j.value("format", "") == kPanelMetaFormat && j.value("preprocessed", false)) {
      art.input(path + ".json");
      p.preprocessed = true;
      return p;
    }
  }
  log.info("panel '" + path + "' is raw; preprocessing with defaults");
  p = preprocess(std::move(p));
  for (const auto& w : p.warnings) log.warn(w);
  return p;
}

inline std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& it : items) {
    std::stringstream ss(it);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline std::vector<LearnerKind> parse_models(const std::vector<std::string>& names, std::vector<std::string>& errs,
                                             bool regression = true) {
  std::vector<LearnerKind> out;
  for (const auto& n : split_list(names)) {
    if (n == "all") {
      for (auto k : standard_learners()) out.push_back(k);
      continue;
    }
    try {
      const auto k = parse_learner(n);
      if (!regression && k != LearnerKind::RF && k != LearnerKind::XGB)
        errs.push_back("rating model must be rf or xgb, got '" + n + "'");
      out.push_back(k);
    } catch (const InvalidArgument& e) {
      errs.push_back(e.what());
    }
  }
  if (split_list(names).empty()) errs.push_back("no model given");
  return out;
}

template <class T, class Fn>
std::optional<T> checked(Fn&& fn, std::vector<std::string>& errs) {
  try {
    return fn();
  } catch (const Error& e) {
    errs.push_back(e.what());
    return std::nullopt;
  }
}

inline void require_file(const std::string& path, const std::string& flag, std::vector<std::string>& errs) {
  if (path.empty())
    errs.push_back(flag + " is required");
  else if (!std::filesystem::is_regular_file(path))
    errs.push_back(flag + " '" + path + "' does not exist");
}

// Grid file: a JSON array of learner specs; entries of other kinds are ignored.
inline std::map<LearnerKind, std::vector<LearnerSpec>> load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open grid file '" + path + "'");
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw InvalidArgument("grid file '" + path + "' must hold a JSON array");
  std::map<LearnerKind, std::vector<LearnerSpec>> out;
  for (const auto& e : j) {
    auto s = learner_spec_from_json(e);
    validate(s);
    out[s.kind].push_back(s);
  }
  return out;
}

inline nlohmann::json to_json(const EvalReport& e) {
  nlohmann::json months = nlohmann::json::array();
  for (const auto& m : e.months)
    months.push_back({{"month", m.month.str()}, {"n", m.n}, {"sse", m.sse}, {"sse_benchmark", m.sse_benchmark},
                      {"mae", m.sae / static_cast<double>(m.n)}});
  return {{"mae", e.mae}, {"rmse", e.rmse}, {"r2", e.r2}, {"r2_os", e.r2_os}, {"n_obs", e.n_obs},
          {"sse", e.sse}, {"sse_benchmark", e.sse_benchmark}, {"sst", e.sst}, {"months", months}};
}

inline nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < r.support.size(); ++k)
    classes.push_back({{"class", rating_names()[k]}, {"precision", r.class_precision[k]}, {"recall", r.class_recall[k]},
                       {"f1", r.class_f1[k]}, {"support", r.support[k]}});
  return {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"n", r.n},               {"classes", classes},       {"confusion", r.confusion}};
}

inline void write_importance_csv(std::ostream& out, const ImportanceReport& rep) {
  csv::write_record(out, {"rank", "feature_id", "name", "group", "contribution", "mean_shap"});
  for (const auto* f : rep.ranked())
    csv::write_record(out, {std::to_string(f->rank), f->id, f->name, to_string(f->group), format_double(f->mean_abs),
                            format_double(f->mean)});
}

inline nlohmann::json to_json(const ImportanceReport& rep) {
  nlohmann::json months = nlohmann::json::array();
  for (auto m : rep.months) months.push_back(m.str());
  nlohmann::json feats = nlohmann::json::array();
  for (const auto* f : rep.ranked())
    feats.push_back({{"rank", f->rank}, {"id", f->id}, {"name", f->name}, {"group", to_string(f->group)},
                     {"mean_abs", f->mean_abs}, {"mean", f->mean}, {"monthly_mean_abs", f->monthly_mean_abs},
                     {"monthly_mean", f->monthly_mean}});
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, v] : rep.group_mean_abs) groups[to_string(g)] = v;
  return {{"months", months}, {"features", feats}, {"group_mean_abs", groups},
          {"note", "contribution = full-sample mean of monthly mean |SHAP|, unnormalized"}};
}

inline std::vector<FeatureEntry> entries_for(const Panel& p, const std::vector<std::size_t>& cols) {
  std::vector<FeatureEntry> out;
  for (auto c : cols) out.push_back(p.manifest.entries[c]);
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand option sets
// ---------------------------------------------------------------------------

struct WindowArgs {
  std::string mode = "rolling";
  int M = 6;
  int val_len = 0;
  std::string start, end;

  void add(CLI::App* app) {
    app->add_option("--window", mode, "rolling | recursive");
    app->add_option("--M", M, "window length in months");
    app->add_option("--val-len", val_len, "validation months (0: max(1, M/3))");
    app->add_option("--start", start, "first month of the plan (YYYY-MM)");
    app->add_option("--end", end, "last predicted month (YYYY-MM)");
  }

  std::optional<WindowPlan> resolve(std::vector<std::string>& errs, const std::string& mode_override = "") const {
    WindowPlan p;
    p.M = M;
    p.val_len = val_len;
    bool ok = true;
    if (auto m = checked<WindowMode>([&] { return parse_window_mode(mode_override.empty() ? mode : mode_override); }, errs))
      p.mode = *m;
    else
      ok = false;
    if (!start.empty()) {
      if (auto m = checked<Month>([&] { return Month::parse(start); }, errs)) p.start = *m; else ok = false;
    }
    if (!end.empty()) {
      if (auto m = checked<Month>([&] { return Month::parse(end); }, errs)) p.end = *m; else ok = false;
    }
    if (!checked<bool>([&] { p.validate(); return true; }, errs)) ok = false;
    return ok ? std::optional<WindowPlan>(p) : std::nullopt;
  }
};

struct RangeArgs {
  std::string from, to;
  void add(CLI::App* app) {
    app->add_option("--from", from, "restrict the panel to months >= this (YYYY-MM)");
    app->add_option("--to", to, "restrict the panel to months <= this (YYYY-MM)");
  }
  bool active() const { return !from.empty() || !to.empty(); }
  void check(std::vector<std::string>& errs) const {
    std::optional<Month> f, t;
    if (!from.empty()) f = checked<Month>([&] { return Month::parse(from); }, errs);
    if (!to.empty()) t = checked<Month>([&] { return Month::parse(to); }, errs);
    if (f && t && *t < *f) errs.push_back("--from is after --to");
  }
  Panel apply(const Panel& p) const {
    if (!active()) return p;
    const auto months = p.months();
    if (months.empty()) return p;
    return filter_dates(p, from.empty() ? months.front() : Month::parse(from), to.empty() ? months.back() : Month::parse(to));
  }
};

struct Common {
  std::string out_dir = ".";
  std::uint64_t seed = 20240517;
  int threads = default_thread_count();
  std::vector<std::string> aux;  // non-feature numeric columns to keep from panel CSVs

  void add(CLI::App* app, bool with_threads = true, bool with_aux = true) {
    app->add_option("--out-dir", out_dir, "directory for artifacts");
    app->add_option("--seed", seed, "root random seed");
    if (with_threads) app->add_option("--threads", threads, "worker threads");
    if (with_aux)
      app->add_option("--aux", aux, "extra numeric panel columns kept out of the features (e.g. altman_z)")
          ->expected(1, -1);
  }
  void check(std::vector<std::string>& errs) const {
    if (threads < 1) errs.push_back("--threads must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenArgs {
  Common common;
  int bonds = 200, months = 72;
  std::string start = "2012-01";
  double noise_sd = -1, rating_noise_sd = -1;
  std::string panel_name = "panel.csv";
};

inline int cmd_gen(GenArgs& a, Artifacts& art, const Logger& log) {
  synth::SynthSpec spec;
  spec.seed = a.common.seed;
  spec.n_bonds = a.bonds;
  spec.n_months = a.months;
  std::vector<std::string> errs;
  if (auto m = checked<Month>([&] { return Month::parse(a.start); }, errs)) spec.start = *m;
  if (a.noise_sd >= 0) spec.noise_sd = a.noise_sd;
  if (a.rating_noise_sd >= 0) spec.rating_noise_sd = a.rating_noise_sd;
  checked<bool>([&] { synth::validate(spec); return true; }, errs);
  if (!errs.empty()) throw UsageError(errs);
  auto [panel, truth] = synth::generate(spec);
  art.write_csv(a.panel_name, [&](std::ostream& o) { write_panel_csv(panel, o); });
  art.write_json("truth.json", synth::to_json(truth));
  log.info("generated " + std::to_string(panel.rows.size()) + " rows");
  return kOk;
}

struct PreprocessArgs {
  Common common;
  std::string panel;
  double winsor_p = 0.01;
  bool no_standardize = false;
  std::string output = "preprocessed.csv";
  std::string curve, yields;
};

inline int cmd_preprocess(PreprocessArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  require_file(a.panel, "--panel", errs);
  if (!(a.winsor_p >= 0 && a.winsor_p < 0.25)) errs.push_back("--winsor-p must lie in [0, 0.25)");
  if (a.curve.empty() != a.yields.empty()) errs.push_back("--curve and --yields must be given together");
  if (!a.curve.empty()) {
    require_file(a.curve, "--curve", errs);
    require_file(a.yields, "--yields", errs);
  }
  if (!errs.empty()) throw UsageError(errs);
  art.input(a.panel);
  Panel p = load_panel(a.panel, input_schema(a.panel, a.common.aux));
  if (!a.curve.empty()) {
    art.input(a.curve);
    art.input(a.yields);
    const auto curve = read_curve_csv(a.curve);
    const auto yields = read_yields_csv(a.yields);
    assign_spreads(p, compute_spreads(yields, curve));
  }
  PreprocessConfig cfg{a.winsor_p, !a.no_standardize};
  p = preprocess(std::move(p), cfg);
  for (const auto& w : p.warnings) log.warn(w);
  art.write_csv(a.output, [&](std::ostream& o) { write_panel_csv(p, o); });
  art.write_json(a.output + ".json", {{"format", kPanelMetaFormat},
                                      {"preprocessed", true},
                                      {"winsor_p", cfg.winsor_p},
                                      {"standardize", cfg.standardize},
                                      {"aux_columns", p.aux_names},
                                      {"warnings", p.warnings}});
  return kOk;
}

struct ForecastArgs {
  Common common;
  std::string panel;
  std::vector<std::string> models = {"rf"};
  std::string features = "all";
  WindowArgs window;
  RangeArgs range;
  std::string grid_file;
  std::string benchmark_column = "rating_code";
};

inline std::string run_tag(const std::string& model, FeatureSet set, const WindowPlan& plan) {
  return model + "_" + to_string(set) + "_" + to_string(plan.mode);
}

// Refits the last month's winner on its full window so it can be saved.
inline nlohmann::json final_model_json(const Panel& panel, const PredictionSet& ps, FeatureSet set) {
  if (ps.choices.empty()) return nullptr;
  const auto& c = ps.choices.back();
  const auto months = panel.months();
  for (const auto& w : plan_windows(ps.plan, months.front(), months.back())) {
    if (w.target != c.month) continue;
    const auto window = build_slice(panel, set, {w.train.from, w.val.to}, ps.benchmark_column);
    auto j = to_json(detail::fit_quiet(c.spec, window.X, window.y));
    j["training_window"] = {{"from", w.train.from.str()}, {"to", w.val.to.str()}};
    j["feature_set"] = to_string(set);
    nlohmann::json names = nlohmann::json::array();
    for (auto col : window.feature_columns) names.push_back(panel.manifest.entries[col].name);
    j["feature_names"] = names;
    return j;
  }
  return nullptr;
}

inline int cmd_forecast(ForecastArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  a.common.check(errs);
  require_file(a.panel, "--panel", errs);
  const auto kinds = parse_models(a.models, errs);
  const auto set = checked<FeatureSet>([&] { return parse_feature_set(a.features); }, errs);
  const auto plan = a.window.resolve(errs);
  a.range.check(errs);
  std::map<LearnerKind, std::vector<LearnerSpec>> grids;
  if (!a.grid_file.empty()) {
    if (auto g = checked<std::map<LearnerKind, std::vector<LearnerSpec>>>([&] { return load_grid_file(a.grid_file); }, errs))
      grids = *g;
  }
  if (!errs.empty()) throw UsageError(errs);
  if (!a.grid_file.empty()) art.input(a.grid_file);

  auto aux = a.common.aux;
  if (a.benchmark_column != "rating_code" && !infer_group(a.benchmark_column)) aux.push_back(a.benchmark_column);
  const Panel panel = a.range.apply(load_input_panel(a.panel, art, log, aux));
  HarnessOptions opt;
  opt.threads = a.common.threads;
  opt.seed = derive_seed(a.common.seed, 1);
  opt.benchmark_column = a.benchmark_column;
  for (auto kind : kinds) {
    log.info("forecast " + to_string(kind));
    auto it = grids.find(kind);
    auto res = run_walk_forward(panel, *plan, kind, it == grids.end() ? std::vector<LearnerSpec>{} : it->second, *set, opt);
    const auto tag = run_tag(to_string(kind), *set, *plan);
    const auto csv_name = "pred_" + tag + ".csv";
    save_predictions(res.predictions, art.path(csv_name));
    art.record(art.path(csv_name));
    art.record(art.path(csv_name + ".json"));
    for (const auto& g : res.predictions.gaps) log.warn("skipped " + g.month.str() + ": " + g.reason);
    art.write_json("eval_" + tag + ".json", to_json(eval(res.predictions)));
    art.write_json("model_" + tag + ".json", final_model_json(panel, res.predictions, *set));
  }
  return kOk;
}

struct CompareArgs {
  Common common;
  std::vector<std::string> preds;
  int lag = -1;
  int k = 0;
  bool with_benchmark = false;
};

inline int cmd_compare(CompareArgs& a, Artifacts& art, const Logger&) {
  std::vector<std::string> errs;
  const auto files = split_list(a.preds);
  if (files.size() + (a.with_benchmark ? 1 : 0) < 2) errs.push_back("--pred needs at least two prediction files");
  for (const auto& f : files) require_file(f, "--pred", errs);
  if (a.k < 0) errs.push_back("--k must be >= 0");
  if (!errs.empty()) throw UsageError(errs);
  std::vector<PredictionSet> sets;
  for (const auto& f : files) {
    art.input(f);
    sets.push_back(read_predictions_csv(f));
  }
  if (a.with_benchmark) sets.push_back(sets.front().as_benchmark());
  const auto cm = compare_models(sets, a.lag, a.k);

  art.write_csv("dm_matrix.csv", [&](std::ostream& o) {
    csv::Record header = {"row_model"};
    for (std::size_t j = 1; j < cm.models.size(); ++j) header.push_back(cm.models[j]);
    csv::write_record(o, header);
    std::size_t p = 0;
    for (std::size_t i = 0; i + 1 < cm.models.size(); ++i) {
      csv::Record rec = {cm.models[i]};
      for (std::size_t j = 1; j < cm.models.size(); ++j) {
        if (j <= i) {
          rec.push_back("");
          continue;
        }
        const auto& r = cm.pairs[p++];
        rec.push_back(format_double(r.statistic) + (r.bonferroni_significant ? "*" : ""));
      }
      csv::write_record(o, rec);
    }
  });
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& r : cm.pairs)
    pairs.push_back({{"row", r.model_a}, {"column", r.model_b}, {"statistic", r.statistic}, {"p_value", r.p_value},
                     {"lag", r.lag}, {"months", r.months}, {"significant", r.significant},
                     {"bonferroni_significant", r.bonferroni_significant}});
  art.write_json("dm.json", {{"models", cm.models},
                             {"k", cm.k},
                             {"convention", "statistic > 0 means the column model is more accurate"},
                             {"pairs", pairs}});
  return kOk;
}

struct ImportanceArgs {
  Common common;
  std::string panel;
  std::string model = "rf";
  std::string features = "all";
  WindowArgs window;
  RangeArgs range;
  std::string grid_file;
  std::size_t max_rows = 0;
};

inline int cmd_importance(ImportanceArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  a.common.check(errs);
  require_file(a.panel, "--panel", errs);
  const auto kinds = parse_models({a.model}, errs);
  if (kinds.size() > 1) errs.push_back("--model takes a single learner");
  const auto set = checked<FeatureSet>([&] { return parse_feature_set(a.features); }, errs);
  const auto plan = a.window.resolve(errs);
  a.range.check(errs);
  std::map<LearnerKind, std::vector<LearnerSpec>> grids;
  if (!a.grid_file.empty()) {
    if (auto g = checked<std::map<LearnerKind, std::vector<LearnerSpec>>>([&] { return load_grid_file(a.grid_file); }, errs))
      grids = *g;
  }
  if (!errs.empty()) throw UsageError(errs);
  const Panel panel = a.range.apply(load_input_panel(a.panel, art, log, a.common.aux));
  HarnessOptions opt;
  opt.threads = a.common.threads;
  opt.seed = derive_seed(a.common.seed, 1);
  opt.collect_shap = true;
  opt.shap_max_rows = a.max_rows;
  auto it = grids.find(kinds.front());
  const auto res = run_walk_forward(panel, *plan, kinds.front(),
                                    it == grids.end() ? std::vector<LearnerSpec>{} : it->second, *set, opt);
  const auto rep = aggregate_importance(res.shap, entries_for(panel, panel.manifest.columns(*set)));
  art.write_csv("importance.csv", [&](std::ostream& o) { write_importance_csv(o, rep); });
  auto j = to_json(rep);
  j["model"] = to_string(kinds.front());
  j["feature_set"] = to_string(*set);
  j["plan"] = to_json(*plan);
  art.write_json("importance.json", j);
  return kOk;
}

struct MechanismArgs {
  Common common;
  std::string pred, panel;
  int lag = -1;
};

inline int cmd_mechanism(MechanismArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  require_file(a.pred, "--pred", errs);
  require_file(a.panel, "--panel", errs);
  if (!errs.empty()) throw UsageError(errs);
  art.input(a.pred);
  art.input(a.panel);
  const auto ps = read_predictions_csv(a.pred);
  const auto panel = load_panel(a.panel, input_schema(a.panel, a.common.aux));  // mechanism columns are never transformed
  const auto t = mechanism_table(ps, panel, a.lag);
  for (const auto& g : t.skipped) log.warn("mechanism: skipped " + g.month.str() + ": " + g.reason);
  art.write_csv("mechanism.csv", [&](std::ostream& o) { write_mechanism_csv(o, t); });
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json monthly = nlohmann::json::array();
    for (std::size_t i = 0; i < r.monthly.size(); ++i)
      monthly.push_back({{"month", r.month_axis[i].str()}, {"q", r.monthly[i]}});
    rows.push_back({{"variable", r.variable}, {"q", r.q}, {"high_minus_low", r.high_minus_low},
                    {"t", detail::number_or_null(r.t_stat)}, {"status", r.status}, {"months", r.months},
                    {"monthly", monthly}});
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& g : t.skipped) skipped.push_back({{"month", g.month.str()}, {"reason", g.reason}});
  art.write_json("mechanism.json", {{"lag", t.lag}, {"rows", rows}, {"skipped", skipped}});
  return kOk;
}

struct RateArgs {
  Common common;
  std::string panel;
  std::string model = "rf";
  std::string features = "all";
  int K = 5;
  bool per_industry = false;
  bool importance = false;
  std::string grid_file;
};

inline int cmd_rate(RateArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  a.common.check(errs);
  require_file(a.panel, "--panel", errs);
  const auto kinds = parse_models({a.model}, errs, false);
  if (kinds.size() > 1) errs.push_back("--model takes a single classifier");
  const auto set = checked<FeatureSet>([&] { return parse_feature_set(a.features); }, errs);
  if (a.K < 2) errs.push_back("--K must be >= 2");
  std::vector<LearnerSpec> grid;
  if (!a.grid_file.empty()) {
    if (auto g = checked<std::map<LearnerKind, std::vector<LearnerSpec>>>([&] { return load_grid_file(a.grid_file); }, errs))
      if (!kinds.empty() && g->count(kinds.front())) grid = g->at(kinds.front());
  }
  if (!errs.empty()) throw UsageError(errs);
  if (grid.empty()) grid = default_rating_grid(kinds.front());
  const Panel panel = load_input_panel(a.panel, art, log, a.common.aux);
  const auto d = spreads_to_ratings(panel, *set);
  const std::uint64_t seed = derive_seed(a.common.seed, 2);

  const auto holdout = fit_rating_model(d, grid, seed);
  const auto kf = kfold_rating(d, grid, a.K, seed, a.common.threads);
  for (const auto& w : kf.warnings) log.warn(w);
  std::map<std::string, IndustryResult> ind;
  if (a.per_industry) ind = per_industry_models(d, grid, a.K, seed, 100, a.common.threads);

  art.write_csv("rating.csv", [&](std::ostream& o) {
    csv::write_record(o, {"scope", "accuracy", "recall", "f1", "baseline_f1", "n"});
    csv::write_record(o, {"holdout", format_double(holdout.report.accuracy), format_double(holdout.report.recall),
                          format_double(holdout.report.f1), format_double(holdout.baseline.f1),
                          std::to_string(holdout.n_test)});
    csv::write_record(o, {"kfold", format_double(kf.mean.accuracy), format_double(kf.mean.recall),
                          format_double(kf.mean.f1), format_double(kf.baseline.f1), std::to_string(d.size())});
    for (const auto& [tag, r] : ind)
      if (r.report)
        csv::write_record(o, {"industry:" + tag, format_double(r.report->mean.accuracy),
                              format_double(r.report->mean.recall), format_double(r.report->mean.f1),
                              format_double(r.report->baseline.f1), std::to_string(r.rows)});
  });
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < kf.folds.size(); ++f)
    folds.push_back({{"size", kf.fold_sizes[f]}, {"chosen", describe(kf.folds[f].chosen)},
                     {"report", to_json(kf.folds[f].report)}, {"warnings", kf.folds[f].warnings}});
  nlohmann::json industries = nlohmann::json::object();
  for (const auto& [tag, r] : ind)
    industries[tag] = r.report ? nlohmann::json{{"rows", r.rows}, {"f1", r.report->mean.f1},
                                                {"accuracy", r.report->mean.accuracy}}
                               : nlohmann::json{{"rows", r.rows}, {"skipped", r.skipped}};
  art.write_json("rating.json", {{"model", to_string(kinds.front())},
                                 {"feature_set", to_string(*set)},
                                 {"boundaries", d.scale.boundaries},
                                 {"classes", rating_names()},
                                 {"holdout", {{"chosen", describe(holdout.chosen)}, {"report", to_json(holdout.report)},
                                              {"warnings", holdout.warnings}}},
                                 {"kfold", {{"K", a.K}, {"f1", kf.mean.f1}, {"accuracy", kf.mean.accuracy},
                                            {"recall", kf.mean.recall}, {"folds", folds}}},
                                 {"industries", industries}});

  if (a.importance) {
    // Realized-class margin on the holdout test rows.
    const auto split = split_811(d.labels, derive_seed(seed, 1));
    MonthShap ms{Month(0), {}};
    for (auto i : split.test) ms.rows.push_back(tree_shap(*holdout.model, d.X.row(i), d.labels[i]));
    const auto rep = aggregate_importance({ms}, entries_for(panel, d.feature_columns));
    art.write_csv("rating_importance.csv", [&](std::ostream& o) { write_importance_csv(o, rep); });
  }
  return kOk;
}

struct ReportArgs {
  Common common;
  std::string panel;
  std::vector<std::string> windows = {"rolling"};
  std::vector<std::string> models = {"all"};
  int M = 6;
  int val_len = 0;
  RangeArgs range;
  std::string grid_file;
  bool save_predictions = true;
};

inline int cmd_report(ReportArgs& a, Artifacts& art, const Logger& log) {
  std::vector<std::string> errs;
  a.common.check(errs);
  require_file(a.panel, "--panel", errs);
  const auto kinds = parse_models(a.models, errs);
  std::vector<WindowPlan> plans;
  for (const auto& w : split_list(a.windows)) {
    WindowArgs wa;
    wa.M = a.M;
    wa.val_len = a.val_len;
    if (auto p = wa.resolve(errs, w)) plans.push_back(*p);
  }
  if (plans.empty()) errs.push_back("--window lists no plan");
  a.range.check(errs);
  std::map<LearnerKind, std::vector<LearnerSpec>> grids;
  if (!a.grid_file.empty()) {
    if (auto g = checked<std::map<LearnerKind, std::vector<LearnerSpec>>>([&] { return load_grid_file(a.grid_file); }, errs))
      grids = *g;
  }
  if (!errs.empty()) throw UsageError(errs);
  const Panel panel = a.range.apply(load_input_panel(a.panel, art, log, a.common.aux));
  Table2Options opt;
  opt.learners = kinds;
  opt.grids = grids;
  opt.harness.threads = a.common.threads;
  opt.harness.seed = derive_seed(a.common.seed, 1);
  opt.progress = [&](const std::string& s) { log.info("report: " + s); };
  std::vector<Table2> tables;
  for (const auto& plan : plans) tables.push_back(report_table2(panel, plan, opt));

  art.write_csv("table2.csv", [&](std::ostream& o) { write_table2_csv(o, tables); });
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tables) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
      nlohmann::json row = {{"model", r.model}};
      for (auto set : {FeatureSet::Traditional, FeatureSet::All}) {
        const auto& c = r.cells[set_slot(set)];
        row[to_string(set)] = {{"mae", c.mae}, {"rmse", c.rmse}, {"r2", c.r2}, {"r2_os", c.r2_os}, {"n_obs", c.n_obs}};
      }
      rows.push_back(row);
    }
    out.push_back({{"plan", to_json(t.plan)}, {"rows", rows}});
    if (a.save_predictions)
      for (const auto& [key, res] : t.runs) {
        const auto name = "pred_" + run_tag(to_string(key.first), key.second, t.plan) + ".csv";
        save_predictions(res.predictions, art.path(name));
        art.record(art.path(name));
        art.record(art.path(name + ".json"));
      }
  }
  art.write_json("table2.json", out);
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline nlohmann::json resolved_options(const CLI::App* sub) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      j[name] = opt->get_expected_max() > 1 ? nlohmann::json(res) : nlohmann::json(res.back());
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

inline void error_report(std::ostream& err, const std::string& type, const std::string& message,
                         const std::vector<std::string>& violations = {}) {
  nlohmann::json j = {{"error", {{"type", type}, {"message", message}}}};
  if (!violations.empty()) j["error"]["violations"] = violations;
  err << j.dump() << '\n';
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const Logger log(err, log_level_from_env());
  CLI::App app{"Credit-spread forecasting and implied-rating engine"};
  app.name("cspread");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  std::string config_help;
  app.add_option("--config", config_help, "JSON file of option values; explicit flags override it");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a seeded synthetic panel and its ground truth");
  gen.common.add(g, false, false);
  g->add_option("--bonds", gen.bonds, "number of bonds");
  g->add_option("--months", gen.months, "number of months");
  g->add_option("--start", gen.start, "first month (YYYY-MM)");
  g->add_option("--noise-sd", gen.noise_sd, "spread noise sd (negative: default)");
  g->add_option("--rating-noise-sd", gen.rating_noise_sd, "rating noise sd (negative: default)");
  g->add_option("--panel-name", gen.panel_name, "panel file name inside --out-dir");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "median-fill, winsorize and z-score a panel");
  pre.common.add(p, false);
  p->add_option("--panel", pre.panel, "input panel CSV");
  p->add_option("--winsor-p", pre.winsor_p, "winsorizing tail fraction");
  p->add_flag("--no-standardize", pre.no_standardize, "skip z-scoring");
  p->add_option("--output", pre.output, "output panel file name inside --out-dir");
  p->add_option("--curve", pre.curve, "treasury curve CSV (month, maturity_months, ytm)");
  p->add_option("--yields", pre.yields, "bond yields CSV (bond_id, month, ytm, remaining_maturity_months)");

  ForecastArgs fc;
  auto* f = app.add_subcommand("forecast", "walk-forward out-of-sample predictions");
  fc.common.add(f);
  f->add_option("--panel", fc.panel, "panel CSV");
  f->add_option("--model", fc.models, "learner(s): rf, adaboost, xgb, gbdt, lasso, ridge, enet, ols, all")->expected(1, -1);
  f->add_option("--features", fc.features, "traditional | all");
  fc.window.add(f);
  fc.range.add(f);
  f->add_option("--grid", fc.grid_file, "JSON array of learner specs overriding the default grid");
  f->add_option("--benchmark-column", fc.benchmark_column, "benchmark predictor column");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "pairwise modified Diebold-Mariano tests");
  cmp.common.add(c, false, false);
  c->add_option("--pred", cmp.preds, "prediction CSV files")->expected(1, -1);
  c->add_option("--lag", cmp.lag, "Newey-West lag (negative: automatic)");
  c->add_option("--k", cmp.k, "Bonferroni family size (0: number of pairs)");
  c->add_flag("--with-benchmark", cmp.with_benchmark, "add the benchmark column as a model");

  ImportanceArgs imp;
  auto* i = app.add_subcommand("importance", "SHAP importance over walk-forward validation sets");
  imp.common.add(i);
  i->add_option("--panel", imp.panel, "panel CSV");
  i->add_option("--model", imp.model, "learner");
  i->add_option("--features", imp.features, "traditional | all");
  imp.window.add(i);
  imp.range.add(i);
  i->add_option("--grid", imp.grid_file, "JSON array of learner specs");
  i->add_option("--max-rows", imp.max_rows, "SHAP rows per month (0: all)");

  MechanismArgs mech;
  auto* m = app.add_subcommand("mechanism", "quintile portfolios on predicted spreads");
  mech.common.add(m, false);
  m->add_option("--pred", mech.pred, "prediction CSV");
  m->add_option("--panel", mech.panel, "panel CSV holding the mechanism columns");
  m->add_option("--lag", mech.lag, "Newey-West lag (negative: automatic)");

  RateArgs rate;
  auto* r = app.add_subcommand("rate", "implied 10-class rating model");
  rate.common.add(r);
  r->add_option("--panel", rate.panel, "panel CSV");
  r->add_option("--model", rate.model, "rf | xgb");
  r->add_option("--features", rate.features, "traditional | all");
  r->add_option("--K", rate.K, "cross-validation folds");
  r->add_flag("--per-industry", rate.per_industry, "also fit per-industry models");
  r->add_flag("--importance", rate.importance, "emit SHAP importance for the holdout model");
  r->add_option("--grid", rate.grid_file, "JSON array of learner specs");

  ReportArgs rep;
  auto* s = app.add_subcommand("report", "model x feature-set summary table");
  rep.common.add(s);
  s->add_option("--panel", rep.panel, "panel CSV");
  s->add_option("--window", rep.windows, "rolling, recursive or both")->expected(1, -1);
  s->add_option("--model", rep.models, "learners (default all seven)")->expected(1, -1);
  s->add_option("--M", rep.M, "window length in months");
  s->add_option("--val-len", rep.val_len, "validation months (0: max(1, M/3))");
  rep.range.add(s);
  s->add_option("--grid", rep.grid_file, "JSON array of learner specs");
  s->add_flag("--save-predictions,!--no-save-predictions", rep.save_predictions, "write every prediction set");

  std::vector<std::string> names;
  for (const auto* sub : app.get_subcommands({})) names.push_back(sub->get_name());

  try {
    std::vector<std::string> args(argv, argv + argc);
    const auto inj = inject_config(args, names);
    std::vector<std::string> unknown;
    if (!inj.config_path.empty()) {
      const std::string sub_name = *std::find_first_of(inj.args.begin() + 1, inj.args.end(), names.begin(), names.end());
      const auto* sub = app.get_subcommand(sub_name);
      for (const auto& k : inj.keys)
        if (!sub->get_option_no_throw("--" + k)) unknown.push_back("unknown config key '" + k + "' for " + sub_name);
    }
    if (!unknown.empty()) throw UsageError(unknown);

    std::vector<std::string> rev(inj.args.rbegin(), inj.args.rend() - 1);
    app.parse(rev);

    CLI::App* sub = app.get_subcommands().front();
    Common* common = nullptr;
    if (sub == g) common = &gen.common;
    if (sub == p) common = &pre.common;
    if (sub == f) common = &fc.common;
    if (sub == c) common = &cmp.common;
    if (sub == i) common = &imp.common;
    if (sub == m) common = &mech.common;
    if (sub == r) common = &rate.common;
    if (sub == s) common = &rep.common;

    Artifacts art;
    art.dir = common->out_dir;
    std::filesystem::create_directories(art.dir);
    if (!inj.config_path.empty()) art.input(inj.config_path);
    const auto resolved = resolved_options(sub);
    art.write_json("resolved_config.json", {{"subcommand", sub->get_name()}, {"options", resolved}});

    int rc = kOk;
    if (sub == g) rc = cmd_gen(gen, art, log);
    if (sub == p) rc = cmd_preprocess(pre, art, log);
    if (sub == f) rc = cmd_forecast(fc, art, log);
    if (sub == c) rc = cmd_compare(cmp, art, log);
    if (sub == i) rc = cmd_importance(imp, art, log);
    if (sub == m) rc = cmd_mechanism(mech, art, log);
    if (sub == r) rc = cmd_rate(rate, art, log);
    if (sub == s) rc = cmd_report(rep, art, log);

    nlohmann::json inputs = nlohmann::json::array(), outputs = nlohmann::json::array();
    for (const auto& x : art.inputs) inputs.push_back({{"path", x}, {"fnv1a64", fnv1a64_file(x)}});
    for (const auto& x : art.outputs) outputs.push_back({{"path", x}, {"fnv1a64", fnv1a64_file(x)}});
    art.write_json("run_manifest.json", {{"tool", "cspread"},
                                         {"version", kVersion},
                                         {"model_format_version", kModelFormatVersion},
                                         {"subcommand", sub->get_name()},
                                         {"seed", common->seed},
                                         {"argv", std::vector<std::string>(argv + 1, argv + argc)},
                                         {"config_file", inj.config_path},
                                         {"resolved", resolved},
                                         {"inputs", inputs},
                                         {"outputs", outputs}});
    out << "wrote " << art.outputs.size() << " artifacts to " << art.dir.string() << '\n';
    return rc;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_report(err, "usage", e.what());
    err << app.help();
    return kUsage;
  } catch (const UsageError& e) {
    error_report(err, "usage", "invalid configuration", e.violations);
    return kUsage;
  } catch (const std::exception& e) {
    error_report(err, "runtime", e.what());
    return kRuntimeFailure;
  }
}

}  // namespace cspread::cli
