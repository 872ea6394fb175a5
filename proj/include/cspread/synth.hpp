// Seeded synthetic bond panel with a planted, recorded ground truth.
//
// Spread model:   spread[i,t] = sum_k term_k(x[i,t-1]) + b[i,t] + noise_sd * e[i,t]
// Bond effect:    b[i,t] = bond_mean[i] + a[i,t],  a AR(1) with coefficient bond_ar
// Rating code:    coarse 1..10 bucket of (mu[i,t] + rating noise), smaller = better
// Mechanisms:     roa, stl_ratio, kz linear in d = mu[i,t] - median_t(mu);
//                 leverage = a + c * d^2 (U-shape)
//
// Random streams (see Rng::stream): stream 1 drives macro series, stream
// 1000 + 8*i + k drives bond i's k-th purpose (0 features, 1 spread noise,
// 2 bond effect, 3 rating noise, 4 mechanism noise, 5 entry/industry,
// 6 missingness).
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cspread/core.hpp"
#include "cspread/panel.hpp"
#include "json.hpp"

namespace cspread::synth {

enum class TermForm { Linear, Threshold, Interaction };

inline std::string to_string(TermForm f) {
  switch (f) {
    case TermForm::Linear: return "linear";
    case TermForm::Threshold: return "threshold";
    case TermForm::Interaction: return "interaction";
  }
  return "?";
}

struct PlantedTerm {
  std::string feature;
  TermForm form = TermForm::Linear;
  double coef = 0.0;
  std::string partner;     // interaction only
  double threshold = 0.0;  // threshold only: coef * 1[x > threshold]
};

struct MechanismCoupling {
  double roa_slope = -0.02;
  double stl_slope = 0.06;
  double kz_slope = 0.5;
  double leverage_curvature = 0.02;
  double roa_noise = 0.03;
  double stl_noise = 0.08;
  double kz_noise = 0.8;
  double leverage_noise = 0.08;
};

struct SynthSpec {
  std::uint64_t seed = 20240517;
  int n_bonds = 200;
  int n_months = 72;
  Month start = Month::from_ym(2012, 1);
  int n_macro = 6;
  int n_financial = 8;
  int n_nonfinancial = 6;
  int n_bond = 4;
  std::vector<PlantedTerm> terms = default_terms();
  double noise_sd = 0.2;
  double rating_noise_sd = 1.6;
  double rating_step = 0.6;
  double bond_mean = 2.0;
  double bond_mean_sd = 0.2;
  double bond_ar = 0.9;
  double bond_innovation_sd = 0.1;
  double feature_ar = 0.9;
  double missing_rate = 0.02;
  double late_entry_share = 0.2;
  int n_industries = 3;
  MechanismCoupling mechanism;

  static std::vector<PlantedTerm> default_terms() {
    return {
        {"F1", TermForm::Linear, 1.0, "", 0.0},
        {"NF1", TermForm::Linear, 0.9, "", 0.0},
        {"NF3", TermForm::Threshold, 0.85, "", 0.0},
        {"F3", TermForm::Threshold, 0.8, "", 0.0},
        {"NF2", TermForm::Interaction, 0.7, "F2", 0.0},
        {"F2", TermForm::Interaction, 0.5, "F4", 0.0},
        {"F2", TermForm::Linear, 0.3, "", 0.0},
        {"M1", TermForm::Linear, 0.3, "", 0.0},
        {"B1", TermForm::Linear, 0.1, "", 0.0},
    };
  }

  static SynthSpec defaults() {
    SynthSpec s;
    s.terms = default_terms();
    return s;
  }
};

struct TruthRecord {
  std::string bond_id;
  Month month;
  double mean = 0.0;         // conditional mean of the spread given t-1 features
  double bond_effect = 0.0;  // b[i,t]
};

struct GroundTruth {
  SynthSpec spec;
  std::vector<TruthRecord> records;  // (bond_id, month) order, one per panel row
};

inline std::vector<std::string> feature_names(const SynthSpec& s) {
  std::vector<std::string> out;
  for (int k = 1; k <= s.n_macro; ++k) out.push_back("M" + std::to_string(k));
  for (int k = 1; k <= s.n_financial; ++k) out.push_back("F" + std::to_string(k));
  for (int k = 1; k <= s.n_nonfinancial; ++k) out.push_back("NF" + std::to_string(k));
  for (int k = 1; k <= s.n_bond; ++k) out.push_back("B" + std::to_string(k));
  return out;
}

inline void validate(const SynthSpec& s) {
  std::vector<std::string> errors;
  if (s.n_bonds < 10) errors.push_back("n_bonds must be >= 10");
  if (s.n_months < 12) errors.push_back("n_months must be >= 12");
  if (s.n_macro < 1 || s.n_financial < 1 || s.n_nonfinancial < 1 || s.n_bond < 1)
    errors.push_back("every feature group needs at least one column");
  if (s.noise_sd < 0 || s.rating_noise_sd < 0 || s.bond_mean_sd < 0 || s.bond_innovation_sd < 0)
    errors.push_back("noise scales must be non-negative");
  if (!(s.rating_step > 0)) errors.push_back("rating_step must be positive");
  if (std::abs(s.bond_ar) >= 1 || std::abs(s.feature_ar) >= 1) errors.push_back("AR coefficients must lie in (-1, 1)");
  if (s.missing_rate < 0 || s.missing_rate >= 1) errors.push_back("missing_rate must lie in [0, 1)");
  if (s.late_entry_share < 0 || s.late_entry_share > 1) errors.push_back("late_entry_share must lie in [0, 1]");
  if (s.n_industries < 1) errors.push_back("n_industries must be >= 1");
  const auto names = feature_names(s);
  auto exists = [&](const std::string& f) { return std::find(names.begin(), names.end(), f) != names.end(); };
  bool nf = false, interaction = false;
  for (const auto& t : s.terms) {
    if (!exists(t.feature)) errors.push_back("planted feature '" + t.feature + "' is not generated");
    if (t.form == TermForm::Interaction) {
      interaction = true;
      if (!exists(t.partner)) errors.push_back("interaction partner '" + t.partner + "' is not generated");
      if (t.partner.rfind("NF", 0) == 0) nf = true;
    }
    if (t.feature.rfind("NF", 0) == 0) nf = true;
  }
  if (!s.terms.empty()) {
    if (!nf) errors.push_back("signal plan needs at least one term in the NF group");
    if (!interaction) errors.push_back("signal plan needs at least one interaction term");
  }
  if (!errors.empty()) {
    std::string msg = "invalid synth spec:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw InvalidArgument(msg);
  }
}

inline double evaluate_term(const PlantedTerm& t, std::span<const double> x, const FeatureManifest& m) {
  const double v = x[*m.index_of(t.feature)];
  switch (t.form) {
    case TermForm::Linear: return t.coef * v;
    case TermForm::Threshold: return v > t.threshold ? t.coef : 0.0;
    case TermForm::Interaction: return t.coef * v * x[*m.index_of(t.partner)];
  }
  return 0.0;
}

namespace detail {
inline std::uint64_t bond_stream(int bond, int purpose) { return 1000ULL + 8ULL * static_cast<std::uint64_t>(bond) + purpose; }
}  // namespace detail

inline std::pair<Panel, GroundTruth> generate(const SynthSpec& spec) {
  validate(spec);
  const int T = spec.n_months;
  const int n_feat = spec.n_macro + spec.n_financial + spec.n_nonfinancial + spec.n_bond;
  const auto names = feature_names(spec);

  Panel panel;
  for (const auto& n : names) {
    auto g = infer_group(n);
    panel.manifest.entries.push_back({n, g->first, g->second});
  }

  // Macro common factors for months -1..T-1 (index shift by one).
  std::vector<std::vector<double>> macro(spec.n_macro, std::vector<double>(T + 1));
  {
    Rng rng = Rng::stream(spec.seed, 1);
    const double phi = 0.8, innov = std::sqrt(1 - phi * phi);
    for (int k = 0; k < spec.n_macro; ++k) {
      double v = rng.normal();
      for (int t = 0; t <= T; ++t) {
        macro[k][t] = v;
        v = phi * v + innov * rng.normal();
      }
    }
  }

  const double fphi = spec.feature_ar, finnov = std::sqrt(1 - fphi * fphi);
  const int bond_digits = static_cast<int>(std::to_string(spec.n_bonds).size());

  struct BondSeries {
    std::string id;
    std::string industry;
    int entry = 0;
    std::vector<std::vector<double>> x;  // [t+1][feature], t = -1..T-1
    std::vector<double> mu, effect, spread;
  };
  std::vector<BondSeries> bonds(spec.n_bonds);

  for (int i = 0; i < spec.n_bonds; ++i) {
    auto& b = bonds[i];
    char buf[32];
    std::snprintf(buf, sizeof buf, "b%0*d", bond_digits, i + 1);
    b.id = buf;
    Rng meta = Rng::stream(spec.seed, detail::bond_stream(i, 5));
    b.industry = "IND" + std::to_string(1 + meta.below(static_cast<std::uint64_t>(spec.n_industries)));
    if (meta.uniform() < spec.late_entry_share) b.entry = 1 + static_cast<int>(meta.below(static_cast<std::uint64_t>(T / 2)));

    Rng fr = Rng::stream(spec.seed, detail::bond_stream(i, 0));
    b.x.assign(T + 1, std::vector<double>(n_feat));
    std::vector<double> region(spec.n_macro), state(spec.n_financial + spec.n_nonfinancial);
    for (auto& r : region) r = 0.6 * fr.normal();
    for (auto& s : state) s = fr.normal();
    const double nf_dummy = fr.uniform() < 0.3 ? 1.0 : 0.0;
    const double maturity0 = 1.0 + 6.0 * fr.uniform();
    const double issue_size = std::exp(0.5 * fr.normal());
    const double guarantee = fr.uniform() < 0.4 ? 1.0 : 0.0;
    const double venue = fr.uniform() < 0.5 ? 1.0 : 0.0;
    for (int t = 0; t <= T; ++t) {
      auto& x = b.x[t];
      int c = 0;
      for (int k = 0; k < spec.n_macro; ++k) x[c++] = 0.8 * macro[k][t] + region[k];
      for (int k = 0; k < spec.n_financial + spec.n_nonfinancial; ++k) {
        x[c++] = state[k];
        state[k] = fphi * state[k] + finnov * fr.normal();
      }
      // Last non-financial column is a static dummy when the group has >= 4 columns.
      if (spec.n_nonfinancial >= 4) x[spec.n_macro + spec.n_financial + spec.n_nonfinancial - 1] = nf_dummy;
      const double bond_cols[4] = {std::max(0.1, maturity0 - t / 12.0), issue_size, guarantee, venue};
      for (int k = 0; k < spec.n_bond; ++k) x[c++] = k < 4 ? bond_cols[k] : fr.normal();
    }

    Rng er = Rng::stream(spec.seed, detail::bond_stream(i, 2));
    Rng nr = Rng::stream(spec.seed, detail::bond_stream(i, 1));
    const double bmean = spec.bond_mean + spec.bond_mean_sd * er.normal();
    const double binnov = spec.bond_innovation_sd;
    double a = binnov / std::sqrt(1 - spec.bond_ar * spec.bond_ar) * er.normal();
    b.mu.resize(T);
    b.effect.resize(T);
    b.spread.resize(T);
    for (int t = 0; t < T; ++t) {
      double m = 0.0;
      for (const auto& term : spec.terms) m += evaluate_term(term, b.x[t], panel.manifest);  // x at t-1
      b.effect[t] = bmean + a;
      b.mu[t] = m + b.effect[t];
      b.spread[t] = b.mu[t] + spec.noise_sd * nr.normal();
      a = spec.bond_ar * a + binnov * er.normal();
    }
  }

  // Cross-sectional medians of mu (active bonds) per month for the mechanism plant.
  std::vector<double> med_mu(T);
  for (int t = 0; t < T; ++t) {
    std::vector<double> v;
    for (const auto& b : bonds)
      if (t >= b.entry) v.push_back(b.mu[t]);
    med_mu[t] = median(v);
  }
  std::vector<double> all_mu;
  for (const auto& b : bonds)
    for (int t = b.entry; t < T; ++t) all_mu.push_back(b.mu[t]);
  const double rating_center = median(all_mu);

  GroundTruth truth;
  truth.spec = spec;
  const auto& mc = spec.mechanism;
  for (int i = 0; i < spec.n_bonds; ++i) {
    auto& b = bonds[i];
    Rng rr = Rng::stream(spec.seed, detail::bond_stream(i, 3));
    Rng mr = Rng::stream(spec.seed, detail::bond_stream(i, 4));
    Rng miss = Rng::stream(spec.seed, detail::bond_stream(i, 6));
    const double rating_bias = spec.rating_noise_sd * std::sqrt(0.5) * rr.normal();
    for (int t = 0; t < T; ++t) {
      const double rating_noise = spec.rating_noise_sd * std::sqrt(0.5) * rr.normal();
      const double d = b.mu[t] - med_mu[t];
      const double e_roa = mr.normal(), e_stl = mr.normal(), e_kz = mr.normal(), e_lev = mr.normal();
      std::vector<double> obs = b.x[t + 1];
      for (int k = 0; k < spec.n_financial; ++k) {
        const double u = miss.uniform();
        if (u < spec.missing_rate) obs[spec.n_macro + k] = kMissing;
      }
      if (t < b.entry) continue;

      ObservationRow row;
      row.bond_id = b.id;
      row.month = spec.start + t;
      row.spread = b.spread[t];
      const double code = std::round(5.5 + (b.mu[t] + rating_bias + rating_noise - rating_center) / spec.rating_step);
      row.rating_code = std::clamp(code, 1.0, 10.0);
      row.industry = b.industry;
      row.mechanism.roa = 0.05 + mc.roa_slope * d + mc.roa_noise * e_roa;
      row.mechanism.stl_ratio = 0.5 + mc.stl_slope * d + mc.stl_noise * e_stl;
      row.mechanism.kz = 1.0 + mc.kz_slope * d + mc.kz_noise * e_kz;
      row.mechanism.leverage = 0.5 + mc.leverage_curvature * d * d + mc.leverage_noise * e_lev;
      row.features = std::move(obs);
      panel.rows.push_back(std::move(row));
      truth.records.push_back({b.id, spec.start + t, b.mu[t], b.effect[t]});
    }
  }
  panel.normalize();
  return {std::move(panel), std::move(truth)};
}

// Planted features ranked by the largest |coefficient| of any term that
// involves them; ties ordered by feature id.
struct RankedFeature {
  std::string feature;
  double abs_coef = 0.0;
};

inline std::vector<RankedFeature> describe_truth(const GroundTruth& gt) {
  std::map<std::string, double> score;
  for (const auto& t : gt.spec.terms) {
    score[t.feature] = std::max(score[t.feature], std::abs(t.coef));
    if (t.form == TermForm::Interaction) score[t.partner] = std::max(score[t.partner], std::abs(t.coef));
  }
  std::vector<RankedFeature> out;
  for (const auto& [f, s] : score) out.push_back({f, s});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.abs_coef > b.abs_coef; });
  return out;
}

// ---------------------------------------------------------------------------
// JSON sidecar
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : s.terms)
    terms.push_back({{"feature", t.feature}, {"form", to_string(t.form)}, {"coef", t.coef}, {"partner", t.partner},
                     {"threshold", t.threshold}});
  return {{"seed", s.seed},
          {"n_bonds", s.n_bonds},
          {"n_months", s.n_months},
          {"start", s.start.str()},
          {"n_features", {{"M", s.n_macro}, {"F", s.n_financial}, {"NF", s.n_nonfinancial}, {"B", s.n_bond}}},
          {"terms", terms},
          {"noise_sd", s.noise_sd},
          {"rating_noise_sd", s.rating_noise_sd},
          {"rating_step", s.rating_step},
          {"bond_mean", s.bond_mean},
          {"bond_mean_sd", s.bond_mean_sd},
          {"bond_ar", s.bond_ar},
          {"bond_innovation_sd", s.bond_innovation_sd},
          {"feature_ar", s.feature_ar},
          {"missing_rate", s.missing_rate},
          {"late_entry_share", s.late_entry_share},
          {"n_industries", s.n_industries},
          {"mechanism",
           {{"roa_slope", s.mechanism.roa_slope},
            {"stl_slope", s.mechanism.stl_slope},
            {"kz_slope", s.mechanism.kz_slope},
            {"leverage_curvature", s.mechanism.leverage_curvature}}}};
}

inline nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& r : describe_truth(gt)) ranking.push_back({{"feature", r.feature}, {"abs_coef", r.abs_coef}});
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : gt.records)
    recs.push_back({{"bond_id", r.bond_id}, {"month", r.month.str()}, {"mean", r.mean}, {"bond_effect", r.bond_effect}});
  return {{"format", "cspread-truth"}, {"version", 1}, {"spec", to_json(gt.spec)}, {"ranking", ranking}, {"records", recs}};
}

}  // namespace cspread::synth
