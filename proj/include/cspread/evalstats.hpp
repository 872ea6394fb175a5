// Forecast metrics, Newey-West t-statistics and the cross-sectional
// Diebold-Mariano comparison.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cspread/prediction.hpp"

namespace cspread {

struct MonthEval {
  Month month;
  std::size_t n = 0;
  double sse = 0.0, sse_benchmark = 0.0, sae = 0.0;
};

struct EvalReport {
  double mae = 0.0, rmse = 0.0, r2 = 0.0, r2_os = 0.0;
  std::size_t n_obs = 0;
  double sse = 0.0, sse_benchmark = 0.0, sst = 0.0;
  std::vector<MonthEval> months;
};

// R^2 = 1 - SSE/SST about the mean of actuals; R^2_OS = 1 - SSE/SSE_benchmark.
inline EvalReport eval(const PredictionSet& p) {
  if (p.entries.empty()) throw InvalidArgument("eval: empty prediction set");
  EvalReport r;
  std::map<Month, MonthEval> by_month;
  double sum_actual = 0.0;
  for (const auto& e : p.entries) sum_actual += e.actual;
  const double n = static_cast<double>(p.entries.size());
  const double mu = sum_actual / n;
  for (const auto& e : p.entries) {
    const double err = e.actual - e.predicted, berr = e.actual - e.benchmark;
    r.sse += err * err;
    r.sse_benchmark += berr * berr;
    r.sst += (e.actual - mu) * (e.actual - mu);
    r.mae += std::abs(err);
    auto& m = by_month[e.month];
    m.month = e.month;
    ++m.n;
    m.sse += err * err;
    m.sse_benchmark += berr * berr;
    m.sae += std::abs(err);
  }
  r.n_obs = p.entries.size();
  r.mae /= n;
  r.rmse = std::sqrt(r.sse / n);
  for (auto& [_, m] : by_month) r.months.push_back(m);
  if (!(r.sst > 0)) throw UndefinedMetricError("R^2 undefined: actual spreads have zero variance");
  if (!(r.sse_benchmark > 0)) throw UndefinedMetricError("R^2_OS undefined: benchmark SSE is zero");
  r.r2 = 1.0 - r.sse / r.sst;
  r.r2_os = 1.0 - r.sse / r.sse_benchmark;
  return r;
}

// floor(4 (T/100)^(2/9))
inline int default_nw_lag(std::size_t T) {
  return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

// Bartlett-kernel long-run variance. Autocovariances about the sample mean
// use the T-1 divisor, so lag 0 reproduces the sample variance.
inline double newey_west_variance(std::span<const double> x, int lag) {
  const std::size_t T = x.size();
  const double mu = mean(x);
  auto gamma = [&](int j) {
    double s = 0.0;
    for (std::size_t t = static_cast<std::size_t>(j); t < T; ++t) s += (x[t] - mu) * (x[t - j] - mu);
    return s / static_cast<double>(T - 1);
  };
  double v = gamma(0);
  for (int j = 1; j <= lag; ++j) v += 2.0 * (1.0 - j / static_cast<double>(lag + 1)) * gamma(j);
  return v;
}

inline double newey_west_t(std::span<const double> x, int lag) {
  if (lag < 0 || x.size() <= static_cast<std::size_t>(lag) || x.size() < 2)
    throw InvalidArgument("newey_west_t: need length > lag >= 0 and length >= 2");
  const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  if (constant) throw DegenerateSeriesError("newey_west_t: series is constant");
  const double v = newey_west_variance(x, lag);
  if (!(v > 0)) throw DegenerateSeriesError("newey_west_t: non-positive long-run variance");
  return mean(x) / std::sqrt(v / static_cast<double>(x.size()));
}

struct DMResult {
  std::string model_a, model_b;
  double statistic = 0.0;  // > 0: model_b more accurate
  double p_value = 1.0;
  int lag = 0;
  std::size_t months = 0;
  bool significant = false;             // two-sided 5%
  bool bonferroni_significant = false;  // two-sided 5% / k
};

// Cross-sectional mean of squared-error differentials e_a^2 - e_b^2 per month.
inline std::vector<double> loss_differentials(const Paired& p) {
  std::vector<double> d;
  std::size_t i = 0;
  while (i < p.a.size()) {
    const Month m = p.a[i].month;
    double s = 0.0;
    std::size_t n = 0;
    for (; i < p.a.size() && p.a[i].month == m; ++i, ++n) {
      const double ea = p.a[i].actual - p.a[i].predicted, eb = p.b[i].actual - p.b[i].predicted;
      s += ea * ea - eb * eb;
    }
    d.push_back(s / static_cast<double>(n));
  }
  return d;
}

// lag < 0 selects the automatic lag; k is the Bonferroni family size.
inline DMResult dm_test(const PredictionSet& a, const PredictionSet& b, int lag = -1, int k = 1) {
  const auto paired = align(a, b);
  const auto d = loss_differentials(paired);
  if (d.size() < 8)
    throw InvalidArgument("dm_test: need >= 8 overlapping months, have " + std::to_string(d.size()));
  DMResult r;
  r.model_a = a.model;
  r.model_b = b.model;
  r.months = d.size();
  r.lag = lag < 0 ? default_nw_lag(d.size()) : lag;
  r.statistic = newey_west_t(d, r.lag);
  r.p_value = 2.0 * (1.0 - normal_cdf(std::abs(r.statistic)));
  r.significant = r.p_value < 0.05;
  r.bonferroni_significant = r.p_value < 0.05 / std::max(1, k);
  return r;
}

struct CompareMatrix {
  std::vector<std::string> models;
  std::vector<DMResult> pairs;  // row model = a, column model = b, for a before b
  int k = 0;
};

// All pairs (i < j); k defaults to the number of pairs.
inline CompareMatrix compare_models(const std::vector<PredictionSet>& sets, int lag = -1, int k = 0) {
  if (sets.size() < 2) throw InvalidArgument("compare: need at least two prediction sets");
  CompareMatrix c;
  for (const auto& s : sets) c.models.push_back(s.model);
  const int n_pairs = static_cast<int>(sets.size() * (sets.size() - 1) / 2);
  c.k = k > 0 ? k : n_pairs;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j) c.pairs.push_back(dm_test(sets[i], sets[j], lag, c.k));
  return c;
}

}  // namespace cspread
