// Spread-implied ten-class ratings: decile labeling, classifier selection by
// weighted F1, stratified 8:1:1 and K-fold protocols, weighted metrics.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cspread/harness.hpp"
#include "cspread/learners.hpp"
#include "cspread/panel.hpp"

namespace cspread {

inline constexpr int kRatingClasses = 10;

inline const std::array<std::string, kRatingClasses>& rating_names() {
  static const std::array<std::string, kRatingClasses> n = {"AAA", "AA+", "AA", "A",  "BBB",
                                                            "BB",  "B",   "CCC", "CC", "C"};
  return n;
}

struct RatingScale {
  std::vector<double> boundaries;  // 9 non-decreasing cut points

  // Number of boundaries strictly below the spread; a tie goes to the lower class.
  int classify(double spread) const {
    return static_cast<int>(std::lower_bound(boundaries.begin(), boundaries.end(), spread) - boundaries.begin());
  }
};

inline RatingScale decile_scale(std::vector<double> spreads) {
  std::sort(spreads.begin(), spreads.end());
  std::size_t distinct = spreads.empty() ? 0 : 1;
  for (std::size_t i = 1; i < spreads.size(); ++i) distinct += spreads[i] != spreads[i - 1];
  if (distinct < static_cast<std::size_t>(kRatingClasses))
    throw InvalidArgument("rating scale needs >= 10 distinct spreads, have " + std::to_string(distinct));
  RatingScale s;
  for (int k = 1; k < kRatingClasses; ++k) s.boundaries.push_back(quantile_sorted(spreads, k / 10.0));
  return s;
}

struct LabeledDataset {
  Matrix X;
  std::vector<int> labels;
  std::vector<RowKey> keys;
  std::vector<std::string> industry;
  std::vector<std::size_t> feature_columns;
  RatingScale scale;

  std::size_t size() const { return labels.size(); }

  LabeledDataset subset(const std::vector<std::size_t>& idx) const {
    LabeledDataset d;
    d.X = X.select_rows(idx);
    for (auto i : idx) {
      d.labels.push_back(labels[i]);
      d.keys.push_back(keys[i]);
      d.industry.push_back(industry[i]);
    }
    d.feature_columns = feature_columns;
    d.scale = scale;
    return d;
  }
};

// Lagged features paired with the decile class of the spread.
inline LabeledDataset spreads_to_ratings(const Panel& panel, FeatureSet set) {
  const auto months = panel.months();
  if (months.empty()) throw InvalidArgument("spreads_to_ratings: empty panel");
  auto s = build_slice(panel, set, {months.front(), months.back()});
  LabeledDataset d;
  d.scale = decile_scale(s.y);
  d.X = std::move(s.X);
  d.keys = std::move(s.keys);
  d.feature_columns = std::move(s.feature_columns);
  for (double y : s.y) d.labels.push_back(d.scale.classify(y));
  for (const auto& k : d.keys) {
    const auto* row = panel.find(k.bond_id, k.month);
    d.industry.push_back(row ? row->industry : "");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

using Confusion = std::vector<std::vector<double>>;  // [true][predicted]

inline Confusion confusion_matrix(std::span<const int> truth, std::span<const int> pred, int n_classes = kRatingClasses) {
  Confusion c(static_cast<std::size_t>(n_classes), std::vector<double>(static_cast<std::size_t>(n_classes), 0.0));
  for (std::size_t i = 0; i < truth.size(); ++i) c[truth[i]][pred[i]] += 1.0;
  return c;
}

struct ClassificationReport {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;  // weighted by true-class support
  std::vector<double> class_precision, class_recall, class_f1, support;
  Confusion confusion;
  std::size_t n = 0;
};

inline ClassificationReport classification_metrics(const Confusion& c) {
  const std::size_t K = c.size();
  for (const auto& row : c)
    if (row.size() != K) throw InvalidArgument("confusion matrix must be square");
  ClassificationReport r;
  r.confusion = c;
  r.class_precision.assign(K, 0.0);
  r.class_recall.assign(K, 0.0);
  r.class_f1.assign(K, 0.0);
  r.support.assign(K, 0.0);
  double total = 0.0, trace = 0.0;
  std::vector<double> colsum(K, 0.0);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      r.support[i] += c[i][j];
      colsum[j] += c[i][j];
      total += c[i][j];
      if (i == j) trace += c[i][j];
    }
  r.n = static_cast<std::size_t>(total);
  if (total == 0) return r;
  r.accuracy = trace / total;
  for (std::size_t k = 0; k < K; ++k) {
    const double p = colsum[k] > 0 ? c[k][k] / colsum[k] : 0.0;
    const double q = r.support[k] > 0 ? c[k][k] / r.support[k] : 0.0;
    r.class_precision[k] = p;
    r.class_recall[k] = q;
    r.class_f1[k] = p + q > 0 ? 2 * p * q / (p + q) : 0.0;
    const double w = r.support[k] / total;
    r.precision += w * p;
    r.recall += w * q;
    r.f1 += w * r.class_f1[k];
  }
  if (std::abs(r.recall - r.accuracy) > 1e-12)
    throw std::logic_error("weighted recall differs from accuracy on a single-label confusion matrix");
  return r;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

// Slot per row in [0, modulus): rows are shuffled, grouped by class (class
// order, shuffled order within), then numbered by running position.
inline std::vector<int> stratified_slots(std::span<const int> labels, std::span<const std::size_t> rows, int modulus,
                                         std::uint64_t seed) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  std::vector<int> slot(labels.size(), -1);
  for (std::size_t p = 0; p < order.size(); ++p) slot[order[p]] = static_cast<int>(p % static_cast<std::size_t>(modulus));
  return slot;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

// 8:1:1 stratified split.
inline Split split_811(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto slot = stratified_slots(labels, all, 10, seed);
  Split s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (slot[i] < 8) s.train.push_back(i);
    else if (slot[i] == 8) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

// K near-equal folds over shuffled rows; the first n mod K folds take one extra.
inline std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int K, std::uint64_t seed) {
  if (K < 2) throw InvalidArgument("kfold: K must be >= 2");
  if (n < static_cast<std::size_t>(K)) throw InvalidArgument("kfold: fewer rows than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(K));
  const std::size_t base = n / K, extra = n % K;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

inline std::vector<LearnerSpec> default_rating_grid(LearnerKind kind) {
  std::vector<LearnerSpec> g;
  LearnerSpec s;
  s.kind = kind;
  if (kind == LearnerKind::RF) {
    for (int depth : {8, -1})
      for (int b : {100, 300}) {
        s.n_trees = b;
        s.max_depth = depth;
        g.push_back(s);
      }
  } else if (kind == LearnerKind::XGB) {
    s.lambda = 1.0;
    for (int depth : {3, 6})
      for (int n : {50, 100}) {
        s.n_trees = n;
        s.learning_rate = 0.1;
        s.max_depth = depth;
        g.push_back(s);
      }
  } else {
    throw InvalidArgument("rating classifier must be rf or xgb");
  }
  return g;
}

inline EnsembleModel fit_classifier(const LearnerSpec& s, const Matrix& X, std::span<const int> labels) {
  std::vector<double> y(labels.begin(), labels.end());
  if (s.kind == LearnerKind::RF) return fit_rf_classifier(X, y, s, kRatingClasses);
  if (s.kind == LearnerKind::XGB) return fit_xgb_classifier(X, y, s, kRatingClasses);
  throw InvalidArgument("rating classifier must be rf or xgb");
}

struct RatingResult {
  ClassificationReport report;    // on the test rows
  ClassificationReport baseline;  // majority class of train+validation, same test rows
  LearnerSpec chosen;
  double val_f1 = 0.0;
  std::vector<std::string> warnings;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::optional<EnsembleModel> model;  // winner refit on train + validation
};

namespace detail {

inline int majority(std::span<const int> labels) {
  std::array<std::size_t, kRatingClasses> cnt{};
  for (int l : labels) ++cnt[static_cast<std::size_t>(l)];
  return static_cast<int>(std::max_element(cnt.begin(), cnt.end()) - cnt.begin());
}

inline std::vector<int> labels_of(const LabeledDataset& d, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(d.labels[i]);
  return out;
}

}  // namespace detail

// Grid search on (train, val) by weighted F1 (ties: first), refit on
// train + val, report on test.
inline RatingResult fit_rating_model(const LabeledDataset& d, const Split& split, std::vector<LearnerSpec> grid,
                                     std::uint64_t seed) {
  if (grid.empty()) throw InvalidArgument("rating grid is empty");
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw EmptySliceError("rating split has an empty train, validation or test part");
  RatingResult res;
  res.n_train = split.train.size();
  res.n_val = split.val.size();
  res.n_test = split.test.size();
  const auto ytr = detail::labels_of(d, split.train), yva = detail::labels_of(d, split.val),
             yte = detail::labels_of(d, split.test);
  {
    std::array<bool, kRatingClasses> seen{};
    for (int l : ytr) seen[static_cast<std::size_t>(l)] = true;
    for (int k = 0; k < kRatingClasses; ++k)
      if (!seen[static_cast<std::size_t>(k)]) res.warnings.push_back("class " + rating_names()[k] + " absent from training");
  }
  const Matrix Xtr = d.X.select_rows(split.train), Xva = d.X.select_rows(split.val), Xte = d.X.select_rows(split.test);
  for (auto& g : grid) g.seed = seed;

  std::vector<double> scores(grid.size(), -1.0);
  std::vector<char> done(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> members;
    int max_count = 0;
    for (std::size_t j = i; j < grid.size(); ++j)
      if (!done[j] && detail::same_except_count(grid[i], grid[j])) {
        members.push_back(j);
        max_count = std::max(max_count, grid[j].n_trees);
      }
    LearnerSpec s = grid[i];
    s.n_trees = max_count;
    const auto full = fit_classifier(s, Xtr, ytr);
    for (auto j : members) {
      const auto m = truncate(full, static_cast<std::size_t>(grid[j].n_trees));
      scores[j] = classification_metrics(confusion_matrix(yva, predict_class(m, Xva))).f1;
      done[j] = 1;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  res.chosen = grid[best];
  res.val_f1 = scores[best];

  std::vector<std::size_t> trval = split.train;
  trval.insert(trval.end(), split.val.begin(), split.val.end());
  std::sort(trval.begin(), trval.end());
  const auto ytv = detail::labels_of(d, trval);
  res.model = fit_classifier(res.chosen, d.X.select_rows(trval), ytv);
  res.report = classification_metrics(confusion_matrix(yte, predict_class(*res.model, Xte)));
  const std::vector<int> base(yte.size(), detail::majority(ytv));
  res.baseline = classification_metrics(confusion_matrix(yte, base));
  return res;
}

inline RatingResult fit_rating_model(const LabeledDataset& d, std::vector<LearnerSpec> grid, std::uint64_t seed) {
  if (d.size() < 100) throw InvalidArgument("fit_rating_model: need >= 100 rows, have " + std::to_string(d.size()));
  return fit_rating_model(d, split_811(d.labels, derive_seed(seed, 1)), std::move(grid), derive_seed(seed, 2));
}

struct AveragedMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct KFoldReport {
  std::vector<RatingResult> folds;
  std::vector<std::size_t> fold_sizes;
  AveragedMetrics mean, baseline;
  std::vector<std::string> warnings;
};

inline KFoldReport kfold_rating(const LabeledDataset& d, std::vector<LearnerSpec> grid, int K, std::uint64_t seed,
                                int threads = 1) {
  const auto folds = kfold_partition(d.size(), K, derive_seed(seed, 10));
  KFoldReport rep;
  rep.folds.resize(folds.size());
  std::array<std::size_t, kRatingClasses> cnt{};
  for (int l : d.labels) ++cnt[static_cast<std::size_t>(l)];
  for (int k = 0; k < kRatingClasses; ++k)
    if (cnt[static_cast<std::size_t>(k)] > 0 && cnt[static_cast<std::size_t>(k)] < static_cast<std::size_t>(K))
      rep.warnings.push_back("class " + rating_names()[k] + " has fewer rows than folds");
  parallel_for(folds.size(), threads, [&](std::size_t f) {
    std::vector<char> in_test(d.size(), 0);
    for (auto i : folds[f]) in_test[i] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!in_test[i]) rest.push_back(i);
    const auto slot = stratified_slots(d.labels, rest, 9, derive_seed(seed, 100 + f));
    Split s;
    for (auto i : rest) (slot[i] < 8 ? s.train : s.val).push_back(i);
    s.test = folds[f];
    rep.folds[f] = fit_rating_model(d, s, grid, derive_seed(seed, 200 + f));
  });
  const double k = static_cast<double>(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& r = rep.folds[f];
    rep.fold_sizes.push_back(folds[f].size());
    rep.mean.accuracy += r.report.accuracy / k;
    rep.mean.precision += r.report.precision / k;
    rep.mean.recall += r.report.recall / k;
    rep.mean.f1 += r.report.f1 / k;
    rep.baseline.accuracy += r.baseline.accuracy / k;
    rep.baseline.precision += r.baseline.precision / k;
    rep.baseline.recall += r.baseline.recall / k;
    rep.baseline.f1 += r.baseline.f1 / k;
  }
  return rep;
}

struct IndustryResult {
  std::optional<KFoldReport> report;
  std::string skipped;  // reason when report is empty
  std::size_t rows = 0;
};

inline std::map<std::string, IndustryResult> per_industry_models(const LabeledDataset& d,
                                                                 const std::vector<LearnerSpec>& grid, int K,
                                                                 std::uint64_t seed, std::size_t min_rows = 100,
                                                                 int threads = 1) {
  std::map<std::string, std::vector<std::size_t>> parts;
  for (std::size_t i = 0; i < d.size(); ++i) parts[d.industry[i]].push_back(i);
  std::map<std::string, IndustryResult> out;
  for (const auto& [tag, idx] : parts) {
    IndustryResult r;
    r.rows = idx.size();
    if (idx.size() < min_rows) {
      r.skipped = "only " + std::to_string(idx.size()) + " rows (< " + std::to_string(min_rows) + ")";
    } else {
      r.report = kfold_rating(d.subset(idx), grid, K, seed, threads);
    }
    out[tag] = std::move(r);
  }
  return out;
}

}  // namespace cspread
