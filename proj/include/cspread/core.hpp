// Shared vocabulary: months, missing values, dense matrices, errors,
// deterministic random streams and a small order-preserving parallel_for.
#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cspread {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};

class EmptySliceError : public Error {
 public:
  using Error::Error;
};

class DegenerateSeriesError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Missing values
// ---------------------------------------------------------------------------

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Month: integer months since 1970-01, serialized as YYYY-MM.
// ---------------------------------------------------------------------------

struct Month {
  int value = 0;

  constexpr Month() = default;
  constexpr explicit Month(int v) : value(v) {}

  static constexpr Month from_ym(int year, int month) {
    return Month((year - 1970) * 12 + (month - 1));
  }

  constexpr int year() const {
    int y = value >= 0 ? value / 12 : -((-value + 11) / 12);
    return 1970 + y;
  }
  constexpr int month_of_year() const {
    int m = value % 12;
    return (m < 0 ? m + 12 : m) + 1;
  }

  static Month parse(std::string_view text) {
    // Accepts YYYY-MM (optionally YYYY-MM-DD; day ignored).
    auto bad = [&] { return InvalidArgument("bad month label '" + std::string(text) + "', expected YYYY-MM"); };
    if (text.size() < 7 || text[4] != '-') throw bad();
    int y = 0, m = 0;
    auto r1 = std::from_chars(text.data(), text.data() + 4, y);
    auto r2 = std::from_chars(text.data() + 5, text.data() + 7, m);
    if (r1.ec != std::errc{} || r1.ptr != text.data() + 4 || r2.ec != std::errc{} || r2.ptr != text.data() + 7 || m < 1 ||
        m > 12)
      throw bad();
    if (text.size() != 7 && !(text.size() == 10 && text[7] == '-')) throw bad();
    return from_ym(y, m);
  }

  std::string str() const {
    char buf[16];
    int y = year(), m = month_of_year();
    std::snprintf(buf, sizeof buf, "%04d-%02d", y, m);
    return buf;
  }

  constexpr Month operator+(int k) const { return Month(value + k); }
  constexpr Month operator-(int k) const { return Month(value - k); }
  constexpr int operator-(Month o) const { return value - o.value; }
  constexpr auto operator<=>(const Month&) const = default;
};

struct MonthRange {
  Month from;
  Month to;  // inclusive
  constexpr bool contains(Month m) const { return from <= m && m <= to; }
  constexpr int length() const { return to - from + 1; }
  constexpr bool empty() const { return to < from; }
};

// ---------------------------------------------------------------------------
// Dense row-major matrix
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw InvalidArgument("append_row: width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(row(idx[i]).begin(), cols_, out.row(i).begin());
    return out;
  }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Column-major copy used by the tree builders.
inline std::vector<std::vector<double>> to_columns(const Matrix& X) {
  std::vector<std::vector<double>> cols(X.cols(), std::vector<double>(X.rows()));
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < X.cols(); ++c) cols[c][r] = X(r, c);
  return cols;
}

// ---------------------------------------------------------------------------
// Deterministic random streams.
//
// Generator: std::mt19937_64 (output sequence fixed by the standard). Streams
// are derived as seed' = splitmix64(seed ^ splitmix64(stream + 1)), so every
// (root seed, stream id) pair yields an independent, portable sequence. The
// distributions below are hand-rolled because std::*_distribution results are
// implementation-defined.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) { return Rng(derive_seed(seed, stream_id)); }

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer on [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (cached second variate).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  // k distinct indices from [0, n), returned ascending.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + below(n - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return kMissing;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Number formatting: shortest round-trip representation, so CSV/JSON
// artifacts are byte-reproducible.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (is_missing(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double_or_missing(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return kMissing;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return kMissing;
  return v;
}

// ---------------------------------------------------------------------------
// parallel_for: runs fn(i) for i in [0, n) on up to `threads` workers.
// Callers write results into slot i, so output order never depends on
// scheduling.
// ---------------------------------------------------------------------------

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline int default_thread_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace cspread
