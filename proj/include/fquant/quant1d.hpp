#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fquant/core.hpp"
#include "fquant/parallel.hpp"

namespace fquant {

/// A sorted set of distinct real codepoints.
///
/// The optional censor value marks a codepoint that means "no event" (the
/// horizon sentinel of jump-time codebooks); it is always the largest point.
class Codebook1D {
 public:
  explicit Codebook1D(std::vector<double> points, double r = 2.0, std::optional<double> censor = std::nullopt)
      : points_(std::move(points)), r_(r), censor_(censor) {
    if (points_.empty()) throw DomainError("Codebook1D: empty codebook");
    if (!(r_ > 0.0)) throw DomainError("Codebook1D: r must be positive");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i])) throw DomainError("Codebook1D: non-finite codepoint");
      if (i > 0 && !(points_[i - 1] < points_[i])) throw DomainError("Codebook1D: points must be strictly increasing");
    }
    if (censor_ && points_.back() != *censor_) throw DomainError("Codebook1D: censor must be the largest codepoint");
  }

  static Codebook1D singleton(double x, double r = 2.0) { return Codebook1D({x}, r); }

  std::size_t size() const { return points_.size(); }
  std::span<const double> points() const { return points_; }
  double operator[](std::size_t i) const { return points_[i]; }
  double r() const { return r_; }
  const std::optional<double>& censor() const { return censor_; }

  Codebook1D scaled(double lambda) const {
    if (!(lambda > 0.0)) throw DomainError("Codebook1D::scaled: factor must be positive");
    std::vector<double> p(points_);
    for (double& x : p) x *= lambda;
    return Codebook1D(std::move(p), r_, censor_ ? std::optional<double>(*censor_ * lambda) : std::nullopt);
  }

  Codebook1D translated(double c) const {
    std::vector<double> p(points_);
    for (double& x : p) x += c;
    return Codebook1D(std::move(p), r_, censor_ ? std::optional<double>(*censor_ + c) : std::nullopt);
  }

  /// Codebook with one more point (no-op if x is already present).
  Codebook1D with_point(double x) const {
    std::vector<double> p(points_);
    auto it = std::lower_bound(p.begin(), p.end(), x);
    if (it == p.end() || *it != x) p.insert(it, x);
    return Codebook1D(std::move(p), r_, censor_);
  }

  friend bool operator==(const Codebook1D&, const Codebook1D&) = default;

 private:
  std::vector<double> points_;
  double r_;
  std::optional<double> censor_;
};

/// Empirical proxy for the law of a scalar random variable.
struct SampleSet {
  std::vector<double> values;
  std::string law;

  void validate() const {
    if (values.empty()) throw DomainError("SampleSet: empty");
    for (double v : values)
      if (!std::isfinite(v)) throw DomainError("SampleSet: non-finite value");
  }
};

struct NearestResult {
  std::size_t index;
  double point;
};

/// Nearest codepoint; ties go to the lower index.
inline NearestResult nearest(const Codebook1D& cb, double x) {
  const auto p = cb.points();
  const auto it = std::lower_bound(p.begin(), p.end(), x);
  std::size_t i = static_cast<std::size_t>(it - p.begin());
  if (i == p.size()) return {i - 1, p[i - 1]};
  if (i > 0 && std::abs(x - p[i - 1]) <= std::abs(p[i] - x)) --i;
  return {i, p[i]};
}

inline double pow_abs(double d, double r) {
  const double a = std::abs(d);
  if (r == 2.0) return a * a;
  if (r == 1.0) return a;
  return std::pow(a, r);
}

/// (mean over samples of min_a |x - a|^r)^{1/r}.
inline double distortion(const Codebook1D& cb, std::span<const double> samples, double r) {
  if (samples.empty()) throw DomainError("distortion: no samples");
  if (!(r > 0.0)) throw DomainError("distortion: r must be positive");
  CompensatedSum s;
  for (double x : samples) s += pow_abs(x - nearest(cb, x).point, r);
  return std::pow(s.value() / static_cast<double>(samples.size()), 1.0 / r);
}

inline double distortion(const Codebook1D& cb, const SampleSet& samples, double r) {
  return distortion(cb, std::span<const double>(samples.values), r);
}

// ---------------------------------------------------------------------------
// Lloyd training on the empirical measure
// ---------------------------------------------------------------------------

struct LloydOptions {
  /// Stop when no codepoint moves more than tol * (sample spread).
  double tol = 1e-10;
  int max_iter = 2000;
};

struct LloydResult {
  Codebook1D codebook;
  /// Mean r-th power distortion at the start of each iteration, then final.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Sorted samples with prefix sums, for O(1)/O(log n) cell statistics.
class SortedSamples {
 public:
  explicit SortedSamples(std::vector<double> xs) : x_(std::move(xs)) {
    std::sort(x_.begin(), x_.end());
    s1_.assign(x_.size() + 1, 0.0L);
    s2_.assign(x_.size() + 1, 0.0L);
    for (std::size_t i = 0; i < x_.size(); ++i) {
      s1_[i + 1] = s1_[i] + x_[i];
      s2_[i + 1] = s2_[i] + static_cast<long double>(x_[i]) * x_[i];
    }
  }

  std::size_t size() const { return x_.size(); }
  double operator[](std::size_t i) const { return x_[i]; }
  std::span<const double> values() const { return x_; }

  std::size_t distinct() const {
    std::size_t d = x_.empty() ? 0 : 1;
    for (std::size_t i = 1; i < x_.size(); ++i)
      if (x_[i] != x_[i - 1]) ++d;
    return d;
  }

  /// r-th power cost of the cell [lo, hi) around center c.
  double cell_cost(std::size_t lo, std::size_t hi, double c, double r) const {
    if (lo >= hi) return 0.0;
    if (r == 2.0) {
      const long double n = static_cast<long double>(hi - lo);
      const long double a = s1_[hi] - s1_[lo];
      const long double b = s2_[hi] - s2_[lo];
      const long double v = b - 2.0L * c * a + static_cast<long double>(c) * c * n;
      return static_cast<double>(std::max(v, 0.0L));
    }
    if (r == 1.0) {
      const auto first = x_.begin() + static_cast<std::ptrdiff_t>(lo);
      const auto last = x_.begin() + static_cast<std::ptrdiff_t>(hi);
      const std::size_t s = static_cast<std::size_t>(std::lower_bound(first, last, c) - x_.begin());
      const long double below = static_cast<long double>(c) * (s - lo) - (s1_[s] - s1_[lo]);
      const long double above = (s1_[hi] - s1_[s]) - static_cast<long double>(c) * (hi - s);
      return static_cast<double>(std::max(below + above, 0.0L));
    }
    CompensatedSum acc;
    for (std::size_t i = lo; i < hi; ++i) acc += pow_abs(x_[i] - c, r);
    return acc.value();
  }

  /// Minimizer of the cell cost: mean, median, or golden-section search.
  double cell_center(std::size_t lo, std::size_t hi, double r) const {
    const std::size_t n = hi - lo;
    if (r == 2.0) return static_cast<double>((s1_[hi] - s1_[lo]) / static_cast<long double>(n));
    if (r == 1.0) return 0.5 * (x_[lo + (n - 1) / 2] + x_[lo + n / 2]);
    double a = x_[lo];
    double b = x_[hi - 1];
    if (a == b) return a;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    const double point_tol = 1e-10 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = cell_cost(lo, hi, c, r);
    double fd = cell_cost(lo, hi, d, r);
    while (b - a > point_tol) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = cell_cost(lo, hi, c, r);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = cell_cost(lo, hi, d, r);
      }
    }
    // For r < 1 the minimum sits on a sample; compare with the bracket's samples.
    double best = 0.5 * (a + b);
    double best_cost = cell_cost(lo, hi, best, r);
    if (r < 1.0) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double ci = cell_cost(lo, hi, x_[i], r);
        if (ci < best_cost) {
          best_cost = ci;
          best = x_[i];
        }
      }
    }
    return best;
  }

  /// Cell boundaries under nearest-neighbour with lower-index ties:
  /// cell i is [cuts[i], cuts[i+1]).
  std::vector<std::size_t> cuts(std::span<const double> points) const {
    std::vector<std::size_t> c(points.size() + 1);
    c.front() = 0;
    c.back() = x_.size();
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
      const double lo = points[i];
      const double hi = points[i + 1];
      const auto it = std::partition_point(x_.begin() + static_cast<std::ptrdiff_t>(c[i]), x_.end(),
                                           [&](double v) { return std::abs(v - lo) <= std::abs(hi - v); });
      c[i + 1] = static_cast<std::size_t>(it - x_.begin());
    }
    return c;
  }

  double total_cost(std::span<const double> points, const std::vector<std::size_t>& cuts, double r) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < points.size(); ++i) s += cell_cost(cuts[i], cuts[i + 1], points[i], r);
    return s.value() / static_cast<double>(x_.size());
  }

 private:
  std::vector<double> x_;
  std::vector<long double> s1_;
  std::vector<long double> s2_;
};

/// A new codepoint inside the widest occupied cell that holds at least two
/// distinct values: the midpoint of its sample range, or the quarter point if
/// the midpoint is already a codepoint.
inline std::optional<double> split_point(const SortedSamples& xs, std::span<const double> points,
                                         const std::vector<std::size_t>& cuts) {
  double best_width = 0.0;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    const double w = xs[cuts[i + 1] - 1] - xs[cuts[i]];
    if (w > best_width) {
      best_width = w;
      best = i;
    }
  }
  if (!best) return std::nullopt;
  const double lo = xs[cuts[*best]];
  const double hi = xs[cuts[*best + 1] - 1];
  double mid = 0.5 * (lo + hi);
  if (std::binary_search(points.begin(), points.end(), mid)) mid = 0.5 * (lo + mid);
  if (std::binary_search(points.begin(), points.end(), mid) || !(mid > lo)) return std::nullopt;
  return mid;
}

inline void insert_sorted(std::vector<double>& points, double x) {
  points.insert(std::lower_bound(points.begin(), points.end(), x), x);
}

}  // namespace detail

/// Lloyd fixed-point training of an N-point L^r codebook on the empirical
/// measure of `samples`. Initialized at the (2i-1)/(2N) sample quantiles.
inline LloydResult train_lloyd_traced(const SampleSet& samples, std::size_t N, double r,
                                      const LloydOptions& opts = {}) {
  samples.validate();
  if (N < 1) throw DomainError("train_lloyd: N must be >= 1");
  if (!(r > 0.0)) throw DomainError("train_lloyd: r must be positive");
  const detail::SortedSamples xs(samples.values);
  if (xs.distinct() < N) throw DegenerateSampleError("train_lloyd: fewer distinct sample values than codepoints");
  const std::size_t n = xs.size();
  const double spread = xs[n - 1] - xs[0];
  const double move_tol = opts.tol * (spread > 0.0 ? spread : 1.0);

  std::vector<double> points;
  points.reserve(N);
  for (std::size_t i = 1; i <= N; ++i) {
    const double q = (2.0 * static_cast<double>(i) - 1.0) / (2.0 * static_cast<double>(N));
    const std::size_t idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)));
    if (points.empty() || points.back() != xs[idx]) points.push_back(xs[idx]);
  }
  while (points.size() < N) {
    const auto split = detail::split_point(xs, points, xs.cuts(points));
    if (!split) throw DegenerateSampleError("train_lloyd: cannot place distinct codepoints");
    detail::insert_sorted(points, *split);
  }

  LloydResult result{Codebook1D(points, r), {}, 0, false};
  for (int it = 0; it < opts.max_iter; ++it) {
    auto cuts = xs.cuts(points);
    result.trace.push_back(xs.total_cost(points, cuts, r));
    result.iterations = it + 1;

    // Empty cells take a split point from the widest occupied cell.
    bool repaired = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (cuts[i + 1] > cuts[i]) continue;
      std::vector<double> others(points);
      others.erase(others.begin() + static_cast<std::ptrdiff_t>(i));
      const auto others_cuts = xs.cuts(others);
      const auto split = detail::split_point(xs, others, others_cuts);
      if (!split) throw DegenerateSampleError("train_lloyd: cannot repair empty cell");
      detail::insert_sorted(others, *split);
      points = std::move(others);
      repaired = true;
      break;
    }
    if (repaired) continue;

    double max_move = 0.0;
    std::vector<double> next(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t lo = cuts[i];
      const std::size_t hi = cuts[i + 1];
      double c = xs.cell_center(lo, hi, r);
      if (r != 1.0 && r != 2.0 && xs.cell_cost(lo, hi, c, r) > xs.cell_cost(lo, hi, points[i], r)) c = points[i];
      next[i] = c;
      max_move = std::max(max_move, std::abs(c - points[i]));
    }
    points = std::move(next);
    if (max_move <= move_tol) {
      result.converged = true;
      break;
    }
  }
  result.trace.push_back(xs.total_cost(points, xs.cuts(points), r));
  result.codebook = Codebook1D(std::move(points), r);
  return result;
}

inline Codebook1D train_lloyd(const SampleSet& samples, std::size_t N, double r, const LloydOptions& opts = {}) {
  return train_lloyd_traced(samples, N, r, opts).codebook;
}

/// Grows `cb` to N points by repeatedly inserting the midpoint of the widest
/// gap among its points and the bound `upper` (> every point).
inline Codebook1D pad_codebook(const Codebook1D& cb, std::size_t N, double upper) {
  if (!(upper > cb.points().back())) throw DomainError("pad_codebook: upper bound must exceed every point");
  std::vector<double> p(cb.points().begin(), cb.points().end());
  while (p.size() < N) {
    std::size_t best = p.size() - 1;
    double width = upper - p.back();
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      if (p[i + 1] - p[i] > width) width = p[i + 1] - p[i], best = i;
    const double hi = best + 1 < p.size() ? p[best + 1] : upper;
    const double mid = 0.5 * (p[best] + hi);
    if (!(mid > p[best] && mid < hi)) throw DegenerateSampleError("pad_codebook: no room for another point");
    p.insert(p.begin() + static_cast<std::ptrdiff_t>(best + 1), mid);
  }
  return Codebook1D(std::move(p), cb.r(), cb.censor());
}

// ---------------------------------------------------------------------------
// Exact optimum of the empirical measure by interval dynamic programming
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDpMaxSamples = 10000;
inline constexpr std::size_t kDpMaxCodepoints = 64;
inline constexpr std::size_t kDpMaxDistinctGenericR = 2000;

namespace detail {

/// Weighted distinct values with prefix sums for interval costs.
class WeightedAtoms {
 public:
  explicit WeightedAtoms(std::span<const double> samples) {
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    for (double v : s) {
      if (u_.empty() || u_.back() != v) {
        u_.push_back(v);
        w_.push_back(1.0);
      } else {
        w_.back() += 1.0;
      }
    }
    W_.assign(u_.size() + 1, 0.0L);
    WX_.assign(u_.size() + 1, 0.0L);
    WX2_.assign(u_.size() + 1, 0.0L);
    for (std::size_t i = 0; i < u_.size(); ++i) {
      W_[i + 1] = W_[i] + w_[i];
      WX_[i + 1] = WX_[i] + static_cast<long double>(w_[i]) * u_[i];
      WX2_[i + 1] = WX2_[i] + static_cast<long double>(w_[i]) * u_[i] * u_[i];
    }
  }

  std::size_t size() const { return u_.size(); }

  double center(std::size_t a, std::size_t b, double r) const {
    if (r == 2.0) return static_cast<double>((WX_[b] - WX_[a]) / (W_[b] - W_[a]));
    if (r == 1.0) return u_[median_index(a, b)];
    double lo = u_[a];
    double hi = u_[b - 1];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = raw_cost(a, b, c, r);
    double fd = raw_cost(a, b, d, r);
    while (hi - lo > tol) {
      if (fc <= fd) {
        hi = d, d = c, fd = fc, c = hi - inv_phi * (hi - lo), fc = raw_cost(a, b, c, r);
      } else {
        lo = c, c = d, fc = fd, d = lo + inv_phi * (hi - lo), fd = raw_cost(a, b, d, r);
      }
    }
    double best = 0.5 * (lo + hi);
    if (r < 1.0) {
      double best_cost = raw_cost(a, b, best, r);
      for (std::size_t i = a; i < b; ++i) {
        const double ci = raw_cost(a, b, u_[i], r);
        if (ci < best_cost) best_cost = ci, best = u_[i];
      }
    }
    return best;
  }

  /// Total r-th power cost of atoms [a, b) around their optimal center.
  double cost(std::size_t a, std::size_t b, double r) const {
    if (b <= a + 1) return 0.0;
    if (r == 2.0) {
      const long double w = W_[b] - W_[a];
      const long double m = WX_[b] - WX_[a];
      return static_cast<double>(std::max(0.0L, (WX2_[b] - WX2_[a]) - m * m / w));
    }
    if (r == 1.0) {
      const std::size_t s = median_index(a, b);
      const long double c = u_[s];
      const long double below = c * (W_[s] - W_[a]) - (WX_[s] - WX_[a]);
      const long double above = (WX_[b] - WX_[s]) - c * (W_[b] - W_[s]);
      return static_cast<double>(std::max(0.0L, below + above));
    }
    return raw_cost(a, b, center(a, b, r), r);
  }

 private:
  std::size_t median_index(std::size_t a, std::size_t b) const {
    const long double half = 0.5L * (W_[b] + W_[a]);
    const auto it = std::lower_bound(W_.begin() + static_cast<std::ptrdiff_t>(a + 1),
                                     W_.begin() + static_cast<std::ptrdiff_t>(b + 1), half);
    return static_cast<std::size_t>(it - W_.begin()) - 1;
  }

  double raw_cost(std::size_t a, std::size_t b, double c, double r) const {
    CompensatedSum s;
    for (std::size_t i = a; i < b; ++i) s += w_[i] * pow_abs(u_[i] - c, r);
    return s.value();
  }

  std::vector<double> u_;
  std::vector<double> w_;
  std::vector<long double> W_, WX_, WX2_;
};

}  // namespace detail

/// Globally optimal N-point codebook of the empirical measure.
///
/// Dynamic programming over contiguous groups of sorted distinct values.
/// For r >= 1 the optimal split index is monotone in the prefix length, so
/// each layer is solved by divide and conquer; for r < 1 the full quadratic
/// scan is used.
inline Codebook1D train_dp_oracle(const SampleSet& samples, std::size_t N, double r) {
  samples.validate();
  if (samples.values.size() > kDpMaxSamples) throw SizeGuardError("train_dp_oracle: more than 10^4 samples");
  if (N < 1 || N > kDpMaxCodepoints) throw SizeGuardError("train_dp_oracle: N must lie in [1, 64]");
  if (!(r > 0.0)) throw DomainError("train_dp_oracle: r must be positive");
  const detail::WeightedAtoms atoms(samples.values);
  const std::size_t M = atoms.size();
  if (M < N) throw DegenerateSampleError("train_dp_oracle: fewer distinct sample values than codepoints");
  if (r != 1.0 && r != 2.0 && M > kDpMaxDistinctGenericR)
    throw SizeGuardError("train_dp_oracle: too many distinct values for generic r");

  constexpr double inf = std::numeric_limits<double>::infinity();
  // Interval costs for generic r are memoized across layers.
  const bool generic = r != 1.0 && r != 2.0;
  std::vector<double> memo(generic ? (M + 1) * (M + 1) : 0, -1.0);
  auto cost = [&](std::size_t a, std::size_t b) {
    if (!generic) return atoms.cost(a, b, r);
    double& slot = memo[a * (M + 1) + b];
    if (slot < 0.0) slot = atoms.cost(a, b, r);
    return slot;
  };
  // best[k][i]: optimal cost of the first i atoms with k groups; arg[k][i]: start of the last group.
  std::vector<std::vector<double>> best(N + 1, std::vector<double>(M + 1, inf));
  std::vector<std::vector<std::size_t>> arg(N + 1, std::vector<std::size_t>(M + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t i = 1; i <= M; ++i) best[1][i] = cost(0, i);

  for (std::size_t k = 2; k <= N; ++k) {
    const auto& prev = best[k - 1];
    auto& cur = best[k];
    auto& cur_arg = arg[k];
    auto solve_point = [&](std::size_t i, std::size_t jlo, std::size_t jhi) {
      double bv = inf;
      std::size_t bj = jlo;
      for (std::size_t j = std::max(jlo, k - 1); j <= std::min(jhi, i - 1); ++j) {
        if (prev[j] == inf) continue;
        const double v = prev[j] + cost(j, i);
        if (v < bv) bv = v, bj = j;
      }
      cur[i] = bv;
      cur_arg[i] = bj;
    };
    if (r >= 1.0) {
      std::function<void(std::size_t, std::size_t, std::size_t, std::size_t)> rec =
          [&](std::size_t ilo, std::size_t ihi, std::size_t jlo, std::size_t jhi) {
            if (ilo > ihi) return;
            const std::size_t mid = ilo + (ihi - ilo) / 2;
            solve_point(mid, jlo, jhi);
            const std::size_t split = cur_arg[mid];
            if (mid > ilo) rec(ilo, mid - 1, jlo, split);
            rec(mid + 1, ihi, split, jhi);
          };
      rec(k, M, k - 1, M - 1);
    } else {
      for (std::size_t i = k; i <= M; ++i) solve_point(i, k - 1, i - 1);
    }
  }

  std::vector<double> points(N);
  std::size_t i = M;
  for (std::size_t k = N; k >= 1; --k) {
    const std::size_t j = k == 1 ? 0 : arg[k][i];
    points[k - 1] = atoms.center(j, i, r);
    i = j;
  }
  return Codebook1D(std::move(points), r);
}

// ---------------------------------------------------------------------------
// Pierce curve: N e_N for a scalar law
// ---------------------------------------------------------------------------

struct PiercePoint {
  std::size_t N;
  double error;
  double scaled;  // N * error
  std::vector<double> points{};
};

struct PierceOptions {
  std::size_t train_samples = 100000;
  std::size_t eval_samples = 100000;
  std::uint64_t seed = 1;
  LloydOptions lloyd{};
};

using ScalarSampler = std::function<double(Engine&)>;

inline std::vector<double> draw_samples(const ScalarSampler& sampler, std::size_t count, const RngStream& stream) {
  std::vector<double> out(count);
  Engine eng = stream.engine(0);
  for (double& v : out) v = sampler(eng);
  return out;
}

/// Trains codebooks at each N on one sample batch and measures the
/// distortion on an independent batch. A law with fewer than N atoms gets
/// a codebook with one point per atom (still at most N points).
/// `delta` is the moment slack of the bound N e_N <= C ||X||_{r+delta};
/// it is reported by callers, not enforced.
inline std::vector<PiercePoint> pierce_curve(const ScalarSampler& sampler, double r, double delta,
                                             std::span<const std::size_t> sizes, const PierceOptions& opts = {}) {
  if (!(delta > 0.0)) throw DomainError("pierce_curve: delta must be positive");
  SampleSet train{draw_samples(sampler, opts.train_samples, RngStream(opts.seed, StreamId::kScalar)), "train"};
  const auto eval = draw_samples(sampler, opts.eval_samples, RngStream(opts.seed, StreamId::kScalarEval));
  const std::size_t distinct = detail::SortedSamples(train.values).distinct();
  std::vector<PiercePoint> out;
  for (std::size_t N : sizes) {
    const auto cb = train_lloyd(train, std::min(N, distinct), r, opts.lloyd);
    const double e = distortion(cb, eval, r);
    out.push_back({N, e, static_cast<double>(N) * e, std::vector<double>(cb.points().begin(), cb.points().end())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Text record: "r=<val>", "censor=<val|none>", then one codepoint per line.
inline void write_codebook(std::ostream& os, const Codebook1D& cb) {
  os << "r=" << format_real(cb.r()) << '\n';
  os << "censor=" << (cb.censor() ? format_real(*cb.censor()) : std::string("none")) << '\n';
  for (double x : cb.points()) os << format_real(x) << '\n';
}

inline Codebook1D read_codebook(std::istream& is) {
  std::string line;
  auto expect_key = [&](const std::string& key) {
    if (!std::getline(is, line) || line.rfind(key + "=", 0) != 0)
      throw DomainError("read_codebook: expected '" + key + "=' line");
    return line.substr(key.size() + 1);
  };
  const double r = std::stod(expect_key("r"));
  const std::string censor_text = expect_key("censor");
  std::optional<double> censor;
  if (censor_text != "none") censor = std::stod(censor_text);
  std::vector<double> points;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    points.push_back(std::stod(line));
  }
  return Codebook1D(std::move(points), r, censor);
}

}  // namespace fquant
