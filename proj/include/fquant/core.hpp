#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fquant {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// A grid is too coarse for the requested Haar level.
struct ResolutionError : Error {
  using Error::Error;
};

/// Fewer distinct sample values than requested codepoints.
struct DegenerateSampleError : Error {
  using Error::Error;
};

/// Input exceeds the cost guard of a brute-force routine.
struct SizeGuardError : Error {
  using Error::Error;
};

/// Too few points for a regression.
struct InsufficientPointsError : Error {
  using Error::Error;
};

/// A quantization budget that cannot be split or allocated.
struct BudgetError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

/// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s += x;
  return s.value();
}

// ---------------------------------------------------------------------------
// Time grid and paths
// ---------------------------------------------------------------------------

/// Uniform dyadic grid {i T / 2^L : i = 0..2^L} on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, int levels) : horizon_(horizon), levels_(levels) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw DomainError("TimeGrid: horizon must be positive and finite");
    if (levels < 0 || levels > 30)
      throw DomainError("TimeGrid: levels must lie in [0, 30]");
  }

  double horizon() const { return horizon_; }
  int levels() const { return levels_; }
  /// Number of cells 2^L.
  std::size_t cells() const { return std::size_t{1} << levels_; }
  /// Number of grid points 2^L + 1.
  std::size_t points() const { return cells() + 1; }
  double step() const { return horizon_ / static_cast<double>(cells()); }
  double time(std::size_t i) const { return horizon_ * static_cast<double>(i) / static_cast<double>(cells()); }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  int levels_;
};

/// A trajectory sampled on a dyadic grid: values[i] = X(i T / 2^L).
/// Integrals use the left-endpoint rule, so the path is read as the step
/// function equal to values[i] on [t_i, t_{i+1}).
class PathSample {
 public:
  PathSample(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.points())
      throw DomainError("PathSample: expected 2^L + 1 values");
    for (double v : values_)
      if (!std::isfinite(v)) throw DomainError("PathSample: non-finite value");
  }

  static PathSample constant(TimeGrid grid, double c) { return PathSample(grid, std::vector<double>(grid.points(), c)); }

  const TimeGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

/// |f|_{L^p[0,T]} of a grid path by the left-endpoint rule.
inline double lp_norm(const PathSample& f, double p) {
  if (!(p > 0.0)) throw DomainError("lp_norm: p must be positive");
  const auto v = f.values();
  CompensatedSum s;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
  return std::pow(s.value() * f.grid().step(), 1.0 / p);
}

/// |f - g|_{L^p[0,T]} for two paths on the same grid.
inline double lp_distance(const PathSample& f, const PathSample& g, double p) {
  if (!(f.grid() == g.grid())) throw DomainError("lp_distance: grids differ");
  if (!(p > 0.0)) throw DomainError("lp_distance: p must be positive");
  const auto a = f.values();
  const auto b = g.values();
  CompensatedSum s;
  if (p == 2.0) {
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
  } else if (p == 1.0) {
    for (std::size_t i = 0; i + 1 < a.size(); ++i) s += std::abs(a[i] - b[i]);
  } else {
    for (std::size_t i = 0; i + 1 < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  }
  return std::pow(s.value() * f.grid().step(), 1.0 / p);
}

}  // namespace fquant
