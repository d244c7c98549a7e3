#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fquant/core.hpp"

namespace fquant {

/// Haar level n of flat index j >= 1 (j = 2^n + k).
inline int haar_level(std::size_t j) { return j == 0 ? -1 : static_cast<int>(std::bit_width(j)) - 1; }

/// Finest Haar level touched by flat indices [0, count).
inline int haar_max_level_for(std::size_t count) { return count <= 2 ? 0 : haar_level(count - 1); }

/// e_j(t) on [0, T].
///
/// e_0 = T^{-1/2} on [0,T]; e_1 = T^{-1/2}(1_[0,T/2) - 1_[T/2,T]);
/// e_{2^n+k}(t) = 2^{n/2} e_1(2^n t - kT). Supports are closed on the right,
/// so e_{2^n+k} is -2^{n/2}T^{-1/2} at t = (k+1)T/2^n.
inline double haar_function(std::size_t j, double t, double horizon) {
  if (!(horizon > 0.0)) throw DomainError("haar_function: horizon must be positive");
  if (!(t >= 0.0 && t <= horizon)) throw DomainError("haar_function: t outside [0, T]");
  const double amp0 = 1.0 / std::sqrt(horizon);
  if (j == 0) return amp0;
  const int n = haar_level(j);
  const double k = static_cast<double>(j - (std::size_t{1} << n));
  const double scale = std::ldexp(1.0, n);
  const double u = scale * t - k * horizon;
  if (u < 0.0 || u > horizon) return 0.0;
  const double amp = std::sqrt(scale) * amp0;
  return u < 0.5 * horizon ? amp : -amp;
}

/// Haar coefficients (X|e_j) for j in {0} U {2^n + k : n <= max_level}.
class HaarCoeffTree {
 public:
  HaarCoeffTree(double horizon, int max_level, std::vector<double> coeffs)
      : horizon_(horizon), max_level_(max_level), coeffs_(std::move(coeffs)) {
    if (!(horizon > 0.0)) throw DomainError("HaarCoeffTree: horizon must be positive");
    if (max_level < 0 || max_level > 29) throw DomainError("HaarCoeffTree: max level out of range");
    if (coeffs_.size() != size_for(max_level)) throw DomainError("HaarCoeffTree: length must be 2^(max_level+1)");
  }

  static HaarCoeffTree zeros(double horizon, int max_level) {
    return HaarCoeffTree(horizon, max_level, std::vector<double>(size_for(max_level), 0.0));
  }
  static std::size_t size_for(int max_level) { return std::size_t{1} << (max_level + 1); }

  double horizon() const { return horizon_; }
  int max_level() const { return max_level_; }
  std::size_t size() const { return coeffs_.size(); }
  std::span<const double> coeffs() const { return coeffs_; }
  double operator[](std::size_t j) const { return coeffs_[j]; }
  double& operator[](std::size_t j) { return coeffs_[j]; }

 private:
  double horizon_;
  int max_level_;
  std::vector<double> coeffs_;
};

namespace detail {

/// Integrals of the left-endpoint step path over the 2^level equal blocks.
inline std::vector<double> block_integrals(const PathSample& path, int level) {
  const auto v = path.values();
  const std::size_t blocks = std::size_t{1} << level;
  const std::size_t per = path.grid().cells() / blocks;
  const double h = path.grid().step();
  std::vector<double> out(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    CompensatedSum s;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += v[i];
    out[b] = s.value() * h;
  }
  return out;
}

}  // namespace detail

/// Forward transform by differences of half-block integrals.
inline HaarCoeffTree forward_transform(const PathSample& path, int max_level) {
  if (max_level < 0) throw DomainError("forward_transform: max_level must be >= 0");
  if (path.grid().levels() < max_level + 1)
    throw ResolutionError("forward_transform: grid needs at least max_level + 1 levels");
  const double horizon = path.grid().horizon();
  const double inv_sqrt_t = 1.0 / std::sqrt(horizon);
  HaarCoeffTree tree = HaarCoeffTree::zeros(horizon, max_level);

  // Pyramid of block integrals, finest first.
  std::vector<double> blocks = detail::block_integrals(path, max_level + 1);
  for (int n = max_level; n >= 0; --n) {
    const std::size_t count = std::size_t{1} << n;
    const double amp = std::sqrt(std::ldexp(1.0, n)) * inv_sqrt_t;
    std::vector<double> parent(count);
    for (std::size_t k = 0; k < count; ++k) {
      tree[count + k] = amp * (blocks[2 * k] - blocks[2 * k + 1]);
      parent[k] = blocks[2 * k] + blocks[2 * k + 1];
    }
    blocks = std::move(parent);
  }
  tree[0] = inv_sqrt_t * blocks[0];
  return tree;
}

/// Cell values of the partial sum over flat indices [0, count) at resolution
/// 2^(max_level+1) blocks, by cascading from the coarsest level.
inline std::vector<double> partial_sum_blocks(std::span<const double> coeffs, std::size_t count, int max_level,
                                              double horizon) {
  const double inv_sqrt_t = 1.0 / std::sqrt(horizon);
  std::vector<double> vals{count > 0 ? coeffs[0] * inv_sqrt_t : 0.0};
  for (int n = 0; n <= max_level; ++n) {
    const std::size_t width = std::size_t{1} << n;
    const double amp = std::sqrt(std::ldexp(1.0, n)) * inv_sqrt_t;
    std::vector<double> next(2 * width);
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t j = width + k;
      const double c = j < count ? coeffs[j] * amp : 0.0;
      next[2 * k] = vals[k] + c;
      next[2 * k + 1] = vals[k] - c;
    }
    vals = std::move(next);
  }
  return vals;
}

/// Partial sum of the first `count` coefficients of `tree`, on `grid`.
/// Grid values are the right-continuous version of the sum; the last point
/// t = T takes the value of the last cell.
inline PathSample reconstruct(const HaarCoeffTree& tree, const TimeGrid& grid, std::size_t count) {
  if (grid.levels() < tree.max_level() + 1)
    throw ResolutionError("reconstruct: grid needs at least max_level + 1 levels");
  if (!(std::abs(grid.horizon() - tree.horizon()) <= 1e-15 * tree.horizon()))
    throw DomainError("reconstruct: horizon mismatch");
  count = std::min(count, tree.size());
  const auto blocks = partial_sum_blocks(tree.coeffs(), count, tree.max_level(), tree.horizon());
  const std::size_t per = grid.cells() / blocks.size();
  std::vector<double> values(grid.points());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) values[i] = blocks[b];
  values.back() = blocks.back();
  return PathSample(grid, std::move(values));
}

inline PathSample reconstruct(const HaarCoeffTree& tree, const TimeGrid& grid) {
  return reconstruct(tree, grid, tree.size());
}

/// Both sides of the level-n norm identity
///   int |sum_k c_{2^n+k} e_{2^n+k}|^p = 2^{n(p/2-1)} T^{1-p/2} sum_k |c_{2^n+k}|^p.
/// The left side is computed by midpoint quadrature of the point-evaluated
/// Haar functions on 2^(n+1) cells, independent of the cascade above.
inline std::pair<double, double> level_norm_identity(const HaarCoeffTree& tree, int n, double p) {
  if (n < 0 || n > tree.max_level()) throw DomainError("level_norm_identity: level out of range");
  if (!(p > 0.0)) throw DomainError("level_norm_identity: p must be positive");
  const double horizon = tree.horizon();
  const std::size_t width = std::size_t{1} << n;
  const std::size_t cells = 2 * width;
  const double h = horizon / static_cast<double>(cells);

  CompensatedSum direct;
  for (std::size_t i = 0; i < cells; ++i) {
    const double t = (static_cast<double>(i) + 0.5) * h;
    double v = 0.0;
    for (std::size_t k = 0; k < width; ++k) v += tree[width + k] * haar_function(width + k, t, horizon);
    direct += std::pow(std::abs(v), p) * h;
  }

  CompensatedSum coeff_sum;
  for (std::size_t k = 0; k < width; ++k) coeff_sum += std::pow(std::abs(tree[width + k]), p);
  const double formula = std::pow(2.0, n * (p / 2.0 - 1.0)) * std::pow(horizon, 1.0 - p / 2.0) * coeff_sum.value();
  return {direct.value(), formula};
}

}  // namespace fquant
