#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fquant/core.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Weight sequences
// ---------------------------------------------------------------------------

/// nu_k = Phi(1/k) with Phi(x) = x phi(x), for a modulus phi.
struct PhiWeights {
  std::function<double(double)> phi;

  /// phi(u) = u^b, so nu_k = k^{-(b+1)}.
  static PhiWeights power(double b) {
    if (!(b >= 0.0)) throw DomainError("PhiWeights::power: exponent must be >= 0");
    return PhiWeights{[b](double u) { return std::pow(u, b); }};
  }

  double nu(std::size_t k) const {
    if (k < 1) throw DomainError("PhiWeights::nu: index starts at 1");
    const double x = 1.0 / static_cast<double>(k);
    const double v = x * phi(x);
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("PhiWeights::nu: weights must be positive and finite");
    return v;
  }
  double log_nu(std::size_t k) const { return std::log(nu(k)); }
};

/// a(x) = A^x / Gamma(x+1)^{1/(mu p)}, monotonized past its peak:
/// a_0(x) = a(max(x, x_0)) with x_0 the integer argmax of a.
class FactorialWeights {
 public:
  FactorialWeights(double A, double mu_p) : A_(A), mu_p_(mu_p) {
    if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("FactorialWeights: A must be positive");
    if (!(mu_p > 0.0) || !std::isfinite(mu_p)) throw DomainError("FactorialWeights: mu p must be positive");
    std::size_t n = 0;
    while (log_a(static_cast<double>(n + 1)) > log_a(static_cast<double>(n))) ++n;
    x0_ = n;
  }

  double A() const { return A_; }
  double mu_p() const { return mu_p_; }
  std::size_t x0() const { return x0_; }

  double log_a(double x) const { return x * std::log(A_) - std::lgamma(x + 1.0) / mu_p_; }
  double log_a0(std::size_t n) const { return log_a(static_cast<double>(std::max(n, x0_))); }
  double a0(std::size_t n) const { return std::exp(log_a0(n)); }

 private:
  double A_;
  double mu_p_;
  std::size_t x0_ = 0;
};

using WeightSequence = std::variant<PhiWeights, FactorialWeights>;

/// Weight of the k-th slot (k >= 1): nu_k or a_0(k).
inline double weight(const WeightSequence& w, std::size_t k) {
  return std::visit(
      [k](const auto& ws) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(ws)>, PhiWeights>)
          return ws.nu(k);
        else
          return ws.a0(k);
      },
      w);
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// Codebook sizes N_0 >= N_1 >= ... >= N_{m-1} >= 1 under a product budget.
struct AllocationPlan {
  std::vector<std::uint64_t> sizes;
  std::uint64_t budget = 1;
  double p = 1.0;
  bool warning = false;

  std::size_t depth() const { return sizes.size(); }

  /// Product of sizes, saturated at UINT64_MAX.
  std::uint64_t product() const {
    unsigned __int128 acc = 1;
    for (auto s : sizes) {
      acc *= s;
      if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(acc);
  }

  double log_product() const {
    CompensatedSum s;
    for (auto v : sizes) s += std::log(static_cast<double>(v));
    return s.value();
  }

  bool non_increasing() const {
    for (std::size_t i = 1; i < sizes.size(); ++i)
      if (sizes[i] > sizes[i - 1]) return false;
    return true;
  }

  bool feasible() const {
    if (sizes.empty()) return false;
    for (auto s : sizes)
      if (s < 1) return false;
    return non_increasing() && product() <= budget &&
           log_product() <= std::log(static_cast<double>(budget)) + 1e-9;
  }

  /// Size of flat slot j (1 beyond the depth).
  std::uint64_t size_at(std::size_t j) const { return j < sizes.size() ? sizes[j] : 1; }

  friend bool operator==(const AllocationPlan&, const AllocationPlan&) = default;
};

namespace detail {

inline void check_plan(const AllocationPlan& plan) {
  if (!plan.feasible()) throw BudgetError("allocation: plan violates the budget or monotonicity invariant");
}

/// Floors exp(x) with a small guard against round-off just below an integer.
inline std::uint64_t floor_exp(double x) {
  const double v = std::floor(std::exp(x) + 1e-9);
  if (!(v >= 1.0)) return 1;
  if (v >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(v);
}

/// Restores the exact product bound by decrementing the last size above 1.
inline void enforce_budget(AllocationPlan& plan) {
  while (plan.product() > plan.budget) {
    auto it = std::find_if(plan.sizes.rbegin(), plan.sizes.rend(), [](std::uint64_t s) { return s > 1; });
    if (it == plan.sizes.rend()) break;
    --*it;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Regular-variation allocation
// ---------------------------------------------------------------------------

struct DepthResult {
  std::size_t m = 1;
  /// nu_1 < 1/N: the budget is degenerate relative to the weights.
  bool warning = false;
};

inline constexpr std::size_t kMaxDepth = 1u << 20;

/// m* = max{m >= 1 : N^{1/m} nu_m (prod_{j<=m} nu_j)^{-1/m} >= 1}, in log domain.
/// The defining quantity is non-increasing in m for non-increasing weights,
/// so the scan stops at the first failure.
inline DepthResult depth_mstar(const PhiWeights& w, std::uint64_t N) {
  if (N < 1) throw BudgetError("depth_mstar: budget must be >= 1");
  const double logN = std::log(static_cast<double>(N));
  DepthResult out;
  out.warning = w.nu(1) < 1.0 / static_cast<double>(N);
  if (out.warning) return out;
  CompensatedSum sum_log;
  sum_log += w.log_nu(1);
  for (std::size_t m = 2; m <= kMaxDepth; ++m) {
    const double lm = w.log_nu(m);
    sum_log += lm;
    const double md = static_cast<double>(m);
    if (logN / md + lm - sum_log.value() / md < 0.0) break;
    out.m = m;
  }
  return out;
}

struct AllocatePhiOptions {
  /// Spend leftover budget greedily after the closed-form sizes; for budgets up
  /// to kGreedyRestartMaxBudget keep the cheaper of that and a greedy build
  /// from the all-ones plan.
  bool fill_budget = false;
};

namespace detail {

/// Raises sizes one unit at a time, each step taking the largest decrease of
/// sum w_k / N_{k-1}^{1/p} that keeps the product within budget and the
/// sizes non-increasing. One new trailing slot may open per step.
inline void greedy_fill(AllocationPlan& plan, const std::function<double(std::size_t)>& w) {
  const double inv_p = 1.0 / plan.p;
  for (;;) {
    const std::uint64_t prod = plan.product();
    double best_gain = 0.0;
    std::size_t best = plan.sizes.size() + 1;
    for (std::size_t i = 0; i <= plan.sizes.size(); ++i) {
      const std::uint64_t cur = plan.size_at(i);
      if (i > 0 && cur + 1 > plan.sizes[i - 1]) continue;
      const unsigned __int128 next_prod = static_cast<unsigned __int128>(prod / cur) * (cur + 1);
      if (next_prod > plan.budget) continue;
      const double wk = w(i + 1);
      const double gain = wk * (std::pow(static_cast<double>(cur), -inv_p) - std::pow(static_cast<double>(cur + 1), -inv_p));
      if (gain > best_gain) best_gain = gain, best = i;
    }
    if (best > plan.sizes.size()) return;
    if (best == plan.sizes.size())
      plan.sizes.push_back(2);
    else
      ++plan.sizes[best];
  }
}

/// sum_{k<=m} w_k (N_{k-1}^{-1/p} - 1): plan cost up to a plan-independent tail.
inline double head_cost(const AllocationPlan& plan, const std::function<double(std::size_t)>& w) {
  CompensatedSum s;
  for (std::size_t i = 0; i < plan.sizes.size(); ++i)
    s += w(i + 1) * (std::pow(static_cast<double>(plan.sizes[i]), -1.0 / plan.p) - 1.0);
  return s.value();
}

}  // namespace detail

/// Largest budget for which the fill also restarts from the all-ones plan.
inline constexpr std::uint64_t kGreedyRestartMaxBudget = std::uint64_t{1} << 20;

/// N_{k-1} = [N^{1/m} nu_k (prod_{j<=m} nu_j)^{-1/m}], k = 1..m, m = m*(N).
inline AllocationPlan allocate_phi(const PhiWeights& w, std::uint64_t N, const AllocatePhiOptions& opts = {}) {
  const DepthResult d = depth_mstar(w, N);
  const double logN = std::log(static_cast<double>(N));
  CompensatedSum sum_log;
  std::vector<double> log_nu(d.m);
  for (std::size_t k = 1; k <= d.m; ++k) {
    log_nu[k - 1] = w.log_nu(k);
    sum_log += log_nu[k - 1];
  }
  const double mean_log = sum_log.value() / static_cast<double>(d.m);
  AllocationPlan plan;
  plan.budget = N;
  plan.p = 1.0;
  plan.warning = d.warning;
  for (std::size_t k = 1; k <= d.m; ++k)
    plan.sizes.push_back(detail::floor_exp(logN / static_cast<double>(d.m) + log_nu[k - 1] - mean_log));
  // Weights that are not monotone could break the ordering; sort restores it.
  std::sort(plan.sizes.begin(), plan.sizes.end(), std::greater<>());
  detail::enforce_budget(plan);
  if (opts.fill_budget) {
    const auto nu = [&w](std::size_t k) { return w.nu(k); };
    detail::greedy_fill(plan, nu);
    if (N <= kGreedyRestartMaxBudget) {
      AllocationPlan alt = plan;
      alt.sizes = {1};
      detail::greedy_fill(alt, nu);
      if (detail::head_cost(alt, nu) < detail::head_cost(plan, nu)) plan.sizes = std::move(alt.sizes);
    }
  }
  detail::check_plan(plan);
  return plan;
}

// ---------------------------------------------------------------------------
// Factorial-weight allocation
// ---------------------------------------------------------------------------

/// m(N) = ceil(2 sqrt(mu log N / log log N)) with mu = (mu p)/p, at least 1.
inline std::size_t factorial_depth_formula(std::uint64_t N, double mu) {
  const double logN = std::log(static_cast<double>(N));
  const double loglogN = std::log(logN);
  if (!(loglogN > 0.0)) throw BudgetError("allocate_factorial: budget must be >= 3");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * std::sqrt(mu * logN / loglogN))));
}

/// N_n = [a_n^p N^{1/m} / (prod_{k<=m} a_k)^{p/m}], n = 1..m, where m starts at
/// the depth formula and is lowered until every N_n >= 1 (warning set then).
inline AllocationPlan allocate_factorial(const FactorialWeights& w, std::uint64_t N, double p) {
  if (N < 3) throw BudgetError("allocate_factorial: budget must be >= 3");
  if (!(p > 0.0)) throw DomainError("allocate_factorial: p must be positive");
  const double mu = w.mu_p() / p;
  const double logN = std::log(static_cast<double>(N));
  const std::size_t formula_m = factorial_depth_formula(N, mu);

  AllocationPlan plan;
  plan.budget = N;
  plan.p = p;
  for (std::size_t m = formula_m; m >= 1; --m) {
    CompensatedSum sum_log;
    for (std::size_t k = 1; k <= m; ++k) sum_log += w.log_a0(k);
    const double shift = logN / static_cast<double>(m) - p * sum_log.value() / static_cast<double>(m);
    std::vector<std::uint64_t> sizes;
    bool ok = true;
    for (std::size_t n = 1; n <= m; ++n) {
      const double x = p * w.log_a0(n) + shift;
      if (std::exp(x) + 1e-9 < 1.0) {
        ok = false;
        break;
      }
      sizes.push_back(detail::floor_exp(x));
    }
    if (ok || m == 1) {
      if (!ok) sizes.assign(1, N);
      plan.sizes = std::move(sizes);
      plan.warning = m != formula_m;
      break;
    }
  }
  detail::enforce_budget(plan);
  detail::check_plan(plan);
  return plan;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// sum_{k<=m} w_k / N_{k-1}^{1/p} + sum_{k=m+1}^{K} w_k.
inline double allocation_cost(const AllocationPlan& plan, const WeightSequence& w, std::size_t tail_to) {
  if (tail_to < plan.depth()) throw DomainError("allocation_cost: tail index below plan depth");
  const double inv_p = 1.0 / plan.p;
  CompensatedSum s;
  for (std::size_t k = 1; k <= plan.depth(); ++k)
    s += weight(w, k) / std::pow(static_cast<double>(plan.sizes[k - 1]), inv_p);
  for (std::size_t k = plan.depth() + 1; k <= tail_to; ++k) s += weight(w, k);
  return s.value();
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Text record: "N=<budget>", "m=<depth>", then one size per line.
inline void write_plan(std::ostream& os, const AllocationPlan& plan) {
  os << "N=" << plan.budget << '\n' << "m=" << plan.depth() << '\n';
  for (auto s : plan.sizes) os << s << '\n';
}

inline AllocationPlan read_plan(std::istream& is, double p = 1.0) {
  std::string line;
  auto value_of = [&](const std::string& key) {
    if (!std::getline(is, line) || line.rfind(key + "=", 0) != 0)
      throw DomainError("read_plan: expected '" + key + "=' line");
    return std::stoull(line.substr(key.size() + 1));
  };
  AllocationPlan plan;
  plan.budget = value_of("N");
  const auto m = value_of("m");
  plan.p = p;
  for (std::uint64_t i = 0; i < m; ++i) {
    if (!std::getline(is, line)) throw DomainError("read_plan: truncated size list");
    plan.sizes.push_back(std::stoull(line));
  }
  detail::check_plan(plan);
  return plan;
}

}  // namespace fquant
