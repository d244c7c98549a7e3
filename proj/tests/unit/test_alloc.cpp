#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "fquant/alloc.hpp"

using namespace fquant;

namespace {

struct BruteForce {
  std::vector<std::uint64_t> sizes;
  double cost;
};

// Best non-increasing plan with product <= N for the objective
// sum_{k<=m} nu_k / N_{k-1} + sum_{m<k<=K} nu_k.
BruteForce brute_force_best(std::uint64_t N, const std::function<double(std::size_t)>& nu, std::size_t K) {
  std::vector<double> tail(K + 2, 0.0);
  for (std::size_t k = K; k >= 1; --k) tail[k] = tail[k + 1] + nu(k);
  BruteForce best{{1}, tail[1]};
  std::vector<std::uint64_t> cur;
  std::function<void(std::uint64_t, std::uint64_t, double)> rec = [&](std::uint64_t prod, std::uint64_t cap,
                                                                       double head) {
    const double total = head + tail[cur.size() + 1];
    if (!cur.empty() && total < best.cost) best = {cur, total};
    for (std::uint64_t s = 2; s <= cap && prod * s <= N; ++s) {
      cur.push_back(s);
      rec(prod * s, s, head + nu(cur.size()) / static_cast<double>(s));
      cur.pop_back();
    }
  };
  rec(1, N, 0.0);
  return best;
}

double zeta_three_halves_partial(std::size_t K) {
  double s = 0.0;
  for (std::size_t k = K; k >= 1; --k) s += std::pow(static_cast<double>(k), -1.5);
  return s;
}

}  // namespace

TEST(DepthMstar, Examples) {
  const auto w = PhiWeights::power(0.5);
  EXPECT_EQ(depth_mstar(w, 4).m, 2u);
  EXPECT_EQ(depth_mstar(w, 1).m, 1u);
  EXPECT_EQ(depth_mstar(PhiWeights::power(2.0), 1).m, 1u);
  const double target = 20.0 * std::log(2.0) / 1.5;
  const double m = static_cast<double>(depth_mstar(w, std::uint64_t{1} << 20).m);
  EXPECT_NEAR(m, target, 0.25 * target);
}

TEST(DepthMstar, HandEvaluation) {
  // m=2: 2 * 2^{-3/2} * (2^{-3/2})^{-1/2} ~ 1.189; m=3: ~0.748.
  const double q2 = std::sqrt(4.0) * std::pow(2.0, -1.5) * std::pow(std::pow(2.0, -1.5), -0.5);
  const double q3 = std::cbrt(4.0) * std::pow(3.0, -1.5) * std::pow(std::pow(2.0, -1.5) * std::pow(3.0, -1.5), -1.0 / 3.0);
  EXPECT_NEAR(q2, 1.189, 1e-3);
  EXPECT_NEAR(q3, 0.748, 1e-3);
}

TEST(DepthMstar, WarningOnDegenerateBudget) {
  const PhiWeights tiny{[](double u) { return 1e-3 * u; }};
  EXPECT_TRUE(depth_mstar(tiny, 10).warning);
  EXPECT_EQ(depth_mstar(tiny, 10).m, 1u);
  EXPECT_FALSE(depth_mstar(PhiWeights::power(0.5), 10).warning);
}

TEST(DepthMstar, AsymptoticRatio) {
  for (double b : {0.25, 0.5, 1.0, 2.0}) {
    const auto w = PhiWeights::power(b);
    const double ratio = depth_mstar(w, std::uint64_t{1} << 30).m * (b + 1.0) / (30.0 * std::log(2.0));
    EXPECT_GE(ratio, 0.7) << "b=" << b;
    EXPECT_LE(ratio, 1.3) << "b=" << b;
  }
}

TEST(AllocatePhi, Examples) {
  const auto w = PhiWeights::power(0.5);
  const auto plan = allocate_phi(w, 4);
  EXPECT_EQ(plan.sizes, (std::vector<std::uint64_t>{3, 1}));
  EXPECT_EQ(plan.product(), 3u);
  EXPECT_EQ(allocate_phi(w, 1).sizes, (std::vector<std::uint64_t>{1}));
  const auto big = allocate_phi(w, 4096);
  EXPECT_LE(big.product(), 4096u);
  EXPECT_TRUE(big.non_increasing());
  EXPECT_TRUE(big.feasible());
}

TEST(AllocatePhi, FeasibilityProperty) {
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> ub(0.1, 2.0);
  std::uniform_real_distribution<double> ulog(0.0, 20.0 * std::log(2.0));
  for (int rep = 0; rep < 600; ++rep) {
    const auto w = PhiWeights::power(ub(eng));
    const auto N = static_cast<std::uint64_t>(std::floor(std::exp(ulog(eng))));
    for (bool fill : {false, true}) {
      const auto plan = allocate_phi(w, N, {fill});
      EXPECT_TRUE(plan.non_increasing());
      EXPECT_LE(plan.log_product(), std::log(static_cast<double>(N)) + 1e-9);
      EXPECT_LE(plan.product(), N);
      for (auto s : plan.sizes) EXPECT_GE(s, 1u);
    }
  }
}

TEST(AllocatePhi, HugeBudgetsStayFeasible) {
  const auto w = PhiWeights::power(0.5);
  for (int e : {40, 50, 60, 63}) {
    const std::uint64_t N = std::uint64_t{1} << e;
    const auto plan = allocate_phi(w, N);
    EXPECT_TRUE(plan.feasible()) << e;
    EXPECT_LE(plan.log_product(), std::log(static_cast<double>(N)) + 1e-9);
  }
}

TEST(GeometricMean, ConvergesToExpBPlusOne) {
  for (double b : {0.5, 1.0}) {
    const auto w = PhiWeights::power(b);
    const std::size_t n = 10000;
    CompensatedSum s;
    for (std::size_t k = 1; k <= n; ++k) s += w.log_nu(k);
    const double ratio = std::exp(s.value() / n) / w.nu(n);
    EXPECT_NEAR(ratio / std::exp(b + 1.0), 1.0, 0.05) << "b=" << b;
  }
}

TEST(AllocationCost, AllOnesIsZetaPartialSum) {
  const auto w = PhiWeights::power(0.5);
  const AllocationPlan ones{{1}, 1, 1.0, false};
  const double c = allocation_cost(ones, w, 1000000);
  EXPECT_NEAR(c, 2.612, 0.01);
  EXPECT_NEAR(c, zeta_three_halves_partial(1000000), 1e-10);
  EXPECT_THROW(allocation_cost(AllocationPlan{{3, 2}, 6, 1.0, false}, w, 1), DomainError);
}

TEST(AllocationCost, BeatsAllOnesPlan) {
  const auto w = PhiWeights::power(0.5);
  const AllocationPlan ones{{1}, 1, 1.0, false};
  const double base = allocation_cost(ones, w, 5000);
  for (std::uint64_t N = 1; N <= 5000; N += (N < 100 ? 1 : 97)) {
    const double c = allocation_cost(allocate_phi(w, N), w, 5000);
    EXPECT_LE(c, base + 1e-15) << N;
    if (N >= 2) {
      EXPECT_LT(c, base) << N;
    }
  }
}

TEST(AllocationCost, NearOptimalAgainstBruteForce) {
  const std::size_t K = 20000;
  for (double b : {0.25, 0.5, 1.0}) {
    const auto w = PhiWeights::power(b);
    auto nu = [&](std::size_t k) { return w.nu(k); };
    double worst_fill = 0.0, worst_literal = 0.0;
    for (std::uint64_t N = 1; N <= 64; ++N) {
      const auto best = brute_force_best(N, nu, K);
      const auto filled = allocate_phi(w, N, {true});
      const auto literal = allocate_phi(w, N);
      const double cf = allocation_cost(filled, w, K);
      const double cl = allocation_cost(literal, w, K);
      EXPECT_GE(cf, best.cost - 1e-12) << N;
      EXPECT_GE(cl, best.cost - 1e-12) << N;
      EXPECT_LE(cf, 1.05 * best.cost) << "b=" << b << " N=" << N;
      worst_fill = std::max(worst_fill, cf / best.cost);
      worst_literal = std::max(worst_literal, cl / best.cost);
    }
    std::cout << "b=" << b << " worst cost ratio to brute force: filled " << worst_fill << ", closed form "
              << worst_literal << "\n";
  }
}

TEST(AllocatePhi, FillNeverWorseThanClosedForm) {
  for (double b : {0.25, 0.5, 1.0, 2.0}) {
    const auto w = PhiWeights::power(b);
    for (std::uint64_t N : {2ull, 13ull, 100ull, 5000ull, 1ull << 20, 1ull << 21, 1ull << 40}) {
      const auto filled = allocate_phi(w, N, {true});
      EXPECT_LE(filled.product(), N);
      EXPECT_LE(allocation_cost(filled, w, 5000), allocation_cost(allocate_phi(w, N), w, 5000) + 1e-12)
          << b << " " << N;
    }
  }
}

TEST(FactorialWeights, PeakAndMonotonization) {
  const FactorialWeights w(5.0, 2.5);
  const std::size_t x0 = w.x0();
  for (std::size_t n = 0; n < x0; ++n) EXPECT_LT(w.log_a(n), w.log_a(n + 1));
  EXPECT_GE(w.log_a(x0), w.log_a(x0 + 1));
  for (std::size_t n = 1; n < 40; ++n) EXPECT_GE(w.a0(n), w.a0(n + 1));
  for (std::size_t n = 0; n <= x0; ++n) EXPECT_DOUBLE_EQ(w.a0(n), w.a0(x0));
  for (std::size_t n = 2; n < 40; ++n)
    EXPECT_LE(2.0 * w.log_a0(n), w.log_a0(n - 1) + w.log_a0(n + 1) + 1e-12) << "log-concavity at " << n;
  EXPECT_EQ(FactorialWeights(1.0, 2.5).x0(), 0u);
}

TEST(AllocateFactorial, DepthFormula) {
  EXPECT_EQ(factorial_depth_formula(std::uint64_t{1} << 16, 2.5), 7u);
  EXPECT_THROW(factorial_depth_formula(2, 2.5), BudgetError);
}

TEST(AllocateFactorial, Examples) {
  const FactorialWeights w(1.0, 2.5);
  const auto small = allocate_factorial(w, 3, 1.0);
  EXPECT_LE(small.product(), 3u);
  for (auto s : small.sizes) EXPECT_GE(s, 1u);
  EXPECT_TRUE(small.non_increasing());

  const auto plan = allocate_factorial(w, std::uint64_t{1} << 16, 1.0);
  EXPECT_LE(plan.product(), std::uint64_t{1} << 16);
  EXPECT_TRUE(plan.non_increasing());
  EXPECT_LE(plan.depth(), 7u);
  EXPECT_THROW(allocate_factorial(w, 2, 1.0), BudgetError);
}

TEST(AllocateFactorial, FeasibilityProperty) {
  std::mt19937_64 eng(2);
  std::uniform_real_distribution<double> uA(0.2, 10.0), umu(1.0, 5.0), up(1.0, 3.0), ulog(std::log(3.0), 40.0);
  for (int rep = 0; rep < 400; ++rep) {
    const FactorialWeights w(uA(eng), umu(eng));
    const double p = std::min(up(eng), w.mu_p());
    const auto N = static_cast<std::uint64_t>(std::floor(std::exp(ulog(eng))));
    const auto plan = allocate_factorial(w, N, p);
    EXPECT_TRUE(plan.feasible());
    EXPECT_TRUE(plan.non_increasing());
    EXPECT_LE(plan.log_product(), std::log(static_cast<double>(N)) + 1e-9);
    EXPECT_LE(plan.depth(), factorial_depth_formula(N, w.mu_p() / p));
    for (auto s : plan.sizes) EXPECT_GE(s, 1u);
  }
}

TEST(AllocationPlan, Persistence) {
  const auto plan = allocate_phi(PhiWeights::power(0.5), 4096);
  std::stringstream ss;
  write_plan(ss, plan);
  EXPECT_EQ(ss.str().rfind("N=4096\nm=" + std::to_string(plan.depth()) + "\n", 0), 0u);
  const auto back = read_plan(ss);
  EXPECT_EQ(back.sizes, plan.sizes);
  EXPECT_EQ(back.budget, plan.budget);
  std::stringstream bad("N=4\nm=2\n3\n");
  EXPECT_THROW(read_plan(bad), DomainError);
  std::stringstream over("N=4\nm=2\n3\n2\n");
  EXPECT_THROW(read_plan(over), Error);
}
