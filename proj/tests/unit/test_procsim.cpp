#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "fquant/procsim.hpp"

using namespace fquant;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

std::vector<double> terminal_values(const ProcessSpec& spec, int levels, std::size_t n, StreamId id = StreamId::kTest) {
  const PathSimulator sim(spec, TimeGrid(spec.horizon, levels));
  const RngStream stream(spec.seed, id);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sim.simulate(stream, i).values().back();
  return out;
}

}  // namespace

TEST(Simulate, BrownianTerminalMoments) {
  const ProcessSpec spec{Brownian{}, 2.0, 7};
  const auto x = terminal_values(spec, 4, 100000);
  EXPECT_LE(std::abs(mean_of(x)), 4.0 * std::sqrt(2.0 / 100000.0));
  EXPECT_NEAR(var_of(x), 2.0, 0.03 * 2.0);
}

TEST(Simulate, BrownianStartsAtZero) {
  const PathSimulator sim(ProcessSpec{Brownian{}, 1.0, 1}, TimeGrid(1.0, 6));
  EXPECT_EQ(sim.simulate(RngStream(1, StreamId::kTest), 0)[0], 0.0);
}

TEST(Simulate, PoissonMean) {
  const ProcessSpec spec{Poisson{3.0}, 1.0, 8};
  const auto x = terminal_values(spec, 3, 100000);
  EXPECT_NEAR(mean_of(x), 3.0, 0.03 * 3.0);
  for (double v : x) EXPECT_EQ(v, std::floor(v));
}

TEST(Simulate, FbmHalfIsBrownianCovariance) {
  const TimeGrid g(1.0, 6);
  const auto cov = fbm_increment_covariance(0.5, g);
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) EXPECT_NEAR(cov(i, j), i == j ? g.step() : 0.0, 1e-10);
}

TEST(Simulate, FbmTerminalVarianceBothMethods) {
  for (double H : {0.25, 0.75}) {
    for (FbmMethod m : {FbmMethod::kCirculant, FbmMethod::kCholesky}) {
      const ProcessSpec spec{FBM{H}, 2.0, 9};
      const PathSimulator sim(spec, TimeGrid(2.0, 6), m);
      const RngStream stream(9, StreamId::kTest);
      std::vector<double> end(40000), mid(40000);
      for (std::size_t i = 0; i < end.size(); ++i) {
        const auto p = sim.simulate(stream, i);
        end[i] = p.values().back();
        mid[i] = p[32];
      }
      EXPECT_NEAR(var_of(end), std::pow(2.0, 2 * H), 0.04 * std::pow(2.0, 2 * H)) << "H=" << H;
      EXPECT_NEAR(var_of(mid), 1.0, 0.04) << "H=" << H;
      // Cov(X_1, X_2) = (1 + 2^{2H} - 1)/2 = 2^{2H}/2.
      double c = 0.0;
      for (std::size_t i = 0; i < end.size(); ++i) c += end[i] * mid[i];
      c /= static_cast<double>(end.size());
      EXPECT_NEAR(c, 0.5 * std::pow(2.0, 2 * H), 0.05) << "H=" << H;
    }
  }
}

TEST(Simulate, FbmMethodSelection) {
  EXPECT_FALSE(detail::FgnSampler(0.7, TimeGrid(1.0, 8), FbmMethod::kCirculant).uses_cholesky());
  EXPECT_TRUE(detail::FgnSampler(0.7, TimeGrid(1.0, 8), FbmMethod::kCholesky).uses_cholesky());
  EXPECT_THROW(detail::FgnSampler(0.7, TimeGrid(1.0, kFbmCholeskyMaxLevels + 1), FbmMethod::kCholesky), DomainError);
}

TEST(Simulate, FgnAutocovariance) {
  EXPECT_NEAR(fgn_autocovariance(0, 0.3, 0.5), std::pow(0.5, 0.6), 1e-15);
  EXPECT_NEAR(fgn_autocovariance(3, 0.5, 0.25), 0.0, 1e-15);
  EXPECT_GT(fgn_autocovariance(1, 0.8, 1.0), 0.0);
  EXPECT_LT(fgn_autocovariance(1, 0.2, 1.0), 0.0);
}

TEST(Simulate, ParameterErrors) {
  EXPECT_THROW(ProcessSpec({FBM{1.0}, 1.0, 1}).validate(), DomainError);
  EXPECT_THROW(ProcessSpec({Stable{2.0}, 1.0, 1}).validate(), DomainError);
  EXPECT_THROW(ProcessSpec({GammaProcess{0.0}, 1.0, 1}).validate(), DomainError);
  EXPECT_THROW(ProcessSpec({Poisson{-1.0}, 1.0, 1}).validate(), DomainError);
  EXPECT_THROW(ProcessSpec({CompoundPoisson{1.0, UniformLaw{1.0, 0.0}}, 1.0, 1}).validate(), DomainError);
  EXPECT_THROW(ProcessSpec({Brownian{}, 0.0, 1}).validate(), DomainError);
  EXPECT_THROW(PathSimulator(ProcessSpec{Brownian{}, 1.0, 1}, TimeGrid(2.0, 3)), DomainError);
}

TEST(SimulateJumps, AtLeastOneJumpProbability) {
  const RngStream stream(10, StreamId::kTest);
  std::size_t hits = 0, total = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    Engine eng = stream.engine(i);
    const auto rec = simulate_jumps(2.0, 0.5, std::nullopt, eng);
    hits += rec.count() > 0;
    total += rec.count();
    for (std::size_t k = 1; k < rec.count(); ++k) ASSERT_LT(rec.arrivals[k - 1], rec.arrivals[k]);
    for (double s : rec.arrivals) ASSERT_LE(s, rec.censor());
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 1.0 - std::exp(-1.0), 0.01);
  EXPECT_NEAR(static_cast<double>(total) / n, 1.0, 0.02);
}

TEST(SimulateJumps, ZeroHorizonIsEmpty) {
  const RngStream stream(11, StreamId::kTest);
  for (std::size_t i = 0; i < 1000; ++i) {
    Engine eng = stream.engine(i);
    EXPECT_EQ(simulate_jumps(1.0, 0.0, GaussianLaw{}, eng).count(), 0u);
  }
}

TEST(SimulateJumps, MeanCountLargeIntensity) {
  const RngStream stream(12, StreamId::kTest);
  double total = 0.0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    Engine eng = stream.engine(i);
    total += static_cast<double>(simulate_jumps(5.0, 1.0, std::nullopt, eng).count());
  }
  EXPECT_NEAR(total / n, 5.0, 0.02 * 5.0);
}

TEST(SimulateJumps, GridProjectionIsCadlag) {
  JumpRecord rec{{0.5, 1.0, 3.0}, {1.0, -2.0, 4.0}, 2.0, 1.0};
  const TimeGrid g(1.0, 2);
  const auto p = jump_path(rec, g);
  // Jumps at physical times 0.25, 0.5, 1.5 (the last is beyond T).
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 1.0);
  EXPECT_EQ(p[2], -1.0);
  EXPECT_EQ(p[3], -1.0);
  EXPECT_EQ(p[4], -1.0);
}

TEST(Erlang, TailProbabilities) {
  EXPECT_NEAR(erlang_tail_probability(1, 1.0), 1.0 - std::exp(-1.0), 1e-14);
  EXPECT_NEAR(erlang_tail_probability(2, 1.0), 1.0 - 2.0 * std::exp(-1.0), 1e-14);
  EXPECT_EQ(erlang_tail_probability(3, 0.0), 0.0);
  for (double lt : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0})
    for (std::size_t n = 1; n <= 40; ++n)
      EXPECT_LE(erlang_tail_probability(n, lt), std::pow(lt, n) / std::tgamma(n + 1.0) + 1e-12) << n << " " << lt;
}

TEST(Erlang, SamplerMatchesTail) {
  const RngStream stream(13, StreamId::kTest);
  Engine eng = stream.engine(0);
  const std::size_t n = 200000;
  std::size_t below = 0;
  for (std::size_t i = 0; i < n; ++i) below += erlang_truncated_sampler(3, 2.0, eng) <= 2.0;
  EXPECT_NEAR(static_cast<double>(below) / n, erlang_tail_probability(3, 2.0), 0.005);
}

TEST(Properties, StableSelfSimilarity) {
  const double alpha = 1.5;
  const PathSimulator sim(ProcessSpec{Stable{alpha}, 1.0, 14}, TimeGrid(1.0, 4));
  const RngStream stream(14, StreamId::kTest);
  const std::size_t n = 100000;
  std::vector<double> scaled_quarter(n), one(n);
  for (std::size_t i = 0; i < n; ++i) {
    scaled_quarter[i] = sim.simulate(stream, 2 * i)[4] / std::pow(0.25, 1.0 / alpha);
    one[i] = sim.simulate(stream, 2 * i + 1).values().back();
  }
  EXPECT_LT(ks_distance(scaled_quarter, one), 0.02);
}

TEST(Properties, StableCauchyMarginal) {
  // alpha = 1: X_1 is standard Cauchy, so P(|X_1| <= 1) = 1/2.
  const auto x = terminal_values(ProcessSpec{Stable{1.0}, 1.0, 15}, 3, 100000);
  double inside = 0.0;
  for (double v : x) inside += std::abs(v) <= 1.0;
  EXPECT_NEAR(inside / x.size(), 0.5, 0.01);
}

TEST(Properties, CompoundPoissonFirstAbsoluteMoment) {
  const double t = 2.0;
  const ProcessSpec spec{CompoundPoisson{1.0, GaussianLaw{}}, t, 16};
  const RngStream stream(16, StreamId::kTest);
  const std::size_t n = 100000;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Engine eng = stream.engine(i);
    for (double u : simulate_jumps(spec, eng).sizes) total += std::abs(u);
  }
  const double expect = t * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(total / n, expect, 0.03 * expect);
}

TEST(Properties, GammaSmallTimeMoments) {
  const double alpha = 2.0;
  const int levels = 10;
  const double t = std::ldexp(1.0, -levels);
  const PathSimulator sim(ProcessSpec{GammaProcess{alpha}, 1.0, 17}, TimeGrid(1.0, levels));
  const RngStream stream(17, StreamId::kTest);
  std::vector<double> inc;
  inc.reserve(8000 * 1024);
  for (std::size_t i = 0; i < 8000; ++i) {
    const auto p = sim.simulate(stream, i);
    for (std::size_t k = 0; k + 1 < p.grid().points(); ++k) inc.push_back(p[k + 1] - p[k]);
  }
  for (double rho : {0.5, 1.0, 2.0}) {
    double s = 0.0;
    for (double x : inc) s += std::pow(std::abs(x), rho);
    const double ratio = s / static_cast<double>(inc.size()) / t;
    EXPECT_NEAR(ratio, std::tgamma(rho) / std::pow(alpha, rho), 0.1 * std::tgamma(rho) / std::pow(alpha, rho))
        << "rho=" << rho;
  }
}

TEST(Properties, GammaPathsNonDecreasing) {
  const PathSimulator sim(ProcessSpec{GammaProcess{1.0}, 1.0, 18}, TimeGrid(1.0, 8));
  const auto p = sim.simulate(RngStream(18, StreamId::kTest), 0);
  for (std::size_t i = 1; i < p.grid().points(); ++i) EXPECT_GE(p[i], p[i - 1]);
}

TEST(Properties, BrownianIncrementScaling) {
  const PathSimulator sim(ProcessSpec{Brownian{}, 1.0, 19}, TimeGrid(1.0, 10));
  const RngStream stream(19, StreamId::kTest);
  std::vector<double> xs, ys;
  std::vector<double> ms(8, 0.0);
  const std::size_t n = 4000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = sim.simulate(stream, i);
    for (int k = 0; k < 8; ++k) {
      const std::size_t lag = std::size_t{1} << (k + 1);
      const double d = p[512 + lag] - p[512];
      ms[k] += d * d;
    }
  }
  for (int k = 0; k < 8; ++k) {
    xs.push_back(std::log(std::ldexp(1.0, k + 1 - 10)));
    ys.push_back(0.5 * std::log(ms[k] / n));
  }
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < 8; ++k) sxy += (xs[k] - mx) * (ys[k] - my), sxx += (xs[k] - mx) * (xs[k] - mx);
  EXPECT_NEAR(sxy / sxx, 0.5, 0.05);
}

TEST(Reproducibility, SameSeedSamePath) {
  for (const ProcessSpec& spec : {ProcessSpec{Brownian{}, 1.0, 3}, ProcessSpec{FBM{0.3}, 1.0, 3},
                                  ProcessSpec{Stable{1.2}, 1.0, 3}, ProcessSpec{GammaProcess{1.0}, 1.0, 3},
                                  ProcessSpec{CompoundPoisson{2.0, TwoPointLaw{}}, 1.0, 3}}) {
    const PathSimulator a(spec, TimeGrid(1.0, 7));
    const PathSimulator b(spec, TimeGrid(1.0, 7));
    const RngStream stream(spec.seed, StreamId::kTest);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto pa = a.simulate(stream, i);
      const auto pb = b.simulate(stream, i);
      for (std::size_t k = 0; k < pa.grid().points(); ++k) ASSERT_EQ(pa[k], pb[k]) << spec.name();
    }
    const auto other = a.simulate(RngStream(spec.seed + 1, StreamId::kTest), 0);
    EXPECT_NE(other.values().back(), a.simulate(stream, 0).values().back()) << spec.name();
  }
}

TEST(Reproducibility, ThreadCountInvariant) {
  const PathSimulator sim(ProcessSpec{FBM{0.7}, 1.0, 4}, TimeGrid(1.0, 9));
  const RngStream stream(4, StreamId::kTest);
  auto run = [&](unsigned threads) {
    std::vector<double> out(64);
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = sim.simulate(stream, i).values().back(); });
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(Reproducibility, StreamsAreDistinct) {
  const RngStream a(5, StreamId::kTraining), b(5, StreamId::kEvaluation);
  EXPECT_NE(a.engine(0)(), b.engine(0)());
  EXPECT_NE(a.engine(0)(), a.engine(1)());
  EXPECT_EQ(a.engine(3)(), RngStream(5, StreamId::kTraining).engine(3)());
}

TEST(PathCsv, HeaderAndRows) {
  std::ostringstream os;
  write_path_csv(os, PathSample(TimeGrid(1.0, 1), {0.0, 0.5, 0.25}));
  EXPECT_EQ(os.str(), "t,value\n0,0\n0.5,0.5\n1,0.25\n");
}

TEST(JumpLaws, NamesAndDraws) {
  EXPECT_EQ(law_name(GaussianLaw{}), "gaussian");
  EXPECT_EQ(law_name(TwoPointLaw{}), "two-point");
  Engine eng(1);
  for (int i = 0; i < 100; ++i) {
    const double u = draw(UniformLaw{2.0, 3.0}, eng);
    EXPECT_GE(u, 2.0);
    EXPECT_LT(u, 3.0);
    const double tp = draw(TwoPointLaw{-1.0, 4.0, 0.3}, eng);
    EXPECT_TRUE(tp == -1.0 || tp == 4.0);
    EXPECT_GT(draw(ExponentialLaw{2.0}, eng), 0.0);
  }
  EXPECT_EQ((ProcessSpec{CompoundPoisson{}, 1.0, 1}.name()), "compound-poisson");
}
