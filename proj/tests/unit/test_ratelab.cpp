#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "fquant/ratelab.hpp"

using namespace fquant;

namespace {

std::vector<CurvePoint> synthetic(const std::vector<std::uint64_t>& budgets, double (*e)(double logN)) {
  std::vector<CurvePoint> out;
  for (auto N : budgets) out.emplace_back(N, e(std::log(static_cast<double>(N))));
  return out;
}

const std::vector<std::uint64_t> kBudgets{64, 256, 1024, 4096, 16384, 65536};

RegularityOptions reg_opts(std::size_t n_paths) {
  RegularityOptions o;
  o.n_paths = n_paths;
  o.seed = 3;
  o.threads = 1;
  return o;
}

ProcessSpec spec_of(ProcessFamily f) {
  ProcessSpec s;
  s.family = f;
  s.seed = 3;
  return s;
}

}  // namespace

TEST(FitPolylog, ExactRecovery) {
  const auto a = fit_polylog(synthetic(kBudgets, [](double l) { return std::pow(l, -0.5); }));
  EXPECT_NEAR(a.exponent, 0.5, 1e-10);
  EXPECT_NEAR(a.C, 1.0, 1e-10);
  EXPECT_NEAR(a.r2, 1.0, 1e-12);
  EXPECT_EQ(a.model, RateModel::kPolyLog);
  EXPECT_EQ(a.n_min, 64u);
  EXPECT_EQ(a.n_max, 65536u);
  const auto b = fit_polylog(synthetic(kBudgets, [](double l) { return 3.0 * std::pow(l, -0.75); }));
  EXPECT_NEAR(b.exponent, 0.75, 1e-12);
  EXPECT_NEAR(b.C, 3.0, 1e-10);
  for (double e : b.residuals) EXPECT_NEAR(e, 0.0, 1e-12);
}

TEST(FitSubexp, ExactRecovery) {
  const auto f = fit_subexp(synthetic(kBudgets, [](double l) { return std::exp(-0.6 * std::sqrt(l * std::log(l))); }));
  EXPECT_NEAR(f.exponent, 0.6, 1e-10);
  EXPECT_NEAR(f.C, 1.0, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_EQ(f.model, RateModel::kSubExp);
}

TEST(RateFits, PreconditionsAndErrors) {
  const std::vector<CurvePoint> three{{64, 0.3}, {256, 0.2}, {1024, 0.1}};
  EXPECT_THROW(fit_polylog(three), InsufficientPointsError);
  EXPECT_THROW(fit_subexp(three), InsufficientPointsError);
  const std::vector<CurvePoint> small_N{{2, 0.5}, {64, 0.3}, {256, 0.2}, {1024, 0.1}};
  EXPECT_THROW(fit_polylog(small_N), DomainError);
  const std::vector<CurvePoint> below16{{8, 0.5}, {64, 0.3}, {256, 0.2}, {1024, 0.1}};
  EXPECT_NO_THROW(fit_polylog(below16));
  EXPECT_THROW(fit_subexp(below16), DomainError);
  const std::vector<CurvePoint> zero{{16, 0.5}, {64, 0.0}, {256, 0.2}, {1024, 0.1}};
  EXPECT_THROW(fit_polylog(zero), DomainError);
}

TEST(RateFits, RSquaredInUnitInterval) {
  const std::vector<CurvePoint> noisy{{16, 0.5}, {64, 0.6}, {256, 0.2}, {1024, 0.4}, {4096, 0.1}};
  for (const auto& f : {fit_polylog(noisy), fit_subexp(noisy)}) {
    EXPECT_GE(f.r2, 0.0);
    EXPECT_LE(f.r2, 1.0);
    EXPECT_EQ(f.residuals.size(), noisy.size());
  }
}

TEST(RateFits, ModelDiscriminationOnSyntheticForms) {
  const auto poly = synthetic(kBudgets, [](double l) { return std::pow(l, -0.5); });
  const auto sub = synthetic(kBudgets, [](double l) { return std::exp(-0.6 * std::sqrt(l * std::log(l))); });
  EXPECT_GT(fit_polylog(poly).r2, fit_subexp(poly).r2);
  EXPECT_GT(fit_subexp(sub).r2, fit_polylog(sub).r2);
}

TEST(DyadicLadder, Rungs) {
  const auto h = dyadic_ladder(2.0, 2, 5);
  EXPECT_EQ(h, (std::vector<double>{0.5, 0.25, 0.125, 0.0625}));
}

TEST(EstimateRegularity, LadderValidation) {
  const auto spec = spec_of(Brownian{});
  const std::vector<double> three{0.25, 0.125, 0.0625};
  EXPECT_THROW(estimate_regularity(spec, 2.0, three, reg_opts(100)), InsufficientPointsError);
  const std::vector<double> not_dyadic{0.25, 0.125, 0.0625, 0.05};
  EXPECT_THROW(estimate_regularity(spec, 2.0, not_dyadic, reg_opts(100)), DomainError);
  const std::vector<double> too_coarse{0.5, 0.25, 0.125, 0.0625};
  EXPECT_THROW(estimate_regularity(spec, 2.0, too_coarse, reg_opts(100)), DomainError);
  EXPECT_THROW(estimate_regularity(spec, 2.0, dyadic_ladder(1.0, 12, 15), reg_opts(100)), DomainError);
  EXPECT_THROW(estimate_regularity(spec, 0.0, dyadic_ladder(1.0, 2, 8), reg_opts(100)), DomainError);
}

TEST(EstimateRegularity, BrownianRhoTwo) {
  const auto est = estimate_regularity(spec_of(Brownian{}), 2.0, dyadic_ladder(1.0, 2, 10), reg_opts(4000));
  EXPECT_NEAR(est.exponent, 0.5, 0.05);
  EXPECT_EQ(est.modulus.size(), 9u);
  EXPECT_GT(est.half_width, 0.0);
  EXPECT_LT(est.half_width, 0.05);
  for (const auto& [h, phi] : est.modulus) EXPECT_NEAR(phi, std::sqrt(h), 0.05 * std::sqrt(h)) << h;
}

TEST(EstimateRegularity, BrownianRunningSupremumBelowOne) {
  const auto est = estimate_regularity(spec_of(Brownian{}), 0.5, dyadic_ladder(1.0, 2, 7), reg_opts(2000));
  EXPECT_NEAR(est.exponent, 0.5, 0.05);
  const auto plain = estimate_regularity(spec_of(Brownian{}), 1.0, dyadic_ladder(1.0, 2, 7), reg_opts(2000));
  // E sup_{s<=h}|W_s|^{1/2} exceeds E|W_h|^{1/2}.
  const double inc_half = std::pow(2.0, 0.25) * std::tgamma(0.75) / std::sqrt(M_PI);
  for (const auto& [h, phi] : est.modulus) EXPECT_GT(phi, std::pow(inc_half, 2.0) * std::sqrt(h)) << h;
  EXPECT_NEAR(plain.exponent, 0.5, 0.05);
}

TEST(EstimateRegularity, StandardPoissonRhoOne) {
  const auto est = estimate_regularity(spec_of(Poisson{1.0}), 1.0, dyadic_ladder(1.0, 2, 10), reg_opts(20000));
  EXPECT_NEAR(est.exponent, 1.0, 0.1);
  for (const auto& [h, phi] : est.modulus) EXPECT_NEAR(phi / h, 1.0, 0.25) << h;
}

TEST(EstimateRegularity, StableRhoOne) {
  const auto est = estimate_regularity(spec_of(Stable{1.5}), 1.0, dyadic_ladder(1.0, 2, 10), reg_opts(8000));
  EXPECT_NEAR(est.exponent, 2.0 / 3.0, 0.07);
}

TEST(EstimateRegularity, ThreadCountInvariance) {
  auto o1 = reg_opts(400), o4 = reg_opts(400);
  o4.threads = 4;
  const auto a = estimate_regularity(spec_of(FBM{0.3}), 2.0, dyadic_ladder(1.0, 2, 8), o1);
  const auto b = estimate_regularity(spec_of(FBM{0.3}), 2.0, dyadic_ladder(1.0, 2, 8), o4);
  EXPECT_EQ(a.exponent, b.exponent);
  EXPECT_EQ(a.modulus, b.modulus);
}

TEST(RateReport, CsvHeaderAndRow) {
  RateReport r;
  r.family = "brownian";
  r.rho = 2.0;
  r.r = 2.0;
  r.p = 2.0;
  r.b_regularity = 0.5;
  r.b_rate = 0.48;
  r.agreement = true;
  std::ostringstream os;
  const RateReport rows[] = {r};
  write_report_csv(os, rows);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "family,rho,r,p,b_regularity,b_rate,c_subexp,R2_polylog,R2_subexp,agreement");
  EXPECT_EQ(row.substr(0, 9), "brownian,");
  EXPECT_EQ(row.substr(row.size() - 5), ",true");
}

TEST(RateReport, BrownianMeasuredCurve) {
  ReportOptions opts;
  opts.regularity = reg_opts(2000);
  opts.haar.n_train = 20000;
  opts.haar.n_eval = 4000;
  opts.haar.seed = 5;
  opts.haar.threads = 1;
  const std::vector<std::uint64_t> budgets{64, 256, 1024, 4096, 16384};
  const auto rep = regularity_rate_report(spec_of(Brownian{}), 2.0, 2.0, 2.0, budgets, opts);
  EXPECT_EQ(rep.family, "brownian");
  EXPECT_NEAR(rep.b_regularity, 0.5, 0.05);
  EXPECT_GE(rep.b_rate, 0.35);
  EXPECT_LE(rep.b_rate, 0.65);
  EXPECT_TRUE(rep.agreement);
  EXPECT_GT(rep.r2_polylog, rep.r2_subexp);
  const auto pts = curve_points(rep.curve);
  const std::vector<CurvePoint> tail(pts.begin() + 1, pts.end());
  EXPECT_LT(std::abs(fit_polylog(tail).exponent - rep.b_rate), 0.1);
}

TEST(RateReport, CompoundPoissonDisagreesByDesign) {
  ReportOptions opts;
  opts.regularity = reg_opts(4000);
  opts.cpp.quant.n_train = 20000;
  opts.cpp.quant.seed = 6;
  opts.cpp.quant.threads = 1;
  opts.cpp.n_eval = 4000;
  ProcessSpec spec = spec_of(CompoundPoisson{1.0, GaussianLaw{}});
  const std::vector<std::uint64_t> budgets{16, 256, 4096, 65536, 1u << 20, 1u << 24, 1u << 28};
  const auto rep = regularity_rate_report(spec, 1.0, 1.0, 1.0, budgets, opts);
  EXPECT_NEAR(rep.b_regularity, 1.0, 0.1);
  EXPECT_FALSE(rep.agreement);
  EXPECT_GT(rep.b_rate, rep.b_regularity + 0.15);
  EXPECT_GT(rep.c_subexp, 0.0);
  EXPECT_GT(rep.r2_subexp, rep.r2_polylog);
}
