#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fquant/alloc.hpp"
#include "fquant/core.hpp"
#include "fquant/cppq.hpp"
#include "fquant/parallel.hpp"
#include "fquant/procsim.hpp"
#include "fquant/product_quantizer.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Rate fits
// ---------------------------------------------------------------------------

enum class RateModel { kPolyLog, kSubExp };

/// PolyLog: e ~ C (log N)^{-b}. SubExp: e ~ C exp(-c sqrt(log N log log N)).
struct RateFit {
  RateModel model = RateModel::kPolyLog;
  /// b for PolyLog, c for SubExp (minus the regression slope).
  double exponent = 0.0;
  double C = 1.0;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> residuals;
  std::uint64_t n_min = 0;
  std::uint64_t n_max = 0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> residuals;
};

/// Ordinary least squares y = a + b x.
inline LinearFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("ols: length mismatch");
  if (x.size() < 2) throw InsufficientPointsError("ols: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = compensated_sum(x) / n;
  const double my = compensated_sum(y) / n;
  CompensatedSum sxx, sxy, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx.value() > 0.0)) throw DomainError("ols: regressor is constant");
  LinearFit f;
  f.slope = sxy.value() / sxx.value();
  f.intercept = my - f.slope * mx;
  CompensatedSum ss_res;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    f.residuals.push_back(e);
    ss_res += e * e;
  }
  f.r2 = syy.value() > 0.0 ? std::clamp(1.0 - ss_res.value() / syy.value(), 0.0, 1.0) : 1.0;
  return f;
}

using CurvePoint = std::pair<std::uint64_t, double>;

inline constexpr std::size_t kMinFitPoints = 4;

namespace detail {

template <class Transform>
RateFit fit_rate(std::span<const CurvePoint> curve, RateModel model, std::uint64_t min_N, Transform regressor) {
  if (curve.size() < kMinFitPoints) throw InsufficientPointsError("rate fit: need at least 4 points");
  std::vector<double> x, y;
  RateFit fit;
  fit.model = model;
  fit.n_min = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [N, e] : curve) {
    if (N < min_N) throw DomainError("rate fit: budget below the model's minimum");
    if (!(e > 0.0) || !std::isfinite(e)) throw DomainError("rate fit: errors must be positive");
    x.push_back(regressor(std::log(static_cast<double>(N))));
    y.push_back(std::log(e));
    fit.n_min = std::min(fit.n_min, N);
    fit.n_max = std::max(fit.n_max, N);
  }
  const LinearFit lf = ols(x, y);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.exponent = -lf.slope;
  fit.C = std::exp(lf.intercept);
  fit.r2 = lf.r2;
  fit.residuals = lf.residuals;
  return fit;
}

}  // namespace detail

/// Least squares of log e on log log N.
inline RateFit fit_polylog(std::span<const CurvePoint> curve) {
  return detail::fit_rate(curve, RateModel::kPolyLog, 3, [](double logN) { return std::log(logN); });
}

/// Least squares of log e on sqrt(log N log log N).
inline RateFit fit_subexp(std::span<const CurvePoint> curve) {
  return detail::fit_rate(curve, RateModel::kSubExp, 16,
                          [](double logN) { return std::sqrt(logN * std::log(logN)); });
}

inline std::vector<CurvePoint> curve_points(std::span<const DistortionReport> reports) {
  std::vector<CurvePoint> out;
  for (const auto& r : reports) out.emplace_back(r.N, r.estimate);
  return out;
}

// ---------------------------------------------------------------------------
// Mean pathwise regularity
// ---------------------------------------------------------------------------

struct RegularityEstimate {
  double exponent = 0.0;
  /// (h, phi^(h)) per rung.
  std::vector<std::pair<double, double>> modulus;
  double rho = 1.0;
  /// 95% half-width from batch-to-batch spread.
  double half_width = 0.0;
};

struct RegularityOptions {
  std::size_t n_paths = 4000;
  std::size_t base_points = 32;
  std::size_t batches = 10;
  std::uint64_t seed = 1;
  unsigned threads = default_thread_count();
};

/// Dyadic ladder h_k = T 2^{-k}, k = k_min..k_max.
inline std::vector<double> dyadic_ladder(double T, int k_min, int k_max) {
  std::vector<double> h;
  for (int k = k_min; k <= k_max; ++k) h.push_back(std::ldexp(T, -k));
  return h;
}

/// Extra grid levels below the finest rung for the windowed supremum.
inline constexpr int kSupremumRefinement = 6;

/// phi^(h) = (E|X_{t+h} - X_t|^rho)^{1/rho} for rho >= 1, or with the
/// running supremum over [t, t+h] for rho < 1, averaged over evenly spaced
/// base points t; the exponent is the log-log slope in h.
inline RegularityEstimate estimate_regularity(const ProcessSpec& spec, double rho, std::span<const double> h_ladder,
                                              const RegularityOptions& opts = {}) {
  if (!(rho > 0.0)) throw DomainError("estimate_regularity: rho must be positive");
  if (h_ladder.size() < 4) throw InsufficientPointsError("estimate_regularity: ladder needs at least 4 rungs");
  if (opts.n_paths < opts.batches || opts.batches < 2) throw DomainError("estimate_regularity: too few paths");
  spec.validate();
  const double T = spec.horizon;
  std::vector<int> ks;
  for (double h : h_ladder) {
    const double k = -std::log2(h / T);
    if (std::abs(k - std::round(k)) > 1e-9) throw DomainError("estimate_regularity: ladder must be dyadic");
    if (k < 2.0 - 1e-9 || k > 14.0 + 1e-9) throw DomainError("estimate_regularity: rungs must lie in [T 2^-14, T/4]");
    ks.push_back(static_cast<int>(std::lround(k)));
  }
  const int finest = *std::max_element(ks.begin(), ks.end());
  const int level = rho >= 1.0 ? finest : std::min(finest + kSupremumRefinement, 20);
  const TimeGrid grid(T, level);
  const PathSimulator sim(spec, grid);
  const std::size_t R = ks.size();
  const std::size_t B = std::max<std::size_t>(opts.base_points, 1);
  const RngStream stream(opts.seed, StreamId::kRegularity);

  std::vector<double> per_path(opts.n_paths * R);
  parallel_for(opts.n_paths, opts.threads, [&](std::size_t i) {
    const PathSample x = sim.simulate(stream, i);
    const auto v = x.values();
    for (std::size_t j = 0; j < R; ++j) {
      const std::size_t step = std::size_t{1} << (level - ks[j]);
      const std::size_t span_cells = grid.cells() - step;
      CompensatedSum s;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t t0 =
            B == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(b * span_cells) / static_cast<double>(B - 1)));
        double d = 0.0;
        if (rho >= 1.0) {
          d = std::abs(v[t0 + step] - v[t0]);
        } else {
          for (std::size_t u = t0; u <= t0 + step; ++u) d = std::max(d, std::abs(v[u] - v[t0]));
        }
        s += pow_abs(d, rho);
      }
      per_path[i * R + j] = s.value() / static_cast<double>(B);
    }
  });

  auto slope_of = [&](std::size_t first, std::size_t last, std::vector<std::pair<double, double>>* modulus) {
    std::vector<double> x, y;
    for (std::size_t j = 0; j < R; ++j) {
      CompensatedSum s;
      for (std::size_t i = first; i < last; ++i) s += per_path[i * R + j];
      const double phi = std::pow(s.value() / static_cast<double>(last - first), 1.0 / rho);
      if (modulus) modulus->emplace_back(h_ladder[j], phi);
      x.push_back(std::log(h_ladder[j]));
      y.push_back(std::log(std::max(phi, std::numeric_limits<double>::min())));
    }
    return ols(x, y).slope;
  };

  RegularityEstimate est;
  est.rho = rho;
  est.exponent = slope_of(0, opts.n_paths, &est.modulus);
  const std::size_t per_batch = opts.n_paths / opts.batches;
  std::vector<double> bs;
  for (std::size_t b = 0; b < opts.batches; ++b) bs.push_back(slope_of(b * per_batch, (b + 1) * per_batch, nullptr));
  const double mean = compensated_sum(bs) / static_cast<double>(bs.size());
  CompensatedSum var;
  for (double v : bs) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var.value() / static_cast<double>(bs.size() - 1));
  est.half_width = 1.96 * sd / std::sqrt(static_cast<double>(bs.size()));
  return est;
}

// ---------------------------------------------------------------------------
// Regularity versus rate
// ---------------------------------------------------------------------------

struct RateReport {
  std::string family;
  double rho = 1.0;
  double r = 2.0;
  double p = 2.0;
  double b_regularity = 0.0;
  double b_rate = 0.0;
  double c_subexp = 0.0;
  double r2_polylog = 0.0;
  double r2_subexp = 0.0;
  bool agreement = false;
  RegularityEstimate regularity;
  std::vector<DistortionReport> curve;
};

inline constexpr double kAgreementTol = 0.15;

struct ReportOptions {
  RegularityOptions regularity{};
  CurveOptions haar{};
  CppCurveOptions cpp{};
  int ladder_k_min = 2;
  int ladder_k_max = 10;
  double agreement_tol = kAgreementTol;
};

/// Measures the regularity exponent and the matching distortion curve, then
/// fits both rate models to the curve. Jump processes use the explicit
/// Poisson quantizer; other families use Haar product quantizers allocated
/// with phi(u) = u^{b_regularity}.
inline RateReport regularity_rate_report(const ProcessSpec& spec, double rho, double r, double p,
                                         std::span<const std::uint64_t> budgets, const ReportOptions& opts = {}) {
  RateReport rep;
  rep.family = spec.name();
  rep.rho = rho;
  rep.r = r;
  rep.p = p;
  const auto ladder = dyadic_ladder(spec.horizon, opts.ladder_k_min, opts.ladder_k_max);
  rep.regularity = estimate_regularity(spec, rho, ladder, opts.regularity);
  rep.b_regularity = rep.regularity.exponent;

  if (const auto* pois = std::get_if<Poisson>(&spec.family)) {
    rep.curve = cpp_distortion_curve(pois->lambda, spec.horizon, std::nullopt, r, p, budgets, opts.cpp);
  } else if (const auto* cp = std::get_if<CompoundPoisson>(&spec.family)) {
    rep.curve = cpp_distortion_curve(cp->lambda, spec.horizon, cp->law, r, p, budgets, opts.cpp);
  } else {
    const double b = std::clamp(rep.b_regularity, 0.05, 4.0);
    rep.curve = distortion_curve(spec, PhiWeights::power(b), r, p, budgets, opts.haar);
  }
  const auto pts = curve_points(rep.curve);
  const RateFit poly = fit_polylog(pts);
  rep.b_rate = poly.exponent;
  rep.r2_polylog = poly.r2;
  const bool subexp_ok = std::all_of(pts.begin(), pts.end(), [](const CurvePoint& c) { return c.first >= 16; });
  if (subexp_ok) {
    const RateFit sub = fit_subexp(pts);
    rep.c_subexp = sub.exponent;
    rep.r2_subexp = sub.r2;
  } else {
    rep.c_subexp = std::numeric_limits<double>::quiet_NaN();
    rep.r2_subexp = std::numeric_limits<double>::quiet_NaN();
  }
  rep.agreement = std::abs(rep.b_regularity - rep.b_rate) <= opts.agreement_tol;
  return rep;
}

inline void write_report_csv(std::ostream& os, std::span<const RateReport> rows) {
  os << "family,rho,r,p,b_regularity,b_rate,c_subexp,R2_polylog,R2_subexp,agreement\n";
  for (const auto& r : rows)
    os << r.family << ',' << format_real(r.rho) << ',' << format_real(r.r) << ',' << format_real(r.p) << ','
       << format_real(r.b_regularity) << ',' << format_real(r.b_rate) << ',' << format_real(r.c_subexp) << ','
       << format_real(r.r2_polylog) << ',' << format_real(r.r2_subexp) << ',' << (r.agreement ? "true" : "false")
       << '\n';
}

}  // namespace fquant
