#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fquant/core.hpp"
#include "fquant/parallel.hpp"
#include "fquant/quant1d.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Jump laws
// ---------------------------------------------------------------------------

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
};
struct UniformLaw {
  double lo = 0.0;
  double hi = 1.0;
};
struct ExponentialLaw {
  double rate = 1.0;
};
/// Value a with probability prob_a, else b.
struct TwoPointLaw {
  double a = -1.0;
  double b = 1.0;
  double prob_a = 0.5;
};

using JumpLaw = std::variant<GaussianLaw, UniformLaw, ExponentialLaw, TwoPointLaw>;

inline void validate(const JumpLaw& law) {
  std::visit(
      [](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianLaw>) {
          if (!(l.sd > 0.0) || !std::isfinite(l.mean)) throw DomainError("GaussianLaw: sd must be positive");
        } else if constexpr (std::is_same_v<L, UniformLaw>) {
          if (!(l.lo < l.hi)) throw DomainError("UniformLaw: lo must be below hi");
        } else if constexpr (std::is_same_v<L, ExponentialLaw>) {
          if (!(l.rate > 0.0)) throw DomainError("ExponentialLaw: rate must be positive");
        } else {
          if (!(l.prob_a >= 0.0 && l.prob_a <= 1.0)) throw DomainError("TwoPointLaw: prob_a must lie in [0, 1]");
          if (!std::isfinite(l.a) || !std::isfinite(l.b)) throw DomainError("TwoPointLaw: values must be finite");
        }
      },
      law);
}

inline double draw(const JumpLaw& law, Engine& eng) {
  return std::visit(
      [&eng](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianLaw>) {
          return std::normal_distribution<double>(l.mean, l.sd)(eng);
        } else if constexpr (std::is_same_v<L, UniformLaw>) {
          return std::uniform_real_distribution<double>(l.lo, l.hi)(eng);
        } else if constexpr (std::is_same_v<L, ExponentialLaw>) {
          return std::exponential_distribution<double>(l.rate)(eng);
        } else {
          return std::uniform_real_distribution<double>(0.0, 1.0)(eng) < l.prob_a ? l.a : l.b;
        }
      },
      law);
}

inline std::string law_name(const JumpLaw& law) {
  static constexpr const char* names[] = {"gaussian", "uniform", "exponential", "two-point"};
  return names[law.index()];
}

// ---------------------------------------------------------------------------
// Process descriptions
// ---------------------------------------------------------------------------

struct Brownian {};
struct FBM {
  double H = 0.5;
};
/// Symmetric alpha-stable Levy process.
struct Stable {
  double alpha = 1.5;
};
/// Gamma subordinator: X_t ~ gamma(alpha, t), shape t and rate alpha.
struct GammaProcess {
  double alpha = 1.0;
};
struct Poisson {
  double lambda = 1.0;
};
struct CompoundPoisson {
  double lambda = 1.0;
  JumpLaw law = GaussianLaw{};
};

using ProcessFamily = std::variant<Brownian, FBM, Stable, GammaProcess, Poisson, CompoundPoisson>;

struct ProcessSpec {
  ProcessFamily family = Brownian{};
  double horizon = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("ProcessSpec: horizon must be positive");
    std::visit(
        [](const auto& f) {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, FBM>) {
            if (!(f.H > 0.0 && f.H < 1.0)) throw DomainError("FBM: H must lie in (0, 1)");
          } else if constexpr (std::is_same_v<F, Stable>) {
            if (!(f.alpha > 0.0 && f.alpha < 2.0)) throw DomainError("Stable: alpha must lie in (0, 2)");
          } else if constexpr (std::is_same_v<F, GammaProcess>) {
            if (!(f.alpha > 0.0)) throw DomainError("GammaProcess: alpha must be positive");
          } else if constexpr (std::is_same_v<F, Poisson>) {
            if (!(f.lambda > 0.0)) throw DomainError("Poisson: lambda must be positive");
          } else if constexpr (std::is_same_v<F, CompoundPoisson>) {
            if (!(f.lambda > 0.0)) throw DomainError("CompoundPoisson: lambda must be positive");
            fquant::validate(f.law);
          }
        },
        family);
  }

  std::string name() const {
    static constexpr const char* names[] = {"brownian", "fbm", "stable", "gamma", "poisson", "compound-poisson"};
    return names[family.index()];
  }
};

// ---------------------------------------------------------------------------
// Jumps
// ---------------------------------------------------------------------------

/// Unit-rate arrivals S_1 < S_2 < ... <= lambda T and their jump sizes.
/// The physical jump time of S_n is S_n / lambda.
struct JumpRecord {
  std::vector<double> arrivals;
  std::vector<double> sizes;
  double lambda = 1.0;
  double horizon = 1.0;

  double censor() const { return lambda * horizon; }
  std::size_t count() const { return arrivals.size(); }
};

/// Arrivals are partial sums of unit exponentials kept while S_n <= lambda T.
/// Sizes are 1 for the standard Poisson process.
inline JumpRecord simulate_jumps(double lambda, double horizon, const std::optional<JumpLaw>& law, Engine& eng) {
  if (!(lambda > 0.0)) throw DomainError("simulate_jumps: lambda must be positive");
  if (!(horizon >= 0.0)) throw DomainError("simulate_jumps: horizon must be >= 0");
  JumpRecord rec;
  rec.lambda = lambda;
  rec.horizon = horizon;
  const double limit = lambda * horizon;
  std::exponential_distribution<double> expo(1.0);
  double s = expo(eng);
  while (s <= limit) {
    rec.arrivals.push_back(s);
    s += expo(eng);
  }
  rec.sizes.reserve(rec.arrivals.size());
  for (std::size_t i = 0; i < rec.arrivals.size(); ++i) rec.sizes.push_back(law ? draw(*law, eng) : 1.0);
  return rec;
}

inline JumpRecord simulate_jumps(const ProcessSpec& spec, Engine& eng) {
  spec.validate();
  if (const auto* p = std::get_if<Poisson>(&spec.family)) return simulate_jumps(p->lambda, spec.horizon, std::nullopt, eng);
  if (const auto* c = std::get_if<CompoundPoisson>(&spec.family))
    return simulate_jumps(c->lambda, spec.horizon, c->law, eng);
  throw DomainError("simulate_jumps: process is not a jump process");
}

/// Cadlag grid projection: value at t_i is the sum of sizes with S_n / lambda <= t_i.
inline PathSample jump_path(const JumpRecord& rec, const TimeGrid& grid) {
  std::vector<std::pair<double, double>> events;
  events.reserve(rec.count());
  for (std::size_t n = 0; n < rec.count(); ++n) events.emplace_back(rec.arrivals[n] / rec.lambda, rec.sizes[n]);
  std::sort(events.begin(), events.end());
  std::vector<double> values(grid.points());
  std::size_t e = 0;
  CompensatedSum level;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = grid.time(i);
    while (e < events.size() && events[e].first <= t) level += events[e++].second;
    values[i] = level.value();
  }
  return PathSample(grid, std::move(values));
}

/// A draw of S_n ~ Gamma(n, 1), used as-is for training on S_n 1{S_n <= lambda T}.
inline double erlang_truncated_sampler(std::size_t n, double lambda_T, Engine& eng) {
  if (n < 1) throw DomainError("erlang_truncated_sampler: n must be >= 1");
  if (!(lambda_T > 0.0)) throw DomainError("erlang_truncated_sampler: lambda T must be positive");
  return std::gamma_distribution<double>(static_cast<double>(n), 1.0)(eng);
}

/// P(S_n <= lambda T), the regularized lower incomplete gamma function.
inline double erlang_tail_probability(std::size_t n, double lambda_T) {
  if (n < 1) throw DomainError("erlang_tail_probability: n must be >= 1");
  if (!(lambda_T >= 0.0)) throw DomainError("erlang_tail_probability: lambda T must be >= 0");
  if (lambda_T == 0.0) return 0.0;
  return boost::math::gamma_p(static_cast<double>(n), lambda_T);
}

// ---------------------------------------------------------------------------
// Fractional Brownian motion
// ---------------------------------------------------------------------------

/// Autocovariance of fractional Gaussian noise at lag k for step h.
inline double fgn_autocovariance(std::size_t k, double H, double h) {
  const double kd = static_cast<double>(k);
  const double e = 2.0 * H;
  const double v = 0.5 * (std::pow(kd + 1.0, e) - 2.0 * std::pow(kd, e) + std::pow(std::abs(kd - 1.0), e));
  return v * std::pow(h, e);
}

/// Covariance matrix of the 2^L grid increments of fBm.
inline Eigen::MatrixXd fbm_increment_covariance(double H, const TimeGrid& grid) {
  if (!(H > 0.0 && H < 1.0)) throw DomainError("fbm_increment_covariance: H must lie in (0, 1)");
  const std::size_t n = grid.cells();
  Eigen::MatrixXd c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) = fgn_autocovariance(i > j ? i - j : j - i, H, grid.step());
  return c;
}

enum class FbmMethod { kAuto, kCirculant, kCholesky };

inline constexpr int kFbmCholeskyMaxLevels = 12;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Complex DFT of length n, safe to execute concurrently on distinct arrays.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    std::vector<std::complex<double>> a(n), b(n);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_) throw Error("FftPlan: planner failed");
  }
  ~FftPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t size() const { return n_; }
  void execute(std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out) const {
    fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  }

 private:
  std::size_t n_;
  fftw_plan plan_ = nullptr;
};

/// Exact fGn sampler on 2^L steps: Davies-Harte circulant embedding, or a
/// Cholesky factor when the embedding is not nonnegative definite.
class FgnSampler {
 public:
  FgnSampler(double H, const TimeGrid& grid, FbmMethod method) : n_(grid.cells()) {
    const double h = grid.step();
    bool use_cholesky = method == FbmMethod::kCholesky;
    if (!use_cholesky) {
      const std::size_t M = 2 * n_;
      fft_ = std::make_shared<FftPlan>(M);
      std::vector<std::complex<double>> row(M), eig(M);
      for (std::size_t k = 0; k <= n_; ++k) row[k] = fgn_autocovariance(k, H, h);
      for (std::size_t k = n_ + 1; k < M; ++k) row[k] = row[M - k];
      fft_->execute(row, eig);
      sqrt_eig_.resize(M);
      double max_eig = 0.0;
      for (const auto& e : eig) max_eig = std::max(max_eig, e.real());
      bool ok = true;
      for (std::size_t k = 0; k < M; ++k) {
        double ev = eig[k].real();
        if (ev < -1e-10 * max_eig) ok = false;
        ev = std::max(ev, 0.0);
        sqrt_eig_[k] = std::sqrt(ev / static_cast<double>(M));
      }
      if (!ok) {
        if (method == FbmMethod::kCirculant) throw DomainError("fbm: circulant embedding is not nonnegative definite");
        use_cholesky = true;
        fft_.reset();
      }
    }
    if (use_cholesky) {
      if (grid.levels() > kFbmCholeskyMaxLevels) throw DomainError("fbm: Cholesky fallback limited to 12 grid levels");
      chol_ = std::make_shared<Eigen::MatrixXd>(Eigen::LLT<Eigen::MatrixXd>(fbm_increment_covariance(H, grid)).matrixL());
    }
  }

  std::vector<double> sample(Engine& eng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(n_);
    if (chol_) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(n_));
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(eng);
      const Eigen::VectorXd x = (*chol_) * z;
      for (std::size_t i = 0; i < n_; ++i) out[i] = x[static_cast<Eigen::Index>(i)];
      return out;
    }
    const std::size_t M = 2 * n_;
    std::vector<std::complex<double>> w(M), y(M);
    w[0] = sqrt_eig_[0] * gauss(eng);
    w[n_] = sqrt_eig_[n_] * gauss(eng);
    for (std::size_t k = 1; k < n_; ++k) {
      const double a = gauss(eng);
      const double b = gauss(eng);
      const double s = sqrt_eig_[k] * std::numbers::sqrt2 / 2.0;
      w[k] = {s * a, s * b};
      w[M - k] = {s * a, -s * b};
    }
    fft_->execute(w, y);
    for (std::size_t i = 0; i < n_; ++i) out[i] = y[i].real();
    return out;
  }

  bool uses_cholesky() const { return static_cast<bool>(chol_); }

 private:
  std::size_t n_;
  std::shared_ptr<FftPlan> fft_;
  std::vector<double> sqrt_eig_;
  std::shared_ptr<Eigen::MatrixXd> chol_;
};

/// Symmetric alpha-stable draw with unit scale (Chambers-Mallows-Stuck).
inline double cms_symmetric(double alpha, Engine& eng) {
  const double V = std::uniform_real_distribution<double>(-std::numbers::pi / 2.0, std::numbers::pi / 2.0)(eng);
  const double W = std::exponential_distribution<double>(1.0)(eng);
  if (alpha == 1.0) return std::tan(V);
  return std::sin(alpha * V) / std::pow(std::cos(V), 1.0 / alpha) *
         std::pow(std::cos((1.0 - alpha) * V) / W, (1.0 - alpha) / alpha);
}

inline std::vector<double> cumulate(const std::vector<double>& increments) {
  std::vector<double> v(increments.size() + 1, 0.0);
  CompensatedSum s;
  for (std::size_t i = 0; i < increments.size(); ++i) {
    s += increments[i];
    v[i + 1] = s.value();
  }
  return v;
}

}  // namespace detail

/// Path simulator for one (spec, grid) pair; precomputes what the family
/// needs once and is then safe to use from many threads.
class PathSimulator {
 public:
  PathSimulator(ProcessSpec spec, TimeGrid grid, FbmMethod fbm_method = FbmMethod::kAuto)
      : spec_(std::move(spec)), grid_(grid) {
    spec_.validate();
    if (!(std::abs(grid_.horizon() - spec_.horizon) <= 1e-12 * spec_.horizon))
      throw DomainError("PathSimulator: grid horizon differs from the process horizon");
    if (const auto* f = std::get_if<FBM>(&spec_.family))
      fgn_ = std::make_shared<detail::FgnSampler>(f->H, grid_, fbm_method);
  }

  const ProcessSpec& spec() const { return spec_; }
  const TimeGrid& grid() const { return grid_; }
  bool is_jump_process() const {
    return std::holds_alternative<Poisson>(spec_.family) || std::holds_alternative<CompoundPoisson>(spec_.family);
  }

  PathSample simulate(Engine& eng) const {
    const std::size_t n = grid_.cells();
    const double h = grid_.step();
    return std::visit(
        [&](const auto& f) -> PathSample {
          using F = std::decay_t<decltype(f)>;
          std::vector<double> inc(n);
          if constexpr (std::is_same_v<F, Brownian>) {
            std::normal_distribution<double> g(0.0, std::sqrt(h));
            for (double& x : inc) x = g(eng);
          } else if constexpr (std::is_same_v<F, FBM>) {
            inc = fgn_->sample(eng);
          } else if constexpr (std::is_same_v<F, Stable>) {
            const double scale = std::pow(h, 1.0 / f.alpha);
            for (double& x : inc) x = scale * detail::cms_symmetric(f.alpha, eng);
          } else if constexpr (std::is_same_v<F, GammaProcess>) {
            std::gamma_distribution<double> g(h, 1.0 / f.alpha);
            for (double& x : inc) x = g(eng);
          } else {
            return jump_path(simulate_jumps(spec_, eng), grid_);
          }
          return PathSample(grid_, detail::cumulate(inc));
        },
        spec_.family);
  }

  /// Path with index i of a reproducible stream.
  PathSample simulate(const RngStream& stream, std::uint64_t index) const {
    Engine eng = stream.engine(index);
    return simulate(eng);
  }

 private:
  ProcessSpec spec_;
  TimeGrid grid_;
  std::shared_ptr<detail::FgnSampler> fgn_;
};

inline PathSample simulate(const ProcessSpec& spec, const TimeGrid& grid, Engine& eng) {
  return PathSimulator(spec, grid).simulate(eng);
}

inline PathSample simulate(const ProcessSpec& spec, const TimeGrid& grid, const RngStream& stream, std::uint64_t index) {
  return PathSimulator(spec, grid).simulate(stream, index);
}

/// Debug dump: header "t,value", one row per grid point.
inline void write_path_csv(std::ostream& os, const PathSample& path) {
  os << "t,value\n";
  for (std::size_t i = 0; i < path.grid().points(); ++i)
    os << format_real(path.grid().time(i)) << ',' << format_real(path[i]) << '\n';
}

}  // namespace fquant
