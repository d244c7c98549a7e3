#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fquant/alloc.hpp"
#include "fquant/core.hpp"
#include "fquant/parallel.hpp"
#include "fquant/procsim.hpp"
#include "fquant/product_quantizer.hpp"
#include "fquant/quant1d.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Step paths in continuous time
// ---------------------------------------------------------------------------

/// Piecewise-constant cadlag path on [0, T] starting at 0: the value at t is
/// the sum of jumps with time <= t.
struct StepPath {
  std::vector<std::pair<double, double>> jumps;  // (time, size)
  double horizon = 1.0;
};

/// Exact |f - g|_{L^p[0,T]} of two step paths.
inline double step_lp_distance(const StepPath& f, const StepPath& g, double p) {
  if (!(p > 0.0)) throw DomainError("step_lp_distance: p must be positive");
  if (f.horizon != g.horizon) throw DomainError("step_lp_distance: horizons differ");
  const double T = f.horizon;
  std::vector<std::pair<double, double>> ev;
  ev.reserve(f.jumps.size() + g.jumps.size());
  for (const auto& [t, s] : f.jumps)
    if (t < T) ev.emplace_back(std::max(t, 0.0), s);
  for (const auto& [t, s] : g.jumps)
    if (t < T) ev.emplace_back(std::max(t, 0.0), -s);
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  CompensatedSum level;
  CompensatedSum acc;
  double t_prev = 0.0;
  for (std::size_t i = 0; i < ev.size();) {
    const double t = ev[i].first;
    acc += pow_abs(level.value(), p) * (t - t_prev);
    while (i < ev.size() && ev[i].first == t) level += ev[i++].second;
    t_prev = t;
  }
  acc += pow_abs(level.value(), p) * (T - t_prev);
  return std::pow(std::max(acc.value(), 0.0), 1.0 / p);
}

/// Grid projection of a step path (value at t_i includes jumps at t_i).
inline PathSample step_path_on_grid(const StepPath& f, const TimeGrid& grid) {
  JumpRecord rec;
  rec.lambda = 1.0;
  rec.horizon = f.horizon;
  for (const auto& [t, s] : f.jumps) {
    rec.arrivals.push_back(t);
    rec.sizes.push_back(s);
  }
  return jump_path(rec, grid);
}

inline StepPath step_path(const JumpRecord& rec) {
  StepPath f;
  f.horizon = rec.horizon;
  for (std::size_t n = 0; n < rec.count(); ++n) f.jumps.emplace_back(rec.arrivals[n] / rec.lambda, rec.sizes[n]);
  return f;
}

// ---------------------------------------------------------------------------
// Quantizer
// ---------------------------------------------------------------------------

struct CppqOptions {
  /// Pierce slack: mu p = r + delta.
  double delta = 0.5;
  /// Split constant c = 1/sqrt(p r) - c_margin.
  double c_margin = 0.05;
  /// Weight base; defaults to (lambda T)^{1/(mu p)}.
  std::optional<double> A;
  std::size_t n_train = 100000;
  std::uint64_t seed = 1;
  unsigned threads = default_thread_count();
  LloydOptions lloyd{};
};

/// Jump-time books alpha_n = alpha'_n U {lambda T} (n = 1..m) and, for the
/// compound case, jump-size books.
struct PoissonQuantizer {
  double lambda = 1.0;
  double horizon = 1.0;
  double r = 1.0;
  double p = 1.0;
  double delta = 0.5;
  std::uint64_t N = 1;
  std::uint64_t N1 = 1;
  std::uint64_t N2 = 1;
  AllocationPlan time_plan;
  std::optional<AllocationPlan> size_plan;
  std::vector<Codebook1D> time_books;
  std::vector<Codebook1D> size_books;
  /// One-point L^r center used for size slots beyond the size plan.
  std::optional<Codebook1D> size_default;

  double censor() const { return lambda * horizon; }
  bool compound() const { return size_default.has_value(); }

  /// Product of all book sizes, saturated at UINT64_MAX.
  std::uint64_t cardinality() const {
    unsigned __int128 acc = 1;
    const auto cap = std::numeric_limits<std::uint64_t>::max();
    for (const auto& b : time_books)
      if ((acc *= b.size()) > cap) return cap;
    for (const auto& b : size_books)
      if ((acc *= b.size()) > cap) return cap;
    return static_cast<std::uint64_t>(acc);
  }

  const Codebook1D* size_book(std::size_t n) const {
    if (!compound()) return nullptr;
    return n < size_books.size() ? &size_books[n] : &*size_default;
  }
};

/// N1 = [N^{rc^2/(1+rc^2)}], N2 = [N^{1/(1+rc^2)}] with c = 1/sqrt(pr) - margin.
inline std::pair<std::uint64_t, std::uint64_t> cpp_budget_split(std::uint64_t N, double r, double p, double c_margin) {
  const double c = 1.0 / std::sqrt(p * r) - c_margin;
  if (!(c > 0.0)) throw DomainError("cpp_budget_split: split constant must be positive");
  const double rc2 = r * c * c;
  const double logN = std::log(static_cast<double>(N));
  const auto N1 = static_cast<std::uint64_t>(std::floor(std::exp(logN * rc2 / (1.0 + rc2)) + 1e-9));
  const auto N2 = static_cast<std::uint64_t>(std::floor(std::exp(logN / (1.0 + rc2)) + 1e-9));
  if (N1 < 1 || N2 < 1) throw BudgetError("cpp_budget_split: budget too small to split");
  if (static_cast<unsigned __int128>(N1) * N2 > N) throw BudgetError("cpp_budget_split: split exceeds the budget");
  return {N1, N2};
}

namespace detail {

/// Factorial allocation, or the single slot [N] when N < 3.
inline AllocationPlan factorial_plan(const FactorialWeights& w, std::uint64_t N, double p) {
  if (N >= 3) return allocate_factorial(w, N, p);
  AllocationPlan plan;
  plan.sizes = {N};
  plan.budget = N;
  plan.p = p;
  return plan;
}

/// Training draws of S_n 1{S_n <= lambda T}.
inline SampleSet truncated_erlang_samples(std::size_t n, double lambda_T, std::size_t count, const RngStream& stream) {
  SampleSet s;
  s.values.resize(count);
  s.law = "truncated Erlang " + std::to_string(n);
  Engine eng = stream.engine(n);
  for (double& v : s.values) {
    const double x = erlang_truncated_sampler(n, lambda_T, eng);
    v = x <= lambda_T ? x : 0.0;
  }
  return s;
}

/// (N-1)-point L^{r'} book on truncated samples plus the sentinel lambda T.
inline Codebook1D time_book(const SampleSet& samples, std::uint64_t N, double r_prime, double lambda_T,
                            const LloydOptions& lloyd) {
  if (N <= 1) return Codebook1D({lambda_T}, r_prime, lambda_T);
  const std::size_t distinct = SortedSamples(samples.values).distinct();
  const std::size_t free_points = static_cast<std::size_t>(N - 1);
  const Codebook1D cb = train_lloyd(samples, std::min(free_points, distinct), r_prime, lloyd);
  const Codebook1D padded = pad_codebook(cb, free_points, lambda_T);
  std::vector<double> pts(padded.points().begin(), padded.points().end());
  if (!(pts.back() < lambda_T)) throw DegenerateSampleError("time_book: trained point reaches the sentinel");
  pts.push_back(lambda_T);
  return Codebook1D(std::move(pts), r_prime, lambda_T);
}

}  // namespace detail

/// Builds the explicit quantizer of a (compound) Poisson process with
/// intensity lambda on [0, T]. Without a jump law the whole budget goes to
/// jump times.
inline PoissonQuantizer build_poisson_quantizer(double lambda, double T, double r, double p, std::uint64_t N,
                                                const std::optional<JumpLaw>& law, const CppqOptions& opts = {}) {
  if (!(lambda > 0.0) || !(T > 0.0)) throw DomainError("build_poisson_quantizer: lambda and T must be positive");
  if (!(r >= 1.0)) throw DomainError("build_poisson_quantizer: r must be >= 1");
  if (!(p >= 1.0 && p <= r)) throw DomainError("build_poisson_quantizer: p must lie in [1, r]");
  if (!(opts.delta > 0.0)) throw DomainError("build_poisson_quantizer: delta must be positive");
  if (N < 1) throw BudgetError("build_poisson_quantizer: budget must be >= 1");
  if (law) validate(*law);

  PoissonQuantizer q;
  q.lambda = lambda;
  q.horizon = T;
  q.r = r;
  q.p = p;
  q.delta = opts.delta;
  q.N = N;
  if (law) {
    std::tie(q.N1, q.N2) = cpp_budget_split(N, r, p, opts.c_margin);
  } else {
    q.N1 = N;
    q.N2 = 1;
  }
  const double lambda_T = lambda * T;
  const double mu_p = r + opts.delta;
  const FactorialWeights time_w(opts.A.value_or(std::pow(lambda_T, 1.0 / mu_p)), mu_p);
  q.time_plan = detail::factorial_plan(time_w, q.N1, p);

  const double r_prime = r / p;
  const RngStream time_stream = RngStream(opts.seed, StreamId::kTraining);
  std::vector<std::optional<Codebook1D>> books(q.time_plan.depth());
  parallel_for(books.size(), opts.threads, [&](std::size_t i) {
    const std::size_t n = i + 1;
    const std::uint64_t Nn = q.time_plan.sizes[i];
    if (Nn <= 1) {
      books[i] = detail::time_book({}, 1, r_prime, lambda_T, opts.lloyd);
      return;
    }
    const auto samples = detail::truncated_erlang_samples(n, lambda_T, opts.n_train, time_stream);
    books[i] = detail::time_book(samples, Nn, r_prime, lambda_T, opts.lloyd);
  });
  for (auto& b : books) q.time_books.push_back(std::move(*b));

  if (law) {
    const FactorialWeights size_w(std::pow(lambda_T, 1.0 / r), r);
    q.size_plan = detail::factorial_plan(size_w, q.N2, 1.0);
    SampleSet sizes;
    sizes.law = law_name(*law);
    sizes.values.resize(opts.n_train);
    Engine eng = RngStream(opts.seed, StreamId::kSizeTraining).engine(0);
    for (double& v : sizes.values) v = draw(*law, eng);
    std::map<std::uint64_t, Codebook1D> cache;
    for (auto Nn : q.size_plan->sizes)
      if (!cache.count(Nn)) cache.emplace(Nn, detail::train_exact_size(sizes, Nn, r, opts.lloyd));
    for (auto Nn : q.size_plan->sizes) q.size_books.push_back(cache.at(Nn));
    q.size_default = cache.count(1) ? cache.at(1) : train_lloyd(sizes, 1, r, opts.lloyd);
  }
  return q;
}

struct QuantizedJumpPath {
  /// Quantized unit-rate arrival per index n (lambda T = no jump).
  std::vector<double> arrivals;
  std::vector<double> sizes;
  StepPath step;
  PathSample path;
};

/// S^_n = nearest(alpha_n, S_n ^ lambda T) for n <= m and the sentinel beyond;
/// each non-sentinel S^_n puts a jump U^_n at physical time S^_n / lambda.
inline StepPath quantize_jumps(const PoissonQuantizer& q, const JumpRecord& jumps, std::vector<double>* arrivals = nullptr,
                               std::vector<double>* sizes = nullptr) {
  const double lt = q.censor();
  StepPath out;
  out.horizon = q.horizon;
  const std::size_t n_slots = std::max(q.time_books.size(), jumps.count());
  for (std::size_t n = 0; n < n_slots; ++n) {
    double s_hat = lt;
    if (n < q.time_books.size()) {
      const double s = n < jumps.count() ? std::min(jumps.arrivals[n], lt) : lt;
      s_hat = nearest(q.time_books[n], s).point;
    }
    double u_hat = 1.0;
    if (const Codebook1D* book = q.size_book(n)) u_hat = n < jumps.count() ? nearest(*book, jumps.sizes[n]).point : 0.0;
    if (arrivals) arrivals->push_back(s_hat);
    if (sizes) sizes->push_back(u_hat);
    if (s_hat < lt) out.jumps.emplace_back(s_hat / q.lambda, u_hat);
  }
  return out;
}

inline QuantizedJumpPath quantize_jump_path(const PoissonQuantizer& q, const JumpRecord& jumps, const TimeGrid& grid) {
  QuantizedJumpPath out{{}, {}, {}, PathSample::constant(grid, 0.0)};
  out.step = quantize_jumps(q, jumps, &out.arrivals, &out.sizes);
  out.path = step_path_on_grid(out.step, grid);
  return out;
}

/// Parts of the error split X - X^ = (X - K^{U^}) + (K^{U^} - K^^{U^}).
struct DecoupledDistances {
  double total = 0.0;
  /// |X - K^{U^}|: quantized sizes at the true times.
  double size_part = 0.0;
  /// |K^{U^} - K^^{U^}|: quantized sizes, true versus quantized times.
  double time_part = 0.0;
  /// |X - K^^U|: true sizes at the quantized times.
  double time_only = 0.0;
};

inline DecoupledDistances decoupled_distances(const PoissonQuantizer& q, const JumpRecord& jumps, double p) {
  const double lt = q.censor();
  StepPath x = step_path(jumps), k_uhat, khat_uhat, khat_u;
  k_uhat.horizon = khat_uhat.horizon = khat_u.horizon = q.horizon;
  for (std::size_t n = 0; n < jumps.count(); ++n) {
    const double s = std::min(jumps.arrivals[n], lt);
    const double s_hat = n < q.time_books.size() ? nearest(q.time_books[n], s).point : lt;
    const Codebook1D* book = q.size_book(n);
    const double u = jumps.sizes[n];
    const double u_hat = book ? nearest(*book, u).point : u;
    k_uhat.jumps.emplace_back(jumps.arrivals[n] / q.lambda, u_hat);
    if (s_hat < lt) {
      khat_uhat.jumps.emplace_back(s_hat / q.lambda, u_hat);
      khat_u.jumps.emplace_back(s_hat / q.lambda, u);
    }
  }
  // Slots with no jump have S_n > lambda T and hence the sentinel: no jump in either path.
  return {step_lp_distance(x, khat_uhat, p), step_lp_distance(x, k_uhat, p), step_lp_distance(k_uhat, khat_uhat, p),
          step_lp_distance(x, khat_u, p)};
}

// ---------------------------------------------------------------------------
// Distortion curves
// ---------------------------------------------------------------------------

struct CppCurveOptions {
  CppqOptions quant{};
  std::size_t n_eval = 20000;
};

struct CppCurveResult {
  std::vector<DistortionReport> reports;
  std::vector<PoissonQuantizer> quantizers;
};

/// Exact-in-time distances |X - X^|_{L^p_T} of n_paths fresh paths, one column per quantizer.
inline std::vector<double> cpp_path_distances(std::span<const PoissonQuantizer* const> qs, const ProcessSpec& spec,
                                              double p, std::size_t n_paths, const RngStream& stream,
                                              unsigned threads = default_thread_count()) {
  if (stream.id() == static_cast<std::uint64_t>(StreamId::kTraining) ||
      stream.id() == static_cast<std::uint64_t>(StreamId::kSizeTraining))
    throw DomainError("cpp_path_distances: evaluation must not reuse a training stream");
  const std::size_t Q = qs.size();
  std::vector<double> out(n_paths * Q);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    Engine eng = stream.engine(i);
    const JumpRecord rec = simulate_jumps(spec, eng);
    const StepPath x = step_path(rec);
    for (std::size_t k = 0; k < Q; ++k) out[i * Q + k] = step_lp_distance(x, quantize_jumps(*qs[k], rec), p);
  });
  return out;
}

inline ProcessSpec cpp_spec(double lambda, double T, const std::optional<JumpLaw>& law, std::uint64_t seed) {
  ProcessSpec spec;
  spec.horizon = T;
  spec.seed = seed;
  if (law)
    spec.family = CompoundPoisson{lambda, *law};
  else
    spec.family = Poisson{lambda};
  return spec;
}

inline CppCurveResult cpp_distortion_curve_full(double lambda, double T, const std::optional<JumpLaw>& law, double r,
                                                double p, std::span<const std::uint64_t> budgets,
                                                const CppCurveOptions& opts = {}) {
  if (budgets.empty()) throw DomainError("cpp_distortion_curve: empty budget list");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 2) throw BudgetError("cpp_distortion_curve: budgets must be >= 2");
    if (i > 0 && !(budgets[i] > budgets[i - 1])) throw DomainError("cpp_distortion_curve: budgets must be increasing");
  }
  CppCurveResult result;
  for (auto N : budgets) result.quantizers.push_back(build_poisson_quantizer(lambda, T, r, p, N, law, opts.quant));
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const PoissonQuantizer*> qs;
  for (const auto& q : result.quantizers) qs.push_back(&q);
  const ProcessSpec spec = cpp_spec(lambda, T, law, opts.quant.seed);
  const auto d = cpp_path_distances(qs, spec, p, opts.n_eval, RngStream(opts.quant.seed, StreamId::kEvaluation),
                                    opts.quant.threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::size_t Q = qs.size();
  for (std::size_t k = 0; k < Q; ++k) {
    std::vector<double> col(opts.n_eval);
    for (std::size_t i = 0; i < opts.n_eval; ++i) col[i] = d[i * Q + k];
    result.reports.push_back(summarize_distances(budgets[k], r, p, col, secs / static_cast<double>(Q)));
  }
  return result;
}

inline std::vector<DistortionReport> cpp_distortion_curve(double lambda, double T, const std::optional<JumpLaw>& law,
                                                          double r, double p, std::span<const std::uint64_t> budgets,
                                                          const CppCurveOptions& opts = {}) {
  return cpp_distortion_curve_full(lambda, T, law, r, p, budgets, opts).reports;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Directory with "meta", timeBooks/<n>.book and sizeBooks/<n>.book (n from 1),
/// plus sizeBooks/default.book for the compound case.
inline void save_poisson_quantizer(const std::filesystem::path& dir, const PoissonQuantizer& q) {
  std::filesystem::create_directories(dir / "timeBooks");
  {
    std::ofstream os(dir / "meta");
    os << "lambda=" << format_real(q.lambda) << "\nT=" << format_real(q.horizon) << "\nr=" << format_real(q.r)
       << "\np=" << format_real(q.p) << "\ndelta=" << format_real(q.delta) << "\nN=" << q.N << "\nN1=" << q.N1
       << "\nN2=" << q.N2 << '\n';
  }
  for (std::size_t n = 0; n < q.time_books.size(); ++n) {
    std::ofstream os(dir / "timeBooks" / (std::to_string(n + 1) + ".book"));
    write_codebook(os, q.time_books[n]);
  }
  if (q.compound()) {
    std::filesystem::create_directories(dir / "sizeBooks");
    for (std::size_t n = 0; n < q.size_books.size(); ++n) {
      std::ofstream os(dir / "sizeBooks" / (std::to_string(n + 1) + ".book"));
      write_codebook(os, q.size_books[n]);
    }
    std::ofstream os(dir / "sizeBooks" / "default.book");
    write_codebook(os, *q.size_default);
  }
}

inline PoissonQuantizer load_poisson_quantizer(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta");
  if (!is) throw Error("load_poisson_quantizer: missing meta record");
  std::map<std::string, std::string> meta;
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) {
    if (!meta.count(k)) throw Error("load_poisson_quantizer: meta lacks " + k);
    return meta.at(k);
  };
  PoissonQuantizer q;
  q.lambda = std::stod(get("lambda"));
  q.horizon = std::stod(get("T"));
  q.r = std::stod(get("r"));
  q.p = std::stod(get("p"));
  q.delta = std::stod(get("delta"));
  q.N = std::stoull(get("N"));
  q.N1 = std::stoull(get("N1"));
  q.N2 = std::stoull(get("N2"));
  auto load_books = [&](const std::filesystem::path& sub) {
    std::vector<Codebook1D> books;
    for (std::size_t n = 1;; ++n) {
      std::ifstream bs(dir / sub / (std::to_string(n) + ".book"));
      if (!bs) break;
      books.push_back(read_codebook(bs));
    }
    return books;
  };
  auto plan_of = [](const std::vector<Codebook1D>& books, std::uint64_t budget, double p) {
    AllocationPlan plan;
    for (const auto& b : books) plan.sizes.push_back(b.size());
    plan.budget = budget;
    plan.p = p;
    return plan;
  };
  q.time_books = load_books("timeBooks");
  q.time_plan = plan_of(q.time_books, q.N1, q.p);
  std::ifstream ds(dir / "sizeBooks" / "default.book");
  if (ds) {
    q.size_default = read_codebook(ds);
    q.size_books = load_books("sizeBooks");
    q.size_plan = plan_of(q.size_books, q.N2, 1.0);
  }
  return q;
}

}  // namespace fquant
