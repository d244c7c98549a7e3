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
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fquant/alloc.hpp"
#include "fquant/core.hpp"
#include "fquant/haar.hpp"
#include "fquant/parallel.hpp"
#include "fquant/procsim.hpp"
#include "fquant/quant1d.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Distortion reports
// ---------------------------------------------------------------------------

struct DistortionReport {
  std::uint64_t N = 1;
  double r = 2.0;
  double p = 2.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double wall_seconds = 0.0;
};

/// (mean d_i^r)^{1/r} with a delta-method standard error from the r-th powers.
inline DistortionReport summarize_distances(std::uint64_t N, double r, double p, std::span<const double> distances,
                                            double wall_seconds = 0.0) {
  if (distances.empty()) throw DomainError("summarize_distances: no paths");
  const double n = static_cast<double>(distances.size());
  CompensatedSum s1;
  for (double d : distances) s1 += pow_abs(d, r);
  const double mean = s1.value() / n;
  CompensatedSum s2;
  for (double d : distances) {
    const double y = pow_abs(d, r) - mean;
    s2 += y * y;
  }
  const double var = distances.size() > 1 ? s2.value() / (n - 1.0) : 0.0;
  DistortionReport rep;
  rep.N = N;
  rep.r = r;
  rep.p = p;
  rep.estimate = std::pow(mean, 1.0 / r);
  rep.std_error = mean > 0.0 ? std::pow(mean, 1.0 / r - 1.0) / r * std::sqrt(var / n) : 0.0;
  rep.n_paths = distances.size();
  rep.wall_seconds = wall_seconds;
  return rep;
}

inline void write_curve_csv(std::ostream& os, std::span<const DistortionReport> curve) {
  os << "N,r,p,estimate,stderr,n_paths\n";
  for (const auto& d : curve)
    os << d.N << ',' << format_real(d.r) << ',' << format_real(d.p) << ',' << format_real(d.estimate) << ','
       << format_real(d.std_error) << ',' << d.n_paths << '\n';
}

// ---------------------------------------------------------------------------
// Product quantizer
// ---------------------------------------------------------------------------

struct QuantizerOptions {
  /// Size-1 slots take the empirical L^r center instead of 0.
  bool center_singletons = false;
  LloydOptions lloyd{};
  unsigned threads = default_thread_count();
};

/// Per-coefficient codebooks for flat Haar indices [0, books.size()); all
/// later coefficients quantize to 0.
class ProductQuantizer {
 public:
  ProductQuantizer(AllocationPlan plan, std::vector<Codebook1D> books, double horizon, double r,
                   std::size_t train_samples = 0, std::uint64_t train_stream = static_cast<std::uint64_t>(StreamId::kTraining))
      : plan_(std::move(plan)),
        books_(std::move(books)),
        horizon_(horizon),
        r_(r),
        train_samples_(train_samples),
        train_stream_(train_stream) {
    if (!(horizon_ > 0.0)) throw DomainError("ProductQuantizer: horizon must be positive");
    if (books_.size() < plan_.depth()) throw DomainError("ProductQuantizer: fewer codebooks than plan slots");
    for (std::size_t j = 0; j < books_.size(); ++j)
      if (books_[j].size() != plan_.size_at(j)) throw DomainError("ProductQuantizer: codebook size differs from plan");
    if (plan_.product() > plan_.budget) throw BudgetError("ProductQuantizer: product of sizes exceeds the budget");
  }

  const AllocationPlan& plan() const { return plan_; }
  std::span<const Codebook1D> books() const { return books_; }
  double horizon() const { return horizon_; }
  double r() const { return r_; }
  std::size_t train_samples() const { return train_samples_; }
  std::uint64_t train_stream() const { return train_stream_; }
  std::size_t active_count() const { return books_.size(); }
  /// Finest Haar level with a codebook.
  int max_level() const { return haar_max_level_for(std::max<std::size_t>(books_.size(), 1)); }

  /// Number of distinct reconstructions, saturated at UINT64_MAX.
  std::uint64_t cardinality() const {
    unsigned __int128 acc = 1;
    for (const auto& b : books_) {
      acc *= b.size();
      if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(acc);
  }

  ProductQuantizer scaled(double lambda) const {
    std::vector<Codebook1D> b;
    b.reserve(books_.size());
    for (const auto& cb : books_) b.push_back(cb.scaled(lambda));
    return ProductQuantizer(plan_, std::move(b), horizon_, r_, train_samples_, train_stream_);
  }

  /// Codebooks shifted by the coefficients of `shift` (extended with
  /// singletons so every nonzero coefficient of the shift is covered).
  ProductQuantizer translated(const HaarCoeffTree& shift) const {
    if (!(std::abs(shift.horizon() - horizon_) <= 1e-12 * horizon_)) throw DomainError("translated: horizon mismatch");
    std::vector<Codebook1D> b(books_);
    while (b.size() < shift.size()) b.push_back(Codebook1D::singleton(0.0, r_));
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = b[j].translated(j < shift.size() ? shift[j] : 0.0);
    return ProductQuantizer(plan_, std::move(b), horizon_, r_, train_samples_, train_stream_);
  }

 private:
  AllocationPlan plan_;
  std::vector<Codebook1D> books_;
  double horizon_;
  double r_;
  std::size_t train_samples_;
  std::uint64_t train_stream_;
};

/// Haar coefficients [0, count) of n_paths simulated paths, one SampleSet per index.
inline std::vector<SampleSet> collect_coefficient_samples(const PathSimulator& sim, std::size_t count,
                                                          std::size_t n_paths, const RngStream& stream,
                                                          unsigned threads = default_thread_count()) {
  const int level = haar_max_level_for(std::max<std::size_t>(count, 1));
  std::vector<double> flat(n_paths * count);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    const auto tree = forward_transform(sim.simulate(stream, i), level);
    for (std::size_t j = 0; j < count; ++j) flat[i * count + j] = tree[j];
  });
  std::vector<SampleSet> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    out[j].values.resize(n_paths);
    out[j].law = sim.spec().name() + " coefficient " + std::to_string(j);
    for (std::size_t i = 0; i < n_paths; ++i) out[j].values[i] = flat[i * count + j];
  }
  return out;
}

namespace detail {

/// Lloyd codebook of exactly N points. Laws with fewer than N atoms get one
/// point per atom plus padding points that no sample is nearest to.
inline Codebook1D train_exact_size(const SampleSet& samples, std::size_t N, double r, const LloydOptions& lloyd) {
  const std::size_t distinct = SortedSamples(samples.values).distinct();
  const Codebook1D cb = train_lloyd(samples, std::min(N, distinct), r, lloyd);
  return pad_codebook(cb, N, cb.points().back() + 1.0);
}

inline Codebook1D singleton_book(const SampleSet* samples, double r, const QuantizerOptions& opts) {
  if (opts.center_singletons && samples) return train_lloyd(*samples, 1, r, opts.lloyd);
  return Codebook1D::singleton(0.0, r);
}

}  // namespace detail

/// Trains one codebook per plan slot on that coefficient's samples. With
/// center_singletons, every index that has samples gets at least its 1-point
/// center.
inline ProductQuantizer build(const AllocationPlan& plan, std::span<const SampleSet> coeff_samples, double r,
                              double horizon, const QuantizerOptions& opts = {}) {
  if (coeff_samples.size() < plan.depth()) throw DomainError("build: coefficient samples do not cover the plan depth");
  const std::size_t count = opts.center_singletons ? coeff_samples.size() : plan.depth();
  std::vector<std::optional<Codebook1D>> slots(count);
  parallel_for(count, opts.threads, [&](std::size_t j) {
    const std::uint64_t N = plan.size_at(j);
    slots[j] = N >= 2 ? detail::train_exact_size(coeff_samples[j], N, r, opts.lloyd)
                      : detail::singleton_book(&coeff_samples[j], r, opts);
  });
  std::vector<Codebook1D> books;
  books.reserve(count);
  for (auto& s : slots) books.push_back(std::move(*s));
  const std::size_t n_train = coeff_samples.empty() ? 0 : coeff_samples[0].values.size();
  return ProductQuantizer(plan, std::move(books), horizon, r, n_train);
}

struct QuantizedPath {
  PathSample path;
  std::vector<std::size_t> codes;
};

/// Transform, per-coefficient nearest neighbour, reconstruct on the path's grid.
inline QuantizedPath quantize_tree(const ProductQuantizer& q, const HaarCoeffTree& tree, const TimeGrid& grid) {
  HaarCoeffTree qt = HaarCoeffTree::zeros(tree.horizon(), tree.max_level());
  std::vector<std::size_t> codes(q.active_count());
  for (std::size_t j = 0; j < q.active_count(); ++j) {
    const auto nn = nearest(q.books()[j], tree[j]);
    codes[j] = nn.index;
    qt[j] = nn.point;
  }
  return {reconstruct(qt, grid), std::move(codes)};
}

inline QuantizedPath quantize_path(const ProductQuantizer& q, const PathSample& path) {
  if (!(std::abs(path.grid().horizon() - q.horizon()) <= 1e-12 * q.horizon()))
    throw DomainError("quantize_path: horizon mismatch");
  return quantize_tree(q, forward_transform(path, q.max_level()), path.grid());
}

/// Per-path L^p distances |X - X^|, one column per quantizer: out[i * Q + k].
inline std::vector<double> path_distances(std::span<const ProductQuantizer* const> qs, const PathSimulator& sim,
                                          double p, std::size_t n_paths, const RngStream& stream,
                                          unsigned threads = default_thread_count()) {
  for (const auto* q : qs)
    if (q->train_stream() == stream.id()) throw DomainError("path_distances: evaluation stream equals training stream");
  int level = 0;
  for (const auto* q : qs) level = std::max(level, q->max_level());
  if (sim.grid().levels() < level + 1) throw ResolutionError("path_distances: grid too coarse for the quantizers");
  const std::size_t Q = qs.size();
  std::vector<double> out(n_paths * Q);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    const PathSample x = sim.simulate(stream, i);
    const HaarCoeffTree tree = forward_transform(x, level);
    for (std::size_t k = 0; k < Q; ++k) out[i * Q + k] = lp_distance(x, quantize_tree(*qs[k], tree, x.grid()).path, p);
  });
  return out;
}

/// Monte Carlo estimate of || |X - X^|_{L^p_T} ||_r on fresh paths.
inline DistortionReport estimate_distortion(const ProductQuantizer& q, const PathSimulator& sim, double r, double p,
                                            std::size_t n_paths, const RngStream& stream,
                                            unsigned threads = default_thread_count()) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProductQuantizer* qs[] = {&q};
  const auto d = path_distances(qs, sim, p, n_paths, stream, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summarize_distances(q.plan().budget, r, p, d, secs);
}

// ---------------------------------------------------------------------------
// Distortion curves
// ---------------------------------------------------------------------------

struct CurveOptions {
  std::size_t n_train = 100000;
  std::size_t n_eval = 20000;
  /// Simulation grid level; negative selects max(10, finest level + 4).
  int grid_level = -1;
  std::uint64_t seed = 1;
  unsigned threads = default_thread_count();
  AllocatePhiOptions alloc{};
  QuantizerOptions quant{};
};

struct CurveResult {
  std::vector<DistortionReport> reports;
  std::vector<ProductQuantizer> quantizers;
};

inline int default_grid_level(int finest_haar_level) { return std::max(10, finest_haar_level + 4); }

/// Allocates, trains and evaluates product quantizers for each budget.
/// Training coefficients are shared across budgets, codebooks are cached per
/// (index, size), and every budget is evaluated on the same fresh paths.
inline CurveResult distortion_curve_full(const ProcessSpec& spec, const PhiWeights& weights, double r, double p,
                                         std::span<const std::uint64_t> budgets, const CurveOptions& opts = {}) {
  if (budgets.empty()) throw DomainError("distortion_curve: empty budget list");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (!(budgets[i] > budgets[i - 1])) throw DomainError("distortion_curve: budgets must be increasing");
  spec.validate();
  std::vector<AllocationPlan> plans;
  std::size_t count = 1;
  for (auto N : budgets) {
    plans.push_back(allocate_phi(weights, N, opts.alloc));
    count = std::max(count, plans.back().depth());
  }
  const int level = opts.grid_level >= 0 ? opts.grid_level : default_grid_level(haar_max_level_for(count));
  const PathSimulator sim(spec, TimeGrid(spec.horizon, level));
  const auto samples =
      collect_coefficient_samples(sim, count, opts.n_train, RngStream(opts.seed, StreamId::kTraining), opts.threads);

  std::map<std::pair<std::size_t, std::uint64_t>, Codebook1D> cache;
  std::vector<std::pair<std::size_t, std::uint64_t>> needed;
  for (const auto& plan : plans)
    for (std::size_t j = 0; j < plan.depth(); ++j)
      if (plan.sizes[j] >= 2) needed.emplace_back(j, plan.sizes[j]);
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  std::vector<std::optional<Codebook1D>> trained(needed.size());
  parallel_for(needed.size(), opts.threads, [&](std::size_t i) {
    trained[i] = detail::train_exact_size(samples[needed[i].first], needed[i].second, r, opts.quant.lloyd);
  });
  for (std::size_t i = 0; i < needed.size(); ++i) cache.emplace(needed[i], std::move(*trained[i]));

  CurveResult result;
  for (const auto& plan : plans) {
    const std::size_t n_books = opts.quant.center_singletons ? count : plan.depth();
    std::vector<Codebook1D> books;
    for (std::size_t j = 0; j < n_books; ++j) {
      const auto N = plan.size_at(j);
      books.push_back(N >= 2 ? cache.at({j, N}) : detail::singleton_book(&samples[j], r, opts.quant));
    }
    result.quantizers.emplace_back(plan, std::move(books), spec.horizon, r, opts.n_train);
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const ProductQuantizer*> qs;
  for (const auto& q : result.quantizers) qs.push_back(&q);
  const auto d = path_distances(qs, sim, p, opts.n_eval, RngStream(opts.seed, StreamId::kEvaluation), opts.threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::size_t Q = qs.size();
  for (std::size_t k = 0; k < Q; ++k) {
    std::vector<double> col(opts.n_eval);
    for (std::size_t i = 0; i < opts.n_eval; ++i) col[i] = d[i * Q + k];
    result.reports.push_back(summarize_distances(budgets[k], r, p, col, secs / static_cast<double>(Q)));
  }
  return result;
}

inline std::vector<DistortionReport> distortion_curve(const ProcessSpec& spec, const PhiWeights& weights, double r,
                                                      double p, std::span<const std::uint64_t> budgets,
                                                      const CurveOptions& opts = {}) {
  return distortion_curve_full(spec, weights, r, p, budgets, opts).reports;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Directory with "plan" (plan record) and "books/<j>.book" per coefficient.
inline void save_quantizer(const std::filesystem::path& dir, const ProductQuantizer& q) {
  std::filesystem::create_directories(dir / "books");
  {
    std::ofstream os(dir / "plan");
    write_plan(os, q.plan());
    os << "horizon=" << format_real(q.horizon()) << '\n' << "r=" << format_real(q.r()) << '\n';
  }
  for (std::size_t j = 0; j < q.active_count(); ++j) {
    std::ofstream os(dir / "books" / (std::to_string(j) + ".book"));
    write_codebook(os, q.books()[j]);
  }
}

inline ProductQuantizer load_quantizer(const std::filesystem::path& dir) {
  std::ifstream is(dir / "plan");
  if (!is) throw Error("load_quantizer: missing plan record");
  AllocationPlan plan = read_plan(is);
  std::string line;
  double horizon = 1.0, r = 2.0;
  while (std::getline(is, line)) {
    if (line.rfind("horizon=", 0) == 0) horizon = std::stod(line.substr(8));
    if (line.rfind("r=", 0) == 0) r = std::stod(line.substr(2));
  }
  std::vector<Codebook1D> books;
  for (std::size_t j = 0;; ++j) {
    std::ifstream bs(dir / "books" / (std::to_string(j) + ".book"));
    if (!bs) break;
    books.push_back(read_codebook(bs));
  }
  return ProductQuantizer(std::move(plan), std::move(books), horizon, r);
}

}  // namespace fquant
