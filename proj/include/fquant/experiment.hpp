#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fquant/fquant.hpp"

namespace fquant {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Invalid configuration; `key` is the dotted path of the offending entry.
struct ConfigError : Error {
  ConfigError(std::string key_path, const std::string& what)
      : Error("config key '" + key_path + "': " + what), key(std::move(key_path)) {}
  std::string key;
};

enum class ExperimentKind { kScalarPierce, kHaarCurve, kCppCurve, kRegularity, kReport };

inline const char* kind_name(ExperimentKind k) {
  static constexpr const char* names[] = {"scalar-pierce", "haar-curve", "cpp-curve", "regularity", "report"};
  return names[static_cast<int>(k)];
}

struct ScalarConfig {
  JumpLaw law = GaussianLaw{};
  std::vector<std::size_t> sizes{4, 8, 16, 32, 64};
  std::size_t train_samples = 100000;
  std::size_t eval_samples = 100000;
};

struct RegularityConfig {
  std::size_t n_paths = 4000;
  int k_min = 2;
  int k_max = 10;
  std::size_t base_points = 32;
  std::size_t batches = 10;
};

/// Optional overrides of the default pass/fail thresholds used by `check`.
struct ExpectConfig {
  std::optional<std::pair<double, double>> b_rate;
  std::optional<std::pair<double, double>> b_regularity;
  std::optional<double> zador_tol;
  std::optional<double> r2_subexp_min;
  std::optional<bool> agreement;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kHaarCurve;
  ProcessSpec process{};
  double r = 2.0;
  double p = 2.0;
  double rho = 2.0;
  double delta = 0.5;
  double c_margin = 0.05;
  std::optional<double> b;
  std::vector<std::uint64_t> budgets;
  std::size_t n_train = 100000;
  std::size_t n_eval = 20000;
  int grid_level = -1;
  std::uint64_t seed = 1;
  std::string output;
  bool fill_budget = false;
  bool center_singletons = false;
  ScalarConfig scalar{};
  RegularityConfig regularity{};
  ExpectConfig expect{};
  /// Parsed configuration with every default filled in.
  nlohmann::json echo;

  bool jump_process() const {
    return std::holds_alternative<Poisson>(process.family) || std::holds_alternative<CompoundPoisson>(process.family);
  }
};

namespace detail {

/// Reads keys of one JSON object and rejects the ones never read.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  bool has(const std::string& key) const { return obj_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    used_.insert(key);
    return obj_.at(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(key), "must be finite");
    return x;
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    return as_count(raw(key), path(key));
  }

  int integer(const std::string& key, int def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<std::uint64_t> counts(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(path(key), "expected an array of positive integers");
    std::vector<std::uint64_t> out;
    for (const auto& e : v) out.push_back(as_count(e, path(key)));
    return out;
  }

  std::pair<double, double> range(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() ||
        !(v[0].get<double>() <= v[1].get<double>()))
      throw ConfigError(path(key), "expected [lo, hi] with lo <= hi");
    return {v[0].get<double>(), v[1].get<double>()};
  }

  void finish() const {
    for (const auto& [k, _] : obj_.items())
      if (!used_.count(k)) throw ConfigError(path(k), "unknown key");
  }

 private:
  static std::uint64_t as_count(const nlohmann::json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(where, "expected a non-negative integer");
  }

  const nlohmann::json& obj_;
  std::string prefix_;
  std::set<std::string> used_;
};

inline JumpLaw parse_law(const nlohmann::json& j, const std::string& prefix) {
  ConfigReader r(j, prefix);
  const std::string type = r.string("type", "gaussian");
  JumpLaw law;
  if (type == "gaussian") {
    law = GaussianLaw{r.number("mean", 0.0), r.number("sd", 1.0)};
  } else if (type == "uniform") {
    law = UniformLaw{r.number("lo", 0.0), r.number("hi", 1.0)};
  } else if (type == "exponential") {
    law = ExponentialLaw{r.number("rate", 1.0)};
  } else if (type == "two-point") {
    law = TwoPointLaw{r.number("a", -1.0), r.number("b", 1.0), r.number("prob_a", 0.5)};
  } else {
    throw ConfigError(r.path("type"), "unknown law '" + type + "' (gaussian, uniform, exponential, two-point)");
  }
  r.finish();
  try {
    validate(law);
  } catch (const DomainError& e) {
    throw ConfigError(prefix, e.what());
  }
  return law;
}

inline nlohmann::json law_json(const JumpLaw& law) {
  return std::visit(
      [](const auto& l) -> nlohmann::json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianLaw>) return {{"type", "gaussian"}, {"mean", l.mean}, {"sd", l.sd}};
        if constexpr (std::is_same_v<L, UniformLaw>) return {{"type", "uniform"}, {"lo", l.lo}, {"hi", l.hi}};
        if constexpr (std::is_same_v<L, ExponentialLaw>) return {{"type", "exponential"}, {"rate", l.rate}};
        if constexpr (std::is_same_v<L, TwoPointLaw>)
          return {{"type", "two-point"}, {"a", l.a}, {"b", l.b}, {"prob_a", l.prob_a}};
      },
      law);
}

inline ProcessSpec parse_process(const nlohmann::json& j, std::uint64_t seed) {
  ConfigReader r(j, "process");
  ProcessSpec spec;
  spec.seed = seed;
  spec.horizon = r.number("horizon", 1.0);
  if (!(spec.horizon > 0.0)) throw ConfigError("process.horizon", "must be positive");
  const std::string family = r.string("family", "brownian");
  if (family == "brownian") {
    spec.family = Brownian{};
  } else if (family == "fbm") {
    const double H = r.number("H", 0.5);
    if (!(H > 0.0 && H < 1.0)) throw ConfigError("process.H", "must lie in (0, 1)");
    spec.family = FBM{H};
  } else if (family == "stable") {
    const double a = r.number("alpha", 1.5);
    if (!(a > 0.0 && a < 2.0)) throw ConfigError("process.alpha", "must lie in (0, 2)");
    spec.family = Stable{a};
  } else if (family == "gamma") {
    const double a = r.number("alpha", 1.0);
    if (!(a > 0.0)) throw ConfigError("process.alpha", "must be positive");
    spec.family = GammaProcess{a};
  } else if (family == "poisson") {
    const double l = r.number("lambda", 1.0);
    if (!(l > 0.0)) throw ConfigError("process.lambda", "must be positive");
    spec.family = Poisson{l};
  } else if (family == "compound-poisson") {
    const double l = r.number("lambda", 1.0);
    if (!(l > 0.0)) throw ConfigError("process.lambda", "must be positive");
    const JumpLaw law = r.has("law") ? parse_law(r.raw("law"), "process.law") : JumpLaw{GaussianLaw{}};
    spec.family = CompoundPoisson{l, law};
  } else {
    throw ConfigError("process.family",
                      "unknown family '" + family + "' (brownian, fbm, stable, gamma, poisson, compound-poisson)");
  }
  r.finish();
  return spec;
}

inline nlohmann::json process_json(const ProcessSpec& spec) {
  nlohmann::json j{{"family", spec.name()}, {"horizon", spec.horizon}};
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, FBM>) j["H"] = f.H;
        if constexpr (std::is_same_v<F, Stable> || std::is_same_v<F, GammaProcess>) j["alpha"] = f.alpha;
        if constexpr (std::is_same_v<F, Poisson>) j["lambda"] = f.lambda;
        if constexpr (std::is_same_v<F, CompoundPoisson>) {
          j["lambda"] = f.lambda;
          j["law"] = law_json(f.law);
        }
      },
      spec.family);
  return j;
}

inline void require_increasing(const std::vector<std::uint64_t>& budgets, std::uint64_t min_value,
                               const std::string& key) {
  if (budgets.empty()) throw ConfigError(key, "must not be empty");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < min_value) throw ConfigError(key, "entries must be >= " + std::to_string(min_value));
    if (i > 0 && !(budgets[i] > budgets[i - 1])) throw ConfigError(key, "entries must be strictly increasing");
  }
}

}  // namespace detail

/// Weight exponent b of phi(u) = u^b used for Haar allocation by default.
inline double default_weight_exponent(const ProcessSpec& spec, double p) {
  if (const auto* f = std::get_if<FBM>(&spec.family)) return f->H;
  if (const auto* s = std::get_if<Stable>(&spec.family)) return 1.0 / s->alpha;
  if (std::holds_alternative<Brownian>(spec.family)) return 0.5;
  return 1.0 / p;
}

/// Parses and validates a configuration document; nothing runs before this succeeds.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  detail::ConfigReader rd(doc, "");
  ExperimentConfig c;
  const std::string kind = rd.string("kind", "");
  if (kind == "scalar-pierce") c.kind = ExperimentKind::kScalarPierce;
  else if (kind == "haar-curve") c.kind = ExperimentKind::kHaarCurve;
  else if (kind == "cpp-curve") c.kind = ExperimentKind::kCppCurve;
  else if (kind == "regularity") c.kind = ExperimentKind::kRegularity;
  else if (kind == "report") c.kind = ExperimentKind::kReport;
  else throw ConfigError("kind", "expected one of scalar-pierce, haar-curve, cpp-curve, regularity, report");

  c.seed = rd.count("seed", 1);
  c.output = rd.string("output", std::string("out/") + kind);
  const bool is_cpp = c.kind == ExperimentKind::kCppCurve;
  c.r = rd.number("r", is_cpp ? 1.0 : 2.0);
  c.p = rd.number("p", is_cpp ? 1.0 : 2.0);
  c.rho = rd.number("rho", 2.0);
  c.delta = rd.number("delta", 0.5);
  c.c_margin = rd.number("c_margin", 0.05);
  if (rd.has("b")) c.b = rd.number("b", 0.5);
  c.n_train = rd.count("n_train", c.n_train);
  c.n_eval = rd.count("n_eval", c.n_eval);
  c.grid_level = rd.integer("grid_level", -1);
  c.fill_budget = rd.boolean("fill_budget", false);
  c.center_singletons = rd.boolean("center_singletons", false);
  if (rd.has("budgets")) c.budgets = rd.counts("budgets");
  if (rd.has("process")) c.process = detail::parse_process(rd.raw("process"), c.seed);
  c.process.seed = c.seed;

  if (rd.has("scalar")) {
    detail::ConfigReader s(rd.raw("scalar"), "scalar");
    if (s.has("law")) c.scalar.law = detail::parse_law(s.raw("law"), "scalar.law");
    if (s.has("sizes")) {
      const auto sizes = s.counts("sizes");
      c.scalar.sizes.assign(sizes.begin(), sizes.end());
    }
    c.scalar.train_samples = s.count("train_samples", c.scalar.train_samples);
    c.scalar.eval_samples = s.count("eval_samples", c.scalar.eval_samples);
    s.finish();
  }
  if (rd.has("regularity")) {
    detail::ConfigReader g(rd.raw("regularity"), "regularity");
    c.regularity.n_paths = g.count("n_paths", c.regularity.n_paths);
    c.regularity.k_min = g.integer("k_min", c.regularity.k_min);
    c.regularity.k_max = g.integer("k_max", c.regularity.k_max);
    c.regularity.base_points = g.count("base_points", c.regularity.base_points);
    c.regularity.batches = g.count("batches", c.regularity.batches);
    g.finish();
  }
  if (rd.has("expect")) {
    detail::ConfigReader e(rd.raw("expect"), "expect");
    if (e.has("b_rate")) c.expect.b_rate = e.range("b_rate");
    if (e.has("b_regularity")) c.expect.b_regularity = e.range("b_regularity");
    if (e.has("zador_tol")) c.expect.zador_tol = e.number("zador_tol", 0.1);
    if (e.has("r2_subexp_min")) c.expect.r2_subexp_min = e.number("r2_subexp_min", 0.9);
    if (e.has("agreement")) c.expect.agreement = e.boolean("agreement", true);
    e.finish();
  }
  rd.finish();

  // Ranges.
  if (!(c.r > 0.0)) throw ConfigError("r", "must be positive");
  if (!(c.p > 0.0)) throw ConfigError("p", "must be positive");
  if (!(c.rho > 0.0)) throw ConfigError("rho", "must be positive");
  if (!(c.delta > 0.0)) throw ConfigError("delta", "must be positive");
  if (c.b && !(*c.b > 0.0)) throw ConfigError("b", "must be positive");
  if (c.n_train < 1) throw ConfigError("n_train", "must be >= 1");
  if (c.n_eval < 2) throw ConfigError("n_eval", "must be >= 2");
  if (c.grid_level > 30) throw ConfigError("grid_level", "must be <= 30 (negative selects the default)");

  const bool uses_curve = c.kind == ExperimentKind::kHaarCurve || c.kind == ExperimentKind::kCppCurve ||
                          c.kind == ExperimentKind::kReport;
  const bool cpp_curve = is_cpp || (c.kind == ExperimentKind::kReport && c.jump_process());
  if (uses_curve) {
    if (!doc.contains("budgets")) throw ConfigError("budgets", "required for kind " + kind);
    detail::require_increasing(c.budgets, cpp_curve ? 2 : 1, "budgets");
  }
  if (cpp_curve) {
    if (!c.jump_process()) throw ConfigError("process.family", "cpp-curve needs poisson or compound-poisson");
    if (!(c.r >= 1.0)) throw ConfigError("r", "must be >= 1 for the Poisson quantizer");
    if (!(c.p >= 1.0)) throw ConfigError("p", "must be >= 1 for the Poisson quantizer");
    if (!(c.p <= c.r)) throw ConfigError("p", "must satisfy p <= r for the Poisson quantizer");
    if (!(1.0 / std::sqrt(c.p * c.r) - c.c_margin > 0.0)) throw ConfigError("c_margin", "leaves no split constant");
  }
  if (c.kind == ExperimentKind::kRegularity || c.kind == ExperimentKind::kReport) {
    const auto& g = c.regularity;
    if (g.k_min < 2 || g.k_max > 14 || g.k_max - g.k_min < 3)
      throw ConfigError("regularity.k_min", "ladder must satisfy 2 <= k_min, k_max <= 14, k_max - k_min >= 3");
    if (g.batches < 2 || g.n_paths < g.batches) throw ConfigError("regularity.n_paths", "need n_paths >= batches >= 2");
    if (const auto* s = std::get_if<Stable>(&c.process.family); s && !(c.rho < s->alpha))
      throw ConfigError("rho", "must be below alpha for a stable process");
  }
  if (c.kind == ExperimentKind::kScalarPierce) {
    if (c.scalar.sizes.empty()) throw ConfigError("scalar.sizes", "must not be empty");
    for (auto n : c.scalar.sizes)
      if (n < 1) throw ConfigError("scalar.sizes", "entries must be >= 1");
    if (c.scalar.train_samples < 1 || c.scalar.eval_samples < 1)
      throw ConfigError("scalar.train_samples", "sample counts must be >= 1");
  }

  c.echo = {{"kind", kind},        {"seed", c.seed},         {"output", c.output},
            {"r", c.r},            {"p", c.p},               {"rho", c.rho},
            {"delta", c.delta},    {"c_margin", c.c_margin}, {"n_train", c.n_train},
            {"n_eval", c.n_eval},  {"grid_level", c.grid_level}, {"fill_budget", c.fill_budget},
            {"center_singletons", c.center_singletons},      {"budgets", c.budgets},
            {"process", detail::process_json(c.process)}};
  c.echo["b"] = c.b ? nlohmann::json(*c.b) : nlohmann::json(default_weight_exponent(c.process, c.p));
  c.echo["scalar"] = {{"law", detail::law_json(c.scalar.law)},
                      {"sizes", c.scalar.sizes},
                      {"train_samples", c.scalar.train_samples},
                      {"eval_samples", c.scalar.eval_samples}};
  c.echo["regularity"] = {{"n_paths", c.regularity.n_paths},
                          {"k_min", c.regularity.k_min},
                          {"k_max", c.regularity.k_max},
                          {"base_points", c.regularity.base_points},
                          {"batches", c.regularity.batches}};
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("<file>", "cannot read " + file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct RunOptions {
  unsigned threads = default_thread_count();
  bool dump_paths = false;
  std::size_t dumped_paths = 4;
};

struct ExperimentOutcome {
  std::vector<std::filesystem::path> files;  // relative to the output directory
  std::vector<DistortionReport> curve;
  std::vector<PiercePoint> pierce;
  std::optional<RegularityEstimate> regularity;
  std::optional<RateReport> report;
};

/// Asymptotic Zador constant lim N e_{N,r} = J^{1/r} ||f||_{1/(1+r)}^{1/r},
/// J = 1/((r+1) 2^r), for laws with a density; nullopt otherwise.
inline std::optional<double> zador_constant(const JumpLaw& law, double r) {
  std::function<double(double)> density;
  double lo = 0.0, hi = 0.0;
  if (const auto* g = std::get_if<GaussianLaw>(&law)) {
    density = [g](double x) {
      const double z = (x - g->mean) / g->sd;
      return std::exp(-0.5 * z * z) / (g->sd * std::sqrt(2.0 * M_PI));
    };
    lo = g->mean - 40.0 * g->sd;
    hi = g->mean + 40.0 * g->sd;
  } else if (const auto* u = std::get_if<UniformLaw>(&law)) {
    density = [u](double) { return 1.0 / (u->hi - u->lo); };
    lo = u->lo;
    hi = u->hi;
  } else if (const auto* e = std::get_if<ExponentialLaw>(&law)) {
    density = [e](double x) { return e->rate * std::exp(-e->rate * x); };
    hi = 200.0 / e->rate;
  } else {
    return std::nullopt;
  }
  const int n = 200000;
  const double h = (hi - lo) / n, q = 1.0 / (1.0 + r);
  CompensatedSum s;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::pow(density(lo + i * h), q);
  }
  const double norm = std::pow(s.value() * h / 3.0, 1.0 + r);
  const double J = 1.0 / ((r + 1.0) * std::pow(2.0, r));
  return std::pow(J * norm, 1.0 / r);
}

namespace detail {

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

  std::ofstream open(const std::filesystem::path& rel) {
    const auto full = root_ / rel;
    std::filesystem::create_directories(full.parent_path());
    std::ofstream os(full, std::ios::binary);
    if (!os) throw Error("cannot write " + full.string());
    files_.push_back(rel);
    return os;
  }

  /// Registers every regular file below `rel` written by another routine.
  void adopt_tree(const std::filesystem::path& rel) {
    std::vector<std::filesystem::path> found;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root_ / rel))
      if (e.is_regular_file()) found.push_back(std::filesystem::relative(e.path(), root_));
    std::sort(found.begin(), found.end());
    files_.insert(files_.end(), found.begin(), found.end());
  }

  const std::filesystem::path& root() const { return root_; }
  std::vector<std::filesystem::path> files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::vector<std::filesystem::path> files_;
};

inline void write_fit_csv(std::ostream& os, std::span<const DistortionReport> curve) {
  const auto pts = curve_points(curve);
  os << "model,exponent,C,R2,N_min,N_max\n";
  const auto poly = fit_polylog(pts);
  os << "polylog," << format_real(poly.exponent) << ',' << format_real(poly.C) << ',' << format_real(poly.r2) << ','
     << poly.n_min << ',' << poly.n_max << '\n';
  if (std::all_of(pts.begin(), pts.end(), [](const CurvePoint& c) { return c.first >= 16; })) {
    const auto sub = fit_subexp(pts);
    os << "subexp," << format_real(sub.exponent) << ',' << format_real(sub.C) << ',' << format_real(sub.r2) << ','
       << sub.n_min << ',' << sub.n_max << '\n';
  }
}

inline void write_modulus_csv(std::ostream& os, const RegularityEstimate& est) {
  os << "h,phi\n";
  for (const auto& [h, phi] : est.modulus) os << format_real(h) << ',' << format_real(phi) << '\n';
}

inline std::string quantizer_dir(std::uint64_t N) { return "quantizers/N" + std::to_string(N); }

inline CurveOptions haar_options(const ExperimentConfig& c, unsigned threads) {
  CurveOptions o;
  o.n_train = c.n_train;
  o.n_eval = c.n_eval;
  o.grid_level = c.grid_level;
  o.seed = c.seed;
  o.threads = threads;
  o.alloc.fill_budget = c.fill_budget;
  o.quant.center_singletons = c.center_singletons;
  o.quant.threads = threads;
  return o;
}

inline CppCurveOptions cpp_options(const ExperimentConfig& c, unsigned threads) {
  CppCurveOptions o;
  o.quant.delta = c.delta;
  o.quant.c_margin = c.c_margin;
  o.quant.n_train = c.n_train;
  o.quant.seed = c.seed;
  o.quant.threads = threads;
  o.n_eval = c.n_eval;
  return o;
}

inline RegularityOptions regularity_options(const ExperimentConfig& c, unsigned threads) {
  RegularityOptions o;
  o.n_paths = c.regularity.n_paths;
  o.base_points = c.regularity.base_points;
  o.batches = c.regularity.batches;
  o.seed = c.seed;
  o.threads = threads;
  return o;
}

inline std::pair<double, std::optional<JumpLaw>> jump_params(const ProcessSpec& spec) {
  if (const auto* p = std::get_if<Poisson>(&spec.family)) return {p->lambda, std::nullopt};
  const auto& cp = std::get<CompoundPoisson>(spec.family);
  return {cp.lambda, cp.law};
}

inline void dump_process_paths(OutputDir& out, const ExperimentConfig& c, const ProductQuantizer* haar,
                               const PoissonQuantizer* cpp, std::size_t count) {
  const int level = c.grid_level >= 0 ? c.grid_level : 10;
  const TimeGrid grid(c.process.horizon, haar ? std::max(level, haar->max_level() + 1) : level);
  const RngStream stream(c.seed, StreamId::kEvaluation);
  const PathSimulator sim(c.process, grid);
  for (std::size_t i = 0; i < count; ++i) {
    std::optional<PathSample> x, xq;
    if (c.jump_process()) {
      Engine eng = stream.engine(i);
      const JumpRecord rec = simulate_jumps(c.process, eng);
      x = jump_path(rec, grid);
      if (cpp) xq = quantize_jump_path(*cpp, rec, grid).path;
    } else {
      x = sim.simulate(stream, i);
      if (haar) xq = quantize_path(*haar, *x).path;
    }
    auto os = out.open("paths/path_" + std::to_string(i) + ".csv");
    write_path_csv(os, *x);
    if (xq) {
      auto qs = out.open("paths/path_" + std::to_string(i) + "_quantized.csv");
      write_path_csv(qs, *xq);
    }
  }
}

}  // namespace detail

/// Runs one experiment, writing every artifact below `out_dir`.
inline ExperimentOutcome run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                        const RunOptions& run = {}) {
  detail::OutputDir out(out_dir);
  ExperimentOutcome res;
  const unsigned threads = run.threads;

  switch (c.kind) {
    case ExperimentKind::kScalarPierce: {
      PierceOptions po;
      po.train_samples = c.scalar.train_samples;
      po.eval_samples = c.scalar.eval_samples;
      po.seed = c.seed;
      const JumpLaw law = c.scalar.law;
      const ScalarSampler sampler = [law](Engine& e) { return draw(law, e); };
      res.pierce = pierce_curve(sampler, c.r, c.delta, c.scalar.sizes, po);
      auto os = out.open("pierce.csv");
      os << "N,error,N_error\n";
      for (const auto& pt : res.pierce) {
        os << pt.N << ',' << format_real(pt.error) << ',' << format_real(pt.scaled) << '\n';
        auto bs = out.open("codebooks/N" + std::to_string(pt.N) + ".book");
        write_codebook(bs, Codebook1D(pt.points, c.r));
      }
      break;
    }
    case ExperimentKind::kHaarCurve: {
      const double b = c.b.value_or(default_weight_exponent(c.process, c.p));
      const auto full =
          distortion_curve_full(c.process, PhiWeights::power(b), c.r, c.p, c.budgets, detail::haar_options(c, threads));
      res.curve = full.reports;
      {
        auto os = out.open("curve.csv");
        write_curve_csv(os, res.curve);
      }
      if (res.curve.size() >= kMinFitPoints) {
        auto os = out.open("fit.csv");
        detail::write_fit_csv(os, res.curve);
      }
      for (const auto& q : full.quantizers) {
        save_quantizer(out.root() / detail::quantizer_dir(q.plan().budget), q);
        out.adopt_tree(detail::quantizer_dir(q.plan().budget));
      }
      if (run.dump_paths) detail::dump_process_paths(out, c, &full.quantizers.back(), nullptr, run.dumped_paths);
      break;
    }
    case ExperimentKind::kCppCurve: {
      const auto [lambda, law] = detail::jump_params(c.process);
      const auto full =
          cpp_distortion_curve_full(lambda, c.process.horizon, law, c.r, c.p, c.budgets, detail::cpp_options(c, threads));
      res.curve = full.reports;
      {
        auto os = out.open("curve.csv");
        write_curve_csv(os, res.curve);
      }
      if (res.curve.size() >= kMinFitPoints) {
        auto os = out.open("fit.csv");
        detail::write_fit_csv(os, res.curve);
      }
      for (const auto& q : full.quantizers) {
        save_poisson_quantizer(out.root() / detail::quantizer_dir(q.N), q);
        out.adopt_tree(detail::quantizer_dir(q.N));
      }
      if (run.dump_paths) detail::dump_process_paths(out, c, nullptr, &full.quantizers.back(), run.dumped_paths);
      break;
    }
    case ExperimentKind::kRegularity: {
      const auto ladder = dyadic_ladder(c.process.horizon, c.regularity.k_min, c.regularity.k_max);
      res.regularity = estimate_regularity(c.process, c.rho, ladder, detail::regularity_options(c, threads));
      {
        auto os = out.open("modulus.csv");
        detail::write_modulus_csv(os, *res.regularity);
      }
      auto os = out.open("regularity.csv");
      os << "family,rho,b_regularity,half_width\n"
         << c.process.name() << ',' << format_real(c.rho) << ',' << format_real(res.regularity->exponent) << ','
         << format_real(res.regularity->half_width) << '\n';
      if (run.dump_paths) detail::dump_process_paths(out, c, nullptr, nullptr, run.dumped_paths);
      break;
    }
    case ExperimentKind::kReport: {
      ReportOptions ro;
      ro.regularity = detail::regularity_options(c, threads);
      ro.haar = detail::haar_options(c, threads);
      ro.cpp = detail::cpp_options(c, threads);
      ro.ladder_k_min = c.regularity.k_min;
      ro.ladder_k_max = c.regularity.k_max;
      res.report = regularity_rate_report(c.process, c.rho, c.r, c.p, c.budgets, ro);
      res.regularity = res.report->regularity;
      res.curve = res.report->curve;
      {
        auto os = out.open("report.csv");
        const RateReport rows[] = {*res.report};
        write_report_csv(os, rows);
      }
      {
        auto os = out.open("curve.csv");
        write_curve_csv(os, res.curve);
      }
      auto os = out.open("modulus.csv");
      detail::write_modulus_csv(os, *res.regularity);
      if (run.dump_paths) detail::dump_process_paths(out, c, nullptr, nullptr, run.dumped_paths);
      break;
    }
  }
  res.files = out.files();
  return res;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Expected regularity exponent and tolerance for a family, if one is known.
inline std::optional<std::pair<double, double>> expected_regularity(const ProcessSpec& spec, double rho) {
  if (std::holds_alternative<Brownian>(spec.family)) return std::pair{0.5, 0.05};
  if (const auto* f = std::get_if<FBM>(&spec.family)) return std::pair{f->H, 0.05};
  if (const auto* s = std::get_if<Stable>(&spec.family)) return std::pair{1.0 / s->alpha, 0.07};
  return std::pair{1.0 / rho, 0.1};
}

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

inline CheckRow in_range(const std::string& name, double v, double lo, double hi) {
  return {name, v >= lo && v <= hi, fmt(v) + " in [" + fmt(lo) + ", " + fmt(hi) + "]"};
}

}  // namespace detail

/// Rows of the pass/fail table for an outcome of `c`. Fits that need more
/// points than the curve has throw InsufficientPointsError.
inline std::vector<CheckRow> evaluate_checks(const ExperimentConfig& c, const ExperimentOutcome& res) {
  using detail::fmt;
  std::vector<CheckRow> rows;
  {
    std::vector<CurvePoint> synth;
    for (std::uint64_t N : {64ull, 256ull, 1024ull, 4096ull, 16384ull})
      synth.emplace_back(N, 2.0 * std::pow(std::log(static_cast<double>(N)), -0.5));
    const auto f = fit_polylog(synth);
    rows.push_back({"synthetic polylog self-test", std::abs(f.exponent - 0.5) <= 1e-10 && std::abs(f.C - 2.0) <= 1e-10,
                    "b=" + fmt(f.exponent) + " C=" + fmt(f.C)});
  }
  switch (c.kind) {
    case ExperimentKind::kScalarPierce: {
      const auto Z = zador_constant(c.scalar.law, c.r);
      if (!Z || *Z == 0.0) {
        rows.push_back({"Zador constant", true, "law has no density; no asymptotic constant to compare"});
        break;
      }
      const double tol = c.expect.zador_tol.value_or(std::holds_alternative<UniformLaw>(c.scalar.law) ? 0.01 : 0.10);
      double max_ratio = 0.0;
      for (const auto& pt : res.pierce) max_ratio = std::max(max_ratio, pt.scaled / *Z);
      const auto& last = res.pierce.back();
      rows.push_back({"N e_N bounded by (1+tol) Z", max_ratio <= 1.0 + tol,
                      "max ratio " + fmt(max_ratio) + ", Z=" + fmt(*Z)});
      rows.push_back({"N e_N at N=" + std::to_string(last.N) + " within tol of Z",
                      std::abs(last.scaled / *Z - 1.0) <= tol, "ratio " + fmt(last.scaled / *Z) + ", tol " + fmt(tol)});
      break;
    }
    case ExperimentKind::kHaarCurve: {
      const auto fit = fit_polylog(curve_points(res.curve));
      const double b = c.b.value_or(default_weight_exponent(c.process, c.p));
      const auto [lo, hi] = c.expect.b_rate.value_or(std::pair{b - 0.15, b + 0.15});
      rows.push_back(detail::in_range("polylog exponent", fit.exponent, lo, hi));
      break;
    }
    case ExperimentKind::kCppCurve: {
      const auto fit = fit_subexp(curve_points(res.curve));
      const double r2_min = c.expect.r2_subexp_min.value_or(0.9);
      rows.push_back({"subexp fit", fit.r2 > r2_min && fit.exponent > 0.0,
                      "c=" + fmt(fit.exponent) + " R2=" + fmt(fit.r2) + " (need c > 0, R2 > " + fmt(r2_min) + ")"});
      if (c.expect.b_rate) {
        const auto poly = fit_polylog(curve_points(res.curve));
        rows.push_back(detail::in_range("polylog exponent", poly.exponent, c.expect.b_rate->first, c.expect.b_rate->second));
      }
      break;
    }
    case ExperimentKind::kRegularity:
    case ExperimentKind::kReport: {
      const auto exp = expected_regularity(c.process, c.rho);
      const auto [lo, hi] = c.expect.b_regularity.value_or(std::pair{exp->first - exp->second, exp->first + exp->second});
      rows.push_back(detail::in_range("regularity exponent", res.regularity->exponent, lo, hi));
      if (c.kind == ExperimentKind::kReport) {
        const bool want = c.expect.agreement.value_or(!c.jump_process());
        rows.push_back({"agreement flag", res.report->agreement == want,
                        std::string(res.report->agreement ? "true" : "false") + ", expected " + (want ? "true" : "false") +
                            " (b_reg=" + fmt(res.report->b_regularity) + ", b_rate=" + fmt(res.report->b_rate) + ")"});
        if (c.expect.b_rate)
          rows.push_back(detail::in_range("polylog exponent", res.report->b_rate, c.expect.b_rate->first,
                                          c.expect.b_rate->second));
      }
      break;
    }
  }
  return rows;
}

}  // namespace fquant
