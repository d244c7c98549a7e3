#include <CLI11.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <boost/version.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "fquant/experiment.hpp"

namespace fs = std::filesystem;
using namespace fquant;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCheck = 4;
constexpr const char* kVersion = "1.0.0";

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  const std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(body.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, body.data(), body.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void write_manifest(const fs::path& out, const ExperimentConfig& cfg, const ExperimentOutcome& res) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& rel : res.files) files.push_back({{"path", rel.generic_string()}, {"sha1", git_blob_sha1(out / rel)}});
  nlohmann::json m;
  m["config"] = cfg.echo;
  m["files"] = files;
  m["versions"] = {{"fquant", std::string(kVersion)},
                   {"compiler", std::string(__VERSION__)},
                   {"fftw", std::string(fftw_version)},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", std::string(BOOST_LIB_VERSION)},
                   {"openssl", std::string(OPENSSL_VERSION_TEXT)}};
  std::ofstream os(out / "manifest.json");
  os << m.dump(2) << '\n';
}

struct Flags {
  std::string config;
  std::string out;
  unsigned threads = 0;
  bool dump_paths = false;
};

ExperimentOutcome execute(const ExperimentConfig& cfg, const Flags& flags, fs::path& out) {
  out = flags.out.empty() ? fs::path(cfg.output) : fs::path(flags.out);
  RunOptions ro;
  ro.threads = flags.threads > 0 ? flags.threads : default_thread_count();
  ro.dump_paths = flags.dump_paths;
  std::fprintf(stderr, "running %s into %s with %u thread(s)\n", kind_name(cfg.kind), out.string().c_str(), ro.threads);
  auto res = run_experiment(cfg, out, ro);
  write_manifest(out, cfg, res);
  return res;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const InsufficientPointsError& e) {
    std::fprintf(stderr, "error: insufficient points: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}

int cmd_run(const Flags& flags) {
  return guarded([&] {
    const auto cfg = load_config(flags.config);
    fs::path out;
    const auto res = execute(cfg, flags, out);
    for (const auto& f : res.files) std::printf("%s\n", (out / f).string().c_str());
    std::printf("%s\n", (out / "manifest.json").string().c_str());
    return kExitOk;
  });
}

int cmd_check(const Flags& flags) {
  return guarded([&] {
    const auto cfg = load_config(flags.config);
    fs::path out;
    const auto res = execute(cfg, flags, out);
    const auto rows = evaluate_checks(cfg, res);
    bool ok = true;
    std::printf("%-44s %-6s %s\n", "check", "result", "detail");
    for (const auto& r : rows) {
      std::printf("%-44s %-6s %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL", r.detail.c_str());
      ok = ok && r.pass;
    }
    return ok ? kExitOk : kExitCheck;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fquant: functional quantization experiments"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", flags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory (overrides the config's \"output\")");
    sub->add_option("--threads", flags.threads, "Worker threads (default: FQUANT_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--dump-paths", flags.dump_paths, "Write a few simulated and quantized paths as t,value CSV");
  };
  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts and manifest");
  auto* check = app.add_subcommand("check", "Run an experiment and test it against its acceptance thresholds");
  add_common(run);
  add_common(check);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*run) return cmd_run(flags);
  return cmd_check(flags);
}
