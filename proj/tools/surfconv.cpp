// surfconv: generate coefficient matrices, run experiment suites, summarize runs.
//
// Exit codes: 0 all verdicts pass, 1 a verdict failed or the run could not
// complete, 2 the config or the command line is malformed.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "surfconv/experiment.hpp"

namespace {

namespace ex = surfconv::experiment;
namespace fs = std::filesystem;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kSchema = 2;

std::optional<std::uint64_t> env_seed(bool& malformed) {
  malformed = false;
  const char* v = std::getenv("SURFCONV_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  auto s = ex::parse_seed(v);
  if (!s) malformed = true;
  return s;
}

unsigned resolve_threads(std::optional<unsigned> flag, std::optional<unsigned> config) {
  if (flag && *flag > 0) return *flag;
  if (config) return *config;
  return surfconv::hardware_threads();
}

int gen_matrix(int k, int l, std::optional<std::uint64_t> seed_flag, const std::string& min_det,
               const std::string& out) {
  bool bad_env = false;
  auto seed = seed_flag;
  if (!seed) seed = env_seed(bad_env);
  if (bad_env) {
    std::cerr << "error: SURFCONV_SEED is not a 64-bit unsigned integer\n";
    return kSchema;
  }
  if (!seed) {
    std::cerr << "error: gen-matrix needs --seed or SURFCONV_SEED\n";
    return kSchema;
  }
  if (k < 1 || l < 1 || l > k || k > 16) {
    std::cerr << "error: need 1 <= l <= k <= 16\n";
    return kSchema;
  }
  surfconv::Rational threshold;
  try {
    threshold = ex::parse_rational(nlohmann::json(min_det), "--min-det");
  } catch (const ex::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSchema;
  }
  try {
    const auto C = ex::generate_matrix(k, l, *seed, threshold);
    const auto star = surfconv::check_star(C);
    auto j = C.to_json();
    j["seed"] = *seed;
    j["min_abs_det"] = surfconv::rational_to_json(star.min_abs_det);
    const std::string name = "matrix_k" + std::to_string(k) + "_l" + std::to_string(l) + "_s" + std::to_string(*seed) + ".json";
    ex::write_files_atomically(out, {{name, j.dump(2) + "\n"}});
    std::cout << (fs::path(out) / name).string() << '\n';
    return kPass;
  } catch (const ex::ThresholdTooHigh& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
}

int run(const std::string& config_path, std::optional<std::uint64_t> seed_flag, const std::string& out_flag,
        std::optional<unsigned> threads_flag) {
  ex::ExperimentConfig cfg;
  try {
    cfg = ex::load_config(config_path);
  } catch (const ex::SchemaError& e) {
    std::cerr << "schema error at " << e.what() << '\n';
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  bool bad_env = false;
  if (auto s = env_seed(bad_env)) cfg.seed = *s;
  if (bad_env) {
    std::cerr << "error: SURFCONV_SEED is not a 64-bit unsigned integer\n";
    return kSchema;
  }
  if (seed_flag) cfg.seed = *seed_flag;

  fs::path out;
  if (!out_flag.empty()) {
    out = out_flag;
  } else if (cfg.output) {
    out = fs::path(*cfg.output);
    if (out.is_relative()) out = fs::path(config_path).parent_path() / out;
  } else {
    std::cerr << "schema error at /output: required unless --out is given\n";
    return kSchema;
  }

  ex::RunOutput result;
  try {
    result = ex::run_experiment(cfg, resolve_threads(threads_flag, cfg.threads));
  } catch (const ex::SchemaError& e) {
    std::cerr << "schema error at " << e.what() << '\n';
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }

  auto files = result.artifacts;
  nlohmann::json timing{{"config_hash", cfg.hash()}, {"wall_seconds", result.wall_seconds}};
  files.push_back({"timing.json", timing.dump(2) + "\n"});
  try {
    ex::write_files_atomically(out, files);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }

  std::size_t failed = 0;
  for (const auto& v : result.verdicts) {
    if (v.passed) continue;
    ++failed;
    std::cerr << "FAIL " << v.suite << ' ' << v.matrix_id << ' ' << v.check;
    if (!v.value.is_null()) std::cerr << " value=" << v.value.dump();
    if (!v.bound.is_null()) std::cerr << " bound=" << v.bound.dump();
    if (!v.detail.empty()) std::cerr << " (" << v.detail << ')';
    if (!v.counterexample.is_null()) std::cerr << " counterexample=" << v.counterexample.dump();
    std::cerr << '\n';
  }
  std::cout << ex::suite_name(cfg.suite) << ": " << result.verdicts.size() - failed << '/' << result.verdicts.size()
            << " checks passed, report in " << (out / "run_report.json").string() << '\n';
  return failed == 0 ? kPass : kFail;
}

int report(const std::string& dir) {
  try {
    const auto s = ex::summarize_runs(dir);
    ex::write_files_atomically(dir, s.files);
    std::cout << s.files.front().content;
    return s.passed ? kPass : kFail;
  } catch (const ex::EmptyRunDirectory& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for convolution with quadratic model surfaces"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;

  auto* gen = app.add_subcommand("gen-matrix", "Draw a random integer matrix whose l x l row submatrices are all nonsingular");
  int k = 0, l = 0;
  std::string min_det = "1";
  gen->add_option("--k", k, "Rows (surface dimension)")->required();
  gen->add_option("--l", l, "Columns (codimension)")->required();
  gen->add_option("--min-det", min_det, "Lower bound on every |l x l minor|, integer or n/d")->capture_default_str();
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--out", out, "Output directory")->default_str(".");

  auto* run_cmd = app.add_subcommand("run", "Run the suite named in a config file");
  std::string config;
  run_cmd->add_option("--config", config, "JSON config")->required();
  run_cmd->add_option("--seed", seed, "Seed, overriding SURFCONV_SEED and the config");
  run_cmd->add_option("--out", out, "Output directory, overriding the config");
  run_cmd->add_option("--threads", threads, "Worker threads (results do not depend on this)");

  auto* rep = app.add_subcommand("report", "Summarize every run_report.json below a directory");
  std::string dir;
  rep->add_option("dir", dir, "Run directory");
  rep->add_option("--out", out, "Run directory (same as the positional argument)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kSchema;
  }

  if (gen->parsed()) return gen_matrix(k, l, seed, min_det, out.empty() ? "." : out);
  if (run_cmd->parsed()) return run(config, seed, out, threads);
  if (dir.empty()) dir = out;
  if (dir.empty()) {
    std::cerr << "error: report needs a run directory\n";
    return kSchema;
  }
  return report(dir);
}
