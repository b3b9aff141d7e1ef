// relulab command line: run or validate an experiment config.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "relulab/experiment.hpp"

namespace fs = std::filesystem;
using namespace relulab;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kConfigError = 2, kIoError = 3 };

int do_validate(const std::string& path) {
  try {
    const ExperimentConfig cfg = load_config(path);
    std::cout << "ok: mode " << cfg.mode << ", problem " << content_hash(cfg.problem) << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.field() << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoError;
  }
}

int do_run(const std::string& path, const std::string& out_override, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.field() << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoError;
  }
  if (seed) cfg.seed = *seed;
  const fs::path out = out_override.empty() ? fs::path(cfg.out_dir) : fs::path(out_override);

  Summary s;
  try {
    s = run_experiment(cfg, out);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.field() << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    // a numerical routine refused its input; report it as a failed check
    s.mode = cfg.mode;
    s.problem_hash = content_hash(cfg.problem);
    s.checks.push_back({std::string("error: ") + e.what(), false, 0.0, 0.0});
  }

  const json summary = summary_to_json(s, utc_timestamp());
  std::ofstream f(out / "summary.json");
  if (!(f << summary.dump(2) << "\n")) {
    std::cerr << "io error: cannot write " << (out / "summary.json").string() << "\n";
    return kIoError;
  }
  for (const auto& c : s.checks)
    std::printf("%-4s %-40s value=%-12.6g tolerance=%.3g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value,
                c.tolerance);
  return s.all_pass() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relulab: shallow ReLU risk, Hessian and training-dynamics experiments"};
  app.require_subcommand(1);

  std::string run_path, out_dir;
  std::uint64_t seed_value = 0;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", run_path, "config JSON")->required();
  run->add_option("--out", out_dir, "output directory (overrides output.dir)");
  auto* seed_opt = run->add_option("--seed", seed_value, "seed (overrides the config seed)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "parse and validate a config without running it");
  validate->add_option("config", validate_path, "config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  if (*validate) return do_validate(validate_path);
  std::optional<std::uint64_t> seed;
  if (seed_opt->count() > 0) seed = seed_value;
  return do_run(run_path, out_dir, seed);
}
