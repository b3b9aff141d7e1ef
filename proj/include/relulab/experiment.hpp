#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "relulab/risk.hpp"
#include "relulab/serialize.hpp"

namespace relulab {

inline const std::vector<std::string> kModes = {"check-gradient", "hessian", "manifold",  "gd",
                                                "gf",             "multistart", "rates", "certify-dets"};

/// Parsed and validated run configuration. `params` holds the mode block with
/// every default filled in, so it fully determines the run together with
/// `problem` and `seed`.
struct ExperimentConfig {
  std::string mode;
  json problem;
  json params;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

struct Check {
  std::string name;
  bool pass;
  double value;
  double tolerance;
};

struct Summary {
  std::string mode;
  std::string problem_hash;
  std::vector<Check> checks;
  std::vector<std::string> artifacts;  // file names relative to the output directory
  bool all_pass() const;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ConfigError naming the first offending field.
ExperimentConfig parse_config(const json& doc);
/// Reads and parses a config file; malformed JSON becomes a ConfigError on
/// field "<document>", an unreadable file an IoError.
ExperimentConfig load_config(const std::filesystem::path& path);

/// problem = {"target": ..., "density": ... (optional, default rho = 1), "width": h}.
Problem build_problem(const json& problem, const std::string& path = "problem");

/// Runs the configured mode and writes CSV/JSON artifacts into `out_dir`.
Summary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

json summary_to_json(const Summary& s, const std::string& timestamp);
/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

/// Standard normal parameters whose in-domain kinks stay at least
/// margin * (b - a) away from a and b.
ParamVec sample_regular_theta(std::size_t width, double a, double b, double margin, std::mt19937_64& rng);

/// Random unit vector in the span of the Hessian eigenvectors whose
/// eigenvalues exceed tol * Lambda in magnitude.
std::vector<double> random_range_direction(const Problem& p, const ParamVec& theta, std::mt19937_64& rng);

/// Chart point of the collapsed target, padded to the problem width, and moved
/// by delta along random_range_direction.
ParamVec near_manifold_start(const Problem& p, double delta, std::uint64_t seed);

}  // namespace relulab
