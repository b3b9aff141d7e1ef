#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relulab/dynamics.hpp"
#include "relulab/hessian.hpp"
#include "relulab/minima.hpp"
#include "relulab/network.hpp"
#include "relulab/piecewise.hpp"

namespace relulab {

using json = nlohmann::json;

/// Invalid configuration or document; `field` is a dotted path such as
/// "problem.target.grid[2]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Typed accessors that throw ConfigError naming the offending field.
const json& require_member(const json& obj, const std::string& key, const std::string& path);
double as_number(const json& j, const std::string& path);
std::uint64_t as_uint(const json& j, const std::string& path);
std::vector<double> as_number_array(const json& j, const std::string& path);
std::string join_path(const std::string& path, const std::string& key);

json to_json(const TargetSpec& t);
TargetSpec target_from_json(const json& j, const std::string& path = "target");

/// {"breakpoints": [...], "pieces": [[c0, c1, ...], ...]} with ascending coefficients.
json to_json(const PiecewisePoly& p);
PiecewisePoly density_from_json(const json& j, const std::string& path = "density");

json to_json(const ParamVec& theta);
ParamVec params_from_json(const json& j, const std::string& path = "theta");

json to_json(const ManifoldChart& chart);
ManifoldChart chart_from_json(const json& j, const std::string& path = "chart");

/// Matrix is stored row-major as a list of rows.
json to_json(const HessianReport& report);

/// Decimal with 17 significant digits; parses back to the same double.
std::string format_double(double x);

/// Columns n,risk,dist; dist is empty when it was not computed.
void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& rec);
std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in);

/// Columns n,n_pow,risk,log_risk with n_pow = n^{1 - rho}. Throws
/// std::invalid_argument for an empty record.
void emit_plotdata(std::ostream& out, const TrajectoryRecord& rec, double rho_exp);

struct PlotRow {
  double n, n_pow, risk, log_risk;
};
std::vector<PlotRow> read_plotdata(std::istream& in);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string content_hash(const json& j);

}  // namespace relulab
