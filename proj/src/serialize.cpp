#include "relulab/serialize.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

namespace relulab {

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json& require_member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join_path(path, key), "missing required field");
  return *it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

std::uint64_t as_uint(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ConfigError(path, "expected a nonnegative integer");
}

std::vector<double> as_number_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// ---------------------------------------------------------------- documents

json to_json(const TargetSpec& t) { return {{"grid", t.grid()}, {"slopes", t.slopes()}, {"anchor", t.anchor()}}; }

TargetSpec target_from_json(const json& j, const std::string& path) {
  auto grid = as_number_array(require_member(j, "grid", path), join_path(path, "grid"));
  auto slopes = as_number_array(require_member(j, "slopes", path), join_path(path, "slopes"));
  const double anchor = as_number(require_member(j, "anchor", path), join_path(path, "anchor"));
  if (grid.size() < 2) throw ConfigError(join_path(path, "grid"), "needs at least two points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw ConfigError(join_path(path, "grid") + "[" + std::to_string(i) + "]", "grid must be strictly increasing");
  if (slopes.size() + 1 != grid.size())
    throw ConfigError(join_path(path, "slopes"), "expected " + std::to_string(grid.size() - 1) + " slopes");
  return TargetSpec(std::move(grid), std::move(slopes), anchor);
}

json to_json(const PiecewisePoly& p) {
  json pieces = json::array();
  for (const auto& q : p.pieces()) {
    json c = json::array();
    for (int k = 0; k <= q.degree(); ++k) c.push_back(q.coeff(k));
    if (c.empty()) c.push_back(0.0);
    pieces.push_back(std::move(c));
  }
  return {{"breakpoints", p.breakpoints()}, {"pieces", std::move(pieces)}};
}

PiecewisePoly density_from_json(const json& j, const std::string& path) {
  auto bps = as_number_array(require_member(j, "breakpoints", path), join_path(path, "breakpoints"));
  const json& pj = require_member(j, "pieces", path);
  const std::string ppath = join_path(path, "pieces");
  if (!pj.is_array()) throw ConfigError(ppath, "expected an array of coefficient arrays");
  if (bps.size() < 2) throw ConfigError(join_path(path, "breakpoints"), "needs at least two points");
  for (std::size_t i = 1; i < bps.size(); ++i)
    if (!(bps[i] > bps[i - 1]))
      throw ConfigError(join_path(path, "breakpoints") + "[" + std::to_string(i) + "]", "must be strictly increasing");
  if (pj.size() + 1 != bps.size()) throw ConfigError(ppath, "expected " + std::to_string(bps.size() - 1) + " pieces");
  std::vector<Poly> pieces;
  for (std::size_t i = 0; i < pj.size(); ++i) {
    const std::string ip = ppath + "[" + std::to_string(i) + "]";
    auto coeffs = as_number_array(pj[i], ip);
    if (coeffs.empty()) throw ConfigError(ip, "empty coefficient list");
    if (coeffs.size() > static_cast<std::size_t>(kDefaultDegreeCap) + 1) throw ConfigError(ip, "degree above the cap");
    pieces.emplace_back(std::move(coeffs));
  }
  PiecewisePoly rho(std::move(bps), std::move(pieces));
  try {
    require_positive(rho);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return rho;
}

json to_json(const ParamVec& theta) {
  return {{"width", theta.width()}, {"theta", std::vector<double>(theta.values().begin(), theta.values().end())}};
}

ParamVec params_from_json(const json& j, const std::string& path) {
  const std::uint64_t width = as_uint(require_member(j, "width", path), join_path(path, "width"));
  if (width == 0) throw ConfigError(join_path(path, "width"), "must be at least 1");
  auto values = as_number_array(require_member(j, "theta", path), join_path(path, "theta"));
  if (values.size() != ParamVec::dim_for(width))
    throw ConfigError(join_path(path, "theta"), "expected " + std::to_string(ParamVec::dim_for(width)) + " entries");
  return ParamVec(width, std::move(values));
}

json to_json(const ManifoldChart& chart) { return {{"free", chart.free}}; }

ManifoldChart chart_from_json(const json& j, const std::string& path) {
  return {as_number_array(require_member(j, "free", path), join_path(path, "free"))};
}

json to_json(const HessianReport& report) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < report.matrix.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < report.matrix.cols(); ++k) row.push_back(report.matrix(i, k));
    rows.push_back(std::move(row));
  }
  std::vector<double> sv(report.singular_values.data(), report.singular_values.data() + report.singular_values.size());
  return {{"dimension", report.matrix.rows()},
          {"matrix", std::move(rows)},
          {"sigma_min_nonzero", report.sigma_min_nonzero},
          {"lambda_max", report.lambda_max},
          {"numerical_rank", report.numerical_rank},
          {"frobenius", report.frobenius},
          {"singular_values", std::move(sv)}};
}

// ---------------------------------------------------------------- CSV

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw std::runtime_error("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return x;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& rec) {
  out << "n,risk,dist\n";
  for (const auto& row : rec.rows) {
    out << row.n << ',' << format_double(row.risk) << ',';
    if (row.dist) out << format_double(*row.dist);
    out << '\n';
  }
}

std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "n,risk,dist") throw std::runtime_error("csv: expected header n,risk,dist");
  std::vector<TrajectoryRow> rows;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 3) throw std::runtime_error("csv line " + std::to_string(ln) + ": expected 3 columns");
    TrajectoryRow row{static_cast<std::size_t>(parse_double(cells[0], ln)), 0.0, parse_double(cells[1], ln), {}};
    if (!cells[2].empty()) row.dist = parse_double(cells[2], ln);
    rows.push_back(row);
  }
  return rows;
}

void emit_plotdata(std::ostream& out, const TrajectoryRecord& rec, double rho_exp) {
  if (rec.rows.empty()) throw std::invalid_argument("emit_plotdata: empty record");
  if (!(rho_exp >= 0.0 && rho_exp < 1.0)) throw std::invalid_argument("emit_plotdata: rho must lie in [0, 1)");
  out << "n,n_pow,risk,log_risk\n";
  for (const auto& row : rec.rows) {
    const double n = static_cast<double>(row.n);
    const double n_pow = rho_exp == 0.0 ? n : std::pow(n, 1.0 - rho_exp);
    out << row.n << ',' << format_double(n_pow) << ',' << format_double(row.risk) << ','
        << format_double(std::log(row.risk)) << '\n';
  }
}

std::vector<PlotRow> read_plotdata(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "n,n_pow,risk,log_risk")
    throw std::runtime_error("csv: expected header n,n_pow,risk,log_risk");
  std::vector<PlotRow> rows;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 4) throw std::runtime_error("csv line " + std::to_string(ln) + ": expected 4 columns");
    rows.push_back({parse_double(cells[0], ln), parse_double(cells[1], ln), parse_double(cells[2], ln),
                    parse_double(cells[3], ln)});
  }
  return rows;
}

std::string content_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace relulab
