#include "relulab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "relulab/dynamics.hpp"
#include "relulab/hessian.hpp"
#include "relulab/minima.hpp"

namespace relulab {

bool Summary::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

// ---------------------------------------------------------------- config

namespace {

bool is_training(const std::string& mode) { return mode == "gd" || mode == "gf" || mode == "multistart"; }

// Reads optional members of one JSON object, fills defaults into `filled` and
// rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& src, std::string path) : src_(src.is_null() ? json::object() : src), path_(std::move(path)) {
    if (!src_.is_object()) throw ConfigError(path_, "expected an object");
  }

  double number(const std::string& key, double def, const std::function<bool(double)>& ok, const char* what) {
    const std::string p = join_path(path_, key);
    const double x = has(key) ? as_number(src_[key], p) : def;
    if (!ok(x)) throw ConfigError(p, what);
    filled[key] = x;
    return x;
  }
  std::uint64_t count(const std::string& key, std::uint64_t def, std::uint64_t min, std::uint64_t max) {
    const std::string p = join_path(path_, key);
    const std::uint64_t n = has(key) ? as_uint(src_[key], p) : def;
    if (n < min || n > max)
      throw ConfigError(p, "must lie in [" + std::to_string(min) + ", " + std::to_string(max) + "]");
    filled[key] = n;
    return n;
  }
  bool flag(const std::string& key, bool def) {
    bool v = def;
    if (has(key)) {
      if (!src_[key].is_boolean()) throw ConfigError(join_path(path_, key), "expected true or false");
      v = src_[key].get<bool>();
    }
    filled[key] = v;
    return v;
  }
  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& options) {
    const std::string p = join_path(path_, key);
    std::string s = def;
    if (has(key)) {
      if (!src_[key].is_string()) throw ConfigError(p, "expected a string");
      s = src_[key].get<std::string>();
    }
    if (std::find(options.begin(), options.end(), s) == options.end()) {
      std::string all;
      for (const auto& o : options) all += (all.empty() ? "" : ", ") + o;
      throw ConfigError(p, "must be one of: " + all);
    }
    filled[key] = s;
    return s;
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    auto v = has(key) ? as_number_array(src_[key], join_path(path_, key)) : def;
    if (v.empty()) throw ConfigError(join_path(path_, key), "must not be empty");
    filled[key] = v;
    return v;
  }
  /// Raw member for callers that validate it themselves.
  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &src_[key] : nullptr;
  }
  std::string path(const std::string& key) const { return join_path(path_, key); }
  void finish() const {
    for (const auto& [k, v] : src_.items())
      if (!seen_.count(k) && !filled.contains(k)) throw ConfigError(join_path(path_, k), "unknown field");
  }

  json filled = json::object();

 private:
  bool has(const std::string& key) {
    seen_.insert(key);
    return src_.contains(key);
  }
  json src_;
  std::string path_;
  std::set<std::string> seen_;
};

const auto positive = [](double x) { return x > 0.0; };
const auto unit_interval = [](double x) { return x >= 0.0 && x < 1.0; };

json parse_init(const json* src, const std::string& path, std::size_t width) {
  Reader r(src ? *src : json::object(), path);
  const std::string kind = r.choice("kind", "near-manifold", {"near-manifold", "normal", "theta"});
  if (kind == "near-manifold") r.number("delta", 1e-2, positive, "must be positive");
  if (kind == "theta") {
    const json* t = r.raw("theta");
    if (!t) throw ConfigError(r.path("theta"), "missing required field");
    const ParamVec theta = params_from_json(*t, r.path("theta"));
    if (theta.width() != width) throw ConfigError(r.path("theta") + ".width", "must equal problem.width");
    r.filled["theta"] = *t;
  }
  r.finish();
  return r.filled;
}

json parse_params(const std::string& mode, const json& src, const Problem& p) {
  Reader r(src, "params");
  if (mode == "check-gradient") {
    r.count("samples", 100, 1, 100000);
    r.number("tolerance", 1e-6, positive, "must be positive");
    r.number("margin", 1e-3, [](double x) { return x >= 0.0 && x < 0.5; }, "must lie in [0, 0.5)");
    r.flag("hessian", false);
    r.number("hessian_tolerance", 1e-5, positive, "must be positive");
  } else if (mode == "hessian") {
    const std::string at = r.choice("at", "witness", {"witness", "chart", "random", "theta"});
    if (at == "theta") {
      const json* t = r.raw("theta");
      if (!t) throw ConfigError(r.path("theta"), "missing required field");
      const ParamVec theta = params_from_json(*t, r.path("theta"));
      if (theta.width() != p.width()) throw ConfigError(r.path("theta") + ".width", "must equal problem.width");
      r.filled["theta"] = *t;
    }
    r.number("fd_tolerance", 1e-5, positive, "must be positive");
    r.number("symmetry_tolerance", 1e-10, positive, "must be positive");
  } else if (mode == "manifold") {
    r.count("chart_samples", 200, 1, 100000);
    r.count("pad", 2, 0, 64);
    r.number("risk_tolerance", 1e-18, positive, "must be positive");
    r.number("gradient_tolerance", 1e-10, positive, "must be positive");
    r.number("gap_min", 1e3, positive, "must be positive");
  } else if (mode == "gd" || mode == "gf") {
    r.filled["init"] = parse_init(r.raw("init"), r.path("init"), p.width());
    r.count("dist_stride", 0, 0, std::numeric_limits<std::uint32_t>::max());
    if (mode == "gd") {
      const json* g = r.raw("gamma");
      if (!g || (g->is_string() && g->get<std::string>() == "threshold")) {
        r.filled["gamma"] = "threshold";
      } else {
        const double gamma = as_number(*g, r.path("gamma"));
        if (!(gamma > 0.0)) throw ConfigError(r.path("gamma"), "must be positive or \"threshold\"");
        r.filled["gamma"] = gamma;
      }
      r.number("rho_exp", 0.0, unit_interval, "must lie in [0, 1)");
      r.count("steps", 2000, 10, 100000000);
      r.number("r2_min", 0.98, [](double x) { return x >= 0.0 && x <= 1.0; }, "must lie in [0, 1]");
      r.number("slack", 1.5, [](double x) { return x >= 1.0; }, "must be at least 1");
    } else {
      const double dt = r.number("dt", 1e-4, positive, "must be positive");
      const double t_max = r.number("t_max", 5.0, positive, "must be positive");
      if (t_max / dt > 1e8) throw ConfigError(r.path("t_max"), "t_max / dt exceeds 1e8 steps");
      r.number("r2_min", 0.98, [](double x) { return x >= 0.0 && x <= 1.0; }, "must lie in [0, 1]");
      r.number("fit_from", 0.5, unit_interval, "must lie in [0, 1)");
      Reader c(r.raw("consistency") ? *r.raw("consistency") : json::object(), r.path("consistency"));
      c.flag("enabled", false);
      c.number("gamma", 1e-4, positive, "must be positive");
      c.number("t", 1.0, positive, "must be positive");
      c.number("tolerance", 1e-3, positive, "must be positive");
      c.number("ratio_slack", 1.5, [](double x) { return x >= 1.0; }, "must be at least 1");
      c.finish();
      r.filled["consistency"] = c.filled;
    }
  } else if (mode == "multistart") {
    const auto ks = r.numbers("K", {1, 4, 16, 64});
    double prev = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (!(ks[i] >= 1.0 && ks[i] == std::floor(ks[i]) && ks[i] > prev && ks[i] <= 4096))
        throw ConfigError(r.path("K") + "[" + std::to_string(i) + "]",
                          "K values must be increasing integers in [1, 4096]");
      prev = ks[i];
    }
    r.count("batches", 20, 1, 10000);
    r.number("gamma", 0.2, positive, "must be positive");
    r.number("rho_exp", 0.0, unit_interval, "must lie in [0, 1)");
    r.count("steps", 5000, 1, 10000000);
    r.number("threshold", 1e-6, positive, "must be positive");
  } else if (mode == "rates") {
    const auto rhos = r.numbers("rho_grid", {0.0, 0.25, 0.5, 0.75});
    for (std::size_t i = 0; i < rhos.size(); ++i)
      if (!unit_interval(rhos[i])) throw ConfigError(r.path("rho_grid") + "[" + std::to_string(i) + "]", "must lie in [0, 1)");
    r.number("c", 1.0, positive, "must be positive");
    r.number("g", 1.0, positive, "must be positive");
    r.count("min_exponent", 10, 1, 40);
    r.number("refinement_tolerance", 1e-2, positive, "must be positive");
    r.number("closed_form_tolerance", 1e-9, positive, "must be positive");
  } else if (mode == "certify-dets") {
    r.count("instances", 50, 1, 100000);
    r.count("max_pieces", 6, 1, 12);
    r.number("tolerance", 1e-10, positive, "must be positive");
  }
  r.finish();
  return r.filled;
}

}  // namespace

Problem build_problem(const json& problem, const std::string& path) {
  if (!problem.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [k, v] : problem.items())
    if (k != "target" && k != "density" && k != "width") throw ConfigError(join_path(path, k), "unknown field");
  TargetSpec target = target_from_json(require_member(problem, "target", path), join_path(path, "target"));
  const std::uint64_t width = as_uint(require_member(problem, "width", path), join_path(path, "width"));
  if (width == 0 || width > 1024) throw ConfigError(join_path(path, "width"), "must lie in [1, 1024]");
  PiecewisePoly density = PiecewisePoly::constant(target.lo(), target.hi(), 1.0);
  if (problem.contains("density")) density = density_from_json(problem["density"], join_path(path, "density"));
  if (density.lo() != target.lo() || density.hi() != target.hi())
    throw ConfigError(join_path(path, "density.breakpoints"), "density domain must match the target grid ends");
  return Problem(std::move(target), std::move(density), width);
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<document>", "expected a JSON object");
  for (const auto& [k, v] : doc.items())
    if (k != "mode" && k != "seed" && k != "problem" && k != "params" && k != "output")
      throw ConfigError(k, "unknown field");
  ExperimentConfig cfg;
  const json& mode = require_member(doc, "mode", "");
  if (!mode.is_string() || std::find(kModes.begin(), kModes.end(), mode.get<std::string>()) == kModes.end()) {
    std::string all;
    for (const auto& m : kModes) all += (all.empty() ? "" : ", ") + m;
    throw ConfigError("mode", "must be one of: " + all);
  }
  cfg.mode = mode.get<std::string>();
  if (doc.contains("seed")) cfg.seed = as_uint(doc["seed"], "seed");
  cfg.problem = require_member(doc, "problem", "");
  const Problem p = build_problem(cfg.problem);
  if (is_training(cfg.mode) && p.width() < p.target().pieces())
    throw ConfigError("problem.width", "training modes need width >= number of target pieces (" +
                                           std::to_string(p.target().pieces()) + ")");
  if (cfg.mode == "manifold" && p.width() < p.target().collapsed().pieces())
    throw ConfigError("problem.width", "manifold mode needs width >= number of distinct slope runs");
  cfg.params = parse_params(cfg.mode, doc.contains("params") ? doc["params"] : json::object(), p);
  if (cfg.mode == "gd" || cfg.mode == "gf") {
    if (cfg.params["init"]["kind"] == "near-manifold" && p.width() < p.target().collapsed().pieces())
      throw ConfigError("params.init.kind", "near-manifold start needs width >= number of distinct slope runs");
  }
  if (doc.contains("output")) {
    Reader out(doc["output"], "output");
    const json* dir = out.raw("dir");
    if (dir) {
      if (!dir->is_string() || dir->get<std::string>().empty()) throw ConfigError("output.dir", "expected a non-empty string");
      cfg.out_dir = dir->get<std::string>();
    }
    out.finish();
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------- helpers

ParamVec sample_regular_theta(std::size_t width, double a, double b, double margin, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gap = margin * (b - a);
  for (;;) {
    ParamVec theta(width);
    for (double& x : theta.values()) x = normal(rng);
    bool ok = in_region_V(theta, a, b);
    for (std::size_t j = 0; ok && j < width; ++j) {
      const Kink q = breakpoint(theta, j);
      if (!q.infinite && (std::abs(q.value - a) < gap || std::abs(q.value - b) < gap)) ok = false;
    }
    if (ok) return theta;
  }
}

std::vector<double> random_range_direction(const Problem& p, const ParamVec& theta, std::mt19937_64& rng) {
  const Eigen::MatrixXd H = hessian_matrix(p, theta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double lam = ev.cwiseAbs().maxCoeff();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(H.rows());
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (std::abs(ev(k)) > kRankTolerance * lam) u += normal(rng) * es.eigenvectors().col(k);
  if (u.norm() == 0.0) throw std::runtime_error("random_range_direction: Hessian has an empty range");
  u.normalize();
  return {u.data(), u.data() + u.size()};
}

namespace {

ParamVec chart_point(const Problem& p, std::mt19937_64& rng) {
  const TargetSpec reduced = p.target().collapsed();
  const Problem rp(reduced, p.density(), reduced.pieces());
  ParamVec theta = chart_to_params(rp, sample_chart(rp, rng));
  if (p.width() > rp.width()) theta = pad_width(theta, p.width(), p.a());
  return theta;
}

}  // namespace

ParamVec near_manifold_start(const Problem& p, double delta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamVec theta = chart_point(p, rng);
  const auto u = random_range_direction(p, theta, rng);
  for (std::size_t i = 0; i < theta.dim(); ++i) theta[i] += delta * u[i];
  return theta;
}

namespace {

double normwise_relative(std::span<const double> got, std::span<const double> ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num = std::max(num, std::abs(got[i] - ref[i]));
    den = std::max(den, std::abs(ref[i]));
  }
  return num / std::max(den, 1e-300);
}

std::vector<double> fd_risk_gradient(const Problem& p, const ParamVec& theta) {
  std::vector<double> g(theta.dim());
  for (std::size_t i = 0; i < theta.dim(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
    ParamVec up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    g[i] = (risk(p, up) - risk(p, dn)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_gradient_jacobian(const Problem& p, const ParamVec& theta) {
  const auto d = static_cast<Eigen::Index>(theta.dim());
  Eigen::MatrixXd J(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
    ParamVec up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    const auto gu = generalized_gradient(p, up), gd = generalized_gradient(p, dn);
    for (Eigen::Index k = 0; k < d; ++k) J(k, i) = (gu[k] - gd[k]) / (2.0 * h);
  }
  return J;
}

double matrix_relative(const Eigen::MatrixXd& got, const Eigen::MatrixXd& ref) {
  return (got - ref).cwiseAbs().maxCoeff() / std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

struct Run {
  const ExperimentConfig& cfg;
  const Problem& p;
  const std::filesystem::path& dir;
  Summary& s;

  void check(std::string name, bool pass, double value, double tol) {
    s.checks.push_back({std::move(name), pass, value, tol});
  }
  void artifact(const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    s.artifacts.push_back(name);
  }
};

double num(const json& params, const char* key) { return params.at(key).get<double>(); }
std::size_t cnt(const json& params, const char* key) { return params.at(key).get<std::size_t>(); }

// ---------------------------------------------------------------- modes

void mode_check_gradient(Run& r) {
  const json& prm = r.cfg.params;
  std::mt19937_64 rng(r.cfg.seed);
  const std::size_t n = cnt(prm, "samples");
  const bool with_hessian = prm.at("hessian").get<bool>();
  std::ostringstream csv;
  csv << "sample,grad_rel_error" << (with_hessian ? ",hess_rel_error" : "") << '\n';
  double worst = 0.0, worst_h = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const ParamVec theta = sample_regular_theta(r.p.width(), r.p.a(), r.p.b(), num(prm, "margin"), rng);
    const double e = normwise_relative(generalized_gradient(r.p, theta), fd_risk_gradient(r.p, theta));
    worst = std::max(worst, e);
    csv << k << ',' << format_double(e);
    if (with_hessian) {
      const double eh = matrix_relative(hessian_matrix(r.p, theta), fd_gradient_jacobian(r.p, theta));
      worst_h = std::max(worst_h, eh);
      csv << ',' << format_double(eh);
    }
    csv << '\n';
  }
  r.artifact("gradient_check.csv", csv.str());
  r.check("gradient_max_relative_error", worst < num(prm, "tolerance"), worst, num(prm, "tolerance"));
  if (with_hessian)
    r.check("hessian_max_relative_error", worst_h < num(prm, "hessian_tolerance"), worst_h,
            num(prm, "hessian_tolerance"));
}

void mode_hessian(Run& r) {
  const json& prm = r.cfg.params;
  const std::string at = prm.at("at");
  std::mt19937_64 rng(r.cfg.seed);
  ParamVec theta(r.p.width());
  if (at == "witness") {
    const TargetSpec reduced = r.p.target().collapsed();
    theta = witness(Problem(reduced, r.p.density(), reduced.pieces()));
    if (r.p.width() > theta.width()) theta = pad_width(theta, r.p.width(), r.p.a());
    if (r.p.width() < theta.width()) throw ConfigError("problem.width", "witness needs width >= number of slope runs");
  } else if (at == "chart") {
    theta = chart_point(r.p, rng);
  } else if (at == "random") {
    theta = sample_regular_theta(r.p.width(), r.p.a(), r.p.b(), 1e-3, rng);
  } else {
    theta = params_from_json(prm.at("theta"), "params.theta");
  }
  const HessianReport rep = hessian(r.p, theta);
  json doc = to_json(rep);
  doc["theta"] = to_json(theta);
  r.artifact("hessian.json", doc.dump(2) + "\n");

  const double sym = (rep.matrix - rep.matrix.transpose()).cwiseAbs().maxCoeff();
  r.check("symmetry_residual", sym < num(prm, "symmetry_tolerance"), sym, num(prm, "symmetry_tolerance"));
  r.check("lambda_le_frobenius", rep.lambda_max <= rep.frobenius * (1.0 + 1e-12), rep.lambda_max - rep.frobenius, 0.0);
  const double fd = matrix_relative(rep.matrix, fd_gradient_jacobian(r.p, theta));
  r.check("fd_relative_error", fd < num(prm, "fd_tolerance"), fd, num(prm, "fd_tolerance"));
}

void mode_manifold(Run& r) {
  const json& prm = r.cfg.params;
  const TargetSpec reduced = r.p.target().collapsed();
  const std::size_t N = reduced.pieces();
  const Problem rp(reduced, r.p.density(), N);
  const Problem padded = rp.with_width(N + cnt(prm, "pad"));
  const double lam_bound = hessian_lambda_bound(rp);
  std::mt19937_64 rng(r.cfg.seed);

  double max_risk = 0.0, max_grad = 0.0, min_gap = std::numeric_limits<double>::infinity(), max_lam = 0.0;
  std::size_t rank_fail = 0, pad_rank_fail = 0;
  std::ostringstream csv;
  csv << "sample,risk,grad_norm,rank,gap,lambda,padded_rank\n";
  const std::size_t samples = cnt(prm, "chart_samples");
  for (std::size_t k = 0; k <= samples; ++k) {
    // sample 0 is the witness
    const ParamVec theta = k == 0 ? witness(rp) : chart_to_params(rp, sample_chart(rp, rng));
    const double L = risk(rp, theta);
    const auto g = generalized_gradient(rp, theta);
    double gn = 0.0;
    for (double x : g) gn += x * x;
    gn = std::sqrt(gn);
    const HessianReport rep = hessian(rp, theta);
    const double gap = rep.gap_ratio(static_cast<int>(2 * N));
    const HessianReport prep = hessian(padded, pad_width(theta, padded.width(), rp.a()));
    max_risk = std::max(max_risk, L);
    max_grad = std::max(max_grad, gn);
    min_gap = std::min(min_gap, gap);
    max_lam = std::max(max_lam, rep.lambda_max / lam_bound);
    if (rep.numerical_rank != static_cast<int>(2 * N)) ++rank_fail;
    if (prep.numerical_rank != static_cast<int>(2 * N)) ++pad_rank_fail;
    csv << k << ',' << format_double(L) << ',' << format_double(gn) << ',' << rep.numerical_rank << ','
        << format_double(gap) << ',' << format_double(rep.lambda_max) << ',' << prep.numerical_rank << '\n';
  }
  r.artifact("manifold.csv", csv.str());
  r.artifact("witness.json", to_json(witness(rp)).dump(2) + "\n");
  r.check("max_risk", max_risk <= num(prm, "risk_tolerance"), max_risk, num(prm, "risk_tolerance"));
  r.check("max_gradient_norm", max_grad <= num(prm, "gradient_tolerance"), max_grad, num(prm, "gradient_tolerance"));
  r.check("rank_equals_2N_failures", rank_fail == 0, static_cast<double>(rank_fail), 0.0);
  r.check("padded_rank_equals_2N_failures", pad_rank_fail == 0, static_cast<double>(pad_rank_fail), 0.0);
  r.check("min_gap_ratio", min_gap >= num(prm, "gap_min"), min_gap, num(prm, "gap_min"));
  r.check("lambda_over_bound", max_lam <= 1.0, max_lam, 1.0);
}

ParamVec initial_point(const Run& r, const json& init) {
  const std::string kind = init.at("kind");
  if (kind == "theta") return params_from_json(init.at("theta"), "params.init.theta");
  if (kind == "normal") return standard_normal_init(r.p.width(), r.cfg.seed);
  return near_manifold_start(r.p, init.at("delta").get<double>(), r.cfg.seed);
}

void rate_checks(Run& r, const TrajectoryRecord& rec, double rho, double scale, double r2_min,
                 std::optional<double> slack) {
  if (rec.status == RunStatus::diverged) {
    r.check("no_divergence", false, static_cast<double>(*rec.diverged_at), 0.0);
    return;
  }
  const RateFit fit = fit_rate(rec, rho, scale);
  if (fit.exact_convergence) {
    r.check("exact_convergence", true, 0.0, 0.0);
    return;
  }
  r.check("c_fit_positive", fit.c_fit > 0.0, fit.c_fit, 0.0);
  r.check("r2", fit.r2 >= r2_min, fit.r2, r2_min);
  if (slack) {
    double worst = 0.0;
    for (const auto& row : rec.rows) {
      const double x = scale * std::pow(static_cast<double>(row.n), 1.0 - rho);
      worst = std::max(worst, row.risk / (fit.C_fit * std::exp(-fit.c_fit * x)));
    }
    r.check("pointwise_envelope_ratio", worst <= *slack, worst, *slack);
  }
}

void mode_gd(Run& r) {
  const json& prm = r.cfg.params;
  GDConfig g;
  g.gamma = prm.at("gamma").is_string() ? gamma_threshold(r.p) : num(prm, "gamma");
  g.rho_exp = num(prm, "rho_exp");
  g.steps = cnt(prm, "steps");
  g.seed = r.cfg.seed;
  g.dist_stride = cnt(prm, "dist_stride");
  const ParamVec theta0 = initial_point(r, prm.at("init"));
  const TrajectoryRecord rec = gd_run(r.p, theta0, g);
  std::ostringstream traj, plot;
  write_trajectory_csv(traj, rec);
  emit_plotdata(plot, rec, g.rho_exp);
  r.artifact("trajectory.csv", traj.str());
  r.artifact("plotdata.csv", plot.str());
  r.artifact("initial.json", to_json(theta0).dump(2) + "\n");
  rate_checks(r, rec, g.rho_exp, g.gamma, num(prm, "r2_min"), num(prm, "slack"));
}

double max_state_error(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  const std::size_t n = std::min(a.snapshots.size(), b.snapshots.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, distance(a.snapshots[k], b.snapshots[k]));
  return worst;
}

void mode_gf(Run& r) {
  const json& prm = r.cfg.params;
  const ParamVec theta0 = initial_point(r, prm.at("init"));
  const double dt = num(prm, "dt");
  const TrajectoryRecord rec = gf_run(r.p, theta0, num(prm, "t_max"), dt, 0, cnt(prm, "dist_stride"));
  std::ostringstream traj, plot;
  write_trajectory_csv(traj, rec);
  emit_plotdata(plot, rec, 0.0);
  r.artifact("trajectory.csv", traj.str());
  r.artifact("plotdata.csv", plot.str());
  r.artifact("initial.json", to_json(theta0).dump(2) + "\n");
  if (rec.status == RunStatus::diverged) {
    r.check("no_divergence", false, static_cast<double>(*rec.diverged_at), 0.0);
    return;
  }
  // dL/dt = -|G|^2, so the sampled risk may only rise by rounding
  double worst_rise = 0.0;
  for (std::size_t k = 1; k < rec.rows.size(); ++k)
    worst_rise = std::max(worst_rise, (rec.rows[k].risk - rec.rows[k - 1].risk) / std::max(rec.rows[0].risk, 1e-300));
  r.check("risk_nonincreasing", worst_rise <= 1e-12, worst_rise, 1e-12);
  const RateFit fit = fit_rate(rec, 0.0, dt);
  if (fit.exact_convergence) {
    r.check("exact_convergence", true, 0.0, 0.0);
  } else {
    r.check("c_fit_positive", fit.c_fit > 0.0, fit.c_fit, 0.0);
    // the late part of the flow is governed by the slowest nonzero mode
    std::vector<double> n, y;
    const double from = num(prm, "fit_from") * rec.rows.back().t;
    for (const auto& row : rec.rows)
      if (row.t >= from) {
        n.push_back(static_cast<double>(row.n));
        y.push_back(row.risk);
      }
    const RateFit tail = fit_rate(n, y, 0.0, dt);
    r.check("tail_c_fit_positive", tail.exact_convergence || tail.c_fit > 0.0, tail.c_fit, 0.0);
    r.check("tail_r2", tail.exact_convergence || tail.r2 >= num(prm, "r2_min"), tail.r2, num(prm, "r2_min"));
  }

  const json& cons = prm.at("consistency");
  if (!cons.at("enabled").get<bool>()) return;
  const double t = num(cons, "t");
  auto error_at = [&](double gamma) {
    GDConfig g;
    g.gamma = gamma;
    g.steps = static_cast<std::size_t>(std::llround(t / gamma));
    g.snapshot_stride = 1;
    const TrajectoryRecord gd = gd_run(r.p, theta0, g);
    const TrajectoryRecord gf = gf_run(r.p, theta0, static_cast<double>(g.steps) * gamma, gamma, 1);
    return max_state_error(gd, gf);
  };
  const double gamma = num(cons, "gamma");
  const double e1 = error_at(gamma), e2 = error_at(0.5 * gamma);
  const double ratio = e1 / std::max(e2, 1e-300), slack = num(cons, "ratio_slack");
  std::ostringstream csv;
  csv << "gamma,max_state_error\n"
      << format_double(gamma) << ',' << format_double(e1) << '\n'
      << format_double(0.5 * gamma) << ',' << format_double(e2) << '\n';
  r.artifact("consistency.csv", csv.str());
  r.check("gd_gf_state_error", e1 <= num(cons, "tolerance"), e1, num(cons, "tolerance"));
  r.check("gd_gf_error_halving_ratio", ratio >= 2.0 / slack && ratio <= 2.0 * slack, ratio, slack);
}

void mode_multistart(Run& r) {
  const json& prm = r.cfg.params;
  std::vector<std::size_t> ks;
  for (const auto& k : prm.at("K")) ks.push_back(static_cast<std::size_t>(k.get<double>()));
  const std::size_t batches = cnt(prm, "batches"), kmax = ks.back();
  const double threshold = num(prm, "threshold");
  GDConfig g;
  g.gamma = num(prm, "gamma");
  g.rho_exp = num(prm, "rho_exp");
  g.steps = cnt(prm, "steps");

  std::vector<std::size_t> successes(ks.size(), 0);
  std::ostringstream path;
  path << "n,selected,selected_risk\n";
  for (std::size_t bt = 0; bt < batches; ++bt) {
    g.seed = restart_seed(r.cfg.seed, bt);
    const MultiStartResult res = multistart_run(r.p, kmax, g);
    for (std::size_t q = 0; q < ks.size(); ++q) {
      // the first K restarts of a batch form the K-restart experiment
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < ks[q]; ++l) {
        const auto& rows = res.runs[l].rows;
        if (rows.size() == g.steps + 1) best = std::min(best, rows.back().risk);
      }
      if (best < threshold) ++successes[q];
    }
    if (bt == 0)
      for (std::size_t n = 0; n < res.selected.size(); ++n)
        path << n << ',' << res.selected[n] << ',' << format_double(res.selected_risk[n]) << '\n';
  }
  std::ostringstream csv;
  csv << "K,batches,successes,probability,stderr\n";
  std::vector<double> prob(ks.size()), se(ks.size());
  for (std::size_t q = 0; q < ks.size(); ++q) {
    prob[q] = static_cast<double>(successes[q]) / static_cast<double>(batches);
    se[q] = std::sqrt(prob[q] * (1.0 - prob[q]) / static_cast<double>(batches));
    csv << ks[q] << ',' << batches << ',' << successes[q] << ',' << format_double(prob[q]) << ','
        << format_double(se[q]) << '\n';
  }
  r.artifact("multistart.csv", csv.str());
  r.artifact("selected_path.csv", path.str());
  double worst_drop = 0.0;  // in standard errors
  bool monotone = true;
  for (std::size_t q = 1; q < ks.size(); ++q) {
    const double drop = prob[q - 1] - prob[q];
    const double tol = std::max(se[q - 1], se[q]);
    if (drop > tol) monotone = false;
    worst_drop = std::max(worst_drop, drop);
  }
  r.check("success_probability_first_K_positive", prob[0] > 0.0, prob[0], 0.0);
  r.check("success_probability_nondecreasing", monotone, worst_drop, 0.0);
}

void mode_rates(Run& r) {
  const json& prm = r.cfg.params;
  const double c = num(prm, "c"), g = num(prm, "g");
  const std::size_t m = cnt(prm, "min_exponent");
  std::ostringstream csv;
  csv << "rho,gamma,sum,closed_form\n";
  double worst_ref = 0.0, worst_closed = 0.0;
  bool finite = true;
  for (const auto& rj : prm.at("rho_grid")) {
    const double rho = rj.get<double>();
    std::vector<double> coarse, fine;
    for (std::size_t k = 0; k <= m; ++k) coarse.push_back(g * std::exp2(-static_cast<double>(k)));
    for (std::size_t k = 0; k <= 2 * m; ++k) fine.push_back(g * std::exp2(-0.5 * static_cast<double>(k)));
    double max_fine = 0.0;
    for (double gamma : fine) {
      const double s = sum_estimate(rho, c, gamma).value;
      finite = finite && std::isfinite(s);
      max_fine = std::max(max_fine, s);
      csv << format_double(rho) << ',' << format_double(gamma) << ',' << format_double(s) << ',';
      if (rho == 0.0) {
        const double closed = gamma / -std::expm1(-c * gamma);
        worst_closed = std::max(worst_closed, std::abs(s - closed) / closed);
        csv << format_double(closed);
      }
      csv << '\n';
    }
    const double max_coarse = sum_estimate_check(rho, c, g, coarse);
    worst_ref = std::max(worst_ref, std::abs(max_fine - max_coarse) / max_coarse);
  }
  r.artifact("sums.csv", csv.str());
  r.check("sums_finite", finite, finite ? 1.0 : 0.0, 1.0);
  r.check("refinement_variation", worst_ref < num(prm, "refinement_tolerance"), worst_ref,
          num(prm, "refinement_tolerance"));
  r.check("geometric_closed_form_relative_error", worst_closed <= num(prm, "closed_form_tolerance"), worst_closed,
          num(prm, "closed_form_tolerance"));
}

PiecewisePoly random_density(double a, double b, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pieces(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0), level(0.5, 2.0);
  const int k = pieces(rng);
  std::vector<double> bps{a};
  for (int i = 1; i < k; ++i) bps.push_back(a + (b - a) * (static_cast<double>(i) + 0.8 * (u(rng) - 0.5)) / k);
  bps.push_back(b);
  std::vector<double> vals;
  for (std::size_t i = 0; i < bps.size(); ++i) vals.push_back(level(rng));
  std::vector<Poly> polys;
  for (std::size_t i = 0; i + 1 < bps.size(); ++i) {
    const double slope = (vals[i + 1] - vals[i]) / (bps[i + 1] - bps[i]);
    polys.push_back(Poly::linear(vals[i] - slope * bps[i], slope));
  }
  return PiecewisePoly(bps, polys);
}

std::vector<double> random_grid(std::size_t n, double a, double b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(a, b);
  for (;;) {
    std::vector<double> g{a, b};
    for (std::size_t i = 1; i < n; ++i) g.push_back(u(rng));
    std::sort(g.begin(), g.end());
    bool ok = true;
    for (std::size_t i = 1; i < g.size(); ++i) ok = ok && g[i] - g[i - 1] > 0.05 * (b - a);
    if (ok) return g;
  }
}

void mode_certify_dets(Run& r) {
  const json& prm = r.cfg.params;
  std::mt19937_64 rng(r.cfg.seed);
  std::uniform_int_distribution<std::size_t> pieces(1, cnt(prm, "max_pieces"));
  std::uniform_real_distribution<double> lo(-1.0, 0.5), len(0.5, 2.0), mag(0.5, 2.0);
  std::bernoulli_distribution sign(0.5);
  const double tol = num(prm, "tolerance");
  std::ostringstream csv;
  csv << "instance,N,det,product_formula,product_residual,minor_det,scaled_formula,scaling_residual\n";
  bool all_positive = true;
  double worst_prod = 0.0, worst_scale = 0.0;
  for (std::size_t k = 0; k < cnt(prm, "instances"); ++k) {
    const std::size_t N = pieces(rng);
    const double a = lo(rng), b = a + len(rng);
    const auto grid = random_grid(N, a, b, rng);
    const PiecewisePoly rho = random_density(a, b, rng);
    std::vector<double> v(N);
    for (double& x : v) x = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    const double det = moment_matrix(rho, grid).partialPivLu().determinant();
    const double prod = det_product_formula(rho, grid);
    const double res = std::abs(det - prod) / std::abs(prod);
    const double mdet = minor_matrix(v, grid, rho).partialPivLu().determinant();
    const double scaled = minor_det_positive(v, grid, rho);
    const double sres = std::abs(mdet - scaled) / std::abs(scaled);
    all_positive = all_positive && det > 0.0 && prod > 0.0 && mdet > 0.0;
    worst_prod = std::max(worst_prod, res);
    worst_scale = std::max(worst_scale, sres);
    csv << k << ',' << N << ',' << format_double(det) << ',' << format_double(prod) << ',' << format_double(res) << ','
        << format_double(mdet) << ',' << format_double(scaled) << ',' << format_double(sres) << '\n';
  }
  r.artifact("dets.csv", csv.str());
  r.check("determinants_positive", all_positive, all_positive ? 1.0 : 0.0, 1.0);
  r.check("product_formula_residual", worst_prod < tol, worst_prod, tol);
  r.check("scaling_identity_residual", worst_scale < tol, worst_scale, tol);
}

}  // namespace

Summary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const Problem p = build_problem(cfg.problem);
  Summary s;
  s.mode = cfg.mode;
  s.problem_hash = content_hash(cfg.problem);
  Run r{cfg, p, out_dir, s};
  if (cfg.mode == "check-gradient") mode_check_gradient(r);
  else if (cfg.mode == "hessian") mode_hessian(r);
  else if (cfg.mode == "manifold") mode_manifold(r);
  else if (cfg.mode == "gd") mode_gd(r);
  else if (cfg.mode == "gf") mode_gf(r);
  else if (cfg.mode == "multistart") mode_multistart(r);
  else if (cfg.mode == "rates") mode_rates(r);
  else if (cfg.mode == "certify-dets") mode_certify_dets(r);
  else throw ConfigError("mode", "unknown mode");
  return s;
}

json summary_to_json(const Summary& s, const std::string& timestamp) {
  json checks = json::array();
  for (const auto& c : s.checks) {
    json v = std::isfinite(c.value) ? json(c.value) : json(nullptr);
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"value", v}, {"tolerance", c.tolerance}});
  }
  return {{"mode", s.mode},
          {"problem_hash", s.problem_hash},
          {"checks", std::move(checks)},
          {"artifacts", s.artifacts},
          {"pass", s.all_pass()},
          {"metadata", {{"timestamp", timestamp}}}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace relulab
