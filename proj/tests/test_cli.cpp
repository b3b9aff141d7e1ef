#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "relulab/experiment.hpp"
#include "relulab/serialize.hpp"

using namespace relulab;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = RELULAB_SOURCE_DIR;
const fs::path kBinary = RELULAB_BIN;

const fs::path kScratch = fs::temp_directory_path() / ("relulab_cli_" + std::to_string(::getpid()));

struct Cleanup {
  ~Cleanup() {
    std::error_code ec;
    fs::remove_all(kScratch, ec);
  }
} cleanup;

fs::path scratch(const std::string& name) {
  const fs::path d = kScratch / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string err;
};

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = kBinary.string() + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

// The subset of JSON Schema used by the shipped summary schema.
void validate_schema(const json& schema, const json& doc, const std::string& at, std::vector<std::string>& errors) {
  if (schema.contains("type")) {
    std::vector<std::string> types;
    if (schema["type"].is_array())
      for (const auto& t : schema["type"]) types.push_back(t);
    else
      types.push_back(schema["type"]);
    bool ok = false;
    for (const auto& t : types)
      ok = ok || (t == "object" && doc.is_object()) || (t == "array" && doc.is_array()) ||
           (t == "string" && doc.is_string()) || (t == "number" && doc.is_number()) ||
           (t == "boolean" && doc.is_boolean()) || (t == "null" && doc.is_null());
    if (!ok) {
      errors.push_back(at + ": wrong type");
      return;
    }
  }
  if (schema.contains("enum") && std::find(schema["enum"].begin(), schema["enum"].end(), doc) == schema["enum"].end())
    errors.push_back(at + ": not in enum");
  if (schema.contains("pattern") && !std::regex_search(doc.get<std::string>(), std::regex(schema["pattern"].get<std::string>())))
    errors.push_back(at + ": pattern mismatch");
  if (doc.is_object()) {
    for (const auto& r : schema.value("required", json::array()))
      if (!doc.contains(r)) errors.push_back(at + ": missing " + r.get<std::string>());
    const json props = schema.value("properties", json::object());
    for (const auto& [k, v] : doc.items()) {
      if (props.contains(k))
        validate_schema(props[k], v, at + "." + k, errors);
      else if (schema.value("additionalProperties", true) == false)
        errors.push_back(at + ": unexpected " + k);
    }
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>()) errors.push_back(at + ": too short");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < doc.size(); ++i)
        validate_schema(schema["items"], doc[i], at + "[" + std::to_string(i) + "]", errors);
  }
}

const char* kAbsProblem = R"("problem": {"target": {"grid": [0, 0.5, 1], "slopes": [-1, 1], "anchor": 0.5}, "width": 2})";

}  // namespace

TEST_CASE("every shipped config passes and its summary matches the schema") {
  const json schema = json::parse(slurp(kSource / "schemas" / "summary.schema.json"));
  for (const auto& entry : fs::directory_iterator(kSource / "configs")) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const fs::path out = scratch(entry.path().stem().string());
    const auto r = cli("run " + entry.path().string() + " --out " + out.string(), out);
    CHECK(r.code == 0);
    const json summary = json::parse(slurp(out / "summary.json"));
    std::vector<std::string> errors;
    validate_schema(schema, summary, "$", errors);
    CHECK(errors.empty());
    for (const auto& e : errors) MESSAGE(e);
    for (const auto& a : summary["artifacts"]) CHECK(fs::exists(out / a.get<std::string>()));
  }
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  SUBCASE("failed check") {
    const auto cfg = write_config(dir, std::string(R"({"mode": "check-gradient", "seed": 1, )") + kAbsProblem +
                                           R"(, "params": {"samples": 3, "tolerance": 1e-30}})");
    CHECK(cli("run " + cfg.string() + " --out " + (dir / "o").string(), dir).code == 1);
  }
  SUBCASE("bad field is named") {
    const auto cfg = write_config(
        dir, R"({"mode": "gd", "problem": {"target": {"grid": [0, 0.5, 0.5], "slopes": [-1, 1], "anchor": 0.5}, "width": 2}})");
    const auto r = cli("run " + cfg.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("problem.target.grid[2]") != std::string::npos);
    CHECK(cli("validate " + cfg.string(), dir).code == 2);
  }
  SUBCASE("unknown parameter") {
    const auto cfg = write_config(dir, std::string(R"({"mode": "gd", )") + kAbsProblem + R"(, "params": {"stpes": 5}})");
    const auto r = cli("validate " + cfg.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("params.stpes") != std::string::npos);
  }
  SUBCASE("narrow training width") {
    const auto cfg = write_config(
        dir, R"({"mode": "gd", "problem": {"target": {"grid": [0, 0.5, 1], "slopes": [-1, 1], "anchor": 0.5}, "width": 1}})");
    const auto r = cli("validate " + cfg.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("problem.width") != std::string::npos);
  }
  SUBCASE("malformed json") {
    const auto cfg = write_config(dir, R"({"mode": "gd", )");
    const auto r = cli("run " + cfg.string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("<document>") != std::string::npos);
  }
  SUBCASE("io errors") {
    CHECK(cli("run " + (dir / "missing.json").string(), dir).code == 3);
    const auto cfg = write_config(dir, std::string(R"({"mode": "rates", )") + kAbsProblem + "}");
    std::ofstream(dir / "blocker") << "x";
    CHECK(cli("run " + cfg.string() + " --out " + (dir / "blocker" / "sub").string(), dir).code == 3);
    CHECK(cli("validate " + cfg.string(), dir).code == 0);
  }
}

TEST_CASE("plot data") {
  TrajectoryRecord rec;
  rec.rows = {{0, 0.0, 1.0, {}}, {1, 0.1, 0.1234567890123456789, {}}, {2, 0.2, 3.0e-17, {}}};
  std::ostringstream out;
  emit_plotdata(out, rec, 0.0);
  std::istringstream in(out.str());
  const auto rows = read_plotdata(in);
  REQUIRE(rows.size() == 3);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].n_pow == rows[i].n);
    CHECK(rows[i].risk == rec.rows[i].risk);
  }
  std::ostringstream half;
  emit_plotdata(half, rec, 0.5);
  std::istringstream hin(half.str());
  CHECK(read_plotdata(hin)[2].n_pow == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(emit_plotdata(out, TrajectoryRecord{}, 0.0), std::invalid_argument);
}

TEST_CASE("trajectory csv round trip is bit exact") {
  const Problem p(TargetSpec({0.0, 0.5, 1.0}, {-1.0, 1.0}, 0.5), PiecewisePoly::constant(0.0, 1.0, 1.0), 2);
  const auto rec = gd_run(p, standard_normal_init(2, 3), {0.05, 0.0, 200, 0, 50, 0});
  std::ostringstream out;
  write_trajectory_csv(out, rec);
  std::istringstream in(out.str());
  const auto rows = read_trajectory_csv(in);
  REQUIRE(rows.size() == rec.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].n == rec.rows[i].n);
    CHECK(rows[i].risk == rec.rows[i].risk);
    CHECK(rows[i].dist == rec.rows[i].dist);
  }
}

TEST_CASE("reruns are byte identical") {
  for (const char* name : {"gd_threshold.json", "multistart.json", "certify_dets.json"}) {
    CAPTURE(name);
    const fs::path a = scratch(std::string("a_") + name), b = scratch(std::string("b_") + name);
    const fs::path cfg = kSource / "configs" / name;
    REQUIRE(cli("run " + cfg.string() + " --out " + a.string(), a).code == 0);
    REQUIRE(cli("run " + cfg.string() + " --out " + b.string(), b).code == 0);
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
    json sa = json::parse(slurp(a / "summary.json")), sb = json::parse(slurp(b / "summary.json"));
    sa.erase("metadata");
    sb.erase("metadata");
    CHECK(sa == sb);
  }
}

TEST_CASE("seed override changes the draw") {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  const fs::path cfg = kSource / "configs" / "gd_threshold.json";
  REQUIRE(cli("run " + cfg.string() + " --out " + a.string() + " --seed 11", a).code == 0);
  REQUIRE(cli("run " + cfg.string() + " --out " + b.string() + " --seed 12", b).code == 0);
  CHECK(slurp(a / "trajectory.csv") != slurp(b / "trajectory.csv"));
}
