#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "rmdpg/stages.hpp"

namespace rmdpg {

/// One experiment run as described by a JSON config file.
struct RunConfig {
  std::string problem;  // "poly" | "kirchhoff" | "lshape"
  double t = 1e-2;
  int n_refinements = 5;
  bool adaptive = false;
  double theta = 0.5;
  int n_terms = 100;
  int initial_n = 0;      // 0: problem default
  int max_triangles = 0;  // 0: unlimited
  int system_quadrature_degree = 6;
  int error_quadrature_degree = 14;
  SolverOptions solver;
  double domain_scale = 1.0;
  std::string csv;  // output file name; empty derives one from the problem
  std::uint64_t seed = 0;
  int threads = 1;
  bool dump_meshes = false;
  bool dump_kernels = false;

  void validate() const {
    if (problem != "poly" && problem != "kirchhoff" && problem != "lshape")
      throw ConfigError("problem must be poly, kirchhoff or lshape");
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("t must be in (0,1]");
    if (n_refinements < 0) throw ConfigError("n_refinements must be >= 0");
    if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must be in (0,1]");
    if (n_terms < 1) throw ConfigError("n_terms must be >= 1");
    if (initial_n < 0) throw ConfigError("initial_n must be >= 0");
    if (max_triangles < 0) throw ConfigError("max_triangles must be >= 0");
    if (system_quadrature_degree < 0 || system_quadrature_degree > 20 || error_quadrature_degree < 0 ||
        error_quadrature_degree > 20)
      throw ConfigError("quadrature degrees must be in 0..20");
    if (solver.method != "ldlt" && solver.method != "cg") throw ConfigError("solver.method must be ldlt or cg");
    if (!(solver.cg_tol > 0.0)) throw ConfigError("solver.cg_tol must be positive");
    if (solver.cg_max_iter < 1) throw ConfigError("solver.cg_max_iter must be >= 1");
    if (!(domain_scale > 0.0)) throw ConfigError("domain_scale must be positive");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }

  std::string default_csv_name() const {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "run_%s_t%g_%s.csv", problem.c_str(), t, adaptive ? "adaptive" : "uniform");
    return buf;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"problem", "t", "n_refinements", "adaptive", "theta", "n_terms", "initial_n", "max_triangles",
       "quadrature_degrees", "solver", "domain_scale", "csv", "seed", "threads", "dump_meshes", "dump_kernels"},
      "config");
  RunConfig c;
  try {
    c.problem = j.at("problem").get<std::string>();
    if (j.contains("t")) c.t = j["t"].get<double>();
    if (j.contains("n_refinements")) c.n_refinements = j["n_refinements"].get<int>();
    if (j.contains("adaptive")) c.adaptive = j["adaptive"].get<bool>();
    if (j.contains("theta")) c.theta = j["theta"].get<double>();
    if (j.contains("n_terms")) c.n_terms = j["n_terms"].get<int>();
    if (j.contains("initial_n")) c.initial_n = j["initial_n"].get<int>();
    if (j.contains("max_triangles")) c.max_triangles = j["max_triangles"].get<int>();
    if (j.contains("quadrature_degrees")) {
      const auto& q = j["quadrature_degrees"];
      detail::reject_unknown_keys(q, {"system", "error"}, "quadrature_degrees");
      if (q.contains("system")) c.system_quadrature_degree = q["system"].get<int>();
      if (q.contains("error")) c.error_quadrature_degree = q["error"].get<int>();
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      detail::reject_unknown_keys(s, {"method", "cg_tol", "cg_max_iter"}, "solver");
      if (s.contains("method")) c.solver.method = s["method"].get<std::string>();
      if (s.contains("cg_tol")) c.solver.cg_tol = s["cg_tol"].get<double>();
      if (s.contains("cg_max_iter")) c.solver.cg_max_iter = s["cg_max_iter"].get<int>();
    }
    if (j.contains("domain_scale")) c.domain_scale = j["domain_scale"].get<double>();
    if (j.contains("csv")) c.csv = j["csv"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("dump_meshes")) c.dump_meshes = j["dump_meshes"].get<bool>();
    if (j.contains("dump_kernels")) c.dump_kernels = j["dump_kernels"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value type: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline ProblemSetup make_problem(const RunConfig& c) {
  ProblemSetup p;
  if (c.problem == "poly")
    p = make_problem_poly(c.t);
  else if (c.problem == "kirchhoff")
    p = make_problem_kirchhoff(c.t, c.n_terms);
  else
    p = example3_lshape(c.t);
  p.config.system_quadrature_degree = c.system_quadrature_degree;
  p.config.error_quadrature_degree = c.error_quadrature_degree;
  p.config.domain_scale = c.domain_scale;
  return p;
}

inline RunOptions make_run_options(const RunConfig& c) {
  RunOptions o;
  o.levels = c.n_refinements;
  o.adaptive = c.adaptive;
  o.theta = c.theta;
  o.initial_n = c.initial_n;
  o.max_triangles = c.max_triangles;
  o.threads = c.threads;
  o.solver = c.solver;
  return o;
}

}  // namespace rmdpg
