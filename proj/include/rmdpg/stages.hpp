#pragma once

#include <chrono>
#include <limits>
#include <optional>

#include "rmdpg/dpg.hpp"
#include "rmdpg/estimator.hpp"
#include "rmdpg/model.hpp"

namespace rmdpg {

/// Coefficients of the three stages on one mesh. Constrained dofs hold their
/// prescribed zero values; in quotient mode the p field has zero mean.
struct StageSolution {
  Eigen::VectorXd r;      // P1 coefficients (full numbering)
  Eigen::VectorXd ufrak;  // trial coefficients in TrialLayout numbering
  Eigen::VectorXd u;      // P1 coefficients
  SolveStats stats1, stats2, stats3;
};

namespace detail {

inline Eigen::SparseMatrix<double> p1_stiffness(const Mesh& mesh, const FeSpace& space) {
  CooMatrix coo(space.constraints.n_free());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto g = hat_grads(mesh, t);
    const double area = mesh.triangles[t].area;
    const auto dofs = space.element_dofs(t);
    for (int a = 0; a < 3; ++a) {
      const auto& ea = space.constraints.expansion(dofs[a]);
      if (ea.empty()) continue;
      for (int b = 0; b < 3; ++b) {
        const auto& eb = space.constraints.expansion(dofs[b]);
        if (eb.empty()) continue;
        const double v = area * g[a].dot(g[b]);
        for (const auto& [ia, wa] : ea)
          for (const auto& [ib, wb] : eb) coo.add(ia, ib, wa * wb * v);
      }
    }
  }
  return coo.compress();
}

inline Eigen::VectorXd p1_load(const Mesh& mesh, const FeSpace& space, const std::function<double(Vec2)>& f,
                               double f_scale, const std::vector<Vec2>* psi_field, int quad_degree, int threads) {
  const int nt = mesh.n_triangles();
  std::vector<std::array<double, 3>> loc(nt);
  const auto& rule = rule_for_degree(quad_degree);
  parallel_for(nt, threads, [&](std::size_t t) {
    loc[t] = {0.0, 0.0, 0.0};
    if (f_scale != 0.0) {
      const auto phys = map_to_physical(rule, mesh, static_cast<int>(t));
      for (std::size_t q = 0; q < phys.points.size(); ++q) {
        const auto l = barycentric(mesh, static_cast<int>(t), phys.points[q]);
        const double fv = f_scale * f(phys.points[q]) * phys.weights[q];
        for (int k = 0; k < 3; ++k) loc[t][k] += fv * l[k];
      }
    }
    if (psi_field) {
      const auto g = hat_grads(mesh, static_cast<int>(t));
      const double area = mesh.triangles[t].area;
      for (int k = 0; k < 3; ++k) loc[t][k] += area * (*psi_field)[t].dot(g[k]);
    }
  });
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.constraints.n_free());
  for (int t = 0; t < nt; ++t) {
    const auto dofs = space.element_dofs(t);
    for (int k = 0; k < 3; ++k)
      for (const auto& [i, w] : space.constraints.expansion(dofs[k])) rhs[i] += w * loc[t][k];
  }
  return rhs;
}

inline Eigen::VectorXd p1_solve(const Mesh& mesh, const FeSpace& space, const Eigen::VectorXd& rhs,
                                const SolverOptions& opt, SolveStats* stats) {
  if (space.constraints.n_free() == space.dof_count && space.dof_count > 0)
    throw ConfigError("Poisson stage is singular: Gamma_u is empty");
  const auto A = p1_stiffness(mesh, space);
  const Eigen::VectorXd x = solve_spd(A, rhs, opt, stats);
  Eigen::VectorXd full(space.dof_count);
  space.constraints.distribute(x, full);
  return full;
}

}  // namespace detail

/// Elementwise-constant gradient of a P1 function.
inline std::vector<Vec2> p1_gradients(const Mesh& mesh, const Eigen::VectorXd& full) {
  std::vector<Vec2> g(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto gh = detail::hat_grads(mesh, t);
    Vec2 acc{0, 0};
    for (int k = 0; k < 3; ++k) acc = acc + full[mesh.triangles[t].v[k]] * gh[k];
    g[t] = acc;
  }
  return g;
}

/// Stage 1: (grad r, grad dr) = (f, dr) over P1 with zero trace on Gamma_u.
inline Eigen::VectorXd solve_stage1(const Mesh& mesh, const ModelConfig& mc, const SolverOptions& opt = {},
                                    SolveStats* stats = nullptr, int threads = 1) {
  const auto space = build_space(SpaceKind::P1cScalar, mesh, BcSpec::deflection());
  const auto rhs = detail::p1_load(mesh, space, mc.load, 1.0, nullptr, mc.error_quadrature_degree, threads);
  return detail::p1_solve(mesh, space, rhs, opt, stats);
}

/// Stage 2: DPG normal equations for (psi, eta, M, p) and the two traces.
inline Eigen::VectorXd solve_stage2(const Mesh& mesh, const ModelConfig& mc, const TrialLayout& layout,
                                    const Eigen::VectorXd& r_full, const SolverOptions& opt = {},
                                    SolveStats* stats = nullptr, int threads = 1) {
  const auto kcfg = make_kernel_config(mc);
  const auto grad_r = p1_gradients(mesh, r_full);
  const auto ne = assemble_normal_equations(mesh, kcfg, layout, grad_r, threads);
  const Eigen::VectorXd x = solve_normal_equations(ne, opt, stats);
  Eigen::VectorXd full(layout.n_total());
  layout.constraints.distribute(x, full);
  return full;
}

/// Rotation field block of the stage-2 solution (elementwise constants).
inline std::vector<Vec2> psi_field(const Mesh& mesh, const TrialLayout& layout, const Eigen::VectorXd& ufrak) {
  std::vector<Vec2> psi(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t)
    psi[t] = {ufrak[layout.field_dof(t, 0)], ufrak[layout.field_dof(t, 1)]};
  return psi;
}

/// Stage 3: (grad u, grad du) = t^2 (f, du) + (psi_h, grad du) over P1 with
/// zero trace on Gamma_u.
inline Eigen::VectorXd solve_stage3(const Mesh& mesh, const ModelConfig& mc, const std::vector<Vec2>& psi,
                                    const SolverOptions& opt = {}, SolveStats* stats = nullptr, int threads = 1) {
  const auto space = build_space(SpaceKind::P1cScalar, mesh, BcSpec::deflection());
  const auto rhs = detail::p1_load(mesh, space, mc.load, mc.t * mc.t, &psi, mc.error_quadrature_degree, threads);
  return detail::p1_solve(mesh, space, rhs, opt, stats);
}

struct ErrorNorms {
  double u_h1 = 0.0;   // full H1 norm of u - u_h
  double psi_l2 = 0.0;
  double m_l2 = 0.0;
};

/// Error norms against the exact solution, quadrature of the stated degree.
inline ErrorNorms compute_errors(const Mesh& mesh, const ExactSolution& exact, const TrialLayout& layout,
                                 const Eigen::VectorXd& u_full, const Eigen::VectorXd& ufrak, int quad_degree,
                                 int threads = 1) {
  const int nt = mesh.n_triangles();
  std::vector<std::array<double, 3>> partial(nt);
  const auto& rule = rule_for_degree(quad_degree);
  parallel_for(nt, threads, [&](std::size_t t) {
    const auto phys = map_to_physical(rule, mesh, static_cast<int>(t));
    const auto gh = detail::hat_grads(mesh, static_cast<int>(t));
    const auto& tri = mesh.triangles[t];
    Vec2 grad_uh{0, 0};
    for (int k = 0; k < 3; ++k) grad_uh = grad_uh + u_full[tri.v[k]] * gh[k];
    const Vec2 psi_h{ufrak[layout.field_dof(static_cast<int>(t), 0)], ufrak[layout.field_dof(static_cast<int>(t), 1)]};
    const Sym2 m_h{ufrak[layout.field_dof(static_cast<int>(t), 4)], ufrak[layout.field_dof(static_cast<int>(t), 5)],
                   ufrak[layout.field_dof(static_cast<int>(t), 6)]};
    double eu = 0, epsi = 0, em = 0;
    for (std::size_t q = 0; q < phys.points.size(); ++q) {
      const Vec2 p = phys.points[q];
      const double w = phys.weights[q];
      const auto ex = exact.all(p);
      double uh = 0.0;
      const auto l = detail::barycentric(mesh, static_cast<int>(t), p);
      for (int k = 0; k < 3; ++k) uh += u_full[tri.v[k]] * l[k];
      const double du = ex.u - uh;
      const Vec2 dg = ex.grad_u - grad_uh;
      eu += w * (du * du + dg.dot(dg));
      const Vec2 dpsi = ex.psi - psi_h;
      epsi += w * dpsi.dot(dpsi);
      em += w * (ex.M - m_h).frobenius_sq();
    }
    partial[t] = {eu, epsi, em};
  });
  double eu = 0, epsi = 0, em = 0;
  for (const auto& p : partial) {
    eu += p[0];
    epsi += p[1];
    em += p[2];
  }
  return {std::sqrt(eu), std::sqrt(epsi), std::sqrt(em)};
}

struct RunOptions {
  int levels = 5;          // number of refinements; levels+1 meshes are solved
  bool adaptive = false;
  double theta = 0.5;
  int initial_n = 0;       // 0: problem default
  int max_triangles = 0;   // 0: no cap; otherwise stop once a mesh reaches it
  int threads = 1;
  SolverOptions solver;
};

struct LevelRecord {
  int level = 0;
  int n_triangles = 0;
  int dofs = 0;  // free dofs of the stage-2 system
  double t = 0.0;
  double err_u_h1 = std::numeric_limits<double>::quiet_NaN();
  double err_psi_l2 = std::numeric_limits<double>::quiet_NaN();
  double err_m_l2 = std::numeric_limits<double>::quiet_NaN();
  double eta1 = 0, eta2 = 0, eta3 = 0, eta = 0;
  double secs1 = 0, secs2 = 0, secs3 = 0;  // wall clock; reported out-of-band
};

struct PipelineResult {
  std::vector<LevelRecord> records;
  Mesh final_mesh;
  StageSolution final_solution;
};

/// Runs all three stages plus estimation over a refinement hierarchy.
inline PipelineResult run_pipeline(const ProblemSetup& problem, const RunOptions& opt) {
  problem.config.validate();
  const int n0 = opt.initial_n > 0 ? opt.initial_n : problem.default_initial_n;
  Mesh mesh = problem.initial_mesh(n0);
  PipelineResult result;
  const auto tic = [] { return std::chrono::steady_clock::now(); };
  const auto secs = [](auto t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (int level = 0; level <= opt.levels; ++level) {
    StageSolution sol;
    LevelRecord rec;
    rec.level = level;
    rec.n_triangles = mesh.n_triangles();
    rec.t = problem.config.t;

    auto t0 = tic();
    sol.r = solve_stage1(mesh, problem.config, opt.solver, &sol.stats1, opt.threads);
    rec.secs1 = secs(t0);

    const auto kcfg = make_kernel_config(problem.config);
    const TrialLayout layout(mesh, kcfg);
    rec.dofs = layout.n_free();
    t0 = tic();
    sol.ufrak = solve_stage2(mesh, problem.config, layout, sol.r, opt.solver, &sol.stats2, opt.threads);
    rec.secs2 = secs(t0);

    const auto psi = psi_field(mesh, layout, sol.ufrak);
    t0 = tic();
    sol.u = solve_stage3(mesh, problem.config, psi, opt.solver, &sol.stats3, opt.threads);
    rec.secs3 = secs(t0);

    const auto grad_r = p1_gradients(mesh, sol.r);
    const auto eta2_sq = residual_norms(mesh, kcfg, layout, grad_r, sol.ufrak, opt.threads);
    std::vector<double> eta2(eta2_sq.size());
    for (std::size_t i = 0; i < eta2_sq.size(); ++i) eta2[i] = std::sqrt(eta2_sq[i]);
    const auto eta1 = poisson_estimator(mesh, sol.r, 1, problem.config.load, problem.config.t, {},
                                        problem.config.error_quadrature_degree, opt.threads);
    const auto eta3 = poisson_estimator(mesh, sol.u, 3, problem.config.load, problem.config.t, psi,
                                        problem.config.error_quadrature_degree, opt.threads);
    const auto est = combine(eta1, eta2, eta3);
    rec.eta1 = est.total1;
    rec.eta2 = est.total2;
    rec.eta3 = est.total3;
    rec.eta = est.total;

    if (problem.exact) {
      const auto err = compute_errors(mesh, *problem.exact, layout, sol.u, sol.ufrak,
                                      problem.config.error_quadrature_degree, opt.threads);
      rec.err_u_h1 = err.u_h1;
      rec.err_psi_l2 = err.psi_l2;
      rec.err_m_l2 = err.m_l2;
    }

    result.records.push_back(rec);
    const bool reached_cap = opt.max_triangles > 0 && mesh.n_triangles() >= opt.max_triangles;
    if (level == opt.levels || reached_cap) {
      result.final_mesh = mesh;
      result.final_solution = std::move(sol);
      break;
    }

    std::set<int> marked;
    if (opt.adaptive) {
      marked = doerfler_mark(est.combined, opt.theta);
      if (marked.empty()) {
        result.final_mesh = mesh;
        result.final_solution = std::move(sol);
        break;
      }
    } else {
      for (int t = 0; t < mesh.n_triangles(); ++t) marked.insert(t);
    }
    mesh = refine_nvb(mesh, marked);
  }
  return result;
}

}  // namespace rmdpg
