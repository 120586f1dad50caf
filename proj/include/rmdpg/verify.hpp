#pragma once

#include <random>
#include <sstream>

#include "rmdpg/dpg.hpp"
#include "rmdpg/runio.hpp"

namespace rmdpg {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  bool flip_trace_sign = false;  // debug mutation hook
};

namespace detail {

inline double beta_monomial_integral(int a, int b) {
  double r = 1.0;
  for (int k = 1; k <= b; ++k) r *= static_cast<double>(k) / (a + k);
  return r / (static_cast<double>(a + b + 1) * (a + b + 2));
}

inline CheckResult check_quadrature() {
  CheckResult res{"quadrature-monomials", true, ""};
  double worst = 0.0;
  for (int d = 0; d <= 20 && res.pass; ++d) {
    const auto& rule = rule_for_degree(d);
    for (int a = 0; a + 0 <= rule.exact_degree; ++a)
      for (int b = 0; a + b <= rule.exact_degree; ++b) {
        double got = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q)
          got += rule.weights[q] * std::pow(rule.points[q].x, a) * std::pow(rule.points[q].y, b);
        const double exact = beta_monomial_integral(a, b);
        const double rel = std::abs(got - exact) / exact;
        worst = std::max(worst, rel);
        if (rel > 1e-13) {
          res.pass = false;
          std::ostringstream os;
          os << "x^" << a << " y^" << b << " at degree " << d << ": rel " << rel;
          res.detail = os.str();
        }
      }
    for (std::size_t q = 0; q < rule.size(); ++q)
      if (!(rule.weights[q] > 0.0)) {
        res.pass = false;
        res.detail = "nonpositive weight";
      }
  }
  if (res.pass) res.detail = "worst relative error " + format_g17(worst);
  return res;
}

/// L2 projection of a pointwise-evaluable function onto the element's scalar
/// test basis; exact for functions inside the span.
class BrokenProjector {
public:
  BrokenProjector(const Mesh& mesh, int t, int k, int quad_degree)
      : basis_(mesh, t, k), phys_(map_to_physical(rule_for_degree(quad_degree), mesh, t)) {
    const int n = basis_.size();
    const int nq = static_cast<int>(phys_.points.size());
    V_.resize(nq, n);
    std::vector<double> val(n);
    for (int q = 0; q < nq; ++q) {
      basis_.eval(phys_.points[q], val.data(), nullptr, nullptr);
      for (int i = 0; i < n; ++i) V_(q, i) = val[i];
    }
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(phys_.weights.data(), nq);
    mass_ = V_.transpose() * (w.asDiagonal() * V_);
    Vw_ = w.asDiagonal() * V_;
  }

  template <typename Fn>
  Eigen::VectorXd project(const Fn& f) const {
    Eigen::VectorXd vals(phys_.points.size());
    for (std::size_t q = 0; q < phys_.points.size(); ++q) vals[q] = f(phys_.points[q]);
    return mass_.ldlt().solve(Vw_.transpose() * vals);
  }

private:
  ScalarPolyBasis basis_;
  PhysicalRule phys_;
  Eigen::MatrixXd V_;
  Eigen::MatrixXd Vw_;
  Eigen::MatrixXd mass_;
};

/// Evaluates the trace pairings of the ultraweak form through the assembled B
/// blocks for conforming generator/test pairs; both statements of the
/// orthogonality lemma are exercised.
inline CheckResult check_trace_orthogonality(bool flip_trace_sign) {
  CheckResult res{"trace-orthogonality", true, ""};
  double worst = 0.0;
  for (int nmesh : {1, 2}) {
    const Mesh mesh = build_structured_square(nmesh, SquareBc::all(BCKind::HardClamped));
    KernelConfig cfg;
    cfg.t = 1e-2;
    cfg.quotient = true;
    cfg.flip_trace_sign = flip_trace_sign;
    const TrialLayout layout(mesh, cfg);
    const int nt = mesh.n_triangles();
    const int n = pk_dim(cfg.test_degree);
    std::vector<LocalDpgKernel> kernels;
    std::vector<BrokenProjector> proj;
    for (int t = 0; t < nt; ++t) {
      kernels.push_back(compute_element_kernel(mesh, t, cfg, {0, 0}));
      proj.emplace_back(mesh, t, cfg.test_degree, cfg.quad_degree);
    }
    const auto psi_space = build_space(SpaceKind::P1cVector, mesh, BcSpec::psi());
    const auto eta_space = build_space(SpaceKind::ND0, mesh, BcSpec::eta());

    const auto pairing = [&](const Eigen::VectorXd& u_full, const std::vector<Eigen::VectorXd>& v, double& scale) {
      double total = 0.0;
      scale = 0.0;
      for (int t = 0; t < nt; ++t) {
        const auto dofs = layout.element_dofs(t);
        Eigen::VectorXd u_loc(TrialLayout::kLocalDofs);
        for (int a = 0; a < TrialLayout::kLocalDofs; ++a) u_loc[a] = u_full[dofs[a]];
        const Eigen::VectorXd bu = kernels[t].b * u_loc;
        total += v[t].dot(bu);
        scale += v[t].cwiseAbs().dot(bu.cwiseAbs());
      }
      return total;
    };

    // direction 1: M/p generators against conforming constrained (chi, rho)
    {
      std::vector<std::vector<Eigen::VectorXd>> tests;  // broken representations
      for (int d = 0; d < psi_space.dof_count; ++d) {
        if (psi_space.constraints.is_constrained(d)) continue;
        const int vtx = d / 2, comp = d % 2;
        std::vector<Eigen::VectorXd> v(nt, Eigen::VectorXd::Zero(8 * n));
        const auto p1 = build_space(SpaceKind::P1cScalar, mesh);
        for (int t = 0; t < nt; ++t) {
          const auto& tri = mesh.triangles[t];
          int local = -1;
          for (int k = 0; k < 3; ++k)
            if (tri.v[k] == vtx) local = k;
          if (local < 0) continue;
          const auto c = proj[t].project([&](Vec2 p) { return eval_basis(p1, t, {p}).val(local, 0); });
          v[t].segment(comp * n, n) = c;
        }
        tests.push_back(std::move(v));
      }
      for (int e = 0; e < eta_space.dof_count; ++e) {
        if (eta_space.constraints.is_constrained(e)) continue;
        std::vector<Eigen::VectorXd> v(nt, Eigen::VectorXd::Zero(8 * n));
        const auto nd = build_space(SpaceKind::ND0, mesh);
        for (int t = 0; t < nt; ++t) {
          int local = -1;
          for (int k = 0; k < 3; ++k)
            if (mesh.tri_edges[t][k] == e) local = k;
          if (local < 0) continue;
          for (int comp = 0; comp < 2; ++comp)
            v[t].segment((2 + comp) * n, n) =
                proj[t].project([&](Vec2 p) { return eval_basis(nd, t, {p}).val(local, 0, comp); });
        }
        tests.push_back(std::move(v));
      }
      for (int gen = 0; gen < 2 * mesh.n_edges() + mesh.n_vertices(); ++gen) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(layout.n_total());
        if (gen < 2 * mesh.n_edges())
          u[layout.m_trace_dof(gen / 2, gen % 2)] = 1.0;
        else
          u[layout.p_trace_dof(gen - 2 * mesh.n_edges())] = 1.0;
        for (const auto& v : tests) {
          double scale = 0.0;
          const double val = pairing(u, v, scale);
          const double rel = std::abs(val) / std::max(1.0, scale);
          worst = std::max(worst, rel);
        }
      }
    }

    // direction 2: constrained (psi, eta) generators against conforming (S, v)
    {
      std::vector<std::vector<Eigen::VectorXd>> tests;
      const auto p1 = build_space(SpaceKind::P1cScalar, mesh);
      for (int vtx = 0; vtx < mesh.n_vertices(); ++vtx) {
        for (int comp = 0; comp < 4; ++comp) {  // S_xx, S_yy, S_xy hats and v hats
          std::vector<Eigen::VectorXd> v(nt, Eigen::VectorXd::Zero(8 * n));
          for (int t = 0; t < nt; ++t) {
            const auto& tri = mesh.triangles[t];
            int local = -1;
            for (int k = 0; k < 3; ++k)
              if (tri.v[k] == vtx) local = k;
            if (local < 0) continue;
            const auto c = proj[t].project([&](Vec2 p) { return eval_basis(p1, t, {p}).val(local, 0); });
            v[t].segment((4 + comp) * n, n) = c;  // blocks 4..6 are S, block 7 is v
          }
          tests.push_back(std::move(v));
        }
      }
      for (int d = 0; d < psi_space.dof_count + eta_space.dof_count; ++d) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(layout.n_total());
        if (d < psi_space.dof_count) {
          if (psi_space.constraints.is_constrained(d)) continue;
          u[layout.psi_trace_dof(d / 2, d % 2)] = 1.0;
        } else {
          const int e = d - psi_space.dof_count;
          if (eta_space.constraints.is_constrained(e)) continue;
          u[layout.eta_trace_dof(e)] = 1.0;
        }
        for (const auto& v : tests) {
          double scale = 0.0;
          const double val = pairing(u, v, scale);
          const double rel = std::abs(val) / std::max(1.0, scale);
          worst = std::max(worst, rel);
        }
      }
    }
  }
  res.pass = worst <= 1e-11;
  res.detail = "worst relative pairing " + format_g17(worst);
  return res;
}

inline CheckResult check_b_equivalence(std::uint64_t seed) {
  CheckResult res{"bilinear-form-equivalence", true, ""};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  double worst = 0.0;
  for (int nmesh : {1, 4}) {
    const Mesh mesh = build_structured_square(nmesh, SquareBc::all(BCKind::HardClamped));
    KernelConfig cfg;
    cfg.t = 1e-2;
    cfg.quotient = true;
    const TrialLayout layout(mesh, cfg, /*apply_bc=*/false);
    const int nt = mesh.n_triangles();
    const int n = pk_dim(cfg.test_degree);
    std::vector<LocalDpgKernel> kernels;
    for (int t = 0; t < nt; ++t) kernels.push_back(compute_element_kernel(mesh, t, cfg, {0, 0}));

    FeSpace broken;
    broken.kind = SpaceKind::BrokenPk;
    broken.broken_degree = cfg.test_degree;
    broken.mesh = &mesh;
    const auto p1v = build_space(SpaceKind::P1cVector, mesh);
    const auto ndsp = build_space(SpaceKind::ND0, mesh);
    const auto rtsp = build_space(SpaceKind::RT0, mesh);
    const auto p1s = build_space(SpaceKind::P1cScalar, mesh);
    const auto& rule = rule_for_degree(cfg.quad_degree);

    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd u(layout.n_total());
      for (int i = 0; i < u.size(); ++i) u[i] = un(rng);
      std::vector<Eigen::VectorXd> v(nt);
      for (auto& vc : v) {
        vc.resize(8 * n);
        for (int i = 0; i < vc.size(); ++i) vc[i] = un(rng);
      }
      double assembled = 0.0;
      for (int t = 0; t < nt; ++t) {
        const auto dofs = layout.element_dofs(t);
        Eigen::VectorXd u_loc(TrialLayout::kLocalDofs);
        for (int a = 0; a < TrialLayout::kLocalDofs; ++a) u_loc[a] = u[dofs[a]];
        assembled += v[t].dot(kernels[t].b * u_loc);
      }
      // direct quadrature of the ultraweak form
      double direct = 0.0;
      for (int t = 0; t < nt; ++t) {
        const auto phys = map_to_physical(rule, mesh, t);
        const auto dofs = layout.element_dofs(t);
        const auto be = eval_basis(broken, t, phys.points);
        const auto hat = eval_basis(p1s, t, phys.points);
        const auto ndv = eval_basis(ndsp, t, phys.points);
        const auto rtv = eval_basis(rtsp, t, phys.points);
        const auto ghat = hat_grads(mesh, t);
        const auto ed = edge_fn_data(mesh, t);
        for (std::size_t q = 0; q < phys.points.size(); ++q) {
          // broken test fields
          Vec2 chi{0, 0}, rho{0, 0};
          double dchi[4] = {0, 0, 0, 0}, drho[4] = {0, 0, 0, 0};
          Sym2 S;
          Vec2 divS{0, 0};
          double vv = 0, vx = 0, vy = 0;
          for (int i = 0; i < n; ++i) {
            const double b = be.val(i, q);
            const double bx = be.grad[(i * be.n_pts + q) * 2];
            const double by = be.grad[(i * be.n_pts + q) * 2 + 1];
            chi.x += v[t][i] * b;
            dchi[0] += v[t][i] * bx;
            dchi[1] += v[t][i] * by;
            chi.y += v[t][n + i] * b;
            dchi[2] += v[t][n + i] * bx;
            dchi[3] += v[t][n + i] * by;
            rho.x += v[t][2 * n + i] * b;
            drho[0] += v[t][2 * n + i] * bx;
            drho[1] += v[t][2 * n + i] * by;
            rho.y += v[t][3 * n + i] * b;
            drho[2] += v[t][3 * n + i] * bx;
            drho[3] += v[t][3 * n + i] * by;
            S.xx += v[t][4 * n + i] * b;
            S.yy += v[t][5 * n + i] * b;
            S.xy += v[t][6 * n + i] * b;
            divS.x += v[t][4 * n + i] * bx + v[t][6 * n + i] * by;
            divS.y += v[t][6 * n + i] * bx + v[t][5 * n + i] * by;
            vv += v[t][7 * n + i] * b;
            vx += v[t][7 * n + i] * bx;
            vy += v[t][7 * n + i] * by;
          }
          // trial fields and generators
          const Vec2 psi{u[dofs[0]], u[dofs[1]]}, eta{u[dofs[2]], u[dofs[3]]};
          const Sym2 M{u[dofs[4]], u[dofs[5]], u[dofs[6]]};
          const double pfield = u[dofs[7]];
          Vec2 psig{0, 0};
          double dpsig[4] = {0, 0, 0, 0};
          double pg = 0;
          Vec2 gpg{0, 0};
          for (int k = 0; k < 3; ++k) {
            const double h = hat.val(k, q);
            psig.x += u[dofs[8 + 2 * k]] * h;
            psig.y += u[dofs[9 + 2 * k]] * h;
            dpsig[0] += u[dofs[8 + 2 * k]] * ghat[k].x;
            dpsig[1] += u[dofs[8 + 2 * k]] * ghat[k].y;
            dpsig[2] += u[dofs[9 + 2 * k]] * ghat[k].x;
            dpsig[3] += u[dofs[9 + 2 * k]] * ghat[k].y;
            pg += u[dofs[23 + k]] * h;
            gpg = gpg + u[dofs[23 + k]] * ghat[k];
          }
          Vec2 etag{0, 0};
          double rot_etag = 0;
          double Mg[4] = {0, 0, 0, 0};
          Vec2 divMg{0, 0};
          for (int j = 0; j < 3; ++j) {
            const double ce = u[dofs[14 + j]];
            etag.x += ce * ndv.val(j, q, 0);
            etag.y += ce * ndv.val(j, q, 1);
            rot_etag += ce * ed[j].ddiv;
            for (int r = 0; r < 2; ++r) {
              const double cm = u[dofs[17 + 2 * j + r]];
              Mg[2 * r] += cm * rtv.val(j, q, 0);
              Mg[2 * r + 1] += cm * rtv.val(j, q, 1);
              (r == 0 ? divMg.x : divMg.y) += cm * ed[j].ddiv;
            }
          }
          const double tt = cfg.t;
          const Vec2 curl_v{vy, -vx};
          const double rot_trho_chi = tt * (drho[2] - drho[1]) + (dchi[2] - dchi[1]);
          const Sym2 cinvS = cfg.material.apply_inverse(S);
          double integrand = psi.dot(curl_v - divS);
          integrand += M.xx * (cinvS.xx + dchi[0]) + M.yy * (cinvS.yy + dchi[3]) +
                       2.0 * M.xy * (cinvS.xy + 0.5 * (dchi[1] + dchi[2]));
          integrand += eta.dot(tt * curl_v - rho);
          integrand += pfield * rot_trho_chi;
          integrand += psig.dot(divS - curl_v) - tt * etag.dot(curl_v);
          integrand += dpsig[0] * S.xx + dpsig[3] * S.yy + (dpsig[1] + dpsig[2]) * S.xy;
          integrand += (tt * rot_etag + (dpsig[2] - dpsig[1])) * vv;
          const Vec2 curl_pg{gpg.y, -gpg.x};
          double tr_m = chi.dot(divMg - curl_pg) - tt * rho.dot(curl_pg);
          tr_m += dchi[0] * Mg[0] + dchi[1] * Mg[1] + dchi[2] * Mg[2] + dchi[3] * Mg[3];
          tr_m += rot_trho_chi * pg;
          integrand -= tr_m;
          direct += phys.weights[q] * integrand;
        }
      }
      const double scale = std::max(1.0, std::max(std::abs(assembled), std::abs(direct)));
      worst = std::max(worst, std::abs(assembled - direct) / scale);
    }
  }
  res.pass = worst <= 1e-11;
  res.detail = "worst relative mismatch " + format_g17(worst);
  return res;
}

inline CheckResult check_gram_spd(std::uint64_t seed) {
  CheckResult res{"gram-spd-sweep", true, ""};
  std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4full);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  double worst = std::numeric_limits<double>::infinity();
  int tested = 0;
  while (tested < 100) {
    Vec2 a{un(rng), un(rng)}, b{un(rng), un(rng)}, c{un(rng), un(rng)};
    if (std::abs((b - a).cross(c - a)) < 0.04) continue;
    if ((b - a).cross(c - a) < 0.0) std::swap(b, c);
    ++tested;
    Mesh m;
    m.vertices = {a, b, c};
    Triangle tri;
    tri.v = {0, 1, 2};
    m.triangles = {tri};
    std::map<std::pair<int, int>, BCKind> btags;
    btags[{0, 1}] = btags[{1, 2}] = btags[{0, 2}] = BCKind::HardClamped;
    m.finalize(btags);
    for (double t : {1.0, 1e-2, 1e-4}) {
      for (bool quotient : {true, false}) {
        KernelConfig cfg;
        cfg.t = t;
        cfg.quotient = quotient;
        const auto k = compute_element_kernel(m, 0, cfg, {0, 0});
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.gram, Eigen::EigenvaluesOnly);
        const double mineig = es.eigenvalues().minCoeff();
        worst = std::min(worst, mineig);
        if (!(mineig > 0.0)) {
          res.pass = false;
          res.detail = "nonpositive eigenvalue at t " + format_g17(t);
          return res;
        }
      }
    }
  }
  res.detail = "smallest eigenvalue over sweep " + format_g17(worst);
  return res;
}

}  // namespace detail

/// Built-in oracle suite: quadrature exactness, bilinear-form equivalence,
/// discrete trace orthogonality, and the Gram SPD sweep.
inline std::vector<CheckResult> run_verification(const VerifyOptions& opt = {}) {
  std::vector<CheckResult> out;
  out.push_back(detail::check_quadrature());
  out.push_back(detail::check_b_equivalence(opt.seed));
  out.push_back(detail::check_trace_orthogonality(opt.flip_trace_sign));
  out.push_back(detail::check_gram_spd(opt.seed));
  return out;
}

}  // namespace rmdpg
