#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "rmdpg/fespaces.hpp"
#include "rmdpg/linalg.hpp"
#include "rmdpg/model.hpp"
#include "rmdpg/quadrature.hpp"

namespace rmdpg {

/// Everything the element kernels need to know about the run.
struct KernelConfig {
  double t = 1e-2;
  double t_star = 1.0;
  bool quotient = false;  // no free boundary part: quotient handling active
  double d = 1.0;         // domain scale; 1 reproduces the unscaled norms
  double d_star = 1.0;
  MaterialTensor material;
  int test_degree = 3;
  int quad_degree = 6;
  bool flip_trace_sign = false;  // debug hook: breaks a trace sub-block sign
};

inline KernelConfig make_kernel_config(const ModelConfig& mc) {
  KernelConfig k;
  k.t = mc.t;
  k.t_star = mc.t_star();
  k.quotient = mc.quotient_mode();
  k.d = mc.domain_scale;
  k.d_star = mc.d_star();
  k.material = mc.material;
  k.test_degree = mc.test_degree;
  k.quad_degree = mc.system_quadrature_degree;
  return k;
}

/// Global numbering of the six trial blocks: the four field blocks are
/// element-blocked (psi_x, psi_y, eta_x, eta_y, M_xx, M_yy, M_xy, p), followed
/// by the trace generators (psi vertices x2, eta edges, M edges x2 rows,
/// p vertices).
class TrialLayout {
public:
  static constexpr int kFieldsPerElement = 8;
  static constexpr int kLocalDofs = 26;

  TrialLayout(const Mesh& mesh, const KernelConfig& cfg, bool apply_bc = true) : mesh_(&mesh) {
    const int nt = mesh.n_triangles(), nv = mesh.n_vertices(), ne = mesh.n_edges();
    off_psi_ = kFieldsPerElement * nt;
    off_eta_ = off_psi_ + 2 * nv;
    off_m_ = off_eta_ + ne;
    off_p_ = off_m_ + 2 * ne;
    n_total_ = off_p_ + nv;
    constraints = DofConstraints(n_total_);
    if (apply_bc) build_constraints(cfg);
    constraints.finalize();
  }

  const Mesh& mesh() const { return *mesh_; }
  int n_total() const { return n_total_; }
  int n_free() const { return constraints.n_free(); }

  int field_dof(int t, int c) const { return kFieldsPerElement * t + c; }
  int psi_trace_dof(int v, int c) const { return off_psi_ + 2 * v + c; }
  int eta_trace_dof(int e) const { return off_eta_ + e; }
  int m_trace_dof(int e, int r) const { return off_m_ + 2 * e + r; }
  int p_trace_dof(int v) const { return off_p_ + v; }

  /// Local kernel ordering: 8 field dofs, 6 psi-trace, 3 eta-trace,
  /// 6 M-trace, 3 p-trace.
  std::array<int, kLocalDofs> element_dofs(int t) const {
    const auto& tri = mesh_->triangles[t];
    const auto& edges = mesh_->tri_edges[t];
    std::array<int, kLocalDofs> d;
    for (int c = 0; c < 8; ++c) d[c] = field_dof(t, c);
    for (int k = 0; k < 3; ++k) {
      d[8 + 2 * k] = psi_trace_dof(tri.v[k], 0);
      d[8 + 2 * k + 1] = psi_trace_dof(tri.v[k], 1);
    }
    for (int k = 0; k < 3; ++k) d[14 + k] = eta_trace_dof(edges[k]);
    for (int k = 0; k < 3; ++k) {
      d[17 + 2 * k] = m_trace_dof(edges[k], 0);
      d[17 + 2 * k + 1] = m_trace_dof(edges[k], 1);
    }
    for (int k = 0; k < 3; ++k) d[23 + k] = p_trace_dof(tri.v[k]);
    return d;
  }

  DofConstraints constraints;

private:
  void build_constraints(const KernelConfig& cfg) {
    const Mesh& m = *mesh_;
    // psi trace: per-segment rotation conditions accumulated per vertex
    detail::VertexDirectionConstraints dirs(m.n_vertices());
    for (int ei = 0; ei < m.n_edges(); ++ei) {
      const auto& e = m.edges[ei];
      if (!e.boundary) continue;
      const Vec2 n = m.edge_normal(ei), tg = m.edge_tangent(ei);
      switch (e.tag) {
        case BCKind::HardClamped:
          dirs.add(e.a, {1, 0});
          dirs.add(e.a, {0, 1});
          dirs.add(e.b, {1, 0});
          dirs.add(e.b, {0, 1});
          break;
        case BCKind::SoftClamped:
          dirs.add(e.a, n);
          dirs.add(e.b, n);
          break;
        case BCKind::HardSimpleSupport:
          dirs.add(e.a, tg);
          dirs.add(e.b, tg);
          break;
        default: break;
      }
    }
    dirs.apply(constraints, [this](int v, int c) { return psi_trace_dof(v, c); });

    for (int ei = 0; ei < m.n_edges(); ++ei) {
      const auto& e = m.edges[ei];
      if (!e.boundary) continue;
      const Vec2 n = m.edge_normal(ei);
      switch (e.tag) {
        case BCKind::HardClamped:
        case BCKind::HardSimpleSupport:
          // tangential psi vanishes on the segment, so t.(t eta + psi) = 0
          // reduces to a zero tangential eta dof
          constraints.set_zero(eta_trace_dof(ei));
          break;
        case BCKind::SoftClamped:
        case BCKind::SoftSimpleSupport: {
          // linked condition: eliminate the eta edge dof against the average
          // tangential psi over the edge (experimental; soft segments)
          const Vec2 tg = m.edge_tangent(ei);
          const double c = -1.0 / (2.0 * cfg.t);
          constraints.set_affine(eta_trace_dof(ei), {{psi_trace_dof(e.a, 0), c * tg.x},
                                                     {psi_trace_dof(e.a, 1), c * tg.y},
                                                     {psi_trace_dof(e.b, 0), c * tg.x},
                                                     {psi_trace_dof(e.b, 1), c * tg.y}});
          break;
        }
        default: break;
      }
      // moment trace conditions, row dofs are fluxes against the global normal
      const int d0 = m_trace_dof(ei, 0), d1 = m_trace_dof(ei, 1);
      switch (e.tag) {
        case BCKind::SoftSimpleSupport:
        case BCKind::Free:
          constraints.set_zero(d0);
          constraints.set_zero(d1);
          break;
        case BCKind::HardSimpleSupport: {
          if (std::abs(n.x) >= std::abs(n.y)) {
            const double coef = -n.y / n.x;
            std::abs(coef) < 1e-14 ? constraints.set_zero(d0) : constraints.set_affine(d0, {{d1, coef}});
          } else {
            const double coef = -n.x / n.y;
            std::abs(coef) < 1e-14 ? constraints.set_zero(d1) : constraints.set_affine(d1, {{d0, coef}});
          }
          break;
        }
        case BCKind::SoftClamped: {
          const Vec2 tg{-n.y, n.x};
          if (std::abs(tg.x) >= std::abs(tg.y)) {
            const double coef = -tg.y / tg.x;
            std::abs(coef) < 1e-14 ? constraints.set_zero(d0) : constraints.set_affine(d0, {{d1, coef}});
          } else {
            const double coef = -tg.x / tg.y;
            std::abs(coef) < 1e-14 ? constraints.set_zero(d1) : constraints.set_affine(d1, {{d0, coef}});
          }
          break;
        }
        default: break;
      }
      if (e.tag == BCKind::Free) {
        constraints.set_zero(p_trace_dof(e.a));
        constraints.set_zero(p_trace_dof(e.b));
      }
    }
  }

  const Mesh* mesh_;
  int off_psi_ = 0, off_eta_ = 0, off_m_ = 0, off_p_ = 0, n_total_ = 0;
};

/// Per-element DPG kernel: test-norm Gram, ultraweak B block, load vector.
struct LocalDpgKernel {
  Eigen::MatrixXd gram;  // 8n x 8n
  Eigen::MatrixXd b;     // 8n x 26
  Eigen::VectorXd load;  // 8n

  /// Optimal-test-function coefficients gram^-1 b.
  Eigen::MatrixXd opt_test() const;
};

namespace detail {

struct TestBlockOffsets {
  int n;
  int chi_x, chi_y, rho_x, rho_y, sxx, syy, sxy, vv;
  explicit TestBlockOffsets(int n_) : n(n_) {
    chi_x = 0;
    chi_y = n;
    rho_x = 2 * n;
    rho_y = 3 * n;
    sxx = 4 * n;
    syy = 5 * n;
    sxy = 6 * n;
    vv = 7 * n;
  }
};

}  // namespace detail

/// Builds the local Gram of the scaled broken test norm, the B block of the
/// ultraweak form, and the load -(grad r, chi) on one element.
inline LocalDpgKernel compute_element_kernel(const Mesh& mesh, int t, const KernelConfig& cfg, Vec2 grad_r) {
  const double tt = cfg.t;
  const auto& rule = rule_for_degree(cfg.quad_degree);
  const auto phys = map_to_physical(rule, mesh, t);
  const int nq = static_cast<int>(phys.points.size());

  detail::ScalarPolyBasis basis(mesh, t, cfg.test_degree);
  const int n = basis.size();
  const detail::TestBlockOffsets o(n);
  const int ntest = 8 * n;

  Eigen::MatrixXd V(nq, n), Gx(nq, n), Gy(nq, n);
  {
    std::vector<double> val(n), gx(n), gy(n);
    for (int q = 0; q < nq; ++q) {
      basis.eval(phys.points[q], val.data(), gx.data(), gy.data());
      for (int i = 0; i < n; ++i) {
        V(q, i) = val[i];
        Gx(q, i) = gx[i];
        Gy(q, i) = gy[i];
      }
    }
  }
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(phys.weights.data(), nq);
  const Eigen::MatrixXd Vw = w.asDiagonal() * V;
  const Eigen::MatrixXd Gxw = w.asDiagonal() * Gx;
  const Eigen::MatrixXd Gyw = w.asDiagonal() * Gy;
  const Eigen::MatrixXd Mass = V.transpose() * Vw;
  const Eigen::MatrixXd Kxx = Gx.transpose() * Gxw;
  const Eigen::MatrixXd Kxy = Gx.transpose() * Gyw;
  const Eigen::MatrixXd Kyy = Gy.transpose() * Gyw;
  const Eigen::VectorXd vint = Vw.colwise().sum();
  const Eigen::VectorXd gxint = Gxw.colwise().sum();
  const Eigen::VectorXd gyint = Gyw.colwise().sum();
  const double area = mesh.triangles[t].area;

  // trial generators on this element
  const auto ghat = detail::hat_grads(mesh, t);
  Eigen::MatrixXd hatv(nq, 3);
  for (int q = 0; q < nq; ++q) {
    const auto l = detail::barycentric(mesh, t, phys.points[q]);
    hatv(q, 0) = l[0];
    hatv(q, 1) = l[1];
    hatv(q, 2) = l[2];
  }
  const Eigen::MatrixXd HV = hatv.transpose() * Vw;   // 3 x n
  const Eigen::MatrixXd HX = hatv.transpose() * Gxw;  // int hat_k dx b_i
  const Eigen::MatrixXd HY = hatv.transpose() * Gyw;
  const auto edata = detail::edge_fn_data(mesh, t);
  Eigen::MatrixXd SG(3, n);  // int sigma_j . grad b_i
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd sx(nq), sy(nq);
    for (int q = 0; q < nq; ++q) {
      const Vec2 s = edata[j].coef * (phys.points[q] - edata[j].opposite);
      sx(q) = s.x;
      sy(q) = s.y;
    }
    SG.row(j) = sx.transpose() * Gxw + sy.transpose() * Gyw;
  }

  LocalDpgKernel k;

  // ---- Gram of the test norm ----
  k.gram = Eigen::MatrixXd::Zero(ntest, ntest);
  const double w_chi_val = 1.0 / (cfg.d * cfg.d);
  const double w_rot = (cfg.d * cfg.d) / (tt * tt);
  const double w_v = (cfg.t_star * cfg.t_star) / (cfg.d_star * cfg.d_star);
  const double w_dc = cfg.d * cfg.d;
  const double w_cv = tt * tt;
  const auto add = [&](int bi, int bj, const Eigen::MatrixXd& blk) {
    k.gram.block(bi, bj, n, n) += blk;
  };
  add(o.chi_x, o.chi_x, w_chi_val * Mass + Kxx + Kyy);
  add(o.chi_y, o.chi_y, w_chi_val * Mass + Kxx + Kyy);
  add(o.rho_x, o.rho_x, Mass);
  add(o.rho_y, o.rho_y, Mass);
  // t^-2 || rot(t rho + chi) ||^2; rot u = dx u_y - dy u_x
  {
    const struct {
      int bx, by;
      double mult;
    } sides[2] = {{o.chi_x, o.chi_y, 1.0}, {o.rho_x, o.rho_y, tt}};
    for (const auto& r : sides)
      for (const auto& c : sides) {
        const double f = w_rot * r.mult * c.mult;
        add(r.by, c.by, f * Kxx);
        add(r.by, c.bx, -f * Kxy);
        add(r.bx, c.by, -f * Kxy.transpose());
        add(r.bx, c.bx, f * Kyy);
      }
  }
  add(o.sxx, o.sxx, Mass);
  add(o.syy, o.syy, Mass);
  add(o.sxy, o.sxy, 2.0 * Mass);
  // || Div S - curl v ||^2 componentwise
  {
    struct Slot {
      int block;
      char dir;  // 'x' or 'y' derivative
      double sign;
    };
    const std::vector<Slot> comp1 = {{o.sxx, 'x', 1.0}, {o.sxy, 'y', 1.0}, {o.vv, 'y', -1.0}};
    const std::vector<Slot> comp2 = {{o.sxy, 'x', 1.0}, {o.syy, 'y', 1.0}, {o.vv, 'x', 1.0}};
    const auto kmat = [&](char a, char b) -> Eigen::MatrixXd {
      if (a == 'x' && b == 'x') return Kxx;
      if (a == 'x' && b == 'y') return Kxy;
      if (a == 'y' && b == 'x') return Kxy.transpose();
      return Kyy;
    };
    for (const auto& comp : {comp1, comp2})
      for (const auto& r : comp)
        for (const auto& c : comp) add(r.block, c.block, (w_dc * r.sign * c.sign) * kmat(r.dir, c.dir));
  }
  add(o.vv, o.vv, w_cv * (Kxx + Kyy));
  if (cfg.quotient) {
    // ||v||_* realized elementwise as ||v - mean v||, with the constant
    // direction pinned by mu (mean v)^2, mu = |T|
    const Eigen::MatrixXd mm = vint * vint.transpose() / area;
    add(o.vv, o.vv, w_v * (Mass - mm) + mm);
  } else {
    add(o.vv, o.vv, w_v * Mass);
  }

  // ---- B block ----
  k.b = Eigen::MatrixXd::Zero(ntest, TrialLayout::kLocalDofs);
  const auto col = [&](int c) { return k.b.col(c); };
  // (psi, curl v - Div S)
  col(0).segment(o.vv, n) += gyint;
  col(0).segment(o.sxx, n) -= gxint;
  col(0).segment(o.sxy, n) -= gyint;
  col(1).segment(o.vv, n) -= gxint;
  col(1).segment(o.sxy, n) -= gxint;
  col(1).segment(o.syy, n) -= gyint;
  // (eta, t curl v - rho)
  col(2).segment(o.vv, n) += tt * gyint;
  col(2).segment(o.rho_x, n) -= vint;
  col(3).segment(o.vv, n) -= tt * gxint;
  col(3).segment(o.rho_y, n) -= vint;
  // (M, C^-1 S + eps chi)
  {
    // Q[c'][c] = E_{c'} : C^-1 E_c with the Frobenius pairing
    Sym2 unit[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    double Q[3][3];
    for (int c = 0; c < 3; ++c) {
      const Sym2 ci = cfg.material.apply_inverse(unit[c]);
      Q[0][c] = ci.xx;
      Q[1][c] = ci.yy;
      Q[2][c] = 2.0 * ci.xy;
    }
    const int sblock[3] = {o.sxx, o.syy, o.sxy};
    for (int cp = 0; cp < 3; ++cp)
      for (int c = 0; c < 3; ++c)
        if (Q[cp][c] != 0.0) col(4 + cp).segment(sblock[c], n) += Q[cp][c] * vint;
    col(4).segment(o.chi_x, n) += gxint;
    col(5).segment(o.chi_y, n) += gyint;
    col(6).segment(o.chi_x, n) += gyint;
    col(6).segment(o.chi_y, n) += gxint;
  }
  // (p, rot(t rho + chi))
  col(7).segment(o.rho_y, n) += tt * gxint;
  col(7).segment(o.rho_x, n) -= tt * gyint;
  col(7).segment(o.chi_y, n) += gxint;
  col(7).segment(o.chi_x, n) -= gyint;
  // psi-eta trace against (S, v)
  for (int kv = 0; kv < 3; ++kv) {
    const int cx = 8 + 2 * kv, cy = cx + 1;
    // (psi_g, Div S - curl v)
    col(cx).segment(o.sxx, n) += HX.row(kv);
    col(cx).segment(o.sxy, n) += HY.row(kv);
    col(cx).segment(o.vv, n) -= HY.row(kv);
    col(cy).segment(o.sxy, n) += HX.row(kv);
    col(cy).segment(o.syy, n) += HY.row(kv);
    col(cy).segment(o.vv, n) += HX.row(kv);
    // (grad psi_g, S)
    col(cx).segment(o.sxx, n) += ghat[kv].x * vint;
    col(cx).segment(o.sxy, n) += ghat[kv].y * vint;
    col(cy).segment(o.sxy, n) += ghat[kv].x * vint;
    col(cy).segment(o.syy, n) += ghat[kv].y * vint;
    // (rot psi_g, v)
    col(cx).segment(o.vv, n) -= ghat[kv].y * vint;
    col(cy).segment(o.vv, n) += ghat[kv].x * vint;
  }
  const double trace_flip = cfg.flip_trace_sign ? -1.0 : 1.0;
  for (int j = 0; j < 3; ++j) {
    const int c = 14 + j;
    // -(eta_g, t curl v) with (tau . curl v) = -(sigma . grad v)
    col(c).segment(o.vv, n) += (trace_flip * tt) * SG.row(j);
    // (rot(t eta_g), v)
    col(c).segment(o.vv, n) += (tt * edata[j].ddiv) * vint;
  }
  // minus the M-p trace against (chi, rho)
  for (int j = 0; j < 3; ++j)
    for (int r = 0; r < 2; ++r) {
      const int c = 17 + 2 * j + r;
      const int chir = (r == 0) ? o.chi_x : o.chi_y;
      col(c).segment(chir, n) -= edata[j].ddiv * vint;  // -(chi, Div M_g)
      col(c).segment(chir, n) -= SG.row(j);             // -(grad chi, M_g)
    }
  for (int kv = 0; kv < 3; ++kv) {
    const int c = 23 + kv;
    // +(chi, curl p_g), +(rho, t curl p_g)
    col(c).segment(o.chi_x, n) += ghat[kv].y * vint;
    col(c).segment(o.chi_y, n) -= ghat[kv].x * vint;
    col(c).segment(o.rho_x, n) += tt * ghat[kv].y * vint;
    col(c).segment(o.rho_y, n) -= tt * ghat[kv].x * vint;
    // -(rot(t rho + chi), p_g)
    col(c).segment(o.rho_y, n) -= tt * HX.row(kv);
    col(c).segment(o.rho_x, n) += tt * HY.row(kv);
    col(c).segment(o.chi_y, n) -= HX.row(kv);
    col(c).segment(o.chi_x, n) += HY.row(kv);
  }

  // ---- load: -(grad r, chi) ----
  k.load = Eigen::VectorXd::Zero(ntest);
  k.load.segment(o.chi_x, n) = -grad_r.x * vint;
  k.load.segment(o.chi_y, n) = -grad_r.y * vint;

  return k;
}

/// Symmetric factorization of the element Gram after Jacobi equilibration.
/// The diagonal of the Gram spans t^-2 .. t^2 scales, so the pivot guard
/// (1e-14 times the max diagonal) is applied to the equilibrated matrix,
/// where a genuinely singular direction still produces a vanishing pivot.
class GramSolver {
public:
  GramSolver(const LocalDpgKernel& k, int element) {
    const int n = static_cast<int>(k.gram.rows());
    scale_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double d = k.gram(i, i);
      if (!(d > 0.0)) throw SingularGramError(element, "nonpositive diagonal in the test-norm Gram");
      scale_[i] = 1.0 / std::sqrt(d);
    }
    const Eigen::MatrixXd scaled = scale_.asDiagonal() * k.gram * scale_.asDiagonal();
    ldlt_.compute(scaled);
    if (ldlt_.info() != Eigen::Success || ldlt_.vectorD().minCoeff() <= 1e-14)
      throw SingularGramError(element, "test-norm Gram not positive definite");
  }

  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
    return (scale_.asDiagonal() * ldlt_.solve(scale_.asDiagonal() * rhs.derived())).eval();
  }

private:
  Eigen::VectorXd scale_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

inline GramSolver factor_gram(const LocalDpgKernel& k, int element) { return GramSolver(k, element); }

inline Eigen::MatrixXd LocalDpgKernel::opt_test() const { return GramSolver(*this, -1).solve(b); }

struct NormalEquations {
  Eigen::SparseMatrix<double> A;  // over free dofs, full symmetric storage
  Eigen::VectorXd rhs;
  // quotient handling: pinned p dof plus the data for the representative
  // shift enforcing (p, 1) = 0
  int pinned_free_dof = -1;
  Eigen::VectorXd null_dir;  // over free dofs; empty unless quotient
  Eigen::VectorXd p_mass;    // discrete (p,1) functional over free dofs
};

/// Assembles the SPD normal equations B^T G^-1 B u = B^T G^-1 l with
/// constrained trial dofs eliminated. grad_r supplies the elementwise-constant
/// gradient of the stage-1 solution.
inline NormalEquations assemble_normal_equations(const Mesh& mesh, const KernelConfig& cfg, const TrialLayout& layout,
                                                 const std::vector<Vec2>& grad_r, int threads = 1) {
  const int nt = mesh.n_triangles();
  if (static_cast<int>(grad_r.size()) != nt) throw Error("assemble: grad_r size mismatch");
  const int nfree = layout.constraints.n_free();

  std::vector<Eigen::MatrixXd> a_loc(nt);
  std::vector<Eigen::VectorXd> r_loc(nt);
  parallel_for(nt, threads, [&](std::size_t t) {
    const auto k = compute_element_kernel(mesh, static_cast<int>(t), cfg, grad_r[t]);
    const auto ldlt = factor_gram(k, static_cast<int>(t));
    const Eigen::MatrixXd ginv_b = ldlt.solve(k.b);
    Eigen::MatrixXd a = k.b.transpose() * ginv_b;
    a_loc[t] = 0.5 * (a + a.transpose());
    r_loc[t] = ginv_b.transpose() * k.load;
  });

  CooMatrix coo(nfree);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree);
  for (int t = 0; t < nt; ++t) {
    const auto dofs = layout.element_dofs(t);
    for (int a = 0; a < TrialLayout::kLocalDofs; ++a) {
      const auto& ea = layout.constraints.expansion(dofs[a]);
      if (ea.empty()) continue;
      for (const auto& [ia, wa] : ea) rhs[ia] += wa * r_loc[t][a];
      for (int b = 0; b < TrialLayout::kLocalDofs; ++b) {
        const double v = a_loc[t](a, b);
        if (v == 0.0) continue;
        const auto& eb = layout.constraints.expansion(dofs[b]);
        for (const auto& [ia, wa] : ea)
          for (const auto& [ib, wb] : eb) coo.add(ia, ib, wa * wb * v);
      }
    }
  }

  NormalEquations ne;
  ne.A = coo.compress();
  ne.rhs = std::move(rhs);

  if (cfg.quotient) {
    // The simultaneous constant shift of the p field and the p trace is the
    // only b-null direction; pin one p dof and record the shift data.
    ne.null_dir = Eigen::VectorXd::Zero(nfree);
    ne.p_mass = Eigen::VectorXd::Zero(nfree);
    for (int t = 0; t < nt; ++t) {
      const int i = layout.constraints.free_index(layout.field_dof(t, 7));
      ne.null_dir[i] = 1.0;
      ne.p_mass[i] = mesh.triangles[t].area;
    }
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      const int i = layout.constraints.free_index(layout.p_trace_dof(v));
      if (i >= 0) ne.null_dir[i] = 1.0;
    }
    ne.pinned_free_dof = layout.constraints.free_index(layout.field_dof(0, 7));
    const double mean_diag = ne.A.diagonal().sum() / nfree;
    ne.A.coeffRef(ne.pinned_free_dof, ne.pinned_free_dof) += mean_diag;
  }
  return ne;
}

/// Solves the normal equations; in quotient mode the representative is shifted
/// so that (p, 1) = 0.
inline Eigen::VectorXd solve_normal_equations(const NormalEquations& ne, const SolverOptions& opt = {},
                                              SolveStats* stats = nullptr) {
  Eigen::VectorXd x = solve_spd(ne.A, ne.rhs, opt, stats);
  if (ne.pinned_free_dof >= 0) {
    const double beta = ne.p_mass.dot(x) / ne.p_mass.dot(ne.null_dir);
    x -= beta * ne.null_dir;
  }
  return x;
}

/// Built-in DPG error estimator: eta2(T)^2 = r_T^T G_T^-1 r_T with
/// r_T = load_T - B_T u_T, the discrete Riesz representation of the local
/// residual in the scaled test norm.
inline std::vector<double> residual_norms(const Mesh& mesh, const KernelConfig& cfg, const TrialLayout& layout,
                                          const std::vector<Vec2>& grad_r, const Eigen::VectorXd& u_full,
                                          int threads = 1) {
  const int nt = mesh.n_triangles();
  std::vector<double> eta2(nt, 0.0);
  parallel_for(nt, threads, [&](std::size_t t) {
    const auto k = compute_element_kernel(mesh, static_cast<int>(t), cfg, grad_r[t]);
    const auto dofs = layout.element_dofs(static_cast<int>(t));
    Eigen::VectorXd u_loc(TrialLayout::kLocalDofs);
    for (int a = 0; a < TrialLayout::kLocalDofs; ++a) u_loc[a] = u_full[dofs[a]];
    const Eigen::VectorXd r = k.load - k.b * u_loc;
    const auto ldlt = factor_gram(k, static_cast<int>(t));
    eta2[t] = std::max(0.0, r.dot(ldlt.solve(r)));
  });
  return eta2;
}

}  // namespace rmdpg
