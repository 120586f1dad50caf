#pragma once

#include <array>
#include <vector>

#include "rmdpg/constraints.hpp"
#include "rmdpg/mesh.hpp"

namespace rmdpg {

enum class SpaceKind {
  P0Scalar,
  P0Vector,
  P0SymTensor,
  P1cScalar,
  P1cVector,
  RT0,
  RT0Rows,  // two row-wise Raviart-Thomas fields forming a tensor
  ND0,
  BrokenPk
};

/// Which set of homogeneous boundary conditions a space realizes. The roles
/// mirror the blocks of the trial space: deflection traces vanish on the
/// non-free boundary, the p-trace vanishes on the free part, rotation traces
/// follow the per-segment psi conditions, eta has zero tangential components
/// where the tangential rotation is clamped, and the moment trace converts the
/// per-segment normal/tangential conditions into edge-dof relations.
struct BcSpec {
  enum class Role { None, DeflectionTrace, PsiTrace, EtaTrace, MTrace, PTrace };
  Role role = Role::None;
  static BcSpec none() { return {}; }
  static BcSpec deflection() { return {Role::DeflectionTrace}; }
  static BcSpec psi() { return {Role::PsiTrace}; }
  static BcSpec eta() { return {Role::EtaTrace}; }
  static BcSpec moment() { return {Role::MTrace}; }
  static BcSpec pressure() { return {Role::PTrace}; }
};

namespace detail {

inline int pk_dim(int k) { return (k + 1) * (k + 2) / 2; }

/// Collects per-vertex zero-directions d with d . psi = 0 and emits the
/// resulting component constraints (rank 2 -> both components zero, rank 1 ->
/// one component eliminated against the other).
class VertexDirectionConstraints {
public:
  explicit VertexDirectionConstraints(int n_vertices) : dirs_(n_vertices) {}

  void add(int v, Vec2 d) {
    const double len = d.norm();
    if (len < 1e-14) return;
    d = (1.0 / len) * d;
    auto& list = dirs_[v];
    for (const Vec2& e : list) {
      const double cross = std::abs(e.cross(d));
      if (cross < 1e-10) return;  // parallel to an existing direction
    }
    list.push_back(d);
  }

  /// dof(v, c) must map (vertex, component) to the global dof id.
  template <typename DofFn>
  void apply(DofConstraints& c, const DofFn& dof) const {
    for (int v = 0; v < static_cast<int>(dirs_.size()); ++v) {
      const auto& list = dirs_[v];
      if (list.empty()) continue;
      if (list.size() >= 2) {
        c.set_zero(dof(v, 0));
        c.set_zero(dof(v, 1));
        continue;
      }
      const Vec2 d = list[0];
      if (std::abs(d.x) >= std::abs(d.y)) {
        // d.x psi_x + d.y psi_y = 0  ->  psi_x = -(d.y/d.x) psi_y
        const double coef = -d.y / d.x;
        if (std::abs(coef) < 1e-14)
          c.set_zero(dof(v, 0));
        else
          c.set_affine(dof(v, 0), {{dof(v, 1), coef}});
      } else {
        const double coef = -d.x / d.y;
        if (std::abs(coef) < 1e-14)
          c.set_zero(dof(v, 1));
        else
          c.set_affine(dof(v, 1), {{dof(v, 0), coef}});
      }
    }
  }

private:
  std::vector<std::vector<Vec2>> dirs_;
};

}  // namespace detail

/// Lowest-order space with deterministic entity-sorted dof numbering and the
/// boundary-condition mask for the requested role.
struct FeSpace {
  SpaceKind kind = SpaceKind::P0Scalar;
  int broken_degree = 0;
  const Mesh* mesh = nullptr;
  int dof_count = 0;
  DofConstraints constraints;

  int dofs_per_element() const {
    switch (kind) {
      case SpaceKind::P0Scalar: return 1;
      case SpaceKind::P0Vector: return 2;
      case SpaceKind::P0SymTensor: return 3;
      case SpaceKind::P1cScalar: return 3;
      case SpaceKind::P1cVector: return 6;
      case SpaceKind::RT0: return 3;
      case SpaceKind::RT0Rows: return 6;
      case SpaceKind::ND0: return 3;
      case SpaceKind::BrokenPk: return detail::pk_dim(broken_degree);
    }
    throw Error("dofs_per_element: bad kind");
  }

  std::vector<int> element_dofs(int t) const {
    const auto& tri = mesh->triangles[t];
    std::vector<int> d;
    switch (kind) {
      case SpaceKind::P0Scalar: d = {t}; break;
      case SpaceKind::P0Vector: d = {2 * t, 2 * t + 1}; break;
      case SpaceKind::P0SymTensor: d = {3 * t, 3 * t + 1, 3 * t + 2}; break;
      case SpaceKind::P1cScalar: d = {tri.v[0], tri.v[1], tri.v[2]}; break;
      case SpaceKind::P1cVector:
        d = {2 * tri.v[0], 2 * tri.v[0] + 1, 2 * tri.v[1], 2 * tri.v[1] + 1, 2 * tri.v[2], 2 * tri.v[2] + 1};
        break;
      case SpaceKind::RT0:
      case SpaceKind::ND0:
        d = {mesh->tri_edges[t][0], mesh->tri_edges[t][1], mesh->tri_edges[t][2]};
        break;
      case SpaceKind::RT0Rows:
        d.resize(6);
        for (int i = 0; i < 3; ++i) {
          d[2 * i] = 2 * mesh->tri_edges[t][i];
          d[2 * i + 1] = 2 * mesh->tri_edges[t][i] + 1;
        }
        break;
      case SpaceKind::BrokenPk: {
        const int n = detail::pk_dim(broken_degree);
        d.resize(n);
        for (int i = 0; i < n; ++i) d[i] = n * t + i;
        break;
      }
    }
    return d;
  }
};

/// Values and first derivatives of all local basis functions at given points.
struct BasisEval {
  int n_func = 0;
  int n_comp = 1;
  std::size_t n_pts = 0;
  std::vector<double> value;       // [f * n_pts * n_comp + p * n_comp + c]
  std::vector<double> grad;        // scalar: [f][p][2]; P1cVector: [f][p][4]
  std::vector<double> div_or_rot;  // RT0: div; ND0: rot; [f][p]

  double val(int f, std::size_t p, int c = 0) const { return value[(f * n_pts + p) * n_comp + c]; }
};

namespace detail {

/// Barycentric coordinates of p in triangle t.
inline std::array<double, 3> barycentric(const Mesh& m, int t, Vec2 p) {
  const Vec2 a = m.vertex(t, 0), b = m.vertex(t, 1), c = m.vertex(t, 2);
  const double det = (b - a).cross(c - a);
  const double l1 = (p - a).cross(c - a) / det;
  const double l2 = (b - a).cross(p - a) / det;
  return {1.0 - l1 - l2, l1, l2};
}

/// Constant gradients of the three hat functions on triangle t.
inline std::array<Vec2, 3> hat_grads(const Mesh& m, int t) {
  const Vec2 a = m.vertex(t, 0), b = m.vertex(t, 1), c = m.vertex(t, 2);
  const double det = (b - a).cross(c - a);
  // grad lambda_i = perp(opposite edge) / det, oriented inward
  return {Vec2{(b.y - c.y) / det, (c.x - b.x) / det}, Vec2{(c.y - a.y) / det, (a.x - c.x) / det},
          Vec2{(a.y - b.y) / det, (b.x - a.x) / det}};
}

/// Per-edge data of the lowest-order H(div)/H(rot) basis on triangle t:
/// sigma_E(x) = s_E |E| / (2|T|) (x - a_E) with a_E the opposite vertex and
/// s_E the global orientation sign; the Nedelec basis is its 90-degree
/// rotation. Both are unit-normalized against the global edge orientation.
struct EdgeFnData {
  Vec2 opposite;
  double coef = 0.0;  // s |E| / (2|T|)
  double ddiv = 0.0;  // s |E| / |T|; also the rot of the rotated basis
};

inline std::array<EdgeFnData, 3> edge_fn_data(const Mesh& m, int t) {
  std::array<EdgeFnData, 3> out;
  const double area = m.triangles[t].area;
  for (int i = 0; i < 3; ++i) {
    const int e = m.tri_edges[t][i];
    const double s = static_cast<double>(m.tri_edge_sign[t][i]);
    const double len = m.edge_length(e);
    out[i].opposite = m.vertex(t, (i + 2) % 3);
    out[i].coef = s * len / (2.0 * area);
    out[i].ddiv = s * len / area;
  }
  return out;
}

/// Scaled monomials (x-xc)^a (y-yc)^b / h^(a+b), graded lexicographic order.
struct ScalarPolyBasis {
  Vec2 center;
  double h = 1.0;
  int degree = 0;
  std::vector<std::pair<int, int>> exps;

  ScalarPolyBasis(const Mesh& m, int t, int k) : degree(k) {
    const Vec2 a = m.vertex(t, 0), b = m.vertex(t, 1), c = m.vertex(t, 2);
    center = (1.0 / 3.0) * (a + b + c);
    h = m.triangles[t].h;
    for (int d = 0; d <= k; ++d)
      for (int i = d; i >= 0; --i) exps.emplace_back(i, d - i);
  }

  int size() const { return static_cast<int>(exps.size()); }

  void eval(Vec2 p, double* val, double* gx, double* gy) const {
    const double x = (p.x - center.x) / h, y = (p.y - center.y) / h;
    // powers up to degree
    double px[16], py[16];
    px[0] = py[0] = 1.0;
    for (int d = 1; d <= degree; ++d) {
      px[d] = px[d - 1] * x;
      py[d] = py[d - 1] * y;
    }
    for (int f = 0; f < size(); ++f) {
      const auto [a, b] = exps[f];
      val[f] = px[a] * py[b];
      if (gx) gx[f] = (a > 0) ? a * px[a - 1] * py[b] / h : 0.0;
      if (gy) gy[f] = (b > 0) ? b * px[a] * py[b - 1] / h : 0.0;
    }
  }
};

}  // namespace detail

/// Exact polynomial evaluation of the local basis of `space` on element t.
inline BasisEval eval_basis(const FeSpace& space, int t, const std::vector<Vec2>& points) {
  const Mesh& m = *space.mesh;
  BasisEval out;
  out.n_pts = points.size();
  const std::size_t np = points.size();
  switch (space.kind) {
    case SpaceKind::P0Scalar:
    case SpaceKind::P0Vector:
    case SpaceKind::P0SymTensor: {
      // component fields are elementwise-constant indicator basis functions
      const int nc = space.kind == SpaceKind::P0Scalar ? 1 : (space.kind == SpaceKind::P0Vector ? 2 : 3);
      out.n_func = nc;
      out.n_comp = nc;
      out.value.assign(static_cast<std::size_t>(nc) * np * nc, 0.0);
      for (int f = 0; f < nc; ++f)
        for (std::size_t p = 0; p < np; ++p) out.value[(f * np + p) * nc + f] = 1.0;
      return out;
    }
    case SpaceKind::P1cScalar: {
      out.n_func = 3;
      out.n_comp = 1;
      out.value.resize(3 * np);
      out.grad.resize(3 * np * 2);
      const auto g = detail::hat_grads(m, t);
      for (std::size_t p = 0; p < np; ++p) {
        const auto l = detail::barycentric(m, t, points[p]);
        for (int f = 0; f < 3; ++f) {
          out.value[f * np + p] = l[f];
          out.grad[(f * np + p) * 2] = g[f].x;
          out.grad[(f * np + p) * 2 + 1] = g[f].y;
        }
      }
      return out;
    }
    case SpaceKind::P1cVector: {
      out.n_func = 6;
      out.n_comp = 2;
      out.value.assign(6 * np * 2, 0.0);
      out.grad.assign(6 * np * 4, 0.0);
      const auto g = detail::hat_grads(m, t);
      for (std::size_t p = 0; p < np; ++p) {
        const auto l = detail::barycentric(m, t, points[p]);
        for (int v = 0; v < 3; ++v)
          for (int c = 0; c < 2; ++c) {
            const int f = 2 * v + c;
            out.value[(f * np + p) * 2 + c] = l[v];
            // grad layout: dx vx, dy vx, dx vy, dy vy
            out.grad[(f * np + p) * 4 + 2 * c] = g[v].x;
            out.grad[(f * np + p) * 4 + 2 * c + 1] = g[v].y;
          }
      }
      return out;
    }
    case SpaceKind::RT0:
    case SpaceKind::ND0: {
      out.n_func = 3;
      out.n_comp = 2;
      out.value.resize(3 * np * 2);
      out.div_or_rot.resize(3 * np);
      const auto data = detail::edge_fn_data(m, t);
      const bool rotate = space.kind == SpaceKind::ND0;
      for (int f = 0; f < 3; ++f)
        for (std::size_t p = 0; p < np; ++p) {
          Vec2 v = data[f].coef * (points[p] - data[f].opposite);
          if (rotate) v = v.perp();
          out.value[(f * np + p) * 2] = v.x;
          out.value[(f * np + p) * 2 + 1] = v.y;
          out.div_or_rot[f * np + p] = data[f].ddiv;
        }
      return out;
    }
    case SpaceKind::RT0Rows: {
      out.n_func = 6;
      out.n_comp = 4;  // full 2x2 tensor: xx, xy, yx, yy
      out.value.assign(6 * np * 4, 0.0);
      out.div_or_rot.assign(6 * np, 0.0);
      const auto data = detail::edge_fn_data(m, t);
      for (int i = 0; i < 3; ++i)
        for (int r = 0; r < 2; ++r) {
          const int f = 2 * i + r;
          for (std::size_t p = 0; p < np; ++p) {
            const Vec2 v = data[i].coef * (points[p] - data[i].opposite);
            out.value[(f * np + p) * 4 + 2 * r] = v.x;
            out.value[(f * np + p) * 4 + 2 * r + 1] = v.y;
            out.div_or_rot[f * np + p] = data[i].ddiv;  // divergence lands in row r
          }
        }
      return out;
    }
    case SpaceKind::BrokenPk: {
      detail::ScalarPolyBasis basis(m, t, space.broken_degree);
      const int n = basis.size();
      out.n_func = n;
      out.n_comp = 1;
      out.value.resize(static_cast<std::size_t>(n) * np);
      out.grad.resize(static_cast<std::size_t>(n) * np * 2);
      std::vector<double> val(n), gx(n), gy(n);
      for (std::size_t p = 0; p < np; ++p) {
        basis.eval(points[p], val.data(), gx.data(), gy.data());
        for (int f = 0; f < n; ++f) {
          out.value[f * np + p] = val[f];
          out.grad[(f * np + p) * 2] = gx[f];
          out.grad[(f * np + p) * 2 + 1] = gy[f];
        }
      }
      return out;
    }
  }
  throw Error("eval_basis: bad kind");
}

/// Builds the space with its boundary-condition mask. The eta-trace linked
/// conditions on soft segments couple to the psi block and are added by the
/// combined trial layout; standalone ND0 realizes the tangential-zero cases.
inline FeSpace build_space(SpaceKind kind, const Mesh& mesh, const BcSpec& bc = {}) {
  using Role = BcSpec::Role;
  FeSpace s;
  s.kind = kind;
  s.mesh = &mesh;
  switch (kind) {
    case SpaceKind::P0Scalar: s.dof_count = mesh.n_triangles(); break;
    case SpaceKind::P0Vector: s.dof_count = 2 * mesh.n_triangles(); break;
    case SpaceKind::P0SymTensor: s.dof_count = 3 * mesh.n_triangles(); break;
    case SpaceKind::P1cScalar: s.dof_count = mesh.n_vertices(); break;
    case SpaceKind::P1cVector: s.dof_count = 2 * mesh.n_vertices(); break;
    case SpaceKind::RT0:
    case SpaceKind::ND0: s.dof_count = mesh.n_edges(); break;
    case SpaceKind::RT0Rows: s.dof_count = 2 * mesh.n_edges(); break;
    case SpaceKind::BrokenPk: throw ConfigError("build_space: use broken_test_space for broken spaces");
  }
  s.constraints = DofConstraints(s.dof_count);

  const auto role_ok = [&] {
    switch (bc.role) {
      case Role::None: return true;
      case Role::DeflectionTrace:
      case Role::PTrace: return kind == SpaceKind::P1cScalar;
      case Role::PsiTrace: return kind == SpaceKind::P1cVector;
      case Role::EtaTrace: return kind == SpaceKind::ND0;
      case Role::MTrace: return kind == SpaceKind::RT0Rows;
    }
    return false;
  }();
  if (!role_ok) throw ConfigError("build_space: boundary-condition role incompatible with space kind");

  switch (bc.role) {
    case Role::None: break;
    case Role::DeflectionTrace:
      for (const auto& e : mesh.edges)
        if (e.boundary && e.tag != BCKind::Free) {
          s.constraints.set_zero(e.a);
          s.constraints.set_zero(e.b);
        }
      break;
    case Role::PTrace:
      for (const auto& e : mesh.edges)
        if (e.boundary && e.tag == BCKind::Free) {
          s.constraints.set_zero(e.a);
          s.constraints.set_zero(e.b);
        }
      break;
    case Role::PsiTrace: {
      detail::VertexDirectionConstraints dirs(mesh.n_vertices());
      for (int ei = 0; ei < mesh.n_edges(); ++ei) {
        const auto& e = mesh.edges[ei];
        if (!e.boundary) continue;
        const Vec2 n = mesh.edge_normal(ei), tg = mesh.edge_tangent(ei);
        switch (e.tag) {
          case BCKind::HardClamped:
            dirs.add(e.a, {1, 0});
            dirs.add(e.a, {0, 1});
            dirs.add(e.b, {1, 0});
            dirs.add(e.b, {0, 1});
            break;
          case BCKind::SoftClamped:  // psi . n = 0
            dirs.add(e.a, n);
            dirs.add(e.b, n);
            break;
          case BCKind::HardSimpleSupport:  // psi . t = 0
            dirs.add(e.a, tg);
            dirs.add(e.b, tg);
            break;
          default: break;
        }
      }
      dirs.apply(s.constraints, [](int v, int c) { return 2 * v + c; });
      break;
    }
    case Role::EtaTrace:
      for (int ei = 0; ei < mesh.n_edges(); ++ei) {
        const auto& e = mesh.edges[ei];
        if (!e.boundary) continue;
        if (e.tag == BCKind::HardClamped || e.tag == BCKind::HardSimpleSupport) s.constraints.set_zero(ei);
      }
      break;
    case Role::MTrace:
      for (int ei = 0; ei < mesh.n_edges(); ++ei) {
        const auto& e = mesh.edges[ei];
        if (!e.boundary) continue;
        const Vec2 n = mesh.edge_normal(ei);
        const int d0 = 2 * ei, d1 = 2 * ei + 1;
        switch (e.tag) {
          case BCKind::SoftSimpleSupport:
          case BCKind::Free:  // M n = 0
            s.constraints.set_zero(d0);
            s.constraints.set_zero(d1);
            break;
          case BCKind::HardSimpleSupport: {  // n . M n = n_x c0 + n_y c1 = 0
            if (std::abs(n.x) >= std::abs(n.y)) {
              const double coef = -n.y / n.x;
              if (std::abs(coef) < 1e-14)
                s.constraints.set_zero(d0);
              else
                s.constraints.set_affine(d0, {{d1, coef}});
            } else {
              const double coef = -n.x / n.y;
              if (std::abs(coef) < 1e-14)
                s.constraints.set_zero(d1);
              else
                s.constraints.set_affine(d1, {{d0, coef}});
            }
            break;
          }
          case BCKind::SoftClamped: {  // t . M n = -n_y c0 + n_x c1 = 0
            const Vec2 tg{-n.y, n.x};
            if (std::abs(tg.x) >= std::abs(tg.y)) {
              const double coef = -tg.y / tg.x;
              if (std::abs(coef) < 1e-14)
                s.constraints.set_zero(d0);
              else
                s.constraints.set_affine(d0, {{d1, coef}});
            } else {
              const double coef = -tg.x / tg.y;
              if (std::abs(coef) < 1e-14)
                s.constraints.set_zero(d1);
              else
                s.constraints.set_affine(d1, {{d0, coef}});
            }
            break;
          }
          default: break;
        }
      }
      break;
  }
  s.constraints.finalize();
  return s;
}

/// Element-local broken test blocks of degree k: vector chi, vector rho,
/// symmetric tensor S stored as (xx, yy, xy) scalar fields, scalar v.
struct BrokenTestSpace {
  int k = 3;
  int n_scalar = 10;  // dim P_k
  const Mesh* mesh = nullptr;
  int chi_dofs() const { return 2 * n_scalar; }
  int rho_dofs() const { return 2 * n_scalar; }
  int s_dofs() const { return 3 * n_scalar; }
  int v_dofs() const { return n_scalar; }
  int dofs_per_element() const { return 8 * n_scalar; }
  long long global_dofs() const { return static_cast<long long>(dofs_per_element()) * mesh->n_triangles(); }
};

inline BrokenTestSpace broken_test_space(const Mesh& mesh, int k = 3) {
  if (k < 1) throw ConfigError("broken_test_space: k >= 1 required");
  BrokenTestSpace s;
  s.k = k;
  s.n_scalar = detail::pk_dim(k);
  s.mesh = &mesh;
  return s;
}

}  // namespace rmdpg
