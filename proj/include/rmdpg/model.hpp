#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "rmdpg/mesh.hpp"
#include "rmdpg/poly2.hpp"

namespace rmdpg {

/// Symmetric 2x2 tensor stored as (xx, yy, xy).
struct Sym2 {
  double xx = 0.0, yy = 0.0, xy = 0.0;
  Sym2 operator+(const Sym2& o) const { return {xx + o.xx, yy + o.yy, xy + o.xy}; }
  Sym2 operator-(const Sym2& o) const { return {xx - o.xx, yy - o.yy, xy - o.xy}; }
  Sym2 operator*(double s) const { return {s * xx, s * yy, s * xy}; }
  double frobenius_sq() const { return xx * xx + yy * yy + 2.0 * xy * xy; }
};

/// Plane-stress constitutive tensor (t-independent, kappa*G = 1 scaling).
class MaterialTensor {
public:
  enum class Mode { Identity, PlaneStress };

  MaterialTensor() = default;
  static MaterialTensor identity() { return MaterialTensor(); }
  static MaterialTensor plane_stress(double E, double nu) {
    if (!(E > 0.0)) throw ConfigError("material: Young modulus must be positive");
    if (!(nu > -1.0 && nu <= 0.5)) throw ConfigError("material: Poisson ratio must be in (-1, 1/2]");
    MaterialTensor m;
    m.mode_ = Mode::PlaneStress;
    m.E_ = E;
    m.nu_ = nu;
    m.D_ = E / (12.0 * (1.0 - nu * nu));
    return m;
  }

  Mode mode() const { return mode_; }

  Sym2 apply(const Sym2& s) const {
    if (mode_ == Mode::Identity) return s;
    const double tr = s.xx + s.yy;
    return {D_ * ((1.0 - nu_) * s.xx + nu_ * tr), D_ * ((1.0 - nu_) * s.yy + nu_ * tr), D_ * (1.0 - nu_) * s.xy};
  }

  Sym2 apply_inverse(const Sym2& s) const {
    if (mode_ == Mode::Identity) return s;
    const double tr = (s.xx + s.yy) / (D_ * (1.0 + nu_));
    const double inv = 1.0 / (D_ * (1.0 - nu_));
    return {inv * s.xx - nu_ * tr / (1.0 - nu_), inv * s.yy - nu_ * tr / (1.0 - nu_), inv * s.xy};
  }

private:
  Mode mode_ = Mode::Identity;
  double E_ = 0.0, nu_ = 0.0, D_ = 0.0;
};

/// Problem description: thickness, material, load and boundary partition,
/// with the derived scaling flags.
struct ModelConfig {
  double t = 1e-2;
  MaterialTensor material;
  std::function<double(Vec2)> load;
  bool load_is_constant = false;
  std::map<std::string, BCKind> bc;
  double domain_scale = 1.0;  // d; default 1 reproduces the unscaled norms

  int system_quadrature_degree = 6;
  int error_quadrature_degree = 14;
  int test_degree = 3;

  bool has_kind(BCKind k) const {
    for (const auto& [name, kind] : bc)
      if (kind == k) return true;
    return false;
  }
  /// t_* = 1 unless soft-clamped or soft-simple-support segments are present.
  double t_star() const {
    return (has_kind(BCKind::SoftClamped) || has_kind(BCKind::SoftSimpleSupport)) ? t : 1.0;
  }
  double d_star() const {
    return (has_kind(BCKind::SoftClamped) || has_kind(BCKind::SoftSimpleSupport)) ? domain_scale : 1.0;
  }
  /// Quotient handling is active iff there is no free boundary part.
  bool quotient_mode() const { return !has_kind(BCKind::Free); }

  void validate() const {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("thickness t must be in (0,1]");
    if (bc.empty()) throw ConfigError("boundary partition is empty");
    bool has_u_part = false;
    for (const auto& [name, kind] : bc)
      if (kind != BCKind::Free) has_u_part = true;
    if (!has_u_part) throw ConfigError("Gamma_u is empty: at least one non-free segment required");
  }
};

struct FieldValues {
  double u = 0.0;
  Vec2 grad_u;
  Vec2 psi;
  std::array<double, 4> grad_psi{0, 0, 0, 0};  // dx psi_x, dy psi_x, dx psi_y, dy psi_y
  Sym2 M;
};

/// Exact-solution catalog entry; evaluators are pure and thread-safe.
struct ExactSolution {
  std::string name;
  std::function<double(Vec2)> u;
  std::function<Vec2(Vec2)> grad_u;
  std::function<Vec2(Vec2)> psi;
  std::function<std::array<double, 4>(Vec2)> grad_psi;
  std::function<Sym2(Vec2)> M;
  std::function<double(Vec2)> f;
  /// Single-pass evaluation of the error-norm fields.
  std::function<FieldValues(Vec2)> all;
};

namespace detail {

struct Ex1Polys {
  Poly2 phi, psi1, psi2, mxx, myy, mxy, f;
  Poly2 dpsi1x, dpsi1y, dpsi2x, dpsi2y;
  Poly2 lap_phi, dlapx, dlapy;
};

inline std::shared_ptr<const Ex1Polys> ex1_polys() {
  static const auto polys = [] {
    auto p = std::make_shared<Ex1Polys>();
    // g(s) = s^3 (s-1)^3 and g'(s) = 3 s^2 (s-1)^2 (2s-1)
    const std::vector<double> g = {0, 0, 0, -1, 3, -3, 1};
    const std::vector<double> gp3 = {0, 0, -1, 4, -5, 2};  // g'/3
    p->phi = Poly2::in_x(g) * Poly2::in_y(g) * (1.0 / 3.0);
    p->psi1 = Poly2::in_x(gp3) * Poly2::in_y(g);
    p->psi2 = Poly2::in_x(g) * Poly2::in_y(gp3);
    p->mxx = p->psi1.dx() * -1.0;
    p->myy = p->psi2.dy() * -1.0;
    p->mxy = (p->psi1.dy() + p->psi2.dx()) * -0.5;
    p->dpsi1x = p->psi1.dx();
    p->dpsi1y = p->psi1.dy();
    p->dpsi2x = p->psi2.dx();
    p->dpsi2y = p->psi2.dy();
    p->lap_phi = p->phi.laplacian();
    p->dlapx = p->lap_phi.dx();
    p->dlapy = p->lap_phi.dy();
    p->f = p->lap_phi.laplacian();
    return p;
  }();
  return polys;
}

struct KirchhoffSeries {
  int nmax = 100;  // per-direction cap; only odd indices contribute
  int K = 0;       // number of odd indices
  // weight arrays over odd (m, n) pairs, flattened row-major over (mi, ni)
  std::vector<double> wu, wdx, wdy, wdxx, wdyy, wdxy, wlx, wly;

  explicit KirchhoffSeries(int nmax_) : nmax(nmax_) {
    K = (nmax + 1) / 2;
    const double pi = M_PI;
    const std::size_t total = static_cast<std::size_t>(K) * K;
    wu.resize(total);
    wdx.resize(total);
    wdy.resize(total);
    wdxx.resize(total);
    wdyy.resize(total);
    wdxy.resize(total);
    wlx.resize(total);
    wly.resize(total);
    for (int mi = 0; mi < K; ++mi) {
      const double m = 2.0 * mi + 1.0;
      for (int ni = 0; ni < K; ++ni) {
        const double n = 2.0 * ni + 1.0;
        const double s = m * m + n * n;
        const double c = 16.0 / (std::pow(pi, 6) * m * n * s * s);
        const std::size_t k = static_cast<std::size_t>(mi) * K + ni;
        wu[k] = c;
        wdx[k] = c * m * pi;
        wdy[k] = c * n * pi;
        wdxx[k] = c * m * m * pi * pi;
        wdyy[k] = c * n * n * pi * pi;
        wdxy[k] = c * m * n * pi * pi;
        wlx[k] = c * m * pi * s * pi * pi;
        wly[k] = c * n * pi * s * pi * pi;
      }
    }
  }

  struct KVals {
    double u = 0, ux = 0, uy = 0, uxx = 0, uyy = 0, uxy = 0, lapx = 0, lapy = 0;
    double lap() const { return uxx + uyy; }
  };

  KVals eval(Vec2 p) const {
    const double ax = M_PI * p.x, ay = M_PI * p.y;
    std::vector<double> sx(K), cx(K), sy(K), cy(K);
    const double tx = 2.0 * std::cos(2.0 * ax), ty = 2.0 * std::cos(2.0 * ay);
    sx[0] = std::sin(ax);
    cx[0] = std::cos(ax);
    sy[0] = std::sin(ay);
    cy[0] = std::cos(ay);
    for (int k = 1; k < K; ++k) {
      // Chebyshev step by 2: f((m+2)a) = 2 cos(2a) f(ma) - f((m-2)a)
      const double sxm2 = (k == 1) ? -sx[0] : sx[k - 2];
      const double cxm2 = (k == 1) ? cx[0] : cx[k - 2];
      const double sym2 = (k == 1) ? -sy[0] : sy[k - 2];
      const double cym2 = (k == 1) ? cy[0] : cy[k - 2];
      sx[k] = tx * sx[k - 1] - sxm2;
      cx[k] = tx * cx[k - 1] - cxm2;
      sy[k] = ty * sy[k - 1] - sym2;
      cy[k] = ty * cy[k - 1] - cym2;
    }
    double a_u = 0, a_dx = 0, a_dy = 0, a_dxx = 0, a_dyy = 0, a_dxy = 0, a_lx = 0, a_ly = 0;
    for (int mi = 0; mi < K; ++mi) {
      const double sxm = sx[mi], cxm = cx[mi];
      const std::size_t row = static_cast<std::size_t>(mi) * K;
      double r_u = 0, r_dy = 0, r_dyy = 0, r_ly = 0, r_dx = 0, r_dxx = 0, r_dxy = 0, r_lx = 0;
      for (int ni = 0; ni < K; ++ni) {
        const double syn = sy[ni], cyn = cy[ni];
        const std::size_t k = row + ni;
        r_u += wu[k] * syn;
        r_dx += wdx[k] * syn;
        r_dy += wdy[k] * cyn;
        r_dxx += wdxx[k] * syn;
        r_dyy += wdyy[k] * syn;
        r_dxy += wdxy[k] * cyn;
        r_lx += wlx[k] * syn;
        r_ly += wly[k] * cyn;
      }
      a_u += r_u * sxm;
      a_dx += r_dx * cxm;
      a_dy += r_dy * sxm;
      a_dxx += r_dxx * sxm;
      a_dyy += r_dyy * sxm;
      a_dxy += r_dxy * cxm;
      a_lx += r_lx * cxm;
      a_ly += r_ly * sxm;
    }
    KVals v;
    v.u = a_u;
    v.ux = a_dx;
    v.uy = a_dy;
    v.uxx = -a_dxx;
    v.uyy = -a_dyy;
    v.uxy = a_dxy;
    v.lapx = -a_lx;
    v.lapy = -a_ly;
    return v;
  }
};

}  // namespace detail

/// Hard-clamped polynomial solution on the unit square.
inline ExactSolution example1_polynomial(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw ConfigError("example1: t in (0,1] required");
  auto P = detail::ex1_polys();
  const double t2 = t * t;
  ExactSolution s;
  s.name = "poly";
  s.u = [P, t2](Vec2 p) { return P->phi(p) - t2 * P->lap_phi(p); };
  s.grad_u = [P, t2](Vec2 p) -> Vec2 {
    return {P->psi1(p) - t2 * P->dlapx(p), P->psi2(p) - t2 * P->dlapy(p)};
  };
  s.psi = [P](Vec2 p) -> Vec2 { return {P->psi1(p), P->psi2(p)}; };
  s.grad_psi = [P](Vec2 p) -> std::array<double, 4> {
    return {P->dpsi1x(p), P->dpsi1y(p), P->dpsi2x(p), P->dpsi2y(p)};
  };
  s.M = [P](Vec2 p) -> Sym2 { return {P->mxx(p), P->myy(p), P->mxy(p)}; };
  s.f = [P](Vec2 p) { return P->f(p); };
  s.all = [P, t2](Vec2 p) {
    FieldValues v;
    v.u = P->phi(p) - t2 * P->lap_phi(p);
    v.grad_u = {P->psi1(p) - t2 * P->dlapx(p), P->psi2(p) - t2 * P->dlapy(p)};
    v.psi = {P->psi1(p), P->psi2(p)};
    v.grad_psi = {P->dpsi1x(p), P->dpsi1y(p), P->dpsi2x(p), P->dpsi2y(p)};
    v.M = {P->mxx(p), P->myy(p), P->mxy(p)};
    return v;
  };
  return s;
}

/// Hard-simple-support solution on the unit square derived from the Kirchhoff
/// plate; the biharmonic series is truncated at n_terms per direction.
inline ExactSolution example2_kirchhoff(double t, int n_terms) {
  if (n_terms < 1) throw ConfigError("example2: n_terms >= 1 required");
  auto S = std::make_shared<const detail::KirchhoffSeries>(n_terms);
  const double t2 = t * t;
  const auto fields = [S, t2](Vec2 p) {
    const auto k = S->eval(p);
    FieldValues v;
    v.u = k.u - t2 * k.lap();
    v.grad_u = {k.ux - t2 * k.lapx, k.uy - t2 * k.lapy};
    v.psi = {k.ux, k.uy};
    v.grad_psi = {k.uxx, k.uxy, k.uxy, k.uyy};
    v.M = {-k.uxx, -k.uyy, -k.uxy};
    return v;
  };
  ExactSolution s;
  s.name = "kirchhoff";
  s.u = [fields](Vec2 p) { return fields(p).u; };
  s.grad_u = [fields](Vec2 p) { return fields(p).grad_u; };
  s.psi = [fields](Vec2 p) { return fields(p).psi; };
  s.grad_psi = [fields](Vec2 p) { return fields(p).grad_psi; };
  s.M = [fields](Vec2 p) { return fields(p).M; };
  s.f = [](Vec2) { return 1.0; };
  s.all = fields;
  return s;
}

/// Whole problem: boundary partition, mesh builder, load, optional exact solution.
struct ProblemSetup {
  std::string name;
  ModelConfig config;
  std::function<Mesh(int)> initial_mesh;  // n subdivisions per unit edge
  int default_initial_n = 4;
  std::optional<ExactSolution> exact;
};

inline ProblemSetup make_problem_poly(double t) {
  ProblemSetup p;
  p.name = "poly";
  p.config.t = t;
  p.config.bc = {{"bottom", BCKind::HardClamped},
                 {"right", BCKind::HardClamped},
                 {"top", BCKind::HardClamped},
                 {"left", BCKind::HardClamped}};
  auto exact = example1_polynomial(t);
  p.config.load = exact.f;
  p.config.load_is_constant = false;
  p.initial_mesh = [](int n) { return build_structured_square(n, SquareBc::all(BCKind::HardClamped)); };
  p.default_initial_n = 4;
  p.exact = std::move(exact);
  p.config.validate();
  return p;
}

inline ProblemSetup make_problem_kirchhoff(double t, int n_terms) {
  ProblemSetup p;
  p.name = "kirchhoff";
  p.config.t = t;
  p.config.bc = {{"bottom", BCKind::HardSimpleSupport},
                 {"right", BCKind::HardSimpleSupport},
                 {"top", BCKind::HardSimpleSupport},
                 {"left", BCKind::HardSimpleSupport}};
  p.config.load = [](Vec2) { return 1.0; };
  p.config.load_is_constant = true;
  p.initial_mesh = [](int n) { return build_structured_square(n, SquareBc::all(BCKind::HardSimpleSupport)); };
  p.default_initial_n = 4;
  p.exact = example2_kirchhoff(t, n_terms);
  p.config.validate();
  return p;
}

/// L-shaped plate with constant unit load; the two segments meeting the
/// re-entrant corner are hard clamped, everything else is free. No exact
/// solution is known.
inline ProblemSetup example3_lshape(double t = 1e-3) {
  ProblemSetup p;
  p.name = "lshape";
  p.config.t = t;
  p.config.bc = {{"bottom", BCKind::Free},      {"right", BCKind::Free},
                 {"top", BCKind::Free},         {"left", BCKind::Free},
                 {"reentrant_h", BCKind::HardClamped}, {"reentrant_v", BCKind::HardClamped}};
  p.config.load = [](Vec2) { return 1.0; };
  p.config.load_is_constant = true;
  p.initial_mesh = [](int n) { return build_lshape(n, LshapeBc{}); };
  p.default_initial_n = 1;
  p.config.validate();
  return p;
}

}  // namespace rmdpg
