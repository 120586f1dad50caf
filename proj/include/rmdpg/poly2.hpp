#pragma once

#include <vector>

#include "rmdpg/common.hpp"

namespace rmdpg {

/// Dense bivariate polynomial sum c[i][j] x^i y^j with exact coefficient
/// arithmetic in double; used to build manufactured solutions in closed form.
class Poly2 {
public:
  Poly2() : nx_(1), ny_(1), c_(1, 0.0) {}
  Poly2(int degx, int degy) : nx_(degx + 1), ny_(degy + 1), c_(nx_ * ny_, 0.0) {}

  static Poly2 constant(double v) {
    Poly2 p;
    p.at(0, 0) = v;
    return p;
  }
  static Poly2 x() {
    Poly2 p(1, 0);
    p.at(1, 0) = 1.0;
    return p;
  }
  static Poly2 y() {
    Poly2 p(0, 1);
    p.at(0, 1) = 1.0;
    return p;
  }
  /// Polynomial in x only from ascending 1D coefficients.
  static Poly2 in_x(const std::vector<double>& coeffs) {
    Poly2 p(static_cast<int>(coeffs.size()) - 1, 0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) p.at(static_cast<int>(i), 0) = coeffs[i];
    return p;
  }
  static Poly2 in_y(const std::vector<double>& coeffs) {
    Poly2 p(0, static_cast<int>(coeffs.size()) - 1);
    for (std::size_t j = 0; j < coeffs.size(); ++j) p.at(0, static_cast<int>(j)) = coeffs[j];
    return p;
  }

  double& at(int i, int j) { return c_[i * ny_ + j]; }
  double at(int i, int j) const { return (i < nx_ && j < ny_) ? c_[i * ny_ + j] : 0.0; }
  int degx() const { return nx_ - 1; }
  int degy() const { return ny_ - 1; }

  Poly2 operator+(const Poly2& o) const {
    Poly2 r(std::max(degx(), o.degx()), std::max(degy(), o.degy()));
    for (int i = 0; i < r.nx_; ++i)
      for (int j = 0; j < r.ny_; ++j) r.at(i, j) = at(i, j) + o.at(i, j);
    return r;
  }
  Poly2 operator-(const Poly2& o) const { return *this + o * -1.0; }
  Poly2 operator*(double s) const {
    Poly2 r = *this;
    for (double& v : r.c_) v *= s;
    return r;
  }
  Poly2 operator*(const Poly2& o) const {
    Poly2 r(degx() + o.degx(), degy() + o.degy());
    for (int i = 0; i < nx_; ++i)
      for (int j = 0; j < ny_; ++j) {
        const double cij = c_[i * ny_ + j];
        if (cij == 0.0) continue;
        for (int p = 0; p < o.nx_; ++p)
          for (int q = 0; q < o.ny_; ++q) r.at(i + p, j + q) += cij * o.at(p, q);
      }
    return r;
  }

  Poly2 dx() const {
    if (nx_ == 1) return Poly2();
    Poly2 r(degx() - 1, degy());
    for (int i = 1; i < nx_; ++i)
      for (int j = 0; j < ny_; ++j) r.at(i - 1, j) = i * at(i, j);
    return r;
  }
  Poly2 dy() const {
    if (ny_ == 1) return Poly2();
    Poly2 r(degx(), degy() - 1);
    for (int i = 0; i < nx_; ++i)
      for (int j = 1; j < ny_; ++j) r.at(i, j - 1) = j * at(i, j);
    return r;
  }
  Poly2 laplacian() const { return dx().dx() + dy().dy(); }

  double operator()(double x, double y) const {
    // Horner in x of Horner-in-y rows.
    double acc = 0.0;
    for (int i = nx_ - 1; i >= 0; --i) {
      double row = 0.0;
      for (int j = ny_ - 1; j >= 0; --j) row = row * y + c_[i * ny_ + j];
      acc = acc * x + row;
    }
    return acc;
  }
  double operator()(const Vec2& p) const { return (*this)(p.x, p.y); }

  /// Substitute x = cx + ax*s + bx*t, y = cy + ay*s + by*t; returns a
  /// polynomial in (s, t). Used by test oracles to pull integrands back to
  /// the reference triangle.
  Poly2 compose_affine(double cx, double ax, double bx, double cy, double ay, double by) const {
    const Poly2 xs = Poly2::constant(cx) + Poly2::x() * ax + Poly2::y() * bx;
    const Poly2 ys = Poly2::constant(cy) + Poly2::x() * ay + Poly2::y() * by;
    Poly2 result;
    // Precompute powers.
    std::vector<Poly2> xp(nx_), yp(ny_);
    xp[0] = Poly2::constant(1.0);
    for (int i = 1; i < nx_; ++i) xp[i] = xp[i - 1] * xs;
    yp[0] = Poly2::constant(1.0);
    for (int j = 1; j < ny_; ++j) yp[j] = yp[j - 1] * ys;
    for (int i = 0; i < nx_; ++i)
      for (int j = 0; j < ny_; ++j) {
        const double cij = at(i, j);
        if (cij != 0.0) result = result + xp[i] * yp[j] * cij;
      }
    return result;
  }

private:
  int nx_, ny_;
  std::vector<double> c_;
};

}  // namespace rmdpg
