#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "rmdpg/common.hpp"
#include "rmdpg/mesh.hpp"

namespace rmdpg {

/// Quadrature rule on the reference triangle {x,y >= 0, x+y <= 1}.
/// All weights are positive, all points interior; weights sum to 1/2.
struct TriangleRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
  int exact_degree = 0;

  std::size_t size() const { return points.size(); }
  std::array<double, 3> barycentric(std::size_t i) const {
    return {1.0 - points[i].x - points[i].y, points[i].x, points[i].y};
  }
};

/// Gauss rule on [0,1].
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights;
  int exact_degree = 0;
};

namespace detail {

/// Golub-Welsch nodes/weights for the Jacobi weight (1-x)^alpha on [-1,1]
/// (beta = 0). alpha = 0 gives Gauss-Legendre.
inline void jacobi_rule(int n, int alpha, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  const double a = static_cast<double>(alpha);
  for (int k = 0; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double denom = (2 * kk + a) * (2 * kk + a + 2);
    J(k, k) = (denom == 0.0) ? -a / (a + 2.0) : -a * a / denom;
  }
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double num = 4 * kk * (kk + a) * kk * (kk + a);
    const double den = (2 * kk + a) * (2 * kk + a) * (2 * kk + a + 1) * (2 * kk + a - 1);
    const double b = std::sqrt(num / den);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double total = std::pow(2.0, a + 1.0) / (a + 1.0);  // integral of (1-x)^a over [-1,1]
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    w[i] = total * v0 * v0;
  }
}

struct RuleCache {
  std::vector<TriangleRule> tri;   // index n-1, n = 1..11
  std::vector<LineRule> line;      // index n-1
  RuleCache() {
    for (int n = 1; n <= 11; ++n) {
      std::vector<double> xg, wg, xj, wj;
      jacobi_rule(n, 0, xg, wg);
      jacobi_rule(n, 1, xj, wj);
      LineRule lr;
      lr.exact_degree = 2 * n - 1;
      for (int i = 0; i < n; ++i) {
        lr.points.push_back(0.5 * (1.0 + xg[i]));
        lr.weights.push_back(0.5 * wg[i]);
      }
      line.push_back(lr);
      // Conical product: x from the Jacobi(1,0) rule, y collapsed by (1-x).
      TriangleRule tr;
      tr.exact_degree = 2 * n - 1;
      for (int i = 0; i < n; ++i) {
        const double u = 0.5 * (1.0 + xj[i]);
        const double au = 0.25 * wj[i];
        for (int j = 0; j < n; ++j) {
          const double v = 0.5 * (1.0 + xg[j]);
          tr.points.push_back({u, (1.0 - u) * v});
          tr.weights.push_back(au * 0.5 * wg[j]);
        }
      }
      tri.push_back(tr);
    }
  }
};

inline const RuleCache& rule_cache() {
  static const RuleCache cache;
  return cache;
}

}  // namespace detail

/// Positive-weight interior rule exact at least to total degree d, 0 <= d <= 20.
inline const TriangleRule& rule_for_degree(int d) {
  if (d < 0 || d > 20) throw ConfigError("rule_for_degree: degree " + std::to_string(d) + " unsupported (0..20)");
  const int n = std::max(1, (d + 2) / 2);
  return detail::rule_cache().tri[n - 1];
}

/// Gauss-Legendre rule on [0,1], exact at least to degree d, 0 <= d <= 20.
inline const LineRule& edge_rule_for_degree(int d) {
  if (d < 0 || d > 20) throw ConfigError("edge_rule_for_degree: degree " + std::to_string(d) + " unsupported (0..20)");
  const int n = std::max(1, (d + 2) / 2);
  return detail::rule_cache().line[n - 1];
}

struct PhysicalRule {
  std::vector<Vec2> points;
  std::vector<double> weights;  // sum equals the triangle area
};

/// Affine image of a reference rule on the triangle (v0, v1, v2).
inline PhysicalRule map_to_physical(const TriangleRule& rule, const Vec2& v0, const Vec2& v1, const Vec2& v2) {
  const Vec2 d1 = v1 - v0, d2 = v2 - v0;
  const double det = d1.cross(d2);
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) throw GeometryError("map_to_physical: degenerate triangle");
  PhysicalRule out;
  out.points.reserve(rule.size());
  out.weights.reserve(rule.size());
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Vec2 p = rule.points[q];
    out.points.push_back(v0 + p.x * d1 + p.y * d2);
    out.weights.push_back(rule.weights[q] * std::abs(det));
  }
  return out;
}

inline PhysicalRule map_to_physical(const TriangleRule& rule, const Mesh& mesh, int t) {
  return map_to_physical(rule, mesh.vertex(t, 0), mesh.vertex(t, 1), mesh.vertex(t, 2));
}

}  // namespace rmdpg
