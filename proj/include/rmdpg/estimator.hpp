#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "rmdpg/fespaces.hpp"
#include "rmdpg/quadrature.hpp"

namespace rmdpg {

/// Per-element estimator contributions of the three stages and their
/// root-sum-square combination.
struct EstimateField {
  std::vector<double> eta1, eta2, eta3;  // per-element values
  std::vector<double> combined;
  double total1 = 0, total2 = 0, total3 = 0, total = 0;
};

/// Weighted-residual estimator for the P1 Poisson stages:
///   eta(T)^2 = h_T^2 ||R||_T^2 + 1/2 sum_{interior E} h_E ||J_E||_E^2
///              + sum_{free boundary E} h_E ||flux||_E^2
/// with R = f (stage 1) or t^2 f (stage 3; the elementwise divergence of the
/// piecewise-constant rotation field vanishes), and J_E the jump of
/// (grad u_h - correction) . n. Edges on the Dirichlet part contribute nothing.
inline std::vector<double> poisson_estimator(const Mesh& mesh, const Eigen::VectorXd& u_full, int stage,
                                             const std::function<double(Vec2)>& f, double t,
                                             const std::vector<Vec2>& psi_field, int quad_degree = 14,
                                             int threads = 1) {
  if (stage != 1 && stage != 3) throw ConfigError("poisson_estimator: stage must be 1 or 3");
  const int nt = mesh.n_triangles();
  if (stage == 3 && static_cast<int>(psi_field.size()) != nt) throw Error("poisson_estimator: psi field size");
  const double vol_scale = (stage == 1) ? 1.0 : t * t;

  // elementwise-constant numerical flux grad u_h - correction
  std::vector<Vec2> flux(nt);
  for (int el = 0; el < nt; ++el) {
    const auto g = detail::hat_grads(mesh, el);
    Vec2 grad{0, 0};
    for (int k = 0; k < 3; ++k) grad = grad + u_full[mesh.triangles[el].v[k]] * g[k];
    flux[el] = (stage == 3) ? grad - psi_field[el] : grad;
  }

  std::vector<double> eta2(nt, 0.0);
  const auto& rule = rule_for_degree(quad_degree);
  parallel_for(nt, threads, [&](std::size_t el) {
    const auto& tri = mesh.triangles[el];
    const auto phys = map_to_physical(rule, mesh, static_cast<int>(el));
    double r2 = 0.0;
    for (std::size_t q = 0; q < phys.points.size(); ++q) {
      const double r = vol_scale * f(phys.points[q]);
      r2 += phys.weights[q] * r * r;
    }
    double acc = tri.h * tri.h * r2;
    for (int i = 0; i < 3; ++i) {
      const int e = mesh.tri_edges[static_cast<int>(el)][i];
      const auto& ed = mesh.edges[e];
      const double len = mesh.edge_length(e);
      const Vec2 n = mesh.edge_normal(e);
      if (ed.boundary) {
        if (ed.tag == BCKind::Free) {
          const double j = flux[el].dot(n);
          acc += len * len * j * j;
        }
        continue;
      }
      const int other = (ed.tri[0] == static_cast<int>(el)) ? ed.tri[1] : ed.tri[0];
      const double j = (flux[el] - flux[other]).dot(n);
      acc += 0.5 * len * len * j * j;
    }
    eta2[el] = std::sqrt(acc);
  });
  return eta2;
}

inline EstimateField combine(const std::vector<double>& eta1, const std::vector<double>& eta2,
                             const std::vector<double>& eta3) {
  if (eta1.size() != eta2.size() || eta1.size() != eta3.size()) throw Error("combine: estimator size mismatch");
  EstimateField f;
  f.eta1 = eta1;
  f.eta2 = eta2;
  f.eta3 = eta3;
  f.combined.resize(eta1.size());
  double s1 = 0, s2 = 0, s3 = 0;
  for (std::size_t i = 0; i < eta1.size(); ++i) {
    f.combined[i] = std::sqrt(eta1[i] * eta1[i] + eta2[i] * eta2[i] + eta3[i] * eta3[i]);
    s1 += eta1[i] * eta1[i];
    s2 += eta2[i] * eta2[i];
    s3 += eta3[i] * eta3[i];
  }
  f.total1 = std::sqrt(s1);
  f.total2 = std::sqrt(s2);
  f.total3 = std::sqrt(s3);
  f.total = std::sqrt(s1 + s2 + s3);
  return f;
}

/// Bulk marking: sort elements by eta(T)^2 descending (ties by element id)
/// and take the shortest prefix with sum >= theta * eta^2.
inline std::set<int> doerfler_mark(const std::vector<double>& eta, double theta = 0.5) {
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("doerfler_mark: theta in (0,1] required");
  std::vector<int> order(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ea = eta[a] * eta[a], eb = eta[b] * eta[b];
    return ea != eb ? ea > eb : a < b;
  });
  double total = 0.0;
  for (double e : eta) total += e * e;
  std::set<int> marked;
  if (total == 0.0) return marked;
  double acc = 0.0;
  for (int i : order) {
    marked.insert(i);
    acc += eta[i] * eta[i];
    if (acc >= theta * total) break;
  }
  return marked;
}

}  // namespace rmdpg
