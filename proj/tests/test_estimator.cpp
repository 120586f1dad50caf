#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rmdpg/estimator.hpp"
#include "rmdpg/stages.hpp"

using namespace rmdpg;

TEST_CASE("poisson estimator: zero data and zero solution give zero") {
  const Mesh m = build_structured_square(2, SquareBc::all(BCKind::HardClamped));
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(m.n_vertices());
  const auto eta = poisson_estimator(m, u, 1, [](Vec2) { return 0.0; }, 1e-2, {});
  for (double e : eta) CHECK(e == 0.0);
}

TEST_CASE("poisson estimator: globally linear solution leaves only the volume term") {
  const Mesh m = build_structured_square(1, SquareBc::all(BCKind::HardClamped));
  Eigen::VectorXd u(m.n_vertices());
  for (int v = 0; v < m.n_vertices(); ++v) u[v] = 0.3 * m.vertices[v].x - 0.7 * m.vertices[v].y;
  const double fval = 2.5;
  const auto eta = poisson_estimator(m, u, 1, [&](Vec2) { return fval; }, 1e-2, {});
  for (int t = 0; t < m.n_triangles(); ++t) {
    const double expected = m.triangles[t].h * std::abs(fval) * std::sqrt(m.triangles[t].area);
    CHECK_THAT(eta[t], Catch::Matchers::WithinRel(expected, 1e-12));
  }
}

TEST_CASE("poisson estimator: free boundary edges contribute the flux term") {
  SquareBc bc = SquareBc::all(BCKind::HardClamped);
  bc.top = BCKind::Free;
  const Mesh m = build_structured_square(1, bc);
  Eigen::VectorXd u(m.n_vertices());
  for (int v = 0; v < m.n_vertices(); ++v) u[v] = m.vertices[v].y;  // unit flux through the top
  const auto eta = poisson_estimator(m, u, 1, [](Vec2) { return 0.0; }, 1e-2, {});
  double total_sq = 0.0;
  for (double e : eta) total_sq += e * e;
  // grad u = (0,1) is continuous: no jumps; the single free edge of length 1
  // sees |flux|^2 h_E |E| = 1
  CHECK_THAT(total_sq, Catch::Matchers::WithinRel(1.0, 1e-12));
}

TEST_CASE("combine: component identities") {
  const std::vector<double> e1 = {1.0, 2.0, 0.5};
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  const auto only1 = combine(e1, zero, zero);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(only1.combined[i] == e1[i]);
  CHECK(only1.total == only1.total1);

  const auto all_equal = combine(e1, e1, e1);
  for (std::size_t i = 0; i < e1.size(); ++i)
    CHECK_THAT(all_equal.combined[i], Catch::Matchers::WithinRel(std::sqrt(3.0) * e1[i], 1e-14));

  const auto f = combine(e1, {0.1, 0.2, 0.3}, {3.0, 0.0, 1.0});
  CHECK_THAT(f.total * f.total,
             Catch::Matchers::WithinRel(f.total1 * f.total1 + f.total2 * f.total2 + f.total3 * f.total3, 1e-14));
}

TEST_CASE("combine rejects mismatched meshes") {
  CHECK_THROWS_AS(combine({1.0}, {1.0, 2.0}, {1.0}), Error);
}

TEST_CASE("doerfler marking: hand-checked greedy prefixes") {
  CHECK(doerfler_mark({3.7}, 0.5) == std::set<int>{0});

  // uniform estimator over N elements marks ceil(theta N)
  const std::vector<double> uniform(10, 1.0);
  CHECK(doerfler_mark(uniform, 0.5).size() == 5);
  const std::vector<double> uniform9(9, 1.0);
  CHECK(doerfler_mark(uniform9, 0.5).size() == 5);

  // squared values (4,3,2,1), theta = 0.5: 4+3 >= 5
  const std::vector<double> eta = {2.0, std::sqrt(3.0), std::sqrt(2.0), 1.0};
  CHECK(doerfler_mark(eta, 0.5) == std::set<int>{0, 1});

  CHECK_THROWS_AS(doerfler_mark(eta, 0.0), ConfigError);
  CHECK_THROWS_AS(doerfler_mark(eta, 1.5), ConfigError);
}

TEST_CASE("doerfler marking: bulk inequality holds and is minimal") {
  std::vector<double> eta;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) eta.push_back(u(rng));
  const double theta = 0.5;
  const auto marked = doerfler_mark(eta, theta);
  double total = 0.0, acc = 0.0, min_marked = 1e300;
  for (double e : eta) total += e * e;
  for (int i : marked) {
    acc += eta[i] * eta[i];
    min_marked = std::min(min_marked, eta[i] * eta[i]);
  }
  CHECK(acc >= theta * total);
  CHECK(acc - min_marked < theta * total);
}

TEST_CASE("stage-1 estimator converges at the optimal rate with bounded efficiency") {
  const double pi = M_PI;
  const auto f = [pi](Vec2 p) { return 2.0 * pi * pi * std::sin(pi * p.x) * std::sin(pi * p.y); };
  const auto grad_exact = [pi](Vec2 p) -> Vec2 {
    return {pi * std::cos(pi * p.x) * std::sin(pi * p.y), pi * std::sin(pi * p.x) * std::cos(pi * p.y)};
  };
  std::vector<double> log_nt, log_eta;
  for (int n : {4, 8, 16, 32}) {
    const Mesh m = build_structured_square(n, SquareBc::all(BCKind::HardClamped));
    ModelConfig mc;
    mc.t = 1e-2;
    mc.load = f;
    mc.bc = {{"all", BCKind::HardClamped}};
    const auto r = solve_stage1(m, mc);
    const auto eta = poisson_estimator(m, r, 1, f, mc.t, {});
    double total = 0.0;
    for (double e : eta) total += e * e;
    total = std::sqrt(total);
    log_nt.push_back(std::log(static_cast<double>(m.n_triangles())));
    log_eta.push_back(std::log(total));

    // efficiency index vs the H1-seminorm error
    const auto& rule = rule_for_degree(10);
    const auto grads = p1_gradients(m, r);
    double err2 = 0.0;
    for (int t = 0; t < m.n_triangles(); ++t) {
      const auto phys = map_to_physical(rule, m, t);
      for (std::size_t q = 0; q < phys.points.size(); ++q) {
        const Vec2 d = grad_exact(phys.points[q]) - grads[t];
        err2 += phys.weights[q] * d.dot(d);
      }
    }
    const double eff = total / std::sqrt(err2);
    CHECK(eff > 0.2);
    CHECK(eff < 20.0);
  }
  const double rate = least_squares_slope(log_nt, log_eta);
  CHECK(rate < -0.4);
  CHECK(rate > -0.6);
}
