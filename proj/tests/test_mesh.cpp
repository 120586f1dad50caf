#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "rmdpg/mesh.hpp"

using namespace rmdpg;

namespace {

int count_boundary_edges(const Mesh& m) {
  int n = 0;
  for (const auto& e : m.edges) n += e.boundary ? 1 : 0;
  return n;
}

// Independent conformity oracle: besides the edge-table checks performed by
// Mesh::finalize, verify geometrically that no vertex lies strictly inside
// another triangle's edge (hanging node).
bool conforming(const Mesh& m) {
  for (const auto& e : m.edges) {
    if (e.boundary && e.tri[0] < 0) return false;
    if (!e.boundary && (e.tri[0] < 0 || e.tri[1] < 0)) return false;
  }
  for (int v = 0; v < m.n_vertices(); ++v) {
    const Vec2 p = m.vertices[v];
    for (const auto& e : m.edges) {
      if (e.a == v || e.b == v) continue;
      const Vec2 a = m.vertices[e.a], b = m.vertices[e.b];
      const Vec2 d = b - a;
      const double len2 = d.dot(d);
      const double s = (p - a).dot(d) / len2;
      if (s <= 1e-12 || s >= 1.0 - 1e-12) continue;
      const Vec2 foot = a + s * d;
      if ((p - foot).norm() < 1e-12 * std::sqrt(len2)) return false;
    }
  }
  return true;
}

std::set<int> all_triangles(const Mesh& m) {
  std::set<int> s;
  for (int t = 0; t < m.n_triangles(); ++t) s.insert(t);
  return s;
}

}  // namespace

TEST_CASE("structured square counts") {
  const Mesh m1 = build_structured_square(1);
  CHECK(m1.n_triangles() == 2);
  CHECK(m1.n_vertices() == 4);
  CHECK(m1.n_edges() == 5);
  CHECK(count_boundary_edges(m1) == 4);

  const Mesh m2 = build_structured_square(2);
  CHECK(m2.n_triangles() == 8);
  CHECK(m2.n_vertices() == 9);
}

TEST_CASE("structured square boundary tags") {
  const Mesh m = build_structured_square(4, SquareBc::all(BCKind::HardClamped));
  for (const auto& e : m.edges) {
    if (e.boundary) {
      CHECK(e.tag == BCKind::HardClamped);
    }
  }
  CHECK(m.boundary_segments.at("left") == BCKind::HardClamped);
}

TEST_CASE("structured square refinement edges are hypotenuses") {
  const Mesh m = build_structured_square(3);
  for (const auto& t : m.triangles) {
    const int r = t.refinement_edge;
    const double len = (m.vertices[t.v[(r + 1) % 3]] - m.vertices[t.v[r]]).norm();
    CHECK(len == Catch::Approx(t.h));
    CHECK(len > 1.2 / 3.0);  // strictly longer than the legs
  }
}

TEST_CASE("lshape geometry") {
  const Mesh m1 = build_lshape(1);
  CHECK(m1.n_triangles() == 6);
  CHECK(m1.total_area() == Catch::Approx(3.0).epsilon(1e-13));
  const Mesh m3 = build_lshape(3);
  CHECK(m3.total_area() == Catch::Approx(3.0).epsilon(1e-13));
  CHECK(conforming(m3));
}

TEST_CASE("lshape paper tags: only the two re-entrant segments are clamped") {
  for (int n : {1, 2}) {
    const Mesh m = build_lshape(n, LshapeBc{});
    int n_hc = 0;
    for (const auto& e : m.edges) {
      if (!e.boundary) continue;
      const Vec2 c = 0.5 * (m.vertices[e.a] + m.vertices[e.b]);
      const bool touches_origin_segment =
          (std::abs(c.y) < 1e-12 && c.x < 0.0) || (std::abs(c.x) < 1e-12 && c.y < 0.0);
      if (e.tag == BCKind::HardClamped) {
        ++n_hc;
        CHECK(touches_origin_segment);
      } else {
        CHECK(e.tag == BCKind::Free);
        CHECK_FALSE(touches_origin_segment);
      }
    }
    CHECK(n_hc == 2 * n);
  }
}

TEST_CASE("refine_nvb no-op on empty marked set") {
  const Mesh m = build_structured_square(2);
  const Mesh r = refine_nvb(m, {});
  CHECK(r.n_triangles() == m.n_triangles());
  CHECK(r.n_vertices() == m.n_vertices());
}

TEST_CASE("refine_nvb mark-all quadrisects") {
  const Mesh m = build_structured_square(1);
  const Mesh r = refine_nvb(m, all_triangles(m));
  CHECK(r.n_triangles() == 8);
  CHECK(conforming(r));
  CHECK(r.total_area() == Catch::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("refine_nvb single mark stays conforming with bounded closure") {
  const Mesh m = build_structured_square(2);
  REQUIRE(m.n_triangles() == 8);
  // Hand-executed closure counts: a marked triangle is quadrisected (3
  // bisections); each interior leg drags the neighbour pair through 3 more
  // bisections (hypotenuse first, then the hanging leg, then the partner
  // across the new hypotenuse midpoint), each interior hypotenuse costs one.
  // Boundary legs cost nothing. Triangles 2 and 5 have two boundary legs,
  // triangles 3 and 4 have two interior legs.
  const int expected[8] = {15, 15, 12, 18, 18, 12, 15, 15};
  for (int t = 0; t < 8; ++t) {
    const Mesh r = refine_nvb(m, {t});
    INFO("marked triangle " << t << " -> " << r.n_triangles());
    CHECK(conforming(r));
    CHECK(r.n_triangles() == expected[t]);
    CHECK(r.total_area() == Catch::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("uniform refinement preserves area and shape regularity") {
  Mesh m = build_structured_square(2);
  const double area0 = m.total_area();
  const double angle0 = m.min_angle();
  for (int k = 0; k < 3; ++k) {
    m = refine_nvb(m, all_triangles(m));
    CHECK(std::abs(m.total_area() - area0) <= 1e-12 * area0);
    CHECK(m.min_angle() >= angle0 - 1e-9);
    CHECK(conforming(m));
  }
  CHECK(m.n_triangles() == 8 * 64);
}

TEST_CASE("boundary tags are inherited by children") {
  SquareBc bc;
  bc.bottom = BCKind::Free;
  bc.right = BCKind::SoftClamped;
  bc.top = BCKind::HardSimpleSupport;
  bc.left = BCKind::HardClamped;
  Mesh m = build_structured_square(2, bc);
  for (int k = 0; k < 2; ++k) m = refine_nvb(m, all_triangles(m));
  const double tol = 1e-12;
  for (const auto& e : m.edges) {
    if (!e.boundary) continue;
    const Vec2 c = 0.5 * (m.vertices[e.a] + m.vertices[e.b]);
    if (std::abs(c.y) < tol) CHECK(e.tag == BCKind::Free);
    if (std::abs(c.x - 1.0) < tol) CHECK(e.tag == BCKind::SoftClamped);
    if (std::abs(c.y - 1.0) < tol) CHECK(e.tag == BCKind::HardSimpleSupport);
    if (std::abs(c.x) < tol) CHECK(e.tag == BCKind::HardClamped);
  }
}

TEST_CASE("skeleton orientation: interior edges seen with opposite normals") {
  const Mesh m = build_structured_square(2);
  int interior = 0;
  for (int e = 0; e < m.n_edges(); ++e) {
    const auto& ed = m.edges[e];
    if (ed.boundary) {
      CHECK(ed.tri[1] == -1);
      continue;
    }
    ++interior;
    int signs[2] = {0, 0};
    for (int side = 0; side < 2; ++side) {
      const int t = ed.tri[side];
      for (int i = 0; i < 3; ++i)
        if (m.tri_edges[t][i] == e) signs[side] = m.tri_edge_sign[t][i];
    }
    CHECK(signs[0] * signs[1] == -1);
  }
  CHECK(interior == m.n_edges() - count_boundary_edges(m));

  const Mesh m1 = build_structured_square(1);
  CHECK(m1.n_edges() - count_boundary_edges(m1) == 1);
}

TEST_CASE("outward normals of a triangle integrate to zero") {
  const Mesh m = build_structured_square(3);
  for (int t = 0; t < m.n_triangles(); ++t) {
    Vec2 sum{0, 0};
    for (int i = 0; i < 3; ++i) {
      const int e = m.tri_edges[t][i];
      sum = sum + m.edge_length(e) * m.outward_normal(t, i);
    }
    CHECK(std::abs(sum.x) < 1e-14);
    CHECK(std::abs(sum.y) < 1e-14);
  }
}

TEST_CASE("mesh text io round-trips bit-identically") {
  Mesh m = build_lshape(2, LshapeBc{});
  m = refine_nvb(m, {0, 3, 7});
  std::ostringstream first;
  m.write(first);
  std::istringstream in(first.str());
  const Mesh back = Mesh::read(in);
  std::ostringstream second;
  back.write(second);
  CHECK(first.str() == second.str());
  CHECK(back.n_triangles() == m.n_triangles());
  CHECK(back.n_vertices() == m.n_vertices());
}

TEST_CASE("mesh read rejects malformed input") {
  std::istringstream bad("vertices 2 triangles 1");
  CHECK_THROWS_AS(Mesh::read(bad), ConfigError);
}
