#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rmdpg/common.hpp"

namespace rmdpg {

/// Canonical plate boundary condition kinds.
enum class BCKind { HardClamped, SoftClamped, HardSimpleSupport, SoftSimpleSupport, Free };

inline const char* bc_name(BCKind k) {
  switch (k) {
    case BCKind::HardClamped: return "hc";
    case BCKind::SoftClamped: return "sc";
    case BCKind::HardSimpleSupport: return "hss";
    case BCKind::SoftSimpleSupport: return "sss";
    case BCKind::Free: return "free";
  }
  throw Error("bc_name: bad enum");
}

inline BCKind bc_from_name(const std::string& s) {
  if (s == "hc") return BCKind::HardClamped;
  if (s == "sc") return BCKind::SoftClamped;
  if (s == "hss") return BCKind::HardSimpleSupport;
  if (s == "sss") return BCKind::SoftSimpleSupport;
  if (s == "free") return BCKind::Free;
  throw ConfigError("unknown boundary tag '" + s + "'");
}

struct Triangle {
  std::array<int, 3> v{-1, -1, -1};
  int refinement_edge = 0;  // local edge index; edge i connects v[i], v[(i+1)%3]
  double area = 0.0;
  double h = 0.0;  // longest edge length
};

struct Edge {
  int a = -1, b = -1;            // vertex ids, a < b
  std::array<int, 2> tri{-1, -1};
  bool boundary = false;
  BCKind tag = BCKind::Free;     // meaningful only for boundary edges
};

/// Conforming triangulation with tagged boundary and skeleton connectivity.
/// Immutable after construction; refinement returns a new mesh.
class Mesh {
public:
  std::vector<Vec2> vertices;
  std::vector<Triangle> triangles;
  std::vector<Edge> edges;
  std::vector<std::array<int, 3>> tri_edges;      // triangle -> global edge ids
  std::vector<std::array<int, 3>> tri_edge_sign;  // +1 if local direction v[i]->v[i+1] matches a->b
  std::map<std::string, BCKind> boundary_segments;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }

  const Vec2& vertex(int t, int local) const { return vertices[triangles[t].v[local]]; }

  double edge_length(int e) const { return (vertices[edges[e].b] - vertices[edges[e].a]).norm(); }

  /// Global unit tangent of edge e, oriented a -> b.
  Vec2 edge_tangent(int e) const {
    Vec2 d = vertices[edges[e].b] - vertices[edges[e].a];
    const double len = d.norm();
    return {d.x / len, d.y / len};
  }

  /// Global unit normal of edge e (tangent rotated by -90 degrees); for a
  /// counter-clockwise triangle traversing the edge in global direction, this
  /// is the outward normal.
  Vec2 edge_normal(int e) const {
    Vec2 t = edge_tangent(e);
    return {t.y, -t.x};
  }

  /// Outward unit normal of triangle t on its local edge.
  Vec2 outward_normal(int t, int local) const {
    const int e = tri_edges[t][local];
    const double s = static_cast<double>(tri_edge_sign[t][local]);
    return s * edge_normal(e);
  }

  double total_area() const {
    double a = 0.0;
    for (const auto& t : triangles) a += t.area;
    return a;
  }

  double min_angle() const {
    double amin = 4.0;
    for (const auto& tri : triangles) {
      for (int i = 0; i < 3; ++i) {
        const Vec2 u = vertices[tri.v[(i + 1) % 3]] - vertices[tri.v[i]];
        const Vec2 w = vertices[tri.v[(i + 2) % 3]] - vertices[tri.v[i]];
        amin = std::min(amin, std::atan2(std::abs(u.cross(w)), u.dot(w)));
      }
    }
    return amin;
  }

  /// Builds edge tables and validates conformity. Boundary tags are looked up
  /// in btags (keyed by sorted vertex pair); every boundary edge must be tagged.
  void finalize(const std::map<std::pair<int, int>, BCKind>& btags) {
    edges.clear();
    tri_edges.assign(triangles.size(), {-1, -1, -1});
    tri_edge_sign.assign(triangles.size(), {0, 0, 0});
    std::map<std::pair<int, int>, int> edge_of;
    for (int t = 0; t < n_triangles(); ++t) {
      Triangle& tri = triangles[t];
      const Vec2 d1 = vertices[tri.v[1]] - vertices[tri.v[0]];
      const Vec2 d2 = vertices[tri.v[2]] - vertices[tri.v[0]];
      const double twice_area = d1.cross(d2);
      if (!(twice_area > 0.0)) throw GeometryError("triangle " + std::to_string(t) + " not counter-clockwise / degenerate");
      tri.area = 0.5 * twice_area;
      tri.h = 0.0;
      for (int i = 0; i < 3; ++i) {
        const int p = tri.v[i], q = tri.v[(i + 1) % 3];
        tri.h = std::max(tri.h, (vertices[q] - vertices[p]).norm());
        const std::pair<int, int> key = std::minmax(p, q);
        auto it = edge_of.find(key);
        int e;
        if (it == edge_of.end()) {
          e = n_edges();
          edge_of.emplace(key, e);
          Edge ed;
          ed.a = key.first;
          ed.b = key.second;
          edges.push_back(ed);
        } else {
          e = it->second;
        }
        Edge& ed = edges[e];
        if (ed.tri[0] < 0) {
          ed.tri[0] = t;
        } else if (ed.tri[1] < 0) {
          ed.tri[1] = t;
        } else {
          throw GeometryError("edge shared by more than two triangles");
        }
        tri_edges[t][i] = e;
        tri_edge_sign[t][i] = (p == key.first) ? 1 : -1;
      }
    }
    for (int e = 0; e < n_edges(); ++e) {
      Edge& ed = edges[e];
      ed.boundary = (ed.tri[1] < 0);
      if (ed.boundary) {
        auto it = btags.find({ed.a, ed.b});
        if (it == btags.end())
          throw GeometryError("untagged boundary edge (" + std::to_string(ed.a) + "," + std::to_string(ed.b) +
                              "): non-conforming mesh or missing tag");
        ed.tag = it->second;
      }
    }
  }

  std::map<std::pair<int, int>, BCKind> boundary_tag_map() const {
    std::map<std::pair<int, int>, BCKind> m;
    for (const auto& e : edges)
      if (e.boundary) m[{e.a, e.b}] = e.tag;
    return m;
  }

  bool has_tag(BCKind k) const {
    for (const auto& e : edges)
      if (e.boundary && e.tag == k) return true;
    return false;
  }

  void write(std::ostream& os) const {
    int nb = 0;
    for (const auto& e : edges) nb += e.boundary ? 1 : 0;
    char buf[128];
    os << "vertices " << n_vertices() << " triangles " << n_triangles() << " edges " << nb << "\n";
    for (const auto& v : vertices) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", v.x, v.y);
      os << buf;
    }
    for (const auto& t : triangles)
      os << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << t.refinement_edge << "\n";
    for (const auto& e : edges)
      if (e.boundary) os << e.a << " " << e.b << " " << bc_name(e.tag) << "\n";
  }

  static Mesh read(std::istream& is) {
    Mesh m;
    std::string kw;
    int nv = 0, nt = 0, ne = 0;
    is >> kw >> nv;
    if (kw != "vertices") throw ConfigError("mesh file: expected 'vertices'");
    is >> kw >> nt;
    if (kw != "triangles") throw ConfigError("mesh file: expected 'triangles'");
    is >> kw >> ne;
    if (kw != "edges") throw ConfigError("mesh file: expected 'edges'");
    m.vertices.resize(nv);
    for (auto& v : m.vertices) is >> v.x >> v.y;
    m.triangles.resize(nt);
    for (auto& t : m.triangles) is >> t.v[0] >> t.v[1] >> t.v[2] >> t.refinement_edge;
    std::map<std::pair<int, int>, BCKind> btags;
    for (int i = 0; i < ne; ++i) {
      int a, b;
      std::string tag;
      is >> a >> b >> tag;
      btags[std::minmax(a, b)] = bc_from_name(tag);
    }
    if (!is) throw ConfigError("mesh file: truncated");
    m.finalize(btags);
    return m;
  }
};

namespace detail {

/// Longest edge, ties broken by smallest opposite-vertex index.
inline int initial_refinement_edge(const std::vector<Vec2>& verts, const std::array<int, 3>& v) {
  int best = 0;
  double best_len = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double len = (verts[v[(i + 1) % 3]] - verts[v[i]]).norm();
    const int opp = v[(i + 2) % 3];
    if (len > best_len + 1e-14 * (1.0 + len)) {
      best = i;
      best_len = len;
    } else if (std::abs(len - best_len) <= 1e-14 * (1.0 + len) && opp < v[(best + 2) % 3]) {
      best = i;
    }
  }
  return best;
}

struct NvbWorker {
  std::vector<Vec2> verts;
  struct Tri {
    std::array<int, 3> v;
    int re;
    bool alive;
  };
  std::vector<Tri> tris;
  std::map<std::pair<int, int>, int> midpoint;
  std::map<std::pair<int, int>, BCKind> btags;

  int midpoint_of(int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int m = static_cast<int>(verts.size());
    verts.push_back(0.5 * (verts[a] + verts[b]));
    midpoint.emplace(key, m);
    auto bt = btags.find(key);
    if (bt != btags.end()) {
      const BCKind k = bt->second;  // children inherit the parent tag
      btags.erase(bt);
      btags[std::minmax(a, m)] = k;
      btags[std::minmax(m, b)] = k;
    }
    return m;
  }

  /// Bisects tris[t] at its refinement edge; returns the two child ids.
  std::pair<int, int> bisect(int t) {
    Tri& tri = tris[t];
    const int r = tri.re;
    const int a = tri.v[r], b = tri.v[(r + 1) % 3], c = tri.v[(r + 2) % 3];
    const int m = midpoint_of(a, b);
    tri.alive = false;
    const int ia = static_cast<int>(tris.size());
    tris.push_back({{a, m, c}, 2, true});
    tris.push_back({{m, b, c}, 1, true});
    return {ia, ia + 1};
  }

  bool has_hanging_edge(const Tri& tri) const {
    for (int i = 0; i < 3; ++i) {
      if (midpoint.count(std::minmax(tri.v[i], tri.v[(i + 1) % 3]))) return true;
    }
    return false;
  }
};

}  // namespace detail

/// Newest-vertex bisection: marked triangles are refined by two bisection
/// levels (each marked triangle becomes four children); conformity is restored
/// by closure bisections at refinement edges.
inline Mesh refine_nvb(const Mesh& mesh, const std::set<int>& marked) {
  for (int t : marked)
    if (t < 0 || t >= mesh.n_triangles()) throw Error("refine_nvb: marked id out of range");
  if (marked.empty()) return mesh;

  detail::NvbWorker w;
  w.verts = mesh.vertices;
  w.btags = mesh.boundary_tag_map();
  w.tris.reserve(mesh.triangles.size() * 4);
  for (const auto& t : mesh.triangles) w.tris.push_back({t.v, t.refinement_edge, true});

  for (int t : marked) {
    const auto [c1, c2] = w.bisect(t);
    w.bisect(c1);
    w.bisect(c2);
  }

  // Closure: bisect any triangle one of whose edges carries a midpoint.
  bool changed = true;
  std::size_t guard = 0;
  while (changed) {
    changed = false;
    if (++guard > w.tris.size() + 64) throw Error("refine_nvb: closure did not terminate");
    const std::size_t n = w.tris.size();
    for (std::size_t t = 0; t < n; ++t) {
      if (!w.tris[t].alive) continue;
      if (w.has_hanging_edge(w.tris[t])) {
        w.bisect(static_cast<int>(t));
        changed = true;
      }
    }
  }

  Mesh out;
  out.vertices = std::move(w.verts);
  out.boundary_segments = mesh.boundary_segments;
  for (const auto& t : w.tris) {
    if (!t.alive) continue;
    Triangle tri;
    tri.v = t.v;
    tri.refinement_edge = t.re;
    out.triangles.push_back(tri);
  }
  out.finalize(w.btags);
  return out;
}

/// Per-side tags for the unit square, named by geometric side.
struct SquareBc {
  BCKind bottom = BCKind::HardClamped;
  BCKind right = BCKind::HardClamped;
  BCKind top = BCKind::HardClamped;
  BCKind left = BCKind::HardClamped;

  static SquareBc all(BCKind k) { return {k, k, k, k}; }
};

/// Uniform right-triangle mesh of the unit square: n x n cells, each split
/// along the main diagonal; 2n^2 triangles, refinement edges on hypotenuses.
inline Mesh build_structured_square(int n, const SquareBc& bc = {}) {
  if (n < 1) throw ConfigError("build_structured_square: n >= 1 required");
  Mesh m;
  const auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int p00 = vid(i, j), p10 = vid(i + 1, j), p11 = vid(i + 1, j + 1), p01 = vid(i, j + 1);
      Triangle t1, t2;
      t1.v = {p00, p10, p11};
      t2.v = {p00, p11, p01};
      t1.refinement_edge = detail::initial_refinement_edge(m.vertices, t1.v);
      t2.refinement_edge = detail::initial_refinement_edge(m.vertices, t2.v);
      m.triangles.push_back(t1);
      m.triangles.push_back(t2);
    }
  }
  const double tol = 1e-12;
  std::map<std::pair<int, int>, BCKind> btags;
  const auto classify = [&](const Vec2& c) -> BCKind {
    if (std::abs(c.y) < tol) return bc.bottom;
    if (std::abs(c.x - 1.0) < tol) return bc.right;
    if (std::abs(c.y - 1.0) < tol) return bc.top;
    if (std::abs(c.x) < tol) return bc.left;
    throw GeometryError("square boundary edge not on any side");
  };
  // Tag candidate boundary edges geometrically; interior diagonal edges never
  // lie on a side, so tagging only the lattice edges on the four sides is safe.
  for (const auto& t : m.triangles) {
    for (int i = 0; i < 3; ++i) {
      const int p = t.v[i], q = t.v[(i + 1) % 3];
      const Vec2 a = m.vertices[p], b = m.vertices[q];
      const Vec2 c = 0.5 * (a + b);
      const bool on_side = std::abs(c.y) < tol || std::abs(c.x - 1.0) < tol || std::abs(c.y - 1.0) < tol ||
                           std::abs(c.x) < tol;
      if (on_side && (std::abs(a.x - b.x) < tol || std::abs(a.y - b.y) < tol))
        btags[std::minmax(p, q)] = classify(c);
    }
  }
  m.boundary_segments = {{"bottom", bc.bottom}, {"right", bc.right}, {"top", bc.top}, {"left", bc.left}};
  m.finalize(btags);
  return m;
}

/// Per-segment tags for the L-shaped domain (-1,1)^2 \ [-1,0]^2. The two
/// segments meeting the re-entrant corner at the origin are addressable
/// separately: reentrant_h is {y=0, -1<=x<=0}, reentrant_v is {x=0, -1<=y<=0}.
struct LshapeBc {
  BCKind bottom = BCKind::Free;       // y = -1
  BCKind right = BCKind::Free;        // x = 1
  BCKind top = BCKind::Free;          // y = 1
  BCKind left = BCKind::Free;         // x = -1, 0 <= y <= 1
  BCKind reentrant_h = BCKind::HardClamped;
  BCKind reentrant_v = BCKind::HardClamped;
};

/// Mesh of the L-shaped domain; each unit square is split along the diagonal
/// emanating from the origin, resolving the corner symmetrically.
inline Mesh build_lshape(int n, const LshapeBc& bc = {}) {
  if (n < 1) throw ConfigError("build_lshape: n >= 1 required");
  Mesh m;
  const double h = 1.0 / n;
  const int dim = 2 * n + 1;
  std::vector<int> vid(dim * dim, -1);
  const auto lat = [&](int i, int j) -> int& { return vid[j * dim + i]; };
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < dim; ++i) {
      const double x = -1.0 + i * h, y = -1.0 + j * h;
      if (x < -1e-12 && y < -1e-12) continue;  // inside the removed square
      lat(i, j) = m.n_vertices();
      m.vertices.push_back({x, y});
    }
  }
  for (int j = 0; j < 2 * n; ++j) {
    for (int i = 0; i < 2 * n; ++i) {
      const double xc = -1.0 + (i + 0.5) * h, yc = -1.0 + (j + 0.5) * h;
      if (xc < 0.0 && yc < 0.0) continue;
      const int p00 = lat(i, j), p10 = lat(i + 1, j), p11 = lat(i + 1, j + 1), p01 = lat(i, j + 1);
      Triangle t1, t2;
      if (xc > 0.0 && yc > 0.0) {
        // main diagonal p00 -> p11 (away from the origin in the NE quadrant)
        t1.v = {p00, p10, p11};
        t2.v = {p00, p11, p01};
      } else {
        // anti-diagonal p10 -> p01 (parallel to the NW/SE diagonals from the origin)
        t1.v = {p00, p10, p01};
        t2.v = {p10, p11, p01};
      }
      t1.refinement_edge = detail::initial_refinement_edge(m.vertices, t1.v);
      t2.refinement_edge = detail::initial_refinement_edge(m.vertices, t2.v);
      m.triangles.push_back(t1);
      m.triangles.push_back(t2);
    }
  }
  const double tol = 1e-12;
  const auto classify = [&](const Vec2& c) -> std::optional<BCKind> {
    if (std::abs(c.y + 1.0) < tol) return bc.bottom;
    if (std::abs(c.x - 1.0) < tol) return bc.right;
    if (std::abs(c.y - 1.0) < tol) return bc.top;
    if (std::abs(c.x + 1.0) < tol && c.y > 0.0) return bc.left;
    if (std::abs(c.y) < tol && c.x < 0.0) return bc.reentrant_h;
    if (std::abs(c.x) < tol && c.y < 0.0) return bc.reentrant_v;
    return std::nullopt;
  };
  std::map<std::pair<int, int>, BCKind> btags;
  for (const auto& t : m.triangles) {
    for (int i = 0; i < 3; ++i) {
      const int p = t.v[i], q = t.v[(i + 1) % 3];
      const Vec2 a = m.vertices[p], b = m.vertices[q];
      if (!(std::abs(a.x - b.x) < tol || std::abs(a.y - b.y) < tol)) continue;
      const auto k = classify(0.5 * (a + b));
      if (k) btags[std::minmax(p, q)] = *k;
    }
  }
  m.boundary_segments = {{"bottom", bc.bottom},      {"right", bc.right},
                         {"top", bc.top},            {"left", bc.left},
                         {"reentrant_h", bc.reentrant_h}, {"reentrant_v", bc.reentrant_v}};
  m.finalize(btags);
  return m;
}

}  // namespace rmdpg
