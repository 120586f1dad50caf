#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rmdpg {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

class GeometryError : public Error {
public:
  explicit GeometryError(const std::string& what) : Error("geometry: " + what) {}
};

class SolverError : public Error {
public:
  explicit SolverError(const std::string& what) : Error("solver: " + what) {}
};

/// Singular element Gram matrix; carries the offending element id.
class SingularGramError : public SolverError {
public:
  SingularGramError(int element, const std::string& what)
      : SolverError("singular element Gram (element " + std::to_string(element) + "): " + what),
        element_(element) {}
  int element() const { return element_; }

private:
  int element_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {s * x, s * y}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  /// Rotation by +90 degrees (counter-clockwise).
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

/// Deterministic chunked parallel map: fn(i) for i in [0, n). Results must be
/// written to per-index storage by the caller; chunk boundaries do not affect
/// the output. nthreads <= 1 runs inline.
inline void parallel_for(std::size_t n, int nthreads, const std::function<void(std::size_t)>& fn) {
  if (nthreads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(nthreads), n);
  std::vector<std::thread> workers;
  workers.reserve(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t w = 0; w < nt; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn]() {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

/// Least-squares slope of y against x (used for log-log convergence rates).
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("least_squares_slope: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw Error("least_squares_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace rmdpg
