#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <string>
#include <vector>

#include "rmdpg/common.hpp"

namespace rmdpg {

/// Coordinate-format accumulator. Entries are sorted and merged in (row, col)
/// order before compression, so the assembled matrix is bit-identical for any
/// insertion order produced by per-element buffers.
class CooMatrix {
public:
  explicit CooMatrix(int n) : n_(n) {}

  int size() const { return n_; }

  void add(int i, int j, double v) {
    if (v == 0.0) return;
    entries_.push_back({i, j, v});
  }

  void append(CooMatrix&& other) {
    entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
    other.entries_.clear();
  }

  Eigen::SparseMatrix<double> compress() {
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(entries_.size());
    for (std::size_t k = 0; k < entries_.size();) {
      double sum = 0.0;
      const int i = entries_[k].i, j = entries_[k].j;
      while (k < entries_.size() && entries_[k].i == i && entries_[k].j == j) sum += entries_[k++].v;
      trips.emplace_back(i, j, sum);
    }
    Eigen::SparseMatrix<double> A(n_, n_);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
  }

private:
  struct Entry {
    int i, j;
    double v;
  };
  int n_;
  std::vector<Entry> entries_;
};

struct SolverOptions {
  std::string method = "ldlt";  // "ldlt" (sparse factorization) or "cg"
  double cg_tol = 1e-10;
  int cg_max_iter = 20000;
};

struct SolveStats {
  std::string method;
  long long factor_nnz = 0;
  int iterations = 0;
  double residual = 0.0;
};

/// Sparse SPD solve: fill-reducing symmetric factorization by default,
/// diagonally preconditioned conjugate gradients as fallback.
inline Eigen::VectorXd solve_spd(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                 const SolverOptions& opt = {}, SolveStats* stats = nullptr) {
  if (A.rows() == 0) return Eigen::VectorXd();
  const auto finish = [&](Eigen::VectorXd x, const std::string& method, long long nnz, int iters) {
    const double res = (A.selfadjointView<Eigen::Lower>() * x - b).norm();
    const double scale = std::max(1.0, b.norm());
    if (!(res <= 1e-6 * scale)) throw SolverError("residual " + std::to_string(res) + " too large (" + method + ")");
    if (stats) {
      stats->method = method;
      stats->factor_nnz = nnz;
      stats->iterations = iters;
      stats->residual = res;
    }
    return x;
  };

  if (opt.method == "ldlt") {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver;
    solver.compute(A);
    if (solver.info() == Eigen::Success) {
      Eigen::VectorXd x = solver.solve(b);
      if (solver.info() == Eigen::Success)
        return finish(std::move(x), "ldlt", solver.matrixL().nestedExpression().nonZeros(), 0);
    }
    // fall through to CG on factorization trouble
  } else if (opt.method != "cg") {
    throw ConfigError("solver method must be 'ldlt' or 'cg'");
  }

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::DiagonalPreconditioner<double>> cg;
  cg.setTolerance(opt.cg_tol);
  cg.setMaxIterations(opt.cg_max_iter);
  cg.compute(A);
  Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success && cg.error() > opt.cg_tol * 10)
    throw SolverError("conjugate gradients did not converge (error " + std::to_string(cg.error()) + ")");
  return finish(std::move(x), "cg", 0, static_cast<int>(cg.iterations()));
}

}  // namespace rmdpg
