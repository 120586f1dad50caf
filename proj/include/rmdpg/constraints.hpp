#pragma once

#include <utility>
#include <vector>

#include "rmdpg/common.hpp"

namespace rmdpg {

/// Homogeneous constraints over a global dof range: a dof is free, pinned to
/// zero, or an affine combination of master dofs. finalize() resolves master
/// chains and assigns the free numbering; afterwards expansion(d) yields the
/// representation of dof d in terms of free dof indices.
class DofConstraints {
public:
  DofConstraints() = default;
  explicit DofConstraints(int n) : state_(n, State::Free), rows_(n) {}

  int n_dofs() const { return static_cast<int>(state_.size()); }
  int n_free() const { return n_free_; }

  void set_zero(int dof) {
    check(dof);
    state_[dof] = State::Zero;
    rows_[dof].clear();
  }

  void set_affine(int dof, std::vector<std::pair<int, double>> terms) {
    check(dof);
    if (state_[dof] == State::Zero) return;  // zero is the stronger condition
    if (state_[dof] == State::Affine) throw Error("conflicting affine constraints on dof " + std::to_string(dof));
    for (const auto& [m, c] : terms) check(m);
    state_[dof] = State::Affine;
    rows_[dof] = std::move(terms);
  }

  bool is_constrained(int dof) const { return state_[dof] != State::Free; }

  void finalize() {
    const int n = n_dofs();
    free_index_.assign(n, -1);
    n_free_ = 0;
    for (int d = 0; d < n; ++d)
      if (state_[d] == State::Free) free_index_[d] = n_free_++;
    expansion_.assign(n, {});
    for (int d = 0; d < n; ++d) {
      std::vector<std::pair<int, double>> acc;
      resolve(d, 1.0, acc, 0);
      // merge duplicates deterministically
      std::sort(acc.begin(), acc.end());
      std::vector<std::pair<int, double>> merged;
      for (const auto& [i, c] : acc) {
        if (!merged.empty() && merged.back().first == i)
          merged.back().second += c;
        else
          merged.emplace_back(i, c);
      }
      expansion_[d] = std::move(merged);
    }
    finalized_ = true;
  }

  int free_index(int dof) const { return free_index_[dof]; }

  /// Representation of dof in free indices: list of (free index, weight).
  const std::vector<std::pair<int, double>>& expansion(int dof) const {
    if (!finalized_) throw Error("DofConstraints: finalize() not called");
    return expansion_[dof];
  }

  /// Expand a reduced (free) vector to the full dof vector.
  template <typename VecIn, typename VecOut>
  void distribute(const VecIn& reduced, VecOut& full) const {
    for (int d = 0; d < n_dofs(); ++d) {
      double v = 0.0;
      for (const auto& [i, c] : expansion_[d]) v += c * reduced[i];
      full[d] = v;
    }
  }

private:
  enum class State { Free, Zero, Affine };

  void check(int dof) const {
    if (dof < 0 || dof >= n_dofs()) throw Error("DofConstraints: dof out of range");
  }

  void resolve(int d, double weight, std::vector<std::pair<int, double>>& acc, int depth) const {
    if (depth > 8) throw Error("DofConstraints: constraint chain too deep (cycle?)");
    switch (state_[d]) {
      case State::Free:
        acc.emplace_back(free_index_[d], weight);
        return;
      case State::Zero:
        return;
      case State::Affine:
        for (const auto& [m, c] : rows_[d]) resolve(m, weight * c, acc, depth + 1);
        return;
    }
  }

  std::vector<State> state_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
  std::vector<int> free_index_;
  std::vector<std::vector<std::pair<int, double>>> expansion_;
  int n_free_ = 0;
  bool finalized_ = false;
};

}  // namespace rmdpg
