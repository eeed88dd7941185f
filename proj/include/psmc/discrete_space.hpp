#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "psmc/distributions.hpp"

namespace psmc {

/// A fully enumerated state space with a tempered family on it. Everything
/// is exact: masses come from summation, not sampling.
class DiscreteSpace {
 public:
  static constexpr std::size_t max_states = 10000;

  /// Enumerates every state of `family`'s model (state_count() must be
  /// nonzero and at most max_states).
  explicit DiscreteSpace(const AnnealedFamily& family);

  /// The reference four-state family: pi = (0.4, 0.1, 0.2, 0.3), cells
  /// {0,1} and {2,3}, betas (0.25, 0.5, 0.75, 1).
  static DiscreteSpace reference();
  static AnnealedFamily reference_family();

  std::size_t size() const noexcept { return states_.size(); }
  std::size_t stages() const noexcept { return family_.stages(); }
  int cell_count() const noexcept { return cells_; }
  const AnnealedFamily& family() const noexcept { return family_; }

  StateView state(std::size_t k) const noexcept { return states_[k]; }
  int label(std::size_t k) const noexcept { return labels_[k]; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  double log_q(std::size_t k) const noexcept { return log_q_[k]; }
  /// Index of a state, or size() if it is not in the space.
  std::size_t index_of(StateView x) const;

  /// Normalized mu_v over all states.
  std::vector<double> masses(std::size_t v) const;
  double log_partition(std::size_t v) const;
  std::vector<std::size_t> cell_members(int cell) const;
  /// mu_v(A_j) for every stage and cell.
  CellMassTable cell_mass_table() const;
  /// mu_{v|A_j} over the members of cell j, in cell_members order.
  std::vector<double> conditional(std::size_t v, int cell) const;

 private:
  AnnealedFamily family_;
  std::vector<State> states_;
  std::vector<double> log_q_;
  std::vector<int> labels_;
  int cells_ = 0;
  std::map<State, std::size_t> index_;
};

}  // namespace psmc
