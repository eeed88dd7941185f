#include "psmc/discrete_space.hpp"

#include <cmath>
#include <stdexcept>

#include "psmc/numeric.hpp"

namespace psmc {

DiscreteSpace::DiscreteSpace(const AnnealedFamily& family) : family_(family) {
  const TargetModel& model = family_.model();
  const std::size_t n = model.state_count();
  if (n == 0 || n > max_states)
    throw std::invalid_argument("discrete space: model is not enumerable within " +
                                std::to_string(max_states) + " states");
  const std::size_t d = model.dimension();
  states_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    State s(d);
    switch (model.kind()) {
      case StateKind::discrete:
        s[0] = static_cast<double>(k);
        break;
      case StateKind::spin_vector:
        for (std::size_t i = 0; i < d; ++i) s[i] = ((k >> i) & 1U) ? -1.0 : 1.0;
        break;
      case StateKind::real_vector:
        throw std::invalid_argument("discrete space: continuous model");
    }
    states_.push_back(std::move(s));
  }
  cells_ = family_.partition().cell_count();
  std::vector<std::size_t> counts(static_cast<std::size_t>(cells_), 0);
  for (std::size_t k = 0; k < n; ++k) {
    log_q_.push_back(model.log_density(states_[k]));
    labels_.push_back(family_.partition().classify(states_[k]));
    ++counts[static_cast<std::size_t>(labels_.back())];
    index_.emplace(states_[k], k);
  }
  for (std::size_t c : counts) {
    if (c == 0) throw std::invalid_argument("discrete space: empty cell");
  }
}

AnnealedFamily DiscreteSpace::reference_family() {
  const std::vector<double> pi{0.4, 0.1, 0.2, 0.3};
  std::vector<double> log_q;
  for (double p : pi) log_q.push_back(std::log(p));
  return AnnealedFamily(discrete_target(std::move(log_q), {0, 0, 1, 1}), {0.25, 0.5, 0.75, 1.0});
}

DiscreteSpace DiscreteSpace::reference() { return DiscreteSpace(reference_family()); }

std::size_t DiscreteSpace::index_of(StateView x) const {
  const auto it = index_.find(State(x.begin(), x.end()));
  return it == index_.end() ? size() : it->second;
}

double DiscreteSpace::log_partition(std::size_t v) const {
  const double beta = family_.beta(v);
  std::vector<double> lm(size());
  for (std::size_t k = 0; k < size(); ++k) lm[k] = beta * log_q_[k];
  return log_sum_exp(lm);
}

std::vector<double> DiscreteSpace::masses(std::size_t v) const {
  const double beta = family_.beta(v);
  const double lz = log_partition(v);
  std::vector<double> m(size());
  for (std::size_t k = 0; k < size(); ++k) m[k] = std::exp(beta * log_q_[k] - lz);
  return m;
}

std::vector<std::size_t> DiscreteSpace::cell_members(int cell) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < size(); ++k) {
    if (labels_[k] == cell) out.push_back(k);
  }
  return out;
}

CellMassTable DiscreteSpace::cell_mass_table() const {
  CellMassTable table;
  for (std::size_t v = 0; v <= stages(); ++v) {
    const auto mu = masses(v);
    std::vector<double> row(static_cast<std::size_t>(cells_), 0.0);
    for (std::size_t k = 0; k < size(); ++k) row[static_cast<std::size_t>(labels_[k])] += mu[k];
    table.push_back(std::move(row));
  }
  return table;
}

std::vector<double> DiscreteSpace::conditional(std::size_t v, int cell) const {
  const auto mu = masses(v);
  std::vector<double> out;
  double total = 0.0;
  for (std::size_t k : cell_members(cell)) {
    out.push_back(mu[k]);
    total += mu[k];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace psmc
