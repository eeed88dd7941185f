#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace psmc {

/// Read-only view of one state. Real vectors store coordinates, spin
/// vectors store exactly +1.0 / -1.0, enumerated spaces store the state
/// index in coordinate 0.
using StateView = std::span<const double>;
using StateSpan = std::span<double>;
using State = std::vector<double>;

enum class StateKind { real_vector, spin_vector, discrete };

/// N states of dimension d in one contiguous row-major buffer.
class StateMatrix {
 public:
  StateMatrix() = default;
  StateMatrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }

  StateView row(std::size_t i) const noexcept { return {data_.data() + i * dim_, dim_}; }
  StateSpan row(std::size_t i) noexcept { return {data_.data() + i * dim_, dim_}; }

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const StateMatrix&, const StateMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

}  // namespace psmc
