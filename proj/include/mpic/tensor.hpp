#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpic {

/// Raised when an operation's shape or value preconditions are violated.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity reached a layer boundary.
class NonFiniteError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Dense row-major array of rank 1 to 3.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, double fill = 0.0);
  Tensor(std::vector<std::size_t> extents, std::vector<double> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  /// Same data, new extents. Element count must not change.
  Tensor reshaped(std::vector<std::size_t> extents) const;

  bool operator==(const Tensor&) const = default;
};

std::size_t element_count(const std::vector<std::size_t>& extents);
std::string shape_string(const std::vector<std::size_t>& extents);

/// Throws NonFiniteError naming `where` if any value is NaN or infinite.
void require_finite(const Tensor& t, std::string_view where);

}  // namespace mpic
