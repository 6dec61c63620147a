#include "mpic/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace mpic {

std::size_t element_count(const std::vector<std::size_t>& extents) {
  return std::accumulate(extents.begin(), extents.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& extents) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (i) os << " x ";
    os << extents[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_rank(const std::vector<std::size_t>& extents) {
  if (extents.empty() || extents.size() > 3) {
    throw ContractError("tensor rank must be 1..3, got " +
                        std::to_string(extents.size()));
  }
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> extents, double fill)
    : shape(std::move(extents)) {
  check_rank(shape);
  data.assign(element_count(shape), fill);
}

Tensor::Tensor(std::vector<std::size_t> extents, std::vector<double> values)
    : shape(std::move(extents)), data(std::move(values)) {
  check_rank(shape);
  if (element_count(shape) != data.size()) {
    throw ContractError("tensor shape " + shape_string(shape) + " holds " +
                        std::to_string(element_count(shape)) +
                        " values, got " + std::to_string(data.size()));
  }
}

Tensor Tensor::reshaped(std::vector<std::size_t> extents) const {
  return Tensor(std::move(extents), data);
}

void require_finite(const Tensor& t, std::string_view where) {
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw NonFiniteError(std::string(where) + ": non-finite value at flat index " +
                          std::to_string(i));
    }
  }
}

}  // namespace mpic
