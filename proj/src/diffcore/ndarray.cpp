#include "pidon/diffcore/ndarray.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "pidon/errors.hpp"

namespace pidon {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

NdArray::NdArray(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

NdArray::NdArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeError("NdArray: shape " + shape_string() + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

NdArray NdArray::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return NdArray({n}, std::move(data));
}

std::size_t NdArray::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("NdArray: index rank " + std::to_string(index.size()) +
                     " for shape " + shape_string());
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("NdArray: index out of range for shape " + shape_string());
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double& NdArray::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double NdArray::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

bool NdArray::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string NdArray::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

}  // namespace pidon
