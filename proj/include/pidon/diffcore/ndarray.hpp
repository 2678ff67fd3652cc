#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pidon {

/// Dense row-major array of doubles with an explicit shape.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(std::vector<std::size_t> shape);
  NdArray(std::vector<std::size_t> shape, std::vector<double> data);

  static NdArray vector(std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Row-major multi-index access; throws ShapeError on rank or bounds mismatch.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const NdArray&, const NdArray&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace pidon
