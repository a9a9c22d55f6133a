#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "stb/common.hpp"

namespace stb {

// Dimension list. Rank 0 denotes a scalar (size 1).
using Shape = std::vector<size_t>;

size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

// Dense row-major tensor of 64-bit floats. Immutable by convention once an
// operation has produced it; mutation is for construction and optimizers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor row(std::vector<double> values);  // shape [n]

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  size_t dim(size_t i) const { return shape_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Multi-index access; test and construction convenience, not a hot path.
  double at(std::initializer_list<size_t> idx) const;
  double& at(std::initializer_list<size_t> idx);

  bool all_finite() const;

  Tensor reshaped(Shape new_shape) const;

 private:
  size_t flat_index(std::initializer_list<size_t> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace stb
