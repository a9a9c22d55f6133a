#include "stb/tensor.hpp"

#include <cmath>

namespace stb {

size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError(strf("tensor data length %zu does not match shape %s",
                          data_.size(), shape_str(shape_).c_str()));
  }
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

size_t Tensor::flat_index(std::initializer_list<size_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ShapeError(strf("index rank %zu does not match tensor rank %zu",
                          idx.size(), shape_.size()));
  }
  size_t flat = 0;
  size_t i = 0;
  for (size_t v : idx) {
    if (v >= shape_[i]) {
      throw ShapeError(strf("index %zu out of range for dim %zu of %s", v, i,
                            shape_str(shape_).c_str()));
    }
    flat = flat * shape_[i] + v;
    ++i;
  }
  return flat;
}

double Tensor::at(std::initializer_list<size_t> idx) const {
  return data_[flat_index(idx)];
}

double& Tensor::at(std::initializer_list<size_t> idx) {
  return data_[flat_index(idx)];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_size(new_shape) != data_.size()) {
    throw ShapeError(strf("cannot reshape %s (size %zu) to %s",
                          shape_str(shape_).c_str(), data_.size(),
                          shape_str(new_shape).c_str()));
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

}  // namespace stb
