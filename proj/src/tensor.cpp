#include "alphamaml/tensor.hpp"

#include <cmath>
#include <utility>

namespace alphamaml::ad {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape)
    : data_(std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape)), 0.0)),
      shape_(std::move(shape)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<long>(values.size()))
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::full(Shape shape, double v) {
  long n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

double Tensor::value() const {
  if (!defined() || numel() != 1)
    throw ShapeError("value() needs a single-element tensor, got shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.node_ = -1;
  t.owner_ = nullptr;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

bool Tensor::all_finite() const {
  if (!defined()) return true;
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace alphamaml::ad
