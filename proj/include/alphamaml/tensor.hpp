#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace alphamaml::ad {

class Graph;

using Shape = std::vector<long>;

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);

/// Dense 64-bit float array with an optional handle into a computation
/// graph. Copies share the underlying buffer; buffers are never mutated
/// once an op has produced them, so sharing is safe across threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  long numel() const { return defined() ? static_cast<long>(data_->size()) : 0; }
  long dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  double operator[](long i) const { return (*data_)[static_cast<size_t>(i)]; }

  /// Value of a 0-d (or single-element) tensor.
  double value() const;

  bool in_graph() const { return node_ >= 0; }
  int node() const { return node_; }
  const Graph* owner() const { return owner_; }

  /// Same buffer, no graph membership.
  Tensor detached() const;
  /// Deep copy, no graph membership.
  Tensor clone() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::shared_ptr<std::vector<double>> data_;
  Shape shape_;
  int node_ = -1;
  const Graph* owner_ = nullptr;

  friend class Graph;
};

/// Thrown on malformed op inputs (shape mismatches, bad primitives).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace alphamaml::ad
