#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "a2/error.hpp"

namespace a2 {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got shape " + shape_str(shape));
  }
  for (int e : shape) {
    if (e < 1) throw ShapeError("tensor extents must be >= 1, got shape " + shape_str(shape));
  }
}

// Dense row-major n-d array, rank 1..4. Copies are shallow: they share the
// underlying buffer. Buffers are immutable once an op has produced them; the
// only sanctioned in-place mutation is the optimizer's parameter update
// between training steps, after the step's tape has been dropped.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    data_ = std::make_shared<std::vector<T>>(numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    if (values.size() != numel(shape_)) {
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (T& v : *t.data_) v = value;
    return t;
  }

  static Tensor scalar_of(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }
  bool is_scalar() const { return size() == 1; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }

  T item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar tensor, shape is " + shape_str(shape_));
    return (*data_)[0];
  }

  // New shape over the same buffer (row-major layout is unchanged).
  Tensor reshaped(Shape new_shape) const {
    check_shape_valid(new_shape);
    if (numel(new_shape) != size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                       " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  bool same_buffer(const Tensor& other) const { return data_ == other.data_; }

  // Tape linkage; meaningful only while the tape that assigned it is alive.
  // tape_epoch disambiguates ids left over from a previous (discarded) tape.
  int tape_id = -1;
  std::uint32_t tape_epoch = 0;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

}  // namespace a2
