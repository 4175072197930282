#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace circuitlens::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

class Tape;

/// Dense row-major float32 array. Tensors are immutable values: the storage is
/// shared between copies and never written after construction. A tensor that
/// lives on a Tape (requires_grad) additionally carries its tape node id; the
/// gradient is read back through the tape after `Tape::backward`.
class Tensor {
 public:
  /// 0-dimensional zero.
  Tensor();
  /// Throws ShapeError when product(shape) != data.size().
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor vector(std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_->size(); }
  std::size_t dim(std::size_t axis) const;
  std::span<const float> data() const noexcept { return *data_; }
  std::vector<float> to_vector() const { return *data_; }
  float operator[](std::size_t flat) const { return (*data_)[flat]; }
  /// Value of a single-element tensor.
  float item() const;

  bool requires_grad() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

  /// Same values, off any tape.
  Tensor detach() const;

  /// Bitwise equality of shape and values (NaN payloads included).
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<float>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

}  // namespace circuitlens::numerics
