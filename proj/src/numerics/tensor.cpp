#include "circuitlens/numerics/tensor.hpp"

#include <cstring>
#include <functional>
#include <numeric>

#include "circuitlens/common/error.hpp"

namespace circuitlens::numerics {

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<float>>(1, 0.0f)) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " + std::to_string(data.size()),
                     {{"op", "tensor"}, {"shape", shape_}, {"data_size", data.size()}});
  }
  data_ = std::make_shared<const std::vector<float>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape_) + " is not single-valued");
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         std::memcmp(data_->data(), other.data_->data(), data_->size() * sizeof(float)) == 0;
}

}  // namespace circuitlens::numerics
