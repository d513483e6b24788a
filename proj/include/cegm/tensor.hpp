#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cegm {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major float64 array. A rank-0 tensor (empty shape) holds one value.
// Every extent is positive and data().size() == product(shape) always.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::initializer_list<double> v) {
    return Tensor(Shape{v.size()}, std::vector<double>(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const;
  // Trailing extent; 1 for rank-0.
  std::size_t last_extent() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  // numel / last_extent: number of trailing-dimension rows.
  std::size_t leading_rows() const noexcept { return numel() / last_extent(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Row r of the trailing dimension.
  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(data_).subspan(r * last_extent(), last_extent());
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * last_extent(), last_extent());
  }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_.at(1) + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_.at(1) + j]; }

  // Value of a single-element tensor. Throws ShapeError otherwise.
  double item() const;

  double frobenius_norm() const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  // Bitwise equality of shape and payload.
  bool operator==(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace cegm
