#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fdnet {

using Scalar = double;
using Index = std::int64_t;
using Shape = std::vector<Index>;
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Product of dimensions; 1 for the rank-0 shape.
Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 (shape {}) holds a single scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0.0);
  Tensor(Shape shape, Array data);
  Tensor(Shape shape, std::initializer_list<Scalar> values);

  static Tensor scalar(Scalar value) { return Tensor({}, Array::Constant(1, value)); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return data_.size(); }

  Array& data() noexcept { return data_; }
  const Array& data() const noexcept { return data_; }
  Scalar* ptr() noexcept { return data_.data(); }
  const Scalar* ptr() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const noexcept {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  /// Row-major element access by multi-index.
  Scalar& at(std::initializer_list<Index> index);
  Scalar at(std::initializer_list<Index> index) const;

  Scalar item() const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  /// Exact shape and bitwise value equality.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Index offset(std::initializer_list<Index> index) const;

  Shape shape_;
  Array data_ = Array::Zero(1);
};

/// Row-major strides for a shape.
std::vector<Index> strides(const Shape& shape);

}  // namespace fdnet
