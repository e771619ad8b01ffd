#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <utility>

namespace destripe {

using Index = Eigen::Index;
using Complex = std::complex<double>;

/// Extent of a z-major stack: `depth` slices of `rows` x `cols` pixels.
struct Shape3 {
  Index depth = 0;
  Index rows = 0;
  Index cols = 0;

  Index slice_size() const { return rows * cols; }
  Index size() const { return depth * rows * cols; }
  bool operator==(const Shape3&) const = default;
};

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 3D grid stored contiguously in (slice, row, column) order.
///
/// The storage is a flat Eigen array so whole-grid arithmetic goes through
/// `array()` expressions; `slice(k)` maps one row-major plane without copying.
template <typename Scalar>
class Grid3 {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using SliceMap = Eigen::Map<Plane<Scalar>>;
  using ConstSliceMap = Eigen::Map<const Plane<Scalar>>;

  Grid3() = default;
  explicit Grid3(Shape3 shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Grid3(Shape3 shape, Array data) : shape_(shape), data_(std::move(data)) {
    eigen_assert(data_.size() == shape_.size());
  }

  const Shape3& shape() const { return shape_; }
  Index depth() const { return shape_.depth; }
  Index rows() const { return shape_.rows; }
  Index cols() const { return shape_.cols; }
  Index size() const { return shape_.size(); }

  Index offset(Index k, Index i, Index j) const {
    return (k * shape_.rows + i) * shape_.cols + j;
  }

  Scalar& operator()(Index k, Index i, Index j) { return data_[offset(k, i, j)]; }
  const Scalar& operator()(Index k, Index i, Index j) const {
    return data_[offset(k, i, j)];
  }
  Scalar& operator[](Index flat) { return data_[flat]; }
  const Scalar& operator[](Index flat) const { return data_[flat]; }

  SliceMap slice(Index k) {
    return SliceMap(data_.data() + k * shape_.slice_size(), shape_.rows, shape_.cols);
  }
  ConstSliceMap slice(Index k) const {
    return ConstSliceMap(data_.data() + k * shape_.slice_size(), shape_.rows, shape_.cols);
  }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

 private:
  Shape3 shape_;
  Array data_;
};

using RealGrid = Grid3<double>;
using ComplexGrid = Grid3<Complex>;
using MaskGrid = Grid3<std::uint8_t>;

template <typename Scalar>
bool same_shape(const Grid3<Scalar>& a, const Grid3<Scalar>& b) {
  return a.shape() == b.shape();
}

inline double dot(const RealGrid& a, const RealGrid& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace destripe
