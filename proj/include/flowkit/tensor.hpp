#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace flowkit {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Dense rank-N array of doubles in row-major order. The first axis is the
/// frame axis whenever a tensor is used as a latent sequence.
///
/// Invariants: the flat storage length equals the product of the extents, and
/// values stay finite unless an operation documents otherwise. A rank-0 shape
/// is a scalar holding one element.
class Tensor {
 public:
  Tensor() : shape_{0}, data_(0) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Eigen::ArrayXd data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  /// Flat row-major view of the storage; use for expression arithmetic.
  Eigen::ArrayXd& array() { return data_; }
  const Eigen::ArrayXd& array() const { return data_; }

  double& operator[](Index flat) { return data_[flat]; }
  double operator[](Index flat) const { return data_[flat]; }

  double& at(std::initializer_list<Index> idx) { return data_[flat_index(idx)]; }
  double at(std::initializer_list<Index> idx) const { return data_[flat_index(idx)]; }

  Index flat_index(std::initializer_list<Index> idx) const;

  /// Number of frames (extent of axis 0). Rank must be >= 1.
  Index frames() const;
  /// Elements per frame (product of extents past axis 0).
  Index frame_stride() const;
  /// Copy of frames [begin, end).
  Tensor frame_slice(Index begin, Index end) const;
  /// Overwrite frames [begin, begin + src.frames()) with src.
  void set_frames(Index begin, const Tensor& src);

  /// Matrix view [frames x frame_stride]; rank must be >= 1.
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> frame_matrix();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> frame_matrix() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return data_.isFinite().all(); }

  Tensor& operator+=(const Tensor& rhs);
  Tensor& operator-=(const Tensor& rhs);
  Tensor& operator*=(double s);

  friend Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
  friend Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
  friend Tensor operator*(double s, Tensor rhs) { return rhs *= s; }
  friend Tensor operator*(Tensor lhs, double s) { return lhs *= s; }

 private:
  Shape shape_;
  Eigen::ArrayXd data_;
};

Index shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Throws std::invalid_argument when the two shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

/// True when every element matches bit-for-bit (by value; -0 == +0).
bool exact_equal(const Tensor& a, const Tensor& b);

/// Mean and population standard deviation reduced over `axes` (kept axes
/// survive in order). Summation is performed in sorted order so that a full
/// reduction is invariant to permutations of the input, bit for bit.
/// Reducing over an empty extent throws ("empty reduction").
std::pair<Tensor, Tensor> reduce_stats(const Tensor& x, const std::vector<Index>& axes);

/// Sum of `values` accumulated in ascending order; permutation-invariant.
double sorted_sum(std::vector<double> values);

}  // namespace flowkit
