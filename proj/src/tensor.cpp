#include "flowkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowkit {

Index shape_product(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_to_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_ = Eigen::ArrayXd::Zero(shape_product(shape_));
}

Tensor::Tensor(Shape shape, Eigen::ArrayXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw std::invalid_argument("data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::constant(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t{Shape{}, Eigen::ArrayXd::Constant(1, value)};
  return t;
}

Index Tensor::flat_index(std::initializer_list<Index> idx) const {
  if (static_cast<Index>(idx.size()) != rank()) {
    throw std::invalid_argument("index rank mismatch for shape " + shape_to_string(shape_));
  }
  Index flat = 0;
  Index axis = 0;
  for (Index i : idx) {
    if (i < 0 || i >= shape_[axis]) {
      throw std::out_of_range("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

Index Tensor::frames() const {
  if (shape_.empty()) throw std::invalid_argument("rank-0 tensor has no frame axis");
  return shape_[0];
}

Index Tensor::frame_stride() const {
  if (shape_.empty()) throw std::invalid_argument("rank-0 tensor has no frame axis");
  Index n = 1;
  for (size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
  return n;
}

Tensor Tensor::frame_slice(Index begin, Index end) const {
  const Index t = frames();
  if (begin < 0 || end < begin || end > t) {
    throw std::out_of_range("frame slice [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") out of range for " + std::to_string(t) + " frames");
  }
  const Index stride = frame_stride();
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  return Tensor(std::move(out_shape), data_.segment(begin * stride, (end - begin) * stride));
}

void Tensor::set_frames(Index begin, const Tensor& src) {
  const Index stride = frame_stride();
  if (src.rank() != rank() || src.frame_stride() != stride) {
    throw std::invalid_argument("set_frames: incompatible frame shape");
  }
  const Index n = src.frames();
  if (begin < 0 || begin + n > frames()) throw std::out_of_range("set_frames: range out of bounds");
  data_.segment(begin * stride, n * stride) = src.data_;
}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Tensor::frame_matrix() {
  return {data_.data(), frames(), frame_stride()};
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Tensor::frame_matrix() const {
  return {data_.data(), frames(), frame_stride()};
}

Tensor& Tensor::operator+=(const Tensor& rhs) {
  require_same_shape(*this, rhs, "operator+");
  data_ += rhs.data_;
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& rhs) {
  require_same_shape(*this, rhs, "operator-");
  data_ -= rhs.data_;
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  data_ *= s;
  return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  }
}

bool exact_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && (a.array() == b.array()).all();
}

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

std::pair<Tensor, Tensor> reduce_stats(const Tensor& x, const std::vector<Index>& axes) {
  const Index rank = x.rank();
  std::vector<bool> reduced(static_cast<size_t>(rank), false);
  for (Index a : axes) {
    if (a < 0 || a >= rank) throw std::invalid_argument("reduce_stats: axis out of range");
    if (reduced[static_cast<size_t>(a)]) throw std::invalid_argument("reduce_stats: duplicate axis");
    reduced[static_cast<size_t>(a)] = true;
  }

  Index reduce_count = 1;
  Shape out_shape;
  for (Index a = 0; a < rank; ++a) {
    if (reduced[static_cast<size_t>(a)]) {
      reduce_count *= x.shape()[static_cast<size_t>(a)];
    } else {
      out_shape.push_back(x.shape()[static_cast<size_t>(a)]);
    }
  }
  if (reduce_count == 0) throw std::invalid_argument("empty reduction");

  const Index out_size = shape_product(out_shape);
  // Map each element to its output cell, then do two sorted-sum passes
  // (mean, then squared deviations) per cell.
  std::vector<std::vector<double>> cells(static_cast<size_t>(out_size));
  std::vector<Index> idx(static_cast<size_t>(rank), 0);
  for (Index flat = 0; flat < x.size(); ++flat) {
    Index out_flat = 0;
    for (Index a = 0; a < rank; ++a) {
      if (!reduced[static_cast<size_t>(a)]) out_flat = out_flat * x.shape()[static_cast<size_t>(a)] + idx[static_cast<size_t>(a)];
    }
    cells[static_cast<size_t>(out_flat)].push_back(x[flat]);
    for (Index a = rank - 1; a >= 0; --a) {
      if (++idx[static_cast<size_t>(a)] < x.shape()[static_cast<size_t>(a)]) break;
      idx[static_cast<size_t>(a)] = 0;
    }
  }

  Tensor mean(out_shape);
  Tensor stddev(out_shape);
  for (Index c = 0; c < out_size; ++c) {
    const auto& vals = cells[static_cast<size_t>(c)];
    const double m = sorted_sum(vals) / static_cast<double>(vals.size());
    std::vector<double> sq(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) {
      const double d = vals[i] - m;
      sq[i] = d * d;
    }
    mean[c] = m;
    stddev[c] = std::sqrt(sorted_sum(std::move(sq)) / static_cast<double>(vals.size()));
  }
  return {std::move(mean), std::move(stddev)};
}

}  // namespace flowkit
