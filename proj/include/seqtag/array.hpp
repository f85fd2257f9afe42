#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqtag/common.hpp"

namespace seqtag {

// Dense row-major real array of rank 1 or 2, double precision.
class Array {
 public:
  Array() = default;

  static Array vec(std::size_t len, double fill = 0.0) {
    Array a;
    a.ndim_ = 1;
    a.d0_ = len;
    a.d1_ = 1;
    a.data_.assign(len, fill);
    return a;
  }

  static Array mat(std::size_t rows, std::size_t cols, double fill = 0.0) {
    Array a;
    a.ndim_ = 2;
    a.d0_ = rows;
    a.d1_ = cols;
    a.data_.assign(rows * cols, fill);
    return a;
  }

  static Array scalar(double v) {
    Array a = vec(1);
    a[0] = v;
    return a;
  }

  static Array from(std::span<const double> values) {
    Array a = vec(values.size());
    std::copy(values.begin(), values.end(), a.data_.begin());
    return a;
  }

  std::size_t ndim() const { return ndim_; }
  std::size_t size() const { return data_.size(); }
  std::size_t len() const { return d0_; }
  std::size_t rows() const { return d0_; }
  std::size_t cols() const { return d1_; }
  bool is_vector() const { return ndim_ == 1; }
  bool is_matrix() const { return ndim_ == 2; }
  bool is_scalar() const { return ndim_ == 1 && d0_ == 1; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * d1_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * d1_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Array& o) const {
    return ndim_ == o.ndim_ && d0_ == o.d0_ && d1_ == o.d1_;
  }

  bool all_finite() const;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array& operator+=(const Array& o) {
    SEQTAG_CHECK(same_shape(o), "array += shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Array& operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
  }

  // Euclidean norm, used in training diagnostics.
  double norm() const;

 private:
  std::size_t ndim_ = 1;
  std::size_t d0_ = 0;
  std::size_t d1_ = 1;
  std::vector<double> data_;
};

inline Array zeros_like(const Array& a) {
  return a.is_vector() ? Array::vec(a.len()) : Array::mat(a.rows(), a.cols());
}

}  // namespace seqtag
