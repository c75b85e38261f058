#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tgrasp/errors.hpp"

namespace tgrasp {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) +
                           "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool operator==(const Matrix&) const = default;

 private:
  void require_same_shape(const Matrix& o, const char* op) const {
    if (!same_shape(o)) throw DimensionError(std::string("shape mismatch in ") + op + ": " + shape_string() + " vs " + o.shape_string());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_inner(const Matrix& a, const Matrix& b, std::size_t ad, std::size_t bd, const char* a_name,
                          const char* b_name) {
  if (ad != bd) {
    throw DimensionError(std::string("cannot multiply ") + a_name + " (" + a.shape_string() + ") by " + b_name +
                         " (" + b.shape_string() + ")");
  }
}

// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b, const char* a_name = "lhs", const char* b_name = "rhs") {
  require_inner(a, b, a.cols(), b.rows(), a_name, b_name);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* br = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

// A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b, const char* a_name = "lhs", const char* b_name = "rhs") {
  require_inner(a, b, a.rows(), b.rows(), a_name, b_name);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* br = b.data().data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* o = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b, const char* a_name = "lhs", const char* b_name = "rhs") {
  require_inner(a, b, a.cols(), b.cols(), a_name, b_name);
  Matrix out(a.rows(), b.rows());
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data().data() + i * d;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.data().data() + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data()) r = std::max(r, std::abs(v));
  return r;
}

}  // namespace tgrasp
