#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegtext {

// Dense row-major matrix of doubles. Minimal on purpose; everything the
// model code needs and nothing else.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Matrix row_vector(const std::vector<double>& v) {
    Matrix m(1, v.size());
    m.data_ = v;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void check_shapes(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("shape mismatch: " + what);
}

// c = a(r,k) * b(k,c)
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  check_shapes(a.cols() == b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// c = a(r,k) * b(s,k)^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_shapes(a.cols() == b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  const std::size_t r = a.rows(), k = a.cols(), s = b.rows();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < s; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

// c = a(k,r)^T * b(k,c)
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_shapes(a.rows() == b.rows(), "matmul_tn");
  Matrix c(a.cols(), b.cols());
  const std::size_t k = a.rows(), r = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * r;
    const double* brow = b.data() + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  check_shapes(a.same_shape(b), "add_in_place");
  double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) ad[i] += bd[i];
}

}  // namespace eegtext
