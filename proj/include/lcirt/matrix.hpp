#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace lcirt {

// Minimal dense row-major matrix of doubles. The estimators only need
// element access and shape, so this stays deliberately small.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return v_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return v_[i * cols_ + j];
  }

  double* row_ptr(std::size_t i) { return v_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const { return v_.data() + i * cols_; }

  const std::vector<double>& data() const noexcept { return v_; }
  std::vector<double>& data() noexcept { return v_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> v_;
};

}  // namespace lcirt
