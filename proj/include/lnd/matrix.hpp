#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lnd/errors.hpp"

namespace lnd {

// Dense row-major matrix of doubles. Deliberately small: storage, element
// access, and the handful of whole-matrix helpers the networks need.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
    data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
  }

  double* operator[](int r) {
    return data.data() + static_cast<std::size_t>(r) * cols;
  }
  const double* operator[](int r) const {
    return data.data() + static_cast<std::size_t>(r) * cols;
  }

  double& at(int r, int c) {
    check_index(r, c);
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    check_index(r, c);
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

 private:
  void check_index(int r, int c) const {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ShapeError("Matrix::at: index (" + std::to_string(r) + "," +
                       std::to_string(c) + ") out of " + shape_str());
  }
};

// C = A * B. Plain triple loop ordered for row-major locality.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a[i];
    double* crow = c[i];
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b[k];
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// Stack rows of a on top of rows of b (column counts must match).
inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw ShapeError("vstack: " + a.shape_str() + " over " + b.shape_str());
  Matrix c(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), c.data.begin());
  std::copy(b.data.begin(), b.data.end(),
            c.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return c;
}

// Concatenate columns of a and b row by row (row counts must match).
inline Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("hconcat: " + a.shape_str() + " beside " + b.shape_str());
  Matrix c(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    std::copy(a[i], a[i] + a.cols, c[i]);
    std::copy(b[i], b[i] + b.cols, c[i] + a.cols);
  }
  return c;
}

}  // namespace lnd
