#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "handtraj/common/error.hpp"

namespace handtraj::nn {

// Dense row-major matrix; rows are tokens throughout the model.
template <typename Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  Real* row(std::size_t r) { return data.data() + r * cols; }
  const Real* row(std::size_t r) const { return data.data() + r * cols; }
  std::span<Real> span() { return data; }
  std::span<const Real> span() const { return data; }

  void zero() { std::fill(data.begin(), data.end(), Real(0)); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  template <typename Other>
  Matrix<Other> cast() const {
    Matrix<Other> m(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = static_cast<Other>(data[i]);
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace handtraj::nn
