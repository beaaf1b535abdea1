#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <type_traits>
#include <vector>

#include "unmt/common.hpp"

namespace unmt {

// Dense row-major tensor. The network only ever needs matrices and row
// vectors, so rank is 1 or 2; rank-1 data is treated as a single row.
template <class T>
struct Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor is float or double");

  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, T value = T(0))
      : shape{rows, cols}, data(rows * cols, value) {}

  static Tensor row(std::initializer_list<T> values) {
    Tensor t(1, values.size());
    std::size_t i = 0;
    for (T v : values) t.data[i++] = v;
    return t;
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows_in) {
    const std::size_t r = rows_in.size();
    const std::size_t c = r == 0 ? 0 : rows_in.begin()->size();
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows_in) {
      require(row.size() == c, "ragged initializer for Tensor::matrix");
      for (T v : row) t.data[i++] = v;
    }
    return t;
  }

  std::size_t numel() const { return data.size(); }

  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const {
    if (shape.size() == 1) return 1;
    require(shape.size() == 2, "tensor of rank ", shape.size(),
            " has no row/column view");
    return shape[0];
  }

  std::size_t cols() const {
    require(!shape.empty(), "empty tensor has no columns");
    return shape.back();
  }

  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool is_scalar() const { return numel() == 1; }

  bool same_shape(const Tensor& o) const {
    return rows() == o.rows() && cols() == o.cols();
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) {
    for (T& x : data) x = v;
  }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s.empty() ? "scalar" : s;
  }

  std::string shape_str() const { return shape_string(shape); }
};

}  // namespace unmt
