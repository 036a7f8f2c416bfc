/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "canet/errors.hpp"

namespace canet {

/// Dense row-major matrix. A 1xN row doubles as a vector, 1x1 as a scalar.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), data(size_t(r) * c, fill) {}
  Mat(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != size_t(r) * c) throw ShapeError("Mat: data length does not match rows*cols");
  }

  T& at(int r, int c) { return data[size_t(r) * cols + c]; }
  const T& at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  static Mat zeros_like(const Mat& o) { return Mat(o.rows, o.cols); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows, cols);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

template <typename T>
inline void require_same_shape(const Mat<T>& a, const Mat<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace canet
