// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pgdbench/errors.hpp"

namespace pgd {

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, double fill = 0.0)
      : shape(std::move(shape_in)), data(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
      : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (element_count(shape) != data.size()) {
      throw DimensionError("tensor: shape product " +
                           std::to_string(element_count(shape)) +
                           " != buffer length " + std::to_string(data.size()));
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Rank-2 accessors (matrices are stored row-major).
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const;
};

/// Throws NumericError naming `what` if any entry is NaN/Inf.
void require_finite(const Tensor& t, const std::string& what);
void require_finite(const std::vector<double>& v, const std::string& what);

}  // namespace pgd
