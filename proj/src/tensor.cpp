// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/tensor.hpp"

#include <cmath>

namespace pgd {

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) {
    throw NumericError(what + ": non-finite entries");
  }
}

void require_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(what + ": non-finite entries");
    }
  }
}

}  // namespace pgd
