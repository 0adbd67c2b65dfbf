// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pgd {

/// Shape or size mismatch between tensors/layers.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

/// Objects passed together do not belong to the same model/run state.
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf or other numeric breakdowns (diverged runs, failed solvers).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed external input (IDX files, config files, dataset dumps).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Degenerate numeric input (e.g. all-zero score vector).
class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace pgd
