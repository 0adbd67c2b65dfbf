// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pgd {

struct CriterionResult {
  int index = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceResult {
  std::vector<CriterionResult> criteria;

  bool all_passed() const {
    for (const CriterionResult& c : criteria)
      if (!c.passed) return false;
    return !criteria.empty();
  }
};

/// Runs the nine acceptance criteria in order, printing one PASS/FAIL line
/// per criterion to `log` as each finishes. Every criterion uses fixed seeds,
/// so repeated runs on one machine produce the same pass/fail vector.
/// `scratch_dir` receives run artifacts (created if needed).
AcceptanceResult run_acceptance(const std::string& scratch_dir,
                                std::ostream& log);

}  // namespace pgd
