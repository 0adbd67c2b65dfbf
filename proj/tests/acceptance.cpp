// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: runs the nine criteria and exits nonzero if any fails.
// Scratch artifacts go under the build tree (or $PGD_ACCEPT_DIR).

#include <cstdlib>
#include <iostream>

#include "pgdbench/acceptance.hpp"

int main() {
  const char* env = std::getenv("PGD_ACCEPT_DIR");
  const std::string scratch = env ? env : "acceptance_runs";
  const pgd::AcceptanceResult result = pgd::run_acceptance(scratch, std::cout);
  std::size_t passed = 0;
  for (const pgd::CriterionResult& c : result.criteria)
    if (c.passed) ++passed;
  std::cout << passed << " of " << result.criteria.size()
            << " criteria passed\n";
  return result.all_passed() ? EXIT_SUCCESS : EXIT_FAILURE;
}
