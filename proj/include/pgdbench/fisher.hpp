// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/tensor.hpp"

namespace pgd {

/// Sampling-weighted empirical Fisher information over final-layer
/// cross-entropy gradients: M = sum_i h_i v_i v_i^T where v_i is the
/// flattened FC gradient (weight entries row-major, then bias entries),
/// dim = classes * (features + 1). `ridge` is added as ridge*I before
/// inversion.
struct EfiMatrix {
  std::size_t dim = 0;
  Tensor matrix;  ///< dim x dim, symmetric
  double ridge = 0.0;
};

/// Assembles the weighted EFI at the given parameters. `dist` must cover the
/// same index set as `samples`. Images are used as-is (no augmentation).
/// Deterministic for any worker count: samples are split into a fixed number
/// of blocks whose partial sums are reduced in block order.
EfiMatrix efi(const ModelParams& params, std::span<const TrainView> samples,
              const SamplingDistribution& dist);

/// Same weighted sum of outer products over caller-supplied flat gradient
/// vectors. Used by tests to embed hand-computable problems.
EfiMatrix efi_from_gradients(const std::vector<std::vector<double>>& grads,
                             const SamplingDistribution& dist);

/// Default regularizer: 1e-6 * mean of the diagonal. Desk-scale EFI matrices
/// are near-singular, so the raw trace of the inverse is meaningless without
/// one.
double default_ridge(const EfiMatrix& m);

struct EigenSummary {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double median_eigenvalue = 0.0;  ///< average of middle pair when dim is even
};

/// Eigenvalues of the (un-ridged) matrix via symmetric eigendecomposition.
EigenSummary eigen_summary(const EfiMatrix& m);

/// Tr[(M + ridge*I)^-1] = sum_i 1/(lambda_i + ridge). Throws NumericError if
/// the matrix is asymmetric beyond 1e-10, has an eigenvalue below -1e-8, or
/// any shifted eigenvalue is not strictly positive.
double trace_inverse(const EfiMatrix& m);

/// Puts several runs' matrices on one footing: a shared ridge (1e-6 times the
/// mean over matrices of their mean diagonal) replaces each matrix's own, and
/// the trace of the inverse is evaluated under it. Comparisons across h or
/// across parameters are only meaningful at a common ridge.
struct EfiComparison {
  double shared_ridge = 0.0;
  std::vector<double> trace_inverses;  ///< one per input matrix, same order
};

EfiComparison compare_trace_inverse(std::span<const EfiMatrix> matrices);

/// Two groups of one-dimensional quadratic losses: size_M samples with loss
/// (theta + a)^2 / 2 and size_m samples with loss (theta - a)^2 / 2. Small
/// enough to solve exactly, rich enough to show why gradient-norm sampling
/// centers the fit between the groups.
struct ToyProblem {
  std::size_t size_M = 9;
  std::size_t size_m = 1;
  double a = 1.0;

  void validate() const;  ///< sizes >= 1, a > 0
};

/// Uniform-weight minimizer theta = a(|m| - |M|)/(|M| + |m|).
double toy_erm(const ToyProblem& prob);

struct ToySolution {
  double theta_uniform = 0.0;  ///< uniform-weight minimizer
  double g_M = 0.0;            ///< per-sample gradient theta + a at that point
  double g_m = 0.0;            ///< per-sample gradient theta - a
  double h_M = 0.0;            ///< optimal per-sample probability, group M
  double h_m = 0.0;            ///< optimal per-sample probability, group m
};

/// Closed-form gradient-norm solution: h proportional to |g| at the uniform
/// minimizer, normalized over all samples. Satisfies |M|*h_M = 1/2 exactly.
ToySolution toy_optimal_h(const ToyProblem& prob);

/// Exhaustive check of the same objective: for each grid value
/// t = |M|*h_M in (0,1), the weighted minimizer is solved, the scalar
/// weighted Fisher information is evaluated as the h-weighted sum of squared
/// per-sample gradients, and the trace of its inverse is recorded. Grid
/// points are t_k = (k+1)/(grid_steps+1).
struct ToyBruteForce {
  std::vector<double> grid_t;     ///< the swept t values
  std::vector<double> objective;  ///< trace-inverse at each t
  std::size_t best_index = 0;
  double best_t = 0.0;
  double best_objective = 0.0;
};

ToyBruteForce toy_brute_force(const ToyProblem& prob, std::size_t grid_steps);

/// One row of the diagnostic report.
struct FisherRunDiagnostic {
  std::string label;
  EigenSummary summary;
  double ridge = 0.0;
  double trace_inv = 0.0;
};

/// JSON report: per-run eigenvalue summary, ridge, trace-inverse, plus the
/// shared-ridge comparison protocol note.
void write_fisher_report(const std::vector<FisherRunDiagnostic>& rows,
                         const std::string& path);

}  // namespace pgd
