// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pgdbench/tensor.hpp"

namespace pgd {

/// Numerically stable softmax (shift by the max logit).
std::vector<double> softmax(std::span<const double> logits);

/// Row-wise softmax for a batch x classes tensor.
Tensor softmax_rows(const Tensor& logits);

/// Cross-entropy -log p_y from logits. Probabilities are clamped to
/// kProbFloor before the log; each clamp increments the warning counter.
double ce_loss_from_logits(std::span<const double> logits, int label);

/// Cross-entropy from an already-computed probability vector.
double ce_loss_from_probs(std::span<const double> probs, int label);

/// Generalized cross-entropy (1 - p_y^alpha) / alpha, alpha in (0, 1].
/// Approaches plain cross-entropy as alpha -> 0.
double gce_loss_from_logits(std::span<const double> logits, int label,
                            double alpha);

/// d(CE)/d(logits) = p - onehot(y).
std::vector<double> ce_logit_grad(std::span<const double> probs, int label);

/// d(GCE)/d(logits) = p_y^alpha * (p - onehot(y)).
std::vector<double> gce_logit_grad(std::span<const double> probs, int label,
                                   double alpha);

/// Probability floor used inside the log; hits are counted, not fatal.
inline constexpr double kProbFloor = 1e-300;

/// Number of times a probability was clamped since the last reset.
std::uint64_t prob_clamp_count();
void reset_prob_clamp_count();

}  // namespace pgd
