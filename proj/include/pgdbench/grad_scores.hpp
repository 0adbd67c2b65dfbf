// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/rng.hpp"

namespace pgd {

/// Which norm turns a per-sample gradient into a scalar score. The score is
/// the order-`s` norm raised to the power `r`. By default only the final FC
/// layer's gradient enters the norm; `full_network` switches to the gradient
/// over every parameter (diagnostic, much slower).
struct NormSpec {
  enum class Order { kL1, kL2, kLInf };
  Order s = Order::kL2;
  double r = 1.0;
  bool full_network = false;
};

/// Gradient of the cross-entropy loss w.r.t. the FC head's parameters.
/// weight = (p - e_y) outer z (classes x features), bias = p - e_y.
struct FcGradient {
  Tensor weight;
  std::vector<double> bias;
};

FcGradient fc_gradient(const ForwardTrace& trace, int target);

/// Entrywise norm of the concatenated (weight, bias) gradient, order s,
/// raised to r. General slow form; the factorized fast path below must agree
/// with it to 1e-12.
double grad_norm(const FcGradient& grad, const NormSpec& spec);
double norm_of_entries(std::span<const double> flat, NormSpec::Order s,
                       double r);

/// Closed-form norm exploiting the outer-product structure:
///   L2:  |g|_2 * sqrt(|z|_2^2 + 1)
///   L1:  |g|_1 * (|z|_1 + 1)
///   Linf:|g|_inf * max(|z|_inf, 1)
/// where g = p - e_y and z is the penultimate feature; raised to r.
double fc_grad_norm_factorized(std::span<const double> g,
                               std::span<const double> z,
                               const NormSpec& spec);

struct GradNormRecord {
  std::size_t index = 0;
  double raw_norm = 0.0;         ///< |grad|_s^r, the unnormalized sampling score
  double normalized_norm = 0.0;  ///< raw / max over the dataset (0 if all 0)
};

/// Scores every sample's cross-entropy gradient at the given parameters.
/// Images are used as-is (no augmentation). Records come back in index
/// order regardless of internal batching.
std::vector<GradNormRecord> compute_grad_norms(const ModelParams& params,
                                               std::span<const TrainView> data,
                                               const NormSpec& spec);

/// Normalized per-sample sampling probabilities h_i = score_i / sum(scores).
struct SamplingDistribution {
  std::vector<double> probabilities;

  static SamplingDistribution uniform(std::size_t n);
  void validate() const;  ///< entries >= 0, sum within 1e-12 of 1
};

/// Scores must already carry the r exponent. All-equal scores return the
/// exact uniform distribution. An all-zero score vector throws
/// DegenerateInputError unless `uniform_fallback` opts into uniform.
SamplingDistribution sampling_distribution(std::span<const double> scores,
                                           bool uniform_fallback = false);

/// Importance weights for the reweighting variant: w_i = n * h_i, so the
/// mean weight is exactly 1.
std::vector<double> reweight_weights(std::span<const double> scores,
                                     std::size_t n);

/// Draws i.i.d. with replacement via the inverse CDF. Construction is O(n);
/// each draw is O(log n).
class BatchSampler {
 public:
  explicit BatchSampler(const SamplingDistribution& dist);
  std::size_t draw_one(Rng& rng) const;
  std::vector<std::size_t> draw(std::size_t batch_size, Rng& rng) const;

 private:
  std::vector<double> cdf_;
};

std::vector<std::size_t> draw_batch(const SamplingDistribution& dist,
                                    std::size_t batch_size, Rng& rng);

/// CSV export: index, raw_norm, normalized_norm, target. The evaluation
/// variant appends the aligned column; training-path exports never see it.
void export_grad_norms_csv(const std::vector<GradNormRecord>& records,
                           std::span<const TrainView> data,
                           const std::string& path);
void export_grad_norms_csv_eval(const std::vector<GradNormRecord>& records,
                                const std::vector<LabeledSample>& samples,
                                const std::string& path);

/// Compensated (Kahan) sum; keeps normalization errors O(eps) instead of
/// O(n eps) so the 1e-12 distribution invariant holds at n = 55000.
double kahan_sum(std::span<const double> values);

}  // namespace pgd
