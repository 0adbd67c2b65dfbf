// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/network.hpp"

namespace pgd {

/// Predicted class per sample (argmax logits, lowest index wins ties),
/// computed in batches.
std::vector<int> predict_classes(const ModelParams& params,
                                 const std::vector<LabeledSample>& samples);

/// The accuracies tracked every epoch. aligned/conflicting are NaN-free:
/// an empty subgroup reports accuracy 0 and count 0.
struct SplitAccuracy {
  double overall = 0.0;
  double aligned = 0.0;
  double conflicting = 0.0;
  std::size_t n = 0;
  std::size_t n_aligned = 0;
  std::size_t n_conflicting = 0;
};

SplitAccuracy evaluate_accuracy(const ModelParams& params,
                                const std::vector<LabeledSample>& samples);

/// Ten bins of width 0.1 over normalized norms in [0,1]; bins are
/// right-open except the last, which is closed.
struct NormHistogram {
  std::array<std::size_t, 10> aligned{};
  std::array<std::size_t, 10> conflicting{};

  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t v : aligned) n += v;
    for (std::size_t v : conflicting) n += v;
    return n;
  }
};

int histogram_bin(double normalized_norm);

NormHistogram norm_histogram(const std::vector<GradNormRecord>& records,
                             const std::vector<LabeledSample>& samples);

struct MetricReport {
  SplitAccuracy accuracy;
  double worst_group = 0.0;  ///< min accuracy over (target, bias tuple) groups
  std::vector<double> per_class;
  NormHistogram histogram;  ///< zero counts unless records were supplied
};

MetricReport evaluate(const ModelParams& params,
                      const std::vector<LabeledSample>& samples);
MetricReport evaluate(const ModelParams& params,
                      const std::vector<LabeledSample>& samples,
                      const std::vector<GradNormRecord>& records);

/// Area under the ROC curve of `score` as a detector of `positive`,
/// computed by the rank statistic (ties get half credit).
double auroc(const std::vector<double>& scores,
             const std::vector<bool>& positive);

double mean(std::span<const double> values);
/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> values);

}  // namespace pgd
