// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pgdbench/errors.hpp"

namespace pgd {

namespace {

constexpr std::size_t kEvalChunk = 1024;

}  // namespace

std::vector<int> predict_classes(const ModelParams& params,
                                 const std::vector<LabeledSample>& samples) {
  std::vector<int> out(samples.size());
  const std::size_t in_dim = params.input_dim();
  const std::size_t c = params.num_classes();
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, samples.size() - start);
    Tensor batch({count, in_dim}, 0.0);
    for (std::size_t b = 0; b < count; ++b) {
      const Tensor& img = samples[start + b].image;
      if (img.size() != in_dim)
        throw DimensionError("evaluate: image size does not match model input");
      std::copy(img.data.begin(), img.data.end(), batch.data.data() + b * in_dim);
    }
    const BatchTrace trace = forward_batch(params, batch);
    for (std::size_t b = 0; b < count; ++b) {
      const double* row = trace.logits().data.data() + b * c;
      out[start + b] = argmax_lowest(std::span<const double>(row, c));
    }
  }
  return out;
}

SplitAccuracy evaluate_accuracy(const ModelParams& params,
                                const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw DimensionError("evaluate on empty split");
  const std::vector<int> preds = predict_classes(params, samples);
  SplitAccuracy acc;
  acc.n = samples.size();
  std::size_t hit = 0, hit_aligned = 0, hit_conflicting = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool correct = preds[i] == samples[i].target;
    const bool aligned = samples[i].fully_aligned();
    if (aligned)
      ++acc.n_aligned;
    else
      ++acc.n_conflicting;
    if (correct) {
      ++hit;
      if (aligned)
        ++hit_aligned;
      else
        ++hit_conflicting;
    }
  }
  acc.overall = static_cast<double>(hit) / static_cast<double>(acc.n);
  acc.aligned = acc.n_aligned
                    ? static_cast<double>(hit_aligned) / static_cast<double>(acc.n_aligned)
                    : 0.0;
  acc.conflicting = acc.n_conflicting
                        ? static_cast<double>(hit_conflicting) /
                              static_cast<double>(acc.n_conflicting)
                        : 0.0;
  return acc;
}

int histogram_bin(double normalized_norm) {
  if (normalized_norm < 0.0 || normalized_norm > 1.0)
    throw DimensionError("normalized norm outside [0, 1]");
  if (normalized_norm >= 1.0) return 9;  // last bin is closed on the right
  return static_cast<int>(normalized_norm * 10.0);
}

NormHistogram norm_histogram(const std::vector<GradNormRecord>& records,
                             const std::vector<LabeledSample>& samples) {
  if (records.size() != samples.size())
    throw DimensionError("histogram: record/sample count mismatch");
  NormHistogram hist;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int bin = histogram_bin(records[i].normalized_norm);
    if (samples[records[i].index].fully_aligned())
      ++hist.aligned[static_cast<std::size_t>(bin)];
    else
      ++hist.conflicting[static_cast<std::size_t>(bin)];
  }
  return hist;
}

MetricReport evaluate(const ModelParams& params,
                      const std::vector<LabeledSample>& samples) {
  MetricReport report;
  report.accuracy = evaluate_accuracy(params, samples);
  const std::vector<int> preds = predict_classes(params, samples);

  const std::size_t c = params.num_classes();
  std::vector<std::size_t> class_hits(c, 0), class_counts(c, 0);
  // Group key: target followed by every bias value.
  std::map<std::vector<int>, std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = samples[i];
    const bool correct = preds[i] == s.target;
    class_counts[static_cast<std::size_t>(s.target)] += 1;
    if (correct) class_hits[static_cast<std::size_t>(s.target)] += 1;
    std::vector<int> key{s.target};
    key.insert(key.end(), s.bias_values.begin(), s.bias_values.end());
    auto& [hits, total] = groups[key];
    total += 1;
    if (correct) hits += 1;
  }
  report.per_class.resize(c, 0.0);
  for (std::size_t y = 0; y < c; ++y)
    if (class_counts[y])
      report.per_class[y] =
          static_cast<double>(class_hits[y]) / static_cast<double>(class_counts[y]);
  report.worst_group = 1.0;
  for (const auto& [key, stat] : groups)
    report.worst_group = std::min(
        report.worst_group,
        static_cast<double>(stat.first) / static_cast<double>(stat.second));
  return report;
}

MetricReport evaluate(const ModelParams& params,
                      const std::vector<LabeledSample>& samples,
                      const std::vector<GradNormRecord>& records) {
  MetricReport report = evaluate(params, samples);
  report.histogram = norm_histogram(records, samples);
  return report;
}

double auroc(const std::vector<double>& scores,
             const std::vector<bool>& positive) {
  if (scores.size() != positive.size())
    throw DimensionError("auroc: score/label count mismatch");
  std::size_t n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateInputError("auroc needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks over ties, then the Mann-Whitney U statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (positive[order[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw DimensionError("mean of empty range");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / (static_cast<double>(values.size()) - 1.0));
}

}  // namespace pgd
