// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/losses.hpp"

#include <cmath>
#include <string>

#include "pgdbench/errors.hpp"

namespace pgd {

namespace {

// Thread-local so concurrent sweep workers get isolated counts; each run
// reads the delta on its own thread.
thread_local std::uint64_t g_clamp_count = 0;

void check_label(std::size_t n, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= n)
    throw DimensionError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(n) + " classes");
}

double clamped(double p) {
  if (p < kProbFloor) {
    ++g_clamp_count;
    return kProbFloor;
  }
  return p;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax over empty logits");
  double max = logits[0];
  for (double v : logits)
    if (v > max) max = v;
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows needs batch x classes");
  Tensor out(logits.shape, 0.0);
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  for (std::size_t b = 0; b < rows; ++b) {
    const double* in = logits.data.data() + b * cols;
    double* dst = out.data.data() + b * cols;
    double max = in[0];
    for (std::size_t j = 1; j < cols; ++j)
      if (in[j] > max) max = in[j];
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(in[j] - max);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < cols; ++j) dst[j] /= sum;
  }
  return out;
}

double ce_loss_from_logits(std::span<const double> logits, int label) {
  check_label(logits.size(), label);
  // -log p_y via log-sum-exp to avoid materializing tiny probabilities.
  double max = logits[0];
  for (double v : logits)
    if (v > max) max = v;
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - max);
  const double log_py = logits[label] - max - std::log(sum);
  if (log_py < std::log(kProbFloor)) ++g_clamp_count;
  return -std::max(log_py, std::log(kProbFloor));
}

double ce_loss_from_probs(std::span<const double> probs, int label) {
  check_label(probs.size(), label);
  return -std::log(clamped(probs[label]));
}

double gce_loss_from_logits(std::span<const double> logits, int label,
                            double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw DimensionError("gce alpha must lie in (0, 1]");
  check_label(logits.size(), label);
  const std::vector<double> probs = softmax(logits);
  return (1.0 - std::pow(clamped(probs[label]), alpha)) / alpha;
}

std::vector<double> ce_logit_grad(std::span<const double> probs, int label) {
  check_label(probs.size(), label);
  std::vector<double> grad(probs.begin(), probs.end());
  grad[label] -= 1.0;
  return grad;
}

std::vector<double> gce_logit_grad(std::span<const double> probs, int label,
                                   double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw DimensionError("gce alpha must lie in (0, 1]");
  check_label(probs.size(), label);
  const double scale = std::pow(clamped(probs[label]), alpha);
  std::vector<double> grad(probs.begin(), probs.end());
  grad[label] -= 1.0;
  for (double& v : grad) v *= scale;
  return grad;
}

std::uint64_t prob_clamp_count() { return g_clamp_count; }

void reset_prob_clamp_count() { g_clamp_count = 0; }

}  // namespace pgd
