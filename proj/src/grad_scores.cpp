// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/grad_scores.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pgdbench/errors.hpp"
#include "pgdbench/losses.hpp"

namespace pgd {

namespace {

constexpr std::size_t kScoreChunk = 512;

double apply_r(double v, double r) {
  if (r == 1.0) return v;
  if (r == 2.0) return v * v;
  return std::pow(v, r);
}

/// Full-parameter score for one sample: backprop everything, then the
/// entrywise norm over the concatenated gradient.
double full_network_score(const ModelParams& params, const Tensor& image,
                          int target, const NormSpec& spec) {
  const ForwardTrace trace = forward(params, image);
  const std::vector<double> probs = softmax(trace.logits());
  const std::vector<double> lg = ce_logit_grad(probs, target);
  const ParamGrads grads = backward(params, trace, lg);
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (std::size_t k = 0; k < grads.weight.size(); ++k) {
    flat.insert(flat.end(), grads.weight[k].data.begin(), grads.weight[k].data.end());
    flat.insert(flat.end(), grads.bias[k].begin(), grads.bias[k].end());
  }
  return norm_of_entries(flat, spec.s, spec.r);
}

void write_csv(const std::vector<GradNormRecord>& records,
               const std::vector<int>& targets, const std::vector<int>* aligned,
               const std::string& path) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open csv for writing: " + path);
  file << "index,raw_norm,normalized_norm,target";
  if (aligned) file << ",aligned";
  file << "\n";
  char buf[64];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const GradNormRecord& rec = records[i];
    file << rec.index << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", rec.raw_norm);
    file << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", rec.normalized_norm);
    file << buf << "," << targets[i];
    if (aligned) file << "," << (*aligned)[i];
    file << "\n";
  }
  if (!file) throw FormatError("csv write failed: " + path);
}

}  // namespace

double kahan_sum(std::span<const double> values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

FcGradient fc_gradient(const ForwardTrace& trace, int target) {
  const std::vector<double>& logits = trace.logits();
  const std::vector<double>& z = trace.feature();
  const std::vector<double> p = softmax(logits);
  if (target < 0 || static_cast<std::size_t>(target) >= p.size())
    throw DimensionError("fc_gradient: target out of range");
  const std::size_t c = p.size();
  const std::size_t h = z.size();
  FcGradient grad;
  grad.bias = p;
  grad.bias[static_cast<std::size_t>(target)] -= 1.0;
  grad.weight = Tensor({c, h}, 0.0);
  for (std::size_t row = 0; row < c; ++row) {
    const double g = grad.bias[row];
    double* out = grad.weight.data.data() + row * h;
    for (std::size_t col = 0; col < h; ++col) out[col] = g * z[col];
  }
  return grad;
}

double norm_of_entries(std::span<const double> flat, NormSpec::Order s,
                       double r) {
  double acc = 0.0;
  switch (s) {
    case NormSpec::Order::kL1:
      for (double v : flat) acc += std::fabs(v);
      break;
    case NormSpec::Order::kL2:
      for (double v : flat) acc += v * v;
      acc = std::sqrt(acc);
      break;
    case NormSpec::Order::kLInf:
      for (double v : flat) acc = std::max(acc, std::fabs(v));
      break;
  }
  return apply_r(acc, r);
}

double grad_norm(const FcGradient& grad, const NormSpec& spec) {
  std::vector<double> flat;
  flat.reserve(grad.weight.size() + grad.bias.size());
  flat.insert(flat.end(), grad.weight.data.begin(), grad.weight.data.end());
  flat.insert(flat.end(), grad.bias.begin(), grad.bias.end());
  return norm_of_entries(flat, spec.s, spec.r);
}

double fc_grad_norm_factorized(std::span<const double> g,
                               std::span<const double> z,
                               const NormSpec& spec) {
  double norm = 0.0;
  switch (spec.s) {
    case NormSpec::Order::kL1: {
      double gs = 0.0, zs = 0.0;
      for (double v : g) gs += std::fabs(v);
      for (double v : z) zs += std::fabs(v);
      norm = gs * (zs + 1.0);
      break;
    }
    case NormSpec::Order::kL2: {
      double gs = 0.0, zs = 0.0;
      for (double v : g) gs += v * v;
      for (double v : z) zs += v * v;
      norm = std::sqrt(gs) * std::sqrt(zs + 1.0);
      break;
    }
    case NormSpec::Order::kLInf: {
      double gs = 0.0, zs = 0.0;
      for (double v : g) gs = std::max(gs, std::fabs(v));
      for (double v : z) zs = std::max(zs, std::fabs(v));
      norm = gs * std::max(zs, 1.0);
      break;
    }
  }
  return apply_r(norm, spec.r);
}

std::vector<GradNormRecord> compute_grad_norms(const ModelParams& params,
                                               std::span<const TrainView> data,
                                               const NormSpec& spec) {
  std::vector<GradNormRecord> records(data.size());
  if (spec.full_network) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      records[i].index = i;
      records[i].raw_norm =
          full_network_score(params, *data[i].image, data[i].target, spec);
    }
  } else {
    const std::size_t in_dim = params.input_dim();
    const std::size_t c = params.num_classes();
    for (std::size_t start = 0; start < data.size(); start += kScoreChunk) {
      const std::size_t count = std::min(kScoreChunk, data.size() - start);
      Tensor batch({count, in_dim}, 0.0);
      for (std::size_t b = 0; b < count; ++b) {
        const Tensor& img = *data[start + b].image;
        if (img.size() != in_dim)
          throw DimensionError("grad norms: image size does not match model");
        std::copy(img.data.begin(), img.data.end(),
                  batch.data.data() + b * in_dim);
      }
      const BatchTrace trace = forward_batch(params, batch);
      const Tensor probs = softmax_rows(trace.logits());
      const Tensor& feats = trace.features();
      std::vector<double> g(c);
      for (std::size_t b = 0; b < count; ++b) {
        const double* p = probs.data.data() + b * c;
        std::copy(p, p + c, g.begin());
        g[static_cast<std::size_t>(data[start + b].target)] -= 1.0;
        const double* z = feats.data.data() + b * feats.cols();
        records[start + b].index = start + b;
        records[start + b].raw_norm = fc_grad_norm_factorized(
            g, std::span<const double>(z, feats.cols()), spec);
      }
    }
  }
  double max_norm = 0.0;
  for (const GradNormRecord& r : records) max_norm = std::max(max_norm, r.raw_norm);
  if (max_norm > 0.0)
    for (GradNormRecord& r : records) r.normalized_norm = r.raw_norm / max_norm;
  return records;
}

SamplingDistribution SamplingDistribution::uniform(std::size_t n) {
  if (n == 0) throw DimensionError("uniform distribution over zero samples");
  SamplingDistribution dist;
  dist.probabilities.assign(n, 1.0 / static_cast<double>(n));
  return dist;
}

void SamplingDistribution::validate() const {
  if (probabilities.empty())
    throw DimensionError("sampling distribution is empty");
  for (double p : probabilities)
    if (!(p >= 0.0))
      throw DegenerateInputError("sampling distribution has a negative entry");
  const double sum = kahan_sum(probabilities);
  if (std::fabs(sum - 1.0) > 1e-12)
    throw DegenerateInputError("sampling distribution sums to " +
                               std::to_string(sum) + ", not 1");
}

SamplingDistribution sampling_distribution(std::span<const double> scores,
                                           bool uniform_fallback) {
  if (scores.empty()) throw DimensionError("no scores to normalize");
  for (double v : scores)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DegenerateInputError("scores must be finite and nonnegative");
  bool all_equal = true;
  for (double v : scores)
    if (v != scores[0]) {
      all_equal = false;
      break;
    }
  if (all_equal && scores[0] == 0.0) {
    if (!uniform_fallback)
      throw DegenerateInputError(
          "all per-sample scores are zero; pass uniform_fallback to sample "
          "uniformly instead");
    return SamplingDistribution::uniform(scores.size());
  }
  // All-equal scores normalize to exactly 1/n; bitwise-identical to uniform()
  // so score-based pipelines reduce exactly to their uniform counterparts.
  if (all_equal) return SamplingDistribution::uniform(scores.size());
  const double sum = kahan_sum(scores);
  SamplingDistribution dist;
  dist.probabilities.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    dist.probabilities[i] = scores[i] / sum;
  dist.validate();
  return dist;
}

std::vector<double> reweight_weights(std::span<const double> scores,
                                     std::size_t n) {
  if (n != scores.size())
    throw DimensionError("reweight: n must equal the score count");
  const SamplingDistribution dist = sampling_distribution(scores);
  std::vector<double> weights(dist.probabilities.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] = static_cast<double>(n) * dist.probabilities[i];
  return weights;
}

BatchSampler::BatchSampler(const SamplingDistribution& dist) {
  dist.validate();
  cdf_.resize(dist.probabilities.size());
  double acc = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < cdf_.size(); ++i) {
    const double y = dist.probabilities[i] - comp;
    const double t = acc + y;
    comp = (t - acc) - y;
    acc = t;
    cdf_[i] = acc;
  }
  cdf_.back() = 1.0;  // guard against summation shortfall at the right edge
}

std::size_t BatchSampler::draw_one(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<std::size_t>(it - cdf_.begin());
}

std::vector<std::size_t> BatchSampler::draw(std::size_t batch_size,
                                            Rng& rng) const {
  std::vector<std::size_t> indices(batch_size);
  for (std::size_t& idx : indices) idx = draw_one(rng);
  return indices;
}

std::vector<std::size_t> draw_batch(const SamplingDistribution& dist,
                                    std::size_t batch_size, Rng& rng) {
  return BatchSampler(dist).draw(batch_size, rng);
}

void export_grad_norms_csv(const std::vector<GradNormRecord>& records,
                           std::span<const TrainView> data,
                           const std::string& path) {
  if (records.size() != data.size())
    throw DimensionError("csv export: record/sample count mismatch");
  std::vector<int> targets(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) targets[i] = data[i].target;
  write_csv(records, targets, nullptr, path);
}

void export_grad_norms_csv_eval(const std::vector<GradNormRecord>& records,
                                const std::vector<LabeledSample>& samples,
                                const std::string& path) {
  if (records.size() != samples.size())
    throw DimensionError("csv export: record/sample count mismatch");
  std::vector<int> targets(samples.size());
  std::vector<int> aligned(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    targets[i] = samples[i].target;
    aligned[i] = samples[i].fully_aligned() ? 1 : 0;
  }
  write_csv(records, targets, &aligned, path);
}

}  // namespace pgd
