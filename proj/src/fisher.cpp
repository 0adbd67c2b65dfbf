// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/fisher.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pgdbench/errors.hpp"
#include "pgdbench/losses.hpp"

namespace pgd {

namespace {

// Fixed block count so the reduction order (and therefore the bit pattern of
// the result) does not depend on how many workers happen to run.
constexpr std::size_t kEfiBlocks = 16;

/// Accumulates h * v v^T for samples [begin, end) into `partial` (upper
/// triangle only).
void accumulate_block(const ModelParams& params,
                      std::span<const TrainView> samples,
                      std::span<const double> h, std::size_t begin,
                      std::size_t end, Tensor& partial) {
  const std::size_t in_dim = params.input_dim();
  const std::size_t c = params.num_classes();
  const std::size_t feat = params.feature_dim();
  const std::size_t d = c * (feat + 1);
  std::vector<double> v(d);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = begin; start < end; start += kChunk) {
    const std::size_t count = std::min(kChunk, end - start);
    Tensor batch({count, in_dim}, 0.0);
    for (std::size_t b = 0; b < count; ++b)
      std::memcpy(batch.data.data() + b * in_dim,
                  samples[start + b].image->data.data(),
                  in_dim * sizeof(double));
    const BatchTrace trace = forward_batch(params, batch);
    const Tensor probs = softmax_rows(trace.logits());
    const Tensor& features = trace.features();
    for (std::size_t b = 0; b < count; ++b) {
      const double weight = h[start + b];
      if (weight == 0.0) continue;
      const double* p = probs.data.data() + b * c;
      const double* z = features.data.data() + b * feat;
      const int y = samples[start + b].target;
      for (std::size_t k = 0; k < c; ++k) {
        const double g = p[k] - (static_cast<int>(k) == y ? 1.0 : 0.0);
        for (std::size_t j = 0; j < feat; ++j) v[k * feat + j] = g * z[j];
        v[c * feat + k] = g;
      }
      for (std::size_t i = 0; i < d; ++i) {
        const double scaled = weight * v[i];
        if (scaled == 0.0) continue;
        double* row = partial.data.data() + i * d;
        for (std::size_t j = i; j < d; ++j) row[j] += scaled * v[j];
      }
    }
  }
}

void mirror_upper(Tensor& m, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      m.data[j * d + i] = m.data[i * d + j];
}

Eigen::VectorXd eigenvalues_of(const EfiMatrix& m) {
  const std::size_t d = m.dim;
  double worst = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      worst = std::max(worst, std::abs(m.matrix.data[i * d + j] -
                                       m.matrix.data[j * d + i]));
  if (worst > 1e-10)
    throw NumericError("EFI matrix asymmetric by " + std::to_string(worst));
  Eigen::Map<const Eigen::MatrixXd> map(m.matrix.data.data(),
                                        static_cast<Eigen::Index>(d),
                                        static_cast<Eigen::Index>(d));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(map,
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed");
  return solver.eigenvalues();
}

}  // namespace

EfiMatrix efi(const ModelParams& params, std::span<const TrainView> samples,
              const SamplingDistribution& dist) {
  if (samples.empty()) throw DimensionError("EFI over an empty sample set");
  if (dist.probabilities.size() != samples.size())
    throw DimensionError("sampling distribution covers " +
                         std::to_string(dist.probabilities.size()) +
                         " samples, dataset has " +
                         std::to_string(samples.size()));
  dist.validate();
  const std::size_t n = samples.size();
  const std::size_t d = params.num_classes() * (params.feature_dim() + 1);

  std::vector<Tensor> partials;
  partials.reserve(kEfiBlocks);
  for (std::size_t b = 0; b < kEfiBlocks; ++b)
    partials.emplace_back(std::vector<std::size_t>{d, d}, 0.0);

  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(kEfiBlocks, hw);
  auto block_range = [n](std::size_t b) {
    return std::pair{b * n / kEfiBlocks, (b + 1) * n / kEfiBlocks};
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t b = w; b < kEfiBlocks; b += workers) {
        const auto [begin, end] = block_range(b);
        accumulate_block(params, samples, dist.probabilities, begin, end,
                         partials[b]);
      }
    });
  for (std::thread& t : pool) t.join();

  EfiMatrix out;
  out.dim = d;
  out.matrix = Tensor({d, d}, 0.0);
  for (std::size_t b = 0; b < kEfiBlocks; ++b)
    for (std::size_t i = 0; i < d * d; ++i)
      out.matrix.data[i] += partials[b].data[i];
  mirror_upper(out.matrix, d);
  out.ridge = default_ridge(out);
  return out;
}

EfiMatrix efi_from_gradients(const std::vector<std::vector<double>>& grads,
                             const SamplingDistribution& dist) {
  if (grads.empty()) throw DimensionError("EFI over an empty gradient set");
  if (dist.probabilities.size() != grads.size())
    throw DimensionError("sampling distribution size mismatch");
  const std::size_t d = grads.front().size();
  if (d == 0) throw DimensionError("EFI of zero-length gradients");
  EfiMatrix out;
  out.dim = d;
  out.matrix = Tensor({d, d}, 0.0);
  for (std::size_t s = 0; s < grads.size(); ++s) {
    if (grads[s].size() != d)
      throw DimensionError("gradient vectors must share one length");
    const double h = dist.probabilities[s];
    for (std::size_t i = 0; i < d; ++i) {
      const double scaled = h * grads[s][i];
      for (std::size_t j = i; j < d; ++j)
        out.matrix.data[i * d + j] += scaled * grads[s][j];
    }
  }
  mirror_upper(out.matrix, d);
  out.ridge = default_ridge(out);
  return out;
}

double default_ridge(const EfiMatrix& m) {
  if (m.dim == 0) throw DimensionError("ridge of an empty matrix");
  double trace = 0.0;
  for (std::size_t i = 0; i < m.dim; ++i)
    trace += m.matrix.data[i * m.dim + i];
  return 1e-6 * trace / static_cast<double>(m.dim);
}

EigenSummary eigen_summary(const EfiMatrix& m) {
  const Eigen::VectorXd ev = eigenvalues_of(m);
  EigenSummary s;
  const Eigen::Index d = ev.size();
  s.min_eigenvalue = ev(0);
  s.max_eigenvalue = ev(d - 1);
  s.median_eigenvalue =
      d % 2 == 1 ? ev(d / 2) : 0.5 * (ev(d / 2 - 1) + ev(d / 2));
  return s;
}

double trace_inverse(const EfiMatrix& m) {
  const Eigen::VectorXd ev = eigenvalues_of(m);
  if (ev(0) < -1e-8)
    throw NumericError("EFI matrix is not positive semidefinite (min "
                       "eigenvalue " +
                       std::to_string(ev(0)) + ")");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double shifted = ev(i) + m.ridge;
    if (!(shifted > 0.0))
      throw NumericError(
          "ridge " + std::to_string(m.ridge) +
          " does not make the EFI spectrum positive; smallest shifted "
          "eigenvalue " +
          std::to_string(shifted));
    sum += 1.0 / shifted;
  }
  return sum;
}

EfiComparison compare_trace_inverse(std::span<const EfiMatrix> matrices) {
  if (matrices.empty())
    throw DimensionError("comparison needs at least one matrix");
  double mean_of_means = 0.0;
  for (const EfiMatrix& m : matrices) {
    double trace = 0.0;
    for (std::size_t i = 0; i < m.dim; ++i)
      trace += m.matrix.data[i * m.dim + i];
    mean_of_means += trace / static_cast<double>(m.dim);
  }
  mean_of_means /= static_cast<double>(matrices.size());

  EfiComparison out;
  out.shared_ridge = 1e-6 * mean_of_means;
  out.trace_inverses.reserve(matrices.size());
  for (const EfiMatrix& m : matrices) {
    EfiMatrix shifted = m;
    shifted.ridge = out.shared_ridge;
    out.trace_inverses.push_back(trace_inverse(shifted));
  }
  return out;
}

void ToyProblem::validate() const {
  if (size_M == 0 || size_m == 0)
    throw DimensionError("toy group sizes must be at least 1");
  if (!(a > 0.0)) throw DimensionError("toy offset a must be positive");
}

double toy_erm(const ToyProblem& prob) {
  prob.validate();
  const double M = static_cast<double>(prob.size_M);
  const double m = static_cast<double>(prob.size_m);
  return prob.a * (m - M) / (M + m);
}

ToySolution toy_optimal_h(const ToyProblem& prob) {
  prob.validate();
  ToySolution sol;
  sol.theta_uniform = toy_erm(prob);
  sol.g_M = sol.theta_uniform + prob.a;
  sol.g_m = sol.theta_uniform - prob.a;
  const double M = static_cast<double>(prob.size_M);
  const double m = static_cast<double>(prob.size_m);
  const double z = M * std::abs(sol.g_M) + m * std::abs(sol.g_m);
  sol.h_M = std::abs(sol.g_M) / z;
  sol.h_m = std::abs(sol.g_m) / z;
  return sol;
}

ToyBruteForce toy_brute_force(const ToyProblem& prob, std::size_t grid_steps) {
  prob.validate();
  if (grid_steps < 3) throw DimensionError("brute force needs grid_steps >= 3");
  ToyBruteForce out;
  out.grid_t.resize(grid_steps);
  out.objective.resize(grid_steps);
  for (std::size_t k = 0; k < grid_steps; ++k) {
    const double t = static_cast<double>(k + 1) /
                     static_cast<double>(grid_steps + 1);
    // Stationarity of the t-weighted loss: t(theta+a) + (1-t)(theta-a) = 0.
    const double theta = prob.a * (1.0 - 2.0 * t);
    const double g_big = theta + prob.a;
    const double g_small = theta - prob.a;
    const double info = t * g_big * g_big + (1.0 - t) * g_small * g_small;
    out.grid_t[k] = t;
    out.objective[k] = 1.0 / info;
    if (k == 0 || out.objective[k] < out.best_objective) {
      out.best_index = k;
      out.best_t = t;
      out.best_objective = out.objective[k];
    }
  }
  return out;
}

void write_fisher_report(const std::vector<FisherRunDiagnostic>& rows,
                         const std::string& path) {
  nlohmann::ordered_json doc;
  doc["protocol"] =
      "weighted empirical Fisher information over final-layer cross-entropy "
      "gradients at the run's final parameters; trace of the inverse "
      "evaluated as sum 1/(eigenvalue + ridge); comparisons use one shared "
      "ridge equal to 1e-6 times the mean diagonal averaged over runs";
  doc["runs"] = nlohmann::ordered_json::array();
  for (const FisherRunDiagnostic& row : rows) {
    nlohmann::ordered_json entry;
    entry["label"] = row.label;
    entry["ridge"] = row.ridge;
    entry["trace_inverse"] = row.trace_inv;
    entry["eigenvalues"] = {{"min", row.summary.min_eigenvalue},
                            {"max", row.summary.max_eigenvalue},
                            {"median", row.summary.median_eigenvalue}};
    doc["runs"].push_back(std::move(entry));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace pgd
