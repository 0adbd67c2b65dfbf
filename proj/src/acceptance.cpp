// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: nine end-to-end checks covering the toy theory, gradient
// machinery, bias discovery, debiasing gains, Fisher diagnostics, ablation
// orderings, pipeline reductions, and report determinism. Every check uses
// fixed seeds and pinned tolerances.

#include "pgdbench/acceptance.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pgdbench/dataset.hpp"
#include "pgdbench/errors.hpp"
#include "pgdbench/fisher.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/losses.hpp"
#include "pgdbench/metrics.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/pipelines.hpp"
#include "pgdbench/report.hpp"
#include "pgdbench/rng.hpp"

namespace pgd {

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, format);
  std::vsnprintf(buf, sizeof buf, format, ap);
  va_end(ap);
  return buf;
}

DatasetSpec desk_spec(double rho, std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_train = 10000;
  spec.n_val = 2000;
  spec.n_test = 2000;
  spec.n_classes = 10;
  spec.rho = rho;
  spec.color_sigma = 0.0001;
  spec.seed = seed;
  return spec;
}

TrainConfig desk_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  return cfg;  // 15+15 epochs, batch 128, hidden 64-64, alpha 0.7
}

/// Test accuracy of the best-validation model (the epoch snapshot the run
/// selected).
double best_test_acc(const RunResult& run) {
  return run.history.at(run.best_epoch).test.overall;
}

double mean3(const std::array<double, 3>& v) {
  return (v[0] + v[1] + v[2]) / 3.0;
}

// ---------------------------------------------------------------------------
// Criterion 1: toy exactness.

CriterionResult criterion_toy() {
  CriterionResult res{1, "toy exactness"};
  const Timer timer;
  constexpr std::size_t kGrid = 10001;
  const double grid_step = 1.0 / static_cast<double>(kGrid + 1);
  Rng rng(derive_seed(2026, 1));
  double worst_t_err = 0.0;
  double worst_half_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    ToyProblem prob;
    prob.size_M = rng.uniform_int(1, 100);
    prob.size_m = rng.uniform_int(1, 100);
    prob.a = rng.uniform(0.1, 10.0);
    const ToyBruteForce bf = toy_brute_force(prob, kGrid);
    worst_t_err = std::max(worst_t_err, std::abs(bf.best_t - 0.5));
    const ToySolution sol = toy_optimal_h(prob);
    const double mass = static_cast<double>(prob.size_M) * sol.h_M;
    worst_half_err = std::max(worst_half_err, std::abs(mass - 0.5));
  }
  res.seconds = timer.seconds();
  const bool t_ok = worst_t_err <= grid_step;
  const bool half_ok = worst_half_err <= 1e-12;
  const bool time_ok = res.seconds < 5.0;
  res.passed = t_ok && half_ok && time_ok;
  res.detail = fmt("argmin-to-0.5 max %.3g (step %.3g), |M|h*_M-1/2 max %.3g",
                   worst_t_err, grid_step, worst_half_err);
  if (!time_ok) res.detail += "; over 5 s budget";
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient fidelity.

double loss_at(const ModelParams& params, const Tensor& input, int label) {
  const ForwardTrace trace = forward(params, input);
  return ce_loss_from_logits(trace.logits(), label);
}

ParamGrads fd_grads(ModelParams params, const Tensor& input, int label,
                    double step) {
  ParamGrads out = zero_grads(params);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    for (std::size_t i = 0; i < params.layers[k].weight.size(); ++i) {
      double& theta = params.layers[k].weight.data[i];
      const double keep = theta;
      theta = keep + step;
      const double up = loss_at(params, input, label);
      theta = keep - step;
      const double down = loss_at(params, input, label);
      theta = keep;
      out.weight[k].data[i] = (up - down) / (2.0 * step);
    }
    for (std::size_t i = 0; i < params.layers[k].bias.size(); ++i) {
      double& theta = params.layers[k].bias[i];
      const double keep = theta;
      theta = keep + step;
      const double up = loss_at(params, input, label);
      theta = keep - step;
      const double down = loss_at(params, input, label);
      theta = keep;
      out.bias[k][i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

/// Relative error on entries large enough for central differences to
/// resolve; tiny entries (below 1e-3) are held to 1e-8 absolutely, where the
/// difference quotient itself carries ~1e-10 cancellation noise.
void compare_entries(std::span<const double> analytic,
                     std::span<const double> fd, double& worst_rel,
                     double& worst_abs) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double mag = std::max(std::abs(analytic[i]), std::abs(fd[i]));
    const double diff = std::abs(analytic[i] - fd[i]);
    if (mag > 1e-3)
      worst_rel = std::max(worst_rel, diff / mag);
    else
      worst_abs = std::max(worst_abs, diff);
  }
}

CriterionResult criterion_gradients() {
  CriterionResult res{2, "gradient fidelity"};
  const Timer timer;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  double worst_factor = 0.0;
  double worst_fc = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    Rng rng(derive_seed(2026, 2, static_cast<std::uint64_t>(pair)));
    const std::size_t in = rng.uniform_int(4, 10);
    const std::size_t classes = rng.uniform_int(2, 6);
    std::vector<std::size_t> dims{in};
    const int hidden_layers = rng.uniform_int(1, 2);
    for (int h = 0; h < hidden_layers; ++h)
      dims.push_back(rng.uniform_int(4, 12));
    dims.push_back(classes);
    const ModelParams params = make_mlp(dims, rng.next_u64());
    const int label = static_cast<int>(rng.uniform_index(classes));

    Tensor input({in}, 0.0);
    ForwardTrace trace;
    bool away_from_kinks = false;
    for (int attempt = 0; attempt < 50 && !away_from_kinks; ++attempt) {
      for (double& v : input.data) v = rng.normal();
      trace = forward(params, input);
      away_from_kinks = true;
      for (std::size_t k = 0; k + 1 < params.layers.size(); ++k)
        for (double pre : trace.pre[k])
          if (std::abs(pre) < 1e-3) away_from_kinks = false;
    }
    if (!away_from_kinks) continue;  // keep the trial count honest below

    const std::vector<double> probs = softmax(trace.logits());
    const ParamGrads analytic =
        backward(params, trace, ce_logit_grad(probs, label));
    const ParamGrads fd = fd_grads(params, input, label, 1e-6);
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      compare_entries(analytic.weight[k].data, fd.weight[k].data, worst_rel,
                      worst_abs);
      compare_entries(analytic.bias[k], fd.bias[k], worst_rel, worst_abs);
    }

    // FC head gradient: closed form vs the backward pass.
    const FcGradient fc = fc_gradient(trace, label);
    const std::size_t last = params.layers.size() - 1;
    for (std::size_t i = 0; i < fc.weight.size(); ++i)
      worst_fc = std::max(worst_fc, std::abs(fc.weight.data[i] -
                                             analytic.weight[last].data[i]));
    for (std::size_t i = 0; i < fc.bias.size(); ++i)
      worst_fc =
          std::max(worst_fc, std::abs(fc.bias[i] - analytic.bias[last][i]));

    // Factorized norms vs entrywise over all orders and exponents.
    const std::vector<double>& z = trace.feature();
    const std::vector<double> g = ce_logit_grad(probs, label);
    for (NormSpec::Order order : {NormSpec::Order::kL1, NormSpec::Order::kL2,
                                  NormSpec::Order::kLInf})
      for (double r : {0.5, 1.0, 2.0}) {
        NormSpec spec;
        spec.s = order;
        spec.r = r;
        const double direct = grad_norm(fc, spec);
        const double factored = fc_grad_norm_factorized(g, z, spec);
        worst_factor =
            std::max(worst_factor, std::abs(direct - factored) /
                                       std::max(1.0, std::abs(direct)));
      }
  }
  res.seconds = timer.seconds();
  const bool ok = worst_rel < 1e-6 && worst_abs < 1e-8 &&
                  worst_factor <= 1e-12 && worst_fc <= 1e-12;
  const bool time_ok = res.seconds < 30.0;
  res.passed = ok && time_ok;
  res.detail =
      fmt("FD rel %.3g (abs %.3g near zero), factorization %.3g, head %.3g",
          worst_rel, worst_abs, worst_factor, worst_fc);
  if (!time_ok) res.detail += "; over 30 s budget";
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 3: norm separation.

CriterionResult criterion_separation() {
  CriterionResult res{3, "norm separation"};
  const Timer timer;
  const Dataset data = generate_biased_dataset(desk_spec(0.01, 31));
  TrainConfig cfg = desk_config(37);
  cfg.epochs_biased = 20;
  cfg.epochs_debiased = 0;
  const RunResult run = train_pgd(data, cfg);

  std::vector<double> scores(run.score_records.size());
  std::vector<bool> conflicting(run.score_records.size());
  double sum_aligned = 0.0;
  double sum_conflicting = 0.0;
  std::size_t n_aligned = 0;
  std::size_t n_conflicting = 0;
  for (std::size_t i = 0; i < run.score_records.size(); ++i) {
    const GradNormRecord& rec = run.score_records[i];
    scores[i] = rec.normalized_norm;
    const bool conf = !data.train[rec.index].fully_aligned();
    conflicting[i] = conf;
    if (conf) {
      sum_conflicting += rec.normalized_norm;
      ++n_conflicting;
    } else {
      sum_aligned += rec.normalized_norm;
      ++n_aligned;
    }
  }
  const double area = auroc(scores, conflicting);
  const double mean_conflicting =
      sum_conflicting / static_cast<double>(n_conflicting);
  const double mean_aligned = sum_aligned / static_cast<double>(n_aligned);
  res.seconds = timer.seconds();
  const bool time_ok = res.seconds < 300.0;
  res.passed = area >= 0.90 && mean_conflicting >= 2.0 * mean_aligned &&
               time_ok;
  res.detail = fmt("AUROC %.4f, mean norm conflicting %.4f vs aligned %.4f "
                   "(ratio %.1fx, %zu vs %zu samples)",
                   area, mean_conflicting, mean_aligned,
                   mean_conflicting / mean_aligned, n_conflicting, n_aligned);
  if (!time_ok) res.detail += "; over 300 s budget";
  return res;
}

// ---------------------------------------------------------------------------
// Criteria 4-6 share the rho = 1% benchmark runs.

struct BenchRuns {
  bool ready = false;
  std::array<RunResult, 3> vanilla;
  std::array<RunResult, 3> pgd;
};

DatasetSpec bench_spec(std::size_t seed_index) {
  return desk_spec(0.01, 100 + seed_index);
}

TrainConfig bench_config(std::size_t seed_index) {
  return desk_config(200 + seed_index);
}

CriterionResult criterion_gain(BenchRuns& shared) {
  CriterionResult res{4, "debiasing gain"};
  const Timer timer;
  std::array<double, 3> acc_vanilla{};
  std::array<double, 3> acc_pgd{};
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset data = generate_biased_dataset(bench_spec(k));
    const TrainConfig cfg = bench_config(k);
    shared.vanilla[k] = train_vanilla(data, cfg);
    shared.pgd[k] = train_pgd(data, cfg);
    acc_vanilla[k] = best_test_acc(shared.vanilla[k]);
    acc_pgd[k] = best_test_acc(shared.pgd[k]);
  }
  shared.ready = true;
  const double mv = mean3(acc_vanilla);
  const double mp = mean3(acc_pgd);
  res.seconds = timer.seconds();
  const bool time_ok = res.seconds < 900.0;
  res.passed = mp >= mv + 0.10 && time_ok;
  res.detail = fmt(
      "unbiased test acc over 3 seeds: resampled %.4f vs plain %.4f "
      "(gap %.1f points; per seed %.3f/%.3f/%.3f vs %.3f/%.3f/%.3f)",
      mp, mv, 100.0 * (mp - mv), acc_pgd[0], acc_pgd[1], acc_pgd[2],
      acc_vanilla[0], acc_vanilla[1], acc_vanilla[2]);
  if (!time_ok) res.detail += "; over 900 s budget";
  return res;
}

CriterionResult criterion_fisher(const BenchRuns& shared) {
  CriterionResult res{5, "fisher objective direction"};
  const Timer timer;
  if (!shared.ready) {
    res.detail = "criterion 4 runs unavailable";
    res.seconds = timer.seconds();
    return res;
  }
  int wins = 0;
  std::string gaps;
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset data = generate_biased_dataset(bench_spec(k));
    const std::vector<TrainView> views = training_view(data.train);
    const EfiMatrix weighted =
        efi(shared.pgd[k].final_params, views, shared.pgd[k].sampling);
    const EfiMatrix uniform =
        efi(shared.vanilla[k].final_params, views,
            SamplingDistribution::uniform(views.size()));
    const std::array<EfiMatrix, 2> mats{weighted, uniform};
    const EfiComparison cmp = compare_trace_inverse(mats);
    if (cmp.trace_inverses[0] < cmp.trace_inverses[1]) ++wins;
    gaps += fmt("%s%.4g vs %.4g", k == 0 ? "" : ", ", cmp.trace_inverses[0],
                cmp.trace_inverses[1]);
  }
  res.seconds = timer.seconds();
  res.passed = wins >= 2;
  res.detail = fmt("weighted < uniform trace-inverse in %d of 3 seeds (%s)",
                   wins, gaps.c_str());
  return res;
}

CriterionResult criterion_ablations(const BenchRuns& shared) {
  CriterionResult res{6, "ablation orderings"};
  const Timer timer;
  if (!shared.ready) {
    res.detail = "criterion 4 runs unavailable";
    res.seconds = timer.seconds();
    return res;
  }

  // (a) loss scores vs gradient scores, on the criterion-4 runs' protocol.
  std::array<double, 3> acc_loss{};
  std::array<double, 3> acc_pgd{};
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset data = generate_biased_dataset(bench_spec(k));
    acc_loss[k] = best_test_acc(train_loss_resample(data, bench_config(k)));
    acc_pgd[k] = best_test_acc(shared.pgd[k]);
  }
  const double m_loss = mean3(acc_loss);
  const double m_pgd = mean3(acc_pgd);
  const bool a_ok = m_loss < m_pgd;

  // (b) reweighting vs resampling. Importance-weighted SGD needs the step
  // schedule's decay to damp its batch-level weight spikes (a handful of
  // samples carry half the mass), so this comparison runs all three methods
  // with a debiased budget long enough to cross the decay step at epoch 40;
  // at 30 total epochs the schedule never engages and reweighting is still
  // oscillating when the run ends.
  std::array<double, 3> acc_vanilla50{};
  std::array<double, 3> acc_reweight50{};
  std::array<double, 3> acc_pgd50{};
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset data = generate_biased_dataset(bench_spec(k));
    TrainConfig cfg50 = bench_config(k);
    cfg50.epochs_debiased = 35;
    acc_vanilla50[k] = best_test_acc(train_vanilla(data, cfg50));
    acc_reweight50[k] = best_test_acc(train_pgd_reweight(data, cfg50));
    acc_pgd50[k] = best_test_acc(train_pgd(data, cfg50));
  }
  const double m_vanilla = mean3(acc_vanilla50);
  const double m_reweight = mean3(acc_reweight50);
  const double m_pgd50 = mean3(acc_pgd50);
  const bool b_ok = m_reweight > m_vanilla && m_pgd50 >= m_reweight - 0.02;

  // (c) biased-model unbiased accuracy vs the GCE exponent.
  const Dataset data = generate_biased_dataset(bench_spec(0));
  TrainConfig cfg = bench_config(0);
  cfg.epochs_debiased = 0;
  const std::array<double, 4> alphas{0.3, 0.5, 0.7, 0.9};
  const std::vector<AlphaSweepEntry> sweep =
      gce_alpha_sweep(data, cfg, alphas);
  bool c_ok = true;
  std::string sweep_text;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    sweep_text += fmt("%s%.2f:%.3f", i == 0 ? "" : " ", sweep[i].alpha,
                      sweep[i].biased_test_accuracy);
    for (std::size_t j = 0; j < i; ++j)
      if (sweep[i].biased_test_accuracy >
          sweep[j].biased_test_accuracy + 0.02)
        c_ok = false;
  }
  res.seconds = timer.seconds();
  res.passed = a_ok && b_ok && c_ok;
  res.detail = fmt(
      "(a) loss-score %.4f %s grad-score %.4f; (b, 50-epoch schedule, decay "
      "active) reweight %.4f vs plain %.4f, resample %.4f; (c) biased acc by "
      "alpha %s%s",
      m_loss, a_ok ? "<" : ">=", m_pgd, m_reweight, m_vanilla, m_pgd50,
      sweep_text.c_str(), c_ok ? "" : " (not non-increasing)");
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 7: unbiased-data sanity.

CriterionResult criterion_unbiased() {
  CriterionResult res{7, "unbiased-data sanity"};
  const Timer timer;
  std::array<double, 3> acc_vanilla{};
  std::array<double, 3> acc_pgd{};
  for (std::size_t k = 0; k < 3; ++k) {
    const Dataset data = generate_biased_dataset(desk_spec(0.9, 300 + k));
    const TrainConfig cfg = desk_config(400 + k);
    acc_vanilla[k] = best_test_acc(train_vanilla(data, cfg));
    acc_pgd[k] = best_test_acc(train_pgd(data, cfg));
  }
  const double mv = mean3(acc_vanilla);
  const double mp = mean3(acc_pgd);
  res.seconds = timer.seconds();
  res.passed = std::abs(mp - mv) <= 0.03;
  res.detail = fmt("at rho = 0.9: resampled %.4f vs plain %.4f "
                   "(|gap| %.1f points)",
                   mp, mv, 100.0 * std::abs(mp - mv));
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 8: pipeline reductions.

bool params_equal(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weight.data != b.layers[k].weight.data) return false;
    if (a.layers[k].bias != b.layers[k].bias) return false;
  }
  return true;
}

CriterionResult criterion_reductions() {
  CriterionResult res{8, "pipeline reductions"};
  const Timer timer;

  // (a) explicit uniform sampler bitwise-equals the implicit uniform path
  // after a shared biased phase.
  DatasetSpec small = desk_spec(0.1, 51);
  small.n_train = 512;
  small.n_val = 64;
  small.n_test = 64;
  small.n_classes = 4;
  small.image.height = 8;
  small.image.width = 8;
  const Dataset data_a = generate_biased_dataset(small);
  TrainConfig cfg_a = desk_config(53);
  cfg_a.epochs_biased = 2;
  cfg_a.epochs_debiased = 2;
  cfg_a.batch_size = 64;
  cfg_a.hidden = {16};
  const std::vector<TrainView> views = training_view(data_a.train);
  std::vector<std::size_t> aug(views.size());
  for (std::size_t i = 0; i < aug.size(); ++i) aug[i] = i;

  auto run_phase_pair = [&](bool explicit_uniform) {
    ModelParams params = fresh_model(data_a, cfg_a);
    SgdState opt(cfg_a.sgd, params);
    train_phase(params, opt, views, aug, cfg_a,
                {0, cfg_a.epochs_biased, cfg_a.gce_alpha, nullptr, nullptr},
                nullptr);
    opt.reset_velocity();
    const SamplingDistribution uniform =
        SamplingDistribution::uniform(views.size());
    PhaseSpec phase{cfg_a.epochs_biased, cfg_a.epochs_debiased, 0.0,
                    explicit_uniform ? &uniform : nullptr, nullptr};
    train_phase(params, opt, views, aug, cfg_a, phase, nullptr);
    return params;
  };
  const bool a_ok = params_equal(run_phase_pair(true), run_phase_pair(false));

  // All-equal scores normalize to the exact uniform distribution, so a
  // degenerate score pass is literally the vanilla sampler.
  const std::vector<double> equal_scores(views.size(), 0.37);
  const bool a2_ok =
      sampling_distribution(equal_scores).probabilities ==
      SamplingDistribution::uniform(views.size()).probabilities;

  // (b) JTT with lambda_up = 1 and an empty error set equals plain training.
  bool b_ok = false;
  std::string b_text;
  {
    DatasetSpec sep = small;
    sep.rho = 0.002;
    sep.color_sigma = 0.0;
    sep.n_train = 256;
    std::uint64_t found_seed = 0;
    bool found = false;
    std::size_t conflicting = 1;
    for (std::uint64_t cand = 9000; cand < 9200 && !found; ++cand) {
      sep.seed = cand;
      const Dataset probe = generate_biased_dataset(sep);
      conflicting = 0;
      for (const LabeledSample& s : probe.train)
        if (!s.fully_aligned()) ++conflicting;
      if (conflicting == 0) {
        found = true;
        found_seed = cand;
      }
    }
    if (!found) {
      b_text = "(b) no fully aligned tiny dataset in seed range";
    } else {
      sep.seed = found_seed;
      const Dataset data_b = generate_biased_dataset(sep);
      TrainConfig cfg_b = desk_config(57);
      cfg_b.epochs_biased = 10;
      cfg_b.epochs_debiased = 5;
      cfg_b.batch_size = 64;
      cfg_b.hidden = {16};
      cfg_b.augmentation.enabled = false;

      TrainConfig stage1_only = cfg_b;
      stage1_only.epochs_biased = 10;
      stage1_only.epochs_debiased = 0;
      const RunResult reference = train_vanilla(data_b, stage1_only);
      const std::vector<int> preds =
          predict_classes(reference.final_params, data_b.train);
      std::size_t errors = 0;
      for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] != data_b.train[i].target) ++errors;

      JttConfig jtt;
      jtt.lambda_up = 1.0;
      const RunResult jtt_run = train_jtt(data_b, cfg_b, jtt);
      TrainConfig stage2_only = cfg_b;
      stage2_only.epochs_biased = 0;
      stage2_only.epochs_debiased = 5;
      const RunResult vanilla_run = train_vanilla(data_b, stage2_only);
      const bool equal =
          params_equal(jtt_run.final_params, vanilla_run.final_params);
      b_ok = equal && errors == 0;
      b_text = fmt("(b) stage-1 errors %zu, params %s", errors,
                   equal ? "bitwise equal" : "differ");
    }
  }

  // (c) GCE approaches CE as alpha -> 0.
  double worst_gap = 0.0;
  constexpr int kClasses = 5;
  for (int step = 1; step <= 100; ++step) {
    const double p = 0.01 * step;
    std::vector<double> logits(kClasses);
    for (int j = 0; j < kClasses; ++j)
      logits[j] = std::log(j == 0 ? p : (1.0 - p) / (kClasses - 1) + 1e-12);
    const double ce = ce_loss_from_logits(logits, 0);
    const double gce = gce_loss_from_logits(logits, 0, 1e-8);
    worst_gap = std::max(worst_gap, std::abs(ce - gce));
  }
  const bool c_ok = worst_gap < 1e-6;

  res.seconds = timer.seconds();
  res.passed = a_ok && a2_ok && b_ok && c_ok;
  res.detail = fmt("(a) uniform sampler %s, degenerate normalization %s; "
                   "%s; (c) max |GCE-CE| %.3g",
                   a_ok ? "bitwise equal" : "differs",
                   a2_ok ? "exact" : "inexact", b_text.c_str(), worst_gap);
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 9: report determinism.

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CriterionResult criterion_determinism(const std::string& scratch) {
  CriterionResult res{9, "report determinism"};
  const Timer timer;
  DatasetSpec spec = desk_spec(0.05, 61);
  spec.n_train = 1000;
  spec.n_val = 200;
  spec.n_test = 200;
  TrainConfig cfg = desk_config(67);
  cfg.epochs_biased = 3;
  cfg.epochs_debiased = 3;
  cfg.hidden = {32};

  bool all_equal = true;
  std::string text;
  for (const char* method : {"pgd", "lff"}) {
    std::array<std::string, 2> bytes;
    for (int rep = 0; rep < 2; ++rep) {
      const Dataset data = generate_biased_dataset(spec);
      const RunResult result =
          std::string(method) == "pgd" ? train_pgd(data, cfg)
                                       : train_lff(data, cfg);
      const std::string dir =
          scratch + "/c9_" + method + (rep == 0 ? "_a" : "_b");
      write_run_report(dir, method, spec, cfg, data, result);
      bytes[rep] = read_file_bytes(dir + "/report.json");
    }
    const bool equal = bytes[0] == bytes[1];
    all_equal = all_equal && equal;
    text += fmt("%s%s %s", text.empty() ? "" : ", ", method,
                equal ? "byte-identical" : "DIFFERS");
  }
  res.seconds = timer.seconds();
  res.passed = all_equal;
  res.detail = text;
  return res;
}

void log_result(std::ostream& log, const CriterionResult& res) {
  log << "criterion " << res.index << " (" << res.name
      << "): " << (res.passed ? "PASS" : "FAIL") << "  " << res.detail << "  ["
      << fmt("%.1f", res.seconds) << " s]\n"
      << std::flush;
}

}  // namespace

AcceptanceResult run_acceptance(const std::string& scratch_dir,
                                std::ostream& log) {
  std::filesystem::create_directories(scratch_dir);
  AcceptanceResult out;
  BenchRuns shared;
  auto push = [&out, &log](CriterionResult res) {
    log_result(log, res);
    out.criteria.push_back(std::move(res));
  };
  auto guarded = [&push](int index, const char* name, auto&& fn) {
    try {
      push(fn());
    } catch (const std::exception& err) {
      CriterionResult res;
      res.index = index;
      res.name = name;
      res.passed = false;
      res.detail = std::string("exception: ") + err.what();
      push(std::move(res));
    }
  };

  guarded(1, "toy exactness", [] { return criterion_toy(); });
  guarded(2, "gradient fidelity", [] { return criterion_gradients(); });
  guarded(3, "norm separation", [] { return criterion_separation(); });
  guarded(4, "debiasing gain", [&] { return criterion_gain(shared); });
  guarded(5, "fisher objective direction",
          [&] { return criterion_fisher(shared); });
  guarded(6, "ablation orderings",
          [&] { return criterion_ablations(shared); });
  guarded(7, "unbiased-data sanity", [] { return criterion_unbiased(); });
  guarded(8, "pipeline reductions", [] { return criterion_reductions(); });
  guarded(9, "report determinism",
          [&] { return criterion_determinism(scratch_dir); });
  return out;
}

}  // namespace pgd
