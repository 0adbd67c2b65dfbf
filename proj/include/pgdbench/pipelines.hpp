// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/metrics.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/optimizer.hpp"

namespace pgd {

/// Hyperparameters shared by every training pipeline. Two-phase pipelines
/// split their budget as epochs_biased + epochs_debiased; single-loop
/// pipelines (vanilla, LfF) train for the total.
struct TrainConfig {
  std::size_t epochs_biased = 15;
  std::size_t epochs_debiased = 15;
  std::size_t batch_size = 128;
  std::vector<std::size_t> hidden = {64, 64};
  SgdConfig sgd;
  double gce_alpha = 0.7;
  NormSpec norms;
  AugmentationSpec augmentation;
  std::uint64_t seed = 0;
  bool inherit_params = true;
  double lff_lambda = 1.0;  ///< weight of the biased net's GCE term

  std::size_t total_epochs() const { return epochs_biased + epochs_debiased; }
  void validate() const;
};

struct JttConfig {
  double lambda_up = 100.0;  ///< callers default this to 1/rho

  void validate() const;
};

struct EpochMetrics {
  SplitAccuracy train;
  SplitAccuracy val;
  SplitAccuracy test;
};

struct RunResult {
  ModelParams final_params;
  ModelParams best_params;  ///< snapshot at the best validation accuracy
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochMetrics> history;  ///< one row per epoch of the run
  /// Per-sample score records (gradient norms, or CE losses for the
  /// loss-score variant); empty for pipelines that never score samples.
  std::vector<GradNormRecord> score_records;
  SamplingDistribution sampling;  ///< empty unless the pipeline resamples
  double wall_time_seconds = 0.0;
  std::uint64_t clamp_events = 0;
};

/// One training phase, the primitive every pipeline composes:
/// for each global epoch e in [first_epoch, first_epoch + epochs), draw
/// n samples i.i.d. from `sampler` (uniform when null) in batches of
/// cfg.batch_size, augment each drawn sample with stream (cfg.seed, e,
/// aug_index), and apply one SGD step per batch on the mean CE/GCE gradient
/// (per-sample weights multiply the gradient when given). The batch stream
/// for epoch e is Rng(derive_seed(cfg.seed, 0x626174636873716e, e)), so two
/// phases covering the same global epochs with equal samplers produce
/// bitwise-identical trajectories regardless of which pipeline runs them.
struct PhaseSpec {
  std::size_t first_epoch = 0;
  std::size_t epochs = 0;
  double gce_alpha = 0.0;  ///< 0 selects plain cross-entropy
  const SamplingDistribution* sampler = nullptr;
  const std::vector<double>* weights = nullptr;
};

using EpochHook = std::function<void(std::size_t epoch, const ModelParams&)>;

void train_phase(ModelParams& params, SgdState& opt,
                 std::span<const TrainView> views,
                 std::span<const std::size_t> aug_indices,
                 const TrainConfig& cfg, const PhaseSpec& phase,
                 const EpochHook& after_epoch);

/// Fresh model for a run: flatten -> hidden... -> classes, seeded from
/// cfg.seed.
ModelParams fresh_model(const Dataset& data, const TrainConfig& cfg);

/// Plain ERM: CE on uniform augmented batches for the total epoch budget.
RunResult train_vanilla(const Dataset& data, const TrainConfig& cfg);

/// Gradient-norm importance resampling, three steps: (1) GCE-train the
/// biased model on uniform batches; (2) score every sample by its FC-layer
/// CE gradient norm and normalize into a distribution; (3) continue training
/// (inherited parameters, velocity reset) with CE on batches resampled from
/// that distribution.
RunResult train_pgd(const Dataset& data, const TrainConfig& cfg);

/// Ablation: recompute the sampling distribution every epoch while training
/// biased and debiased models side by side for epochs_debiased loops.
RunResult train_pgd_single_stage(const Dataset& data, const TrainConfig& cfg);

/// Ablation: phase 3 keeps uniform batches but weights each sample's loss
/// by n * h_i instead of resampling.
RunResult train_pgd_reweight(const Dataset& data, const TrainConfig& cfg);

/// Ablation: identical to train_pgd but scores are per-sample CE losses at
/// the biased parameters instead of gradient norms.
RunResult train_loss_resample(const Dataset& data, const TrainConfig& cfg);

/// Two-stage error-set oversampling: stage 1 CE-trains a reference model;
/// stage 2 retrains from scratch on the training set with every stage-1
/// mistake repeated ceil(lambda_up)-1 extra times.
RunResult train_jtt(const Dataset& data, const TrainConfig& cfg,
                    const JttConfig& jtt);

/// Failure-reweighting baseline: biased and debiased models advance together;
/// each batch updates the biased net on GCE, then weights the debiased net's
/// CE by W = CE_b / (CE_b + CE_d) computed from the nets' current losses.
RunResult train_lff(const Dataset& data, const TrainConfig& cfg);

struct AlphaSweepEntry {
  double alpha = 0.0;
  double biased_test_accuracy = 0.0;  ///< unbiased-test acc of the phase-1 model
  RunResult run;
};

/// Runs train_pgd once per alpha and records the biased model's accuracy.
std::vector<AlphaSweepEntry> gce_alpha_sweep(const Dataset& data,
                                             const TrainConfig& cfg,
                                             std::span<const double> alphas);

}  // namespace pgd
