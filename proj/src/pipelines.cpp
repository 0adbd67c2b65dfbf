// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>

#include "pgdbench/errors.hpp"
#include "pgdbench/losses.hpp"

namespace pgd {

namespace {

constexpr std::uint64_t kTagBatch = 0x626174636873716eULL;    // "batchsqn"
constexpr std::uint64_t kTagLffInit = 0x6c66665f696e6974ULL;  // "lff_init"
constexpr std::uint64_t kTagSingleDebias = 0x73696e676c656462ULL;

struct RunScope {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::uint64_t clamp0 = prob_clamp_count();

  void finish(RunResult& result) const {
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.clamp_events = prob_clamp_count() - clamp0;
  }
};

/// Per-epoch metrics plus best-validation tracking. With no validation
/// split the train accuracy stands in for selection.
void record_epoch(const Dataset& data, const ModelParams& params,
                  RunResult& result) {
  EpochMetrics m;
  m.train = evaluate_accuracy(params, data.train);
  if (!data.val.empty()) m.val = evaluate_accuracy(params, data.val);
  if (!data.test.empty()) m.test = evaluate_accuracy(params, data.test);
  result.history.push_back(m);
  const double selection = data.val.empty() ? m.train.overall : m.val.overall;
  if (result.history.size() == 1 || selection > result.best_val_accuracy) {
    result.best_val_accuracy = selection;
    result.best_epoch = result.history.size() - 1;
    result.best_params = params;
  }
}

EpochHook recording_hook(const Dataset& data, RunResult& result) {
  return [&data, &result](std::size_t, const ModelParams& params) {
    record_epoch(data, params, result);
  };
}

void fill_batch(std::span<const TrainView> views,
                std::span<const std::size_t> aug_indices,
                std::span<const std::size_t> drawn, const TrainConfig& cfg,
                std::size_t epoch, Tensor& inputs, std::vector<int>& targets) {
  const std::size_t in_dim = inputs.cols();
  for (std::size_t b = 0; b < drawn.size(); ++b) {
    const TrainView& view = views[drawn[b]];
    targets[b] = view.target;
    double* row = inputs.data.data() + b * in_dim;
    if (cfg.augmentation.enabled) {
      const Tensor aug = augment(*view.image, cfg.augmentation, cfg.seed, epoch,
                                 aug_indices[drawn[b]]);
      std::memcpy(row, aug.data.data(), in_dim * sizeof(double));
    } else {
      std::memcpy(row, view.image->data.data(), in_dim * sizeof(double));
    }
  }
}

/// Mean per-sample CE loss vector over clean images, batched.
std::vector<double> per_sample_ce(const ModelParams& params,
                                  std::span<const TrainView> views) {
  std::vector<double> losses(views.size());
  const std::size_t in_dim = params.input_dim();
  const std::size_t c = params.num_classes();
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < views.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, views.size() - start);
    Tensor batch({count, in_dim}, 0.0);
    for (std::size_t b = 0; b < count; ++b)
      std::memcpy(batch.data.data() + b * in_dim,
                  views[start + b].image->data.data(), in_dim * sizeof(double));
    const BatchTrace trace = forward_batch(params, batch);
    for (std::size_t b = 0; b < count; ++b) {
      const double* row = trace.logits().data.data() + b * c;
      losses[start + b] = ce_loss_from_logits(std::span<const double>(row, c),
                                              views[start + b].target);
    }
  }
  return losses;
}

std::vector<std::size_t> identity_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

std::vector<GradNormRecord> loss_records(const std::vector<double>& losses) {
  std::vector<GradNormRecord> records(losses.size());
  double max_loss = 0.0;
  for (double v : losses) max_loss = std::max(max_loss, v);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    records[i].index = i;
    records[i].raw_norm = losses[i];
    records[i].normalized_norm = max_loss > 0.0 ? losses[i] / max_loss : 0.0;
  }
  return records;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw DimensionError("batch_size must be positive");
  if (!(gce_alpha > 0.0) || gce_alpha > 1.0)
    throw DimensionError("gce_alpha must lie in (0, 1]");
  if (norms.r <= 0.0) throw DimensionError("norm exponent r must be positive");
  if (lff_lambda < 0.0) throw DimensionError("lff_lambda must be nonnegative");
}

void JttConfig::validate() const {
  if (lambda_up < 1.0) throw DimensionError("lambda_up must be at least 1");
}

void train_phase(ModelParams& params, SgdState& opt,
                 std::span<const TrainView> views,
                 std::span<const std::size_t> aug_indices,
                 const TrainConfig& cfg, const PhaseSpec& phase,
                 const EpochHook& after_epoch) {
  if (views.empty()) throw DimensionError("training phase with no samples");
  if (aug_indices.size() != views.size())
    throw DimensionError("training phase: aug index count mismatch");
  if (phase.weights && phase.weights->size() != views.size())
    throw DimensionError("training phase: weight count mismatch");
  const std::size_t n = views.size();
  const std::size_t in_dim = params.input_dim();
  const std::size_t c = params.num_classes();
  const SamplingDistribution uniform =
      phase.sampler ? SamplingDistribution{} : SamplingDistribution::uniform(n);
  const BatchSampler sampler(phase.sampler ? *phase.sampler : uniform);

  for (std::size_t e = phase.first_epoch; e < phase.first_epoch + phase.epochs;
       ++e) {
    try {
      Rng stream(derive_seed(cfg.seed, kTagBatch, e));
      std::size_t remaining = n;
      while (remaining > 0) {
        const std::size_t b_size = std::min(cfg.batch_size, remaining);
        remaining -= b_size;
        const std::vector<std::size_t> drawn = sampler.draw(b_size, stream);
        Tensor inputs({b_size, in_dim}, 0.0);
        std::vector<int> targets(b_size);
        fill_batch(views, aug_indices, drawn, cfg, e, inputs, targets);
        const BatchTrace trace = forward_batch(params, inputs);
        const Tensor probs = softmax_rows(trace.logits());
        Tensor logit_grads({b_size, c}, 0.0);
        for (std::size_t b = 0; b < b_size; ++b) {
          const double* p = probs.data.data() + b * c;
          const std::span<const double> prow(p, c);
          std::vector<double> row =
              phase.gce_alpha > 0.0
                  ? gce_logit_grad(prow, targets[b], phase.gce_alpha)
                  : ce_logit_grad(prow, targets[b]);
          if (phase.weights) {
            const double w = (*phase.weights)[drawn[b]];
            for (double& v : row) v *= w;
          }
          std::memcpy(logit_grads.data.data() + b * c, row.data(),
                      c * sizeof(double));
        }
        ParamGrads grads = backward_batch(params, trace, logit_grads);
        grads.scale(1.0 / static_cast<double>(b_size));
        opt.step(params, grads, e);
      }
    } catch (const NumericError& err) {
      throw NumericError("training diverged at epoch " + std::to_string(e) +
                         ": " + err.what());
    }
    if (after_epoch) after_epoch(e, params);
  }
}

ModelParams fresh_model(const Dataset& data, const TrainConfig& cfg) {
  if (data.train.empty()) throw DimensionError("dataset has no training split");
  std::vector<std::size_t> dims{data.train.front().image.size()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(data.spec.n_classes);
  return make_mlp(dims, cfg.seed);
}

RunResult train_vanilla(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  result.final_params = fresh_model(data, cfg);
  result.best_params = result.final_params;
  SgdState opt(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());
  train_phase(result.final_params, opt, views, aug, cfg,
              {0, cfg.total_epochs(), 0.0, nullptr, nullptr},
              recording_hook(data, result));
  scope.finish(result);
  return result;
}

RunResult train_pgd(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  result.final_params = fresh_model(data, cfg);
  result.best_params = result.final_params;
  SgdState opt(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());

  train_phase(result.final_params, opt, views, aug, cfg,
              {0, cfg.epochs_biased, cfg.gce_alpha, nullptr, nullptr},
              recording_hook(data, result));

  result.score_records = compute_grad_norms(result.final_params, views, cfg.norms);
  std::vector<double> scores(result.score_records.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = result.score_records[i].raw_norm;
  result.sampling = sampling_distribution(scores);

  if (!cfg.inherit_params) result.final_params = fresh_model(data, cfg);
  opt.reset_velocity();
  train_phase(result.final_params, opt, views, aug, cfg,
              {cfg.epochs_biased, cfg.epochs_debiased, 0.0, &result.sampling,
               nullptr},
              recording_hook(data, result));
  scope.finish(result);
  return result;
}

RunResult train_pgd_single_stage(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  ModelParams biased = fresh_model(data, cfg);
  result.final_params = fresh_model(data, cfg);  // same init stream as biased
  result.best_params = result.final_params;
  SgdState opt_b(cfg.sgd, biased);
  SgdState opt_d(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());
  // Debiased updates draw from their own stream family so the two models'
  // batches are independent.
  TrainConfig cfg_d = cfg;
  cfg_d.seed = derive_seed(cfg.seed, kTagSingleDebias);

  for (std::size_t loop = 0; loop < cfg.epochs_debiased; ++loop) {
    train_phase(biased, opt_b, views, aug, cfg,
                {loop, 1, cfg.gce_alpha, nullptr, nullptr}, nullptr);
    result.score_records = compute_grad_norms(biased, views, cfg.norms);
    std::vector<double> scores(result.score_records.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
      scores[i] = result.score_records[i].raw_norm;
    result.sampling = sampling_distribution(scores);
    train_phase(result.final_params, opt_d, views, aug, cfg_d,
                {loop, 1, 0.0, &result.sampling, nullptr}, nullptr);
    record_epoch(data, result.final_params, result);
  }
  scope.finish(result);
  return result;
}

RunResult train_pgd_reweight(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  result.final_params = fresh_model(data, cfg);
  result.best_params = result.final_params;
  SgdState opt(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());

  train_phase(result.final_params, opt, views, aug, cfg,
              {0, cfg.epochs_biased, cfg.gce_alpha, nullptr, nullptr},
              recording_hook(data, result));

  result.score_records = compute_grad_norms(result.final_params, views, cfg.norms);
  std::vector<double> scores(result.score_records.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = result.score_records[i].raw_norm;
  const std::vector<double> weights = reweight_weights(scores, views.size());

  if (!cfg.inherit_params) result.final_params = fresh_model(data, cfg);
  opt.reset_velocity();
  train_phase(result.final_params, opt, views, aug, cfg,
              {cfg.epochs_biased, cfg.epochs_debiased, 0.0, nullptr, &weights},
              recording_hook(data, result));
  scope.finish(result);
  return result;
}

RunResult train_loss_resample(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  result.final_params = fresh_model(data, cfg);
  result.best_params = result.final_params;
  SgdState opt(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());

  train_phase(result.final_params, opt, views, aug, cfg,
              {0, cfg.epochs_biased, cfg.gce_alpha, nullptr, nullptr},
              recording_hook(data, result));

  const std::vector<double> losses = per_sample_ce(result.final_params, views);
  result.score_records = loss_records(losses);
  result.sampling = sampling_distribution(losses);

  if (!cfg.inherit_params) result.final_params = fresh_model(data, cfg);
  opt.reset_velocity();
  train_phase(result.final_params, opt, views, aug, cfg,
              {cfg.epochs_biased, cfg.epochs_debiased, 0.0, &result.sampling,
               nullptr},
              recording_hook(data, result));
  scope.finish(result);
  return result;
}

RunResult train_jtt(const Dataset& data, const TrainConfig& cfg,
                    const JttConfig& jtt) {
  cfg.validate();
  jtt.validate();
  RunScope scope;
  RunResult result;
  ModelParams reference = fresh_model(data, cfg);
  SgdState opt_ref(cfg.sgd, reference);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());

  train_phase(reference, opt_ref, views, aug, cfg,
              {0, cfg.epochs_biased, 0.0, nullptr, nullptr},
              recording_hook(data, result));

  const std::vector<int> preds = predict_classes(reference, data.train);
  std::vector<std::size_t> errors;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] != data.train[i].target) errors.push_back(i);
  if (errors.empty())
    std::cerr << "warning: stage-1 model makes no training errors; "
                 "oversampling is a no-op and the run reduces to plain "
                 "training\n";

  const std::size_t extra_copies =
      static_cast<std::size_t>(std::ceil(jtt.lambda_up)) - 1;
  std::vector<TrainView> multiset(views.begin(), views.end());
  std::vector<std::size_t> multiset_aug(aug.begin(), aug.end());
  for (std::size_t copy = 0; copy < extra_copies; ++copy)
    for (std::size_t idx : errors) {
      multiset.push_back(views[idx]);
      multiset_aug.push_back(idx);
    }

  // Stage 2 retrains from scratch: same init stream, fresh optimizer, epoch
  // numbering restarted.
  result.final_params = fresh_model(data, cfg);
  result.best_params = result.final_params;
  result.best_val_accuracy = -1.0;  // selection restarts with stage 2
  SgdState opt(cfg.sgd, result.final_params);
  train_phase(result.final_params, opt, multiset, multiset_aug, cfg,
              {0, cfg.epochs_debiased, 0.0, nullptr, nullptr},
              recording_hook(data, result));
  scope.finish(result);
  return result;
}

RunResult train_lff(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  RunScope scope;
  RunResult result;
  ModelParams biased = fresh_model(data, cfg);
  TrainConfig cfg_d = cfg;
  cfg_d.seed = derive_seed(cfg.seed, kTagLffInit);
  result.final_params = fresh_model(data, cfg_d);
  result.best_params = result.final_params;
  SgdState opt_b(cfg.sgd, biased);
  SgdState opt_d(cfg.sgd, result.final_params);
  const std::vector<TrainView> views = training_view(data.train);
  const std::vector<std::size_t> aug = identity_indices(views.size());
  const std::size_t n = views.size();
  const std::size_t in_dim = result.final_params.input_dim();
  const std::size_t c = result.final_params.num_classes();
  const BatchSampler sampler(SamplingDistribution::uniform(n));

  for (std::size_t e = 0; e < cfg.total_epochs(); ++e) {
    try {
      Rng stream(derive_seed(cfg.seed, kTagBatch, e));
      std::size_t remaining = n;
      while (remaining > 0) {
        const std::size_t b_size = std::min(cfg.batch_size, remaining);
        remaining -= b_size;
        const std::vector<std::size_t> drawn = sampler.draw(b_size, stream);
        Tensor inputs({b_size, in_dim}, 0.0);
        std::vector<int> targets(b_size);
        fill_batch(views, aug, drawn, cfg, e, inputs, targets);

        // Biased model: one GCE step.
        {
          const BatchTrace trace = forward_batch(biased, inputs);
          const Tensor probs = softmax_rows(trace.logits());
          Tensor lg({b_size, c}, 0.0);
          for (std::size_t b = 0; b < b_size; ++b) {
            std::vector<double> row = gce_logit_grad(
                std::span<const double>(probs.data.data() + b * c, c),
                targets[b], cfg.gce_alpha);
            for (double& v : row) v *= cfg.lff_lambda;
            std::memcpy(lg.data.data() + b * c, row.data(), c * sizeof(double));
          }
          ParamGrads grads = backward_batch(biased, trace, lg);
          grads.scale(1.0 / static_cast<double>(b_size));
          opt_b.step(biased, grads, e);
        }

        // Relative difficulty from both nets' current CE, then one weighted
        // CE step on the debiased model.
        const BatchTrace trace_b = forward_batch(biased, inputs);
        const Tensor probs_b = softmax_rows(trace_b.logits());
        const BatchTrace trace_d = forward_batch(result.final_params, inputs);
        const Tensor probs_d = softmax_rows(trace_d.logits());
        Tensor lg({b_size, c}, 0.0);
        for (std::size_t b = 0; b < b_size; ++b) {
          const std::span<const double> pb(probs_b.data.data() + b * c, c);
          const std::span<const double> pd(probs_d.data.data() + b * c, c);
          const double ce_b = ce_loss_from_probs(pb, targets[b]);
          const double ce_d = ce_loss_from_probs(pd, targets[b]);
          const double denom = ce_b + ce_d;
          const double w = denom > 0.0 ? ce_b / denom : 0.5;
          std::vector<double> row = ce_logit_grad(pd, targets[b]);
          for (double& v : row) v *= w;
          std::memcpy(lg.data.data() + b * c, row.data(), c * sizeof(double));
        }
        ParamGrads grads = backward_batch(result.final_params, trace_d, lg);
        grads.scale(1.0 / static_cast<double>(b_size));
        opt_d.step(result.final_params, grads, e);
      }
    } catch (const NumericError& err) {
      throw NumericError("training diverged at epoch " + std::to_string(e) +
                         ": " + err.what());
    }
    record_epoch(data, result.final_params, result);
  }
  scope.finish(result);
  return result;
}

std::vector<AlphaSweepEntry> gce_alpha_sweep(const Dataset& data,
                                             const TrainConfig& cfg,
                                             std::span<const double> alphas) {
  if (alphas.empty()) throw DimensionError("alpha sweep needs at least one alpha");
  if (cfg.epochs_biased == 0)
    throw DimensionError("alpha sweep needs a biased training phase");
  std::vector<AlphaSweepEntry> entries;
  entries.reserve(alphas.size());
  for (double alpha : alphas) {
    TrainConfig cfg_a = cfg;
    cfg_a.gce_alpha = alpha;
    AlphaSweepEntry entry;
    entry.alpha = alpha;
    entry.run = train_pgd(data, cfg_a);
    entry.biased_test_accuracy =
        entry.run.history[cfg.epochs_biased - 1].test.overall;
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace pgd
