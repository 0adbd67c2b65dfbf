// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "pgdbench/network.hpp"

namespace pgd {

/// SGD hyperparameters. The learning rate decays by `decay_factor` every
/// `decay_step_epochs` epochs (step schedule).
struct SgdConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.001;
  double decay_factor = 0.1;
  std::size_t decay_step_epochs = 40;
};

/// Momentum buffers, one per parameter tensor.
struct SgdState {
  SgdConfig config;
  ParamGrads velocity;

  SgdState(const SgdConfig& cfg, const ModelParams& params)
      : config(cfg), velocity(zero_grads(params)) {}

  /// Learning rate in effect during `epoch` (0-based).
  double effective_lr(std::size_t epoch) const;

  /// One update: v <- momentum * v + g + wd * theta; theta <- theta - lr * v.
  /// `grads` must be the mean gradient over the batch. Throws NumericError
  /// (naming the layer) if a gradient or updated parameter is non-finite.
  void step(ModelParams& params, const ParamGrads& grads, std::size_t epoch);

  /// Clears the momentum buffers (used when a phase restarts optimization).
  void reset_velocity();
};

}  // namespace pgd
