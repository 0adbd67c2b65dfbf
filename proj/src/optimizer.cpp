// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/optimizer.hpp"

#include <cmath>
#include <string>

#include "pgdbench/errors.hpp"

namespace pgd {

namespace {

void update_buffer(double* theta, double* vel, const double* grad, std::size_t n,
                   double lr, double momentum, double wd, std::size_t layer,
                   const char* what) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] + wd * theta[i];
    const double v = momentum * vel[i] + g;
    vel[i] = v;
    theta[i] -= lr * v;
    if (!std::isfinite(theta[i]))
      throw NumericError("sgd step produced non-finite " + std::string(what) +
                         " at layer " + std::to_string(layer));
  }
}

}  // namespace

double SgdState::effective_lr(std::size_t epoch) const {
  if (config.decay_step_epochs == 0) return config.learning_rate;
  const std::size_t drops = epoch / config.decay_step_epochs;
  return config.learning_rate * std::pow(config.decay_factor,
                                         static_cast<double>(drops));
}

void SgdState::step(ModelParams& params, const ParamGrads& grads,
                    std::size_t epoch) {
  if (grads.weight.size() != params.layers.size())
    throw DimensionError("sgd step: gradient layer count mismatch");
  const double lr = effective_lr(epoch);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    Layer& layer = params.layers[k];
    if (grads.weight[k].size() != layer.weight.size() ||
        grads.bias[k].size() != layer.bias.size())
      throw DimensionError("sgd step: gradient shape mismatch at layer " +
                           std::to_string(k));
    for (double v : grads.weight[k].data)
      if (!std::isfinite(v))
        throw NumericError("non-finite weight gradient at layer " +
                           std::to_string(k));
    for (double v : grads.bias[k])
      if (!std::isfinite(v))
        throw NumericError("non-finite bias gradient at layer " +
                           std::to_string(k));
    update_buffer(layer.weight.data.data(), velocity.weight[k].data.data(),
                  grads.weight[k].data.data(), layer.weight.size(), lr,
                  config.momentum, config.weight_decay, k, "weight");
    update_buffer(layer.bias.data(), velocity.bias[k].data(),
                  grads.bias[k].data(), layer.bias.size(), lr, config.momentum,
                  config.weight_decay, k, "bias");
  }
}

void SgdState::reset_velocity() {
  for (Tensor& w : velocity.weight)
    for (double& v : w.data) v = 0.0;
  for (auto& b : velocity.bias)
    for (double& v : b) v = 0.0;
}

}  // namespace pgd
