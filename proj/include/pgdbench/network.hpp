// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgdbench/tensor.hpp"

namespace pgd {

enum class Activation { kRelu, kIdentity };

/// One dense layer: y = act(W x + b), W is out x in row-major.
struct Layer {
  Tensor weight;
  std::vector<double> bias;
  Activation activation = Activation::kRelu;

  std::size_t out_dim() const { return weight.rows(); }
  std::size_t in_dim() const { return weight.cols(); }
};

/// Feed-forward classifier parameters. The last layer is the FC head and
/// must use the identity activation; losses apply softmax themselves.
struct ModelParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t num_classes() const { return layers.back().out_dim(); }
  /// Width of the penultimate feature (input dim of the FC head).
  std::size_t feature_dim() const { return layers.back().in_dim(); }
  std::size_t parameter_count() const;

  /// Checks layer composition and the identity head. Throws DimensionError.
  void validate() const;
};

/// Gradients with the same shapes as ModelParams.
struct ParamGrads {
  std::vector<Tensor> weight;
  std::vector<std::vector<double>> bias;

  void scale(double factor);
  void accumulate(const ParamGrads& other);
};

ParamGrads zero_grads(const ModelParams& params);

/// Builds an MLP with the given layer widths (input, hidden..., classes).
/// Hidden layers use ReLU, the head is identity. Weights are drawn uniformly
/// from [-1/sqrt(fan_in), +1/sqrt(fan_in)] on a stream derived from `seed`;
/// biases start at zero.
ModelParams make_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed);

/// Intermediate results of one forward pass, retained for backprop.
struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;  ///< per-layer pre-activations
  std::vector<std::vector<double>> act;  ///< per-layer activations

  const std::vector<double>& logits() const { return act.back(); }
  /// Penultimate feature z (the FC head's input).
  const std::vector<double>& feature() const {
    return act.size() >= 2 ? act[act.size() - 2] : input;
  }
};

/// Batched counterpart; row b of each tensor belongs to sample b.
struct BatchTrace {
  std::size_t batch = 0;
  Tensor input;             ///< batch x in
  std::vector<Tensor> pre;  ///< per layer: batch x out
  std::vector<Tensor> act;

  const Tensor& logits() const { return act.back(); }
  const Tensor& features() const {
    return act.size() >= 2 ? act[act.size() - 2] : input;
  }
};

ForwardTrace forward(const ModelParams& params, const Tensor& input);
BatchTrace forward_batch(const ModelParams& params, const Tensor& inputs);

/// Backprop from d(loss)/d(logits). Returns per-parameter gradients.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    std::span<const double> logit_grad);

/// Batched backprop; `logit_grads` is batch x classes. Per-sample gradients
/// are summed (callers divide by the batch size for a mean).
ParamGrads backward_batch(const ModelParams& params, const BatchTrace& trace,
                          const Tensor& logit_grads);

/// Argmax over logits; ties resolve to the lowest class index.
int predict_class(const ModelParams& params, const Tensor& input);
int argmax_lowest(std::span<const double> values);

/// Checkpoint I/O: little-endian 64-bit float stream behind a shape header
/// (see README for the exact layout).
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

}  // namespace pgd
