// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "pgdbench/errors.hpp"
#include "pgdbench/rng.hpp"

namespace pgd {

namespace {

constexpr std::uint64_t kInitTag = 0x6d6c705f696e6974ull;  // "mlp_init"
constexpr std::uint32_t kCheckpointMagic = 0x50474442u;    // "PGDB"
constexpr std::uint32_t kCheckpointVersion = 1u;

void apply_activation(Activation act, const double* pre, double* out,
                      std::size_t n) {
  switch (act) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      break;
    case Activation::kIdentity:
      std::memcpy(out, pre, n * sizeof(double));
      break;
  }
}

/// d(act)/d(pre) folded into the incoming activation gradient, in place.
void fold_activation_grad(Activation act, const double* pre, double* grad,
                          std::size_t n) {
  if (act == Activation::kRelu) {
    for (std::size_t i = 0; i < n; ++i) {
      if (pre[i] <= 0.0) grad[i] = 0.0;
    }
  }
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw FormatError("checkpoint truncated: " + path);
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) |
         (static_cast<std::uint32_t>(buf[3]) << 24);
}

double read_f64_le(std::istream& in, const std::string& path) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw FormatError("checkpoint truncated: " + path);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ModelParams::validate() const {
  if (layers.empty()) throw DimensionError("model has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    if (l.weight.rank() != 2)
      throw DimensionError("layer " + std::to_string(k) + ": weight must be rank 2");
    if (l.bias.size() != l.out_dim())
      throw DimensionError("layer " + std::to_string(k) + ": bias/weight mismatch");
    if (k > 0 && l.in_dim() != layers[k - 1].out_dim())
      throw DimensionError("layer " + std::to_string(k) + ": input dim " +
                           std::to_string(l.in_dim()) + " != previous output " +
                           std::to_string(layers[k - 1].out_dim()));
  }
  if (layers.back().activation != Activation::kIdentity)
    throw DimensionError("final layer must be identity (losses apply softmax)");
}

void ParamGrads::scale(double factor) {
  for (Tensor& w : weight)
    for (double& v : w.data) v *= factor;
  for (auto& b : bias)
    for (double& v : b) v *= factor;
}

void ParamGrads::accumulate(const ParamGrads& other) {
  if (other.weight.size() != weight.size())
    throw DimensionError("gradient accumulate: layer count mismatch");
  for (std::size_t k = 0; k < weight.size(); ++k) {
    if (other.weight[k].size() != weight[k].size() ||
        other.bias[k].size() != bias[k].size())
      throw DimensionError("gradient accumulate: shape mismatch at layer " +
                           std::to_string(k));
    for (std::size_t i = 0; i < weight[k].size(); ++i)
      weight[k].data[i] += other.weight[k].data[i];
    for (std::size_t i = 0; i < bias[k].size(); ++i)
      bias[k][i] += other.bias[k][i];
  }
}

ParamGrads zero_grads(const ModelParams& params) {
  ParamGrads g;
  g.weight.reserve(params.layers.size());
  g.bias.reserve(params.layers.size());
  for (const Layer& l : params.layers) {
    g.weight.emplace_back(l.weight.shape, 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

ModelParams make_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw DimensionError("mlp needs at least input and output dims");
  ModelParams params;
  Rng rng(derive_seed(seed, kInitTag));
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k];
    const std::size_t out = dims[k + 1];
    if (in == 0 || out == 0) throw DimensionError("mlp layer dims must be positive");
    Layer layer;
    layer.weight = Tensor({out, in}, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : layer.weight.data) v = rng.uniform(-bound, bound);
    layer.bias.assign(out, 0.0);
    layer.activation =
        (k + 2 == dims.size()) ? Activation::kIdentity : Activation::kRelu;
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

ForwardTrace forward(const ModelParams& params, const Tensor& input) {
  if (input.size() != params.input_dim())
    throw DimensionError("forward: input size " + std::to_string(input.size()) +
                         " != model input dim " + std::to_string(params.input_dim()));
  ForwardTrace trace;
  trace.input = input.data;
  trace.pre.resize(params.layers.size());
  trace.act.resize(params.layers.size());
  const std::vector<double>* cur = &trace.input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const Layer& l = params.layers[k];
    const std::size_t out = l.out_dim();
    const std::size_t in = l.in_dim();
    std::vector<double>& pre = trace.pre[k];
    pre.assign(l.bias.begin(), l.bias.end());
    const double* w = l.weight.data.data();
    const double* x = cur->data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      pre[o] += acc;
    }
    trace.act[k].resize(out);
    apply_activation(l.activation, pre.data(), trace.act[k].data(), out);
    cur = &trace.act[k];
  }
  return trace;
}

BatchTrace forward_batch(const ModelParams& params, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.cols() != params.input_dim())
    throw DimensionError("forward_batch: inputs must be batch x input_dim");
  BatchTrace trace;
  trace.batch = inputs.rows();
  trace.input = inputs;
  trace.pre.reserve(params.layers.size());
  trace.act.reserve(params.layers.size());
  const Tensor* cur = &trace.input;
  const std::size_t batch = trace.batch;
  for (const Layer& l : params.layers) {
    const std::size_t out = l.out_dim();
    const std::size_t in = l.in_dim();
    Tensor pre({batch, out}, 0.0);
    const double* w = l.weight.data.data();
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = cur->data.data() + b * in;
      double* y = pre.data.data() + b * out;
      for (std::size_t o = 0; o < out; ++o) {
        const double* row = w + o * in;
        double acc = l.bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
      }
    }
    Tensor act({batch, out}, 0.0);
    apply_activation(l.activation, pre.data.data(), act.data.data(), batch * out);
    trace.pre.push_back(std::move(pre));
    trace.act.push_back(std::move(act));
    cur = &trace.act.back();
  }
  return trace;
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    std::span<const double> logit_grad) {
  if (logit_grad.size() != params.num_classes())
    throw DimensionError("backward: logit gradient size mismatch");
  ParamGrads grads = zero_grads(params);
  std::vector<double> delta(logit_grad.begin(), logit_grad.end());
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Layer& l = params.layers[k];
    const std::size_t out = l.out_dim();
    const std::size_t in = l.in_dim();
    fold_activation_grad(l.activation, trace.pre[k].data(), delta.data(), out);
    const std::vector<double>& x = (k == 0) ? trace.input : trace.act[k - 1];
    double* dw = grads.weight[k].data.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = delta[o];
      grads.bias[k][o] = g;
      double* row = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] = g * x[i];
    }
    if (k == 0) break;
    std::vector<double> next(in, 0.0);
    const double* w = l.weight.data.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = delta[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) next[i] += g * row[i];
    }
    delta = std::move(next);
  }
  return grads;
}

ParamGrads backward_batch(const ModelParams& params, const BatchTrace& trace,
                          const Tensor& logit_grads) {
  if (logit_grads.rank() != 2 || logit_grads.rows() != trace.batch ||
      logit_grads.cols() != params.num_classes())
    throw DimensionError("backward_batch: logit gradients must be batch x classes");
  ParamGrads grads = zero_grads(params);
  const std::size_t batch = trace.batch;
  Tensor delta = logit_grads;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Layer& l = params.layers[k];
    const std::size_t out = l.out_dim();
    const std::size_t in = l.in_dim();
    fold_activation_grad(l.activation, trace.pre[k].data.data(),
                         delta.data.data(), batch * out);
    const Tensor& x = (k == 0) ? trace.input : trace.act[k - 1];
    double* dw = grads.weight[k].data.data();
    double* db = grads.bias[k].data();
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dz = delta.data.data() + b * out;
      const double* xb = x.data.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[o];
        if (g == 0.0) continue;
        db[o] += g;
        double* row = dw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * xb[i];
      }
    }
    if (k == 0) break;
    Tensor next({batch, in}, 0.0);
    const double* w = l.weight.data.data();
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dz = delta.data.data() + b * out;
      double* dx = next.data.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dz[o];
        if (g == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
      }
    }
    delta = std::move(next);
  }
  return grads;
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax over empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

int predict_class(const ModelParams& params, const Tensor& input) {
  const ForwardTrace trace = forward(params, input);
  return argmax_lowest(trace.logits());
}

void save_params(const ModelParams& params, const std::string& path) {
  params.validate();
  std::string out;
  append_u32_le(out, kCheckpointMagic);
  append_u32_le(out, kCheckpointVersion);
  append_u32_le(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const Layer& l : params.layers) {
    append_u32_le(out, static_cast<std::uint32_t>(l.out_dim()));
    append_u32_le(out, static_cast<std::uint32_t>(l.in_dim()));
    append_u32_le(out, l.activation == Activation::kRelu ? 1u : 0u);
  }
  for (const Layer& l : params.layers) {
    for (double v : l.weight.data) append_f64_le(out, v);
    for (double v : l.bias) append_f64_le(out, v);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot open checkpoint for writing: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("checkpoint write failed: " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint: " + path);
  if (read_u32_le(file, path) != kCheckpointMagic)
    throw FormatError("bad checkpoint magic: " + path);
  if (read_u32_le(file, path) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version: " + path);
  const std::uint32_t n_layers = read_u32_le(file, path);
  if (n_layers == 0 || n_layers > 1024)
    throw FormatError("implausible layer count in checkpoint: " + path);
  ModelParams params;
  struct Dims {
    std::size_t out, in;
    Activation act;
  };
  std::vector<Dims> dims;
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    const std::uint32_t out = read_u32_le(file, path);
    const std::uint32_t in = read_u32_le(file, path);
    const std::uint32_t act = read_u32_le(file, path);
    if (out == 0 || in == 0) throw FormatError("zero layer dim in checkpoint: " + path);
    if (act > 1) throw FormatError("unknown activation code in checkpoint: " + path);
    dims.push_back({out, in, act == 1 ? Activation::kRelu : Activation::kIdentity});
  }
  for (const Dims& d : dims) {
    Layer layer;
    layer.weight = Tensor({d.out, d.in}, 0.0);
    for (double& v : layer.weight.data) v = read_f64_le(file, path);
    layer.bias.resize(d.out);
    for (double& v : layer.bias) v = read_f64_le(file, path);
    layer.activation = d.act;
    params.layers.push_back(std::move(layer));
  }
  char extra;
  if (file.read(&extra, 1))
    throw FormatError("trailing bytes after checkpoint payload: " + path);
  params.validate();
  return params;
}

}  // namespace pgd
