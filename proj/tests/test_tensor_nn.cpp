// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pgdbench/errors.hpp"
#include "pgdbench/losses.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/optimizer.hpp"
#include "pgdbench/rng.hpp"
#include "pgdbench/tensor.hpp"

using namespace pgd;

namespace {

double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo,
                     double hi) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Independent forward route: Eigen matrix products instead of hand loops.
std::vector<double> eigen_forward(const ModelParams& params,
                                  const std::vector<double>& input) {
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
      input.data(), static_cast<Eigen::Index>(input.size()));
  for (const Layer& l : params.layers) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        w(l.weight.data.data(), static_cast<Eigen::Index>(l.out_dim()),
          static_cast<Eigen::Index>(l.in_dim()));
    Eigen::Map<const Eigen::VectorXd> b(l.bias.data(),
                                        static_cast<Eigen::Index>(l.bias.size()));
    Eigen::VectorXd pre = w * x + b;
    if (l.activation == Activation::kRelu) pre = pre.cwiseMax(0.0);
    x = pre;
  }
  return std::vector<double>(x.data(), x.data() + x.size());
}

double loss_at(const ModelParams& params, const Tensor& input, int label,
               double alpha) {
  const ForwardTrace trace = forward(params, input);
  if (alpha > 0.0) return gce_loss_from_logits(trace.logits(), label, alpha);
  return ce_loss_from_logits(trace.logits(), label);
}

/// Central finite differences over every parameter of the model.
ParamGrads fd_grads(ModelParams params, const Tensor& input, int label,
                    double alpha, double step) {
  ParamGrads out = zero_grads(params);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    for (std::size_t i = 0; i < params.layers[k].weight.size(); ++i) {
      double& theta = params.layers[k].weight.data[i];
      const double keep = theta;
      theta = keep + step;
      const double up = loss_at(params, input, label, alpha);
      theta = keep - step;
      const double down = loss_at(params, input, label, alpha);
      theta = keep;
      out.weight[k].data[i] = (up - down) / (2.0 * step);
    }
    for (std::size_t i = 0; i < params.layers[k].bias.size(); ++i) {
      double& theta = params.layers[k].bias[i];
      const double keep = theta;
      theta = keep + step;
      const double up = loss_at(params, input, label, alpha);
      theta = keep - step;
      const double down = loss_at(params, input, label, alpha);
      theta = keep;
      out.bias[k][i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

ParamGrads analytic_grads(const ModelParams& params, const Tensor& input,
                          int label, double alpha) {
  const ForwardTrace trace = forward(params, input);
  const std::vector<double> probs = softmax(trace.logits());
  const std::vector<double> lg = alpha > 0.0
                                     ? gce_logit_grad(probs, label, alpha)
                                     : ce_logit_grad(probs, label);
  return backward(params, trace, lg);
}

/// Relative error below `rel_tol` where the gradient is appreciable,
/// absolute error below 1e-8 elsewhere (central differences with step 1e-6
/// carry ~5e-11 of cancellation noise, so tiny entries cannot be compared
/// relatively).
void check_grads_close(const ParamGrads& a, const ParamGrads& b,
                       double rel_tol) {
  REQUIRE(a.weight.size() == b.weight.size());
  double worst_rel = 0.0, worst_abs = 0.0;
  auto compare = [&](double x, double y) {
    const double mag = std::max(std::fabs(x), std::fabs(y));
    if (mag > 1e-3)
      worst_rel = std::max(worst_rel, std::fabs(x - y) / mag);
    else
      worst_abs = std::max(worst_abs, std::fabs(x - y));
  };
  for (std::size_t k = 0; k < a.weight.size(); ++k) {
    for (std::size_t i = 0; i < a.weight[k].size(); ++i)
      compare(a.weight[k].data[i], b.weight[k].data[i]);
    for (std::size_t i = 0; i < a.bias[k].size(); ++i)
      compare(a.bias[k][i], b.bias[k][i]);
  }
  CHECK(worst_rel < rel_tol);
  CHECK(worst_abs < 1e-8);
}

}  // namespace

TEST_CASE("splitmix64 matches reference vectors") {
  // Frozen from the published SplitMix64 reference sequence.
  CHECK(splitmix64(0x0ULL) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(0x1ULL) == 0x910a2dec89025cc1ULL);
  CHECK(splitmix64(0xdeadbeefULL) == 0x4adfb90f68c9eb9bULL);
  CHECK(derive_seed(42, 7) == 0x5a1347db0ff764abULL);
  CHECK(derive_seed(42, 7, 3) == 0x78b344385a2ff6a8ULL);
  CHECK(derive_seed(42, 7) != derive_seed(42, 8));
  CHECK(derive_seed(42, 7) != derive_seed(43, 7));
}

TEST_CASE("rng streams are deterministic and in range") {
  Rng a(123), b(123), c(124);
  bool all_equal = true;
  bool any_diff_seed_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t va = a.next_u64();
    if (va != b.next_u64()) all_equal = false;
    if (va != c.next_u64()) any_diff_seed_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed_diff);

  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t v = r.uniform_index(7);
    CHECK(v < 7);
  }
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t v = r.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
}

TEST_CASE("rng normal has the right first two moments") {
  Rng r(99);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  // Standard error of the mean is ~1/sqrt(n) ~ 0.0022; allow 5 sigma.
  CHECK(std::fabs(mean) < 0.012);
  CHECK(std::fabs(var - 1.0) < 0.025);
}

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), DimensionError);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(t.at(0, 2) == 3.0);
  CHECK(t.at(1, 0) == 4.0);
  t.data[4] = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(require_finite(t, "t"), NumericError);
}

TEST_CASE("mlp init: bounds, zero bias, seed determinism") {
  const std::vector<std::size_t> dims{12, 8, 8, 4};
  const ModelParams m1 = make_mlp(dims, 42);
  const ModelParams m2 = make_mlp(dims, 42);
  const ModelParams m3 = make_mlp(dims, 43);
  REQUIRE(m1.layers.size() == 3);
  CHECK(m1.input_dim() == 12);
  CHECK(m1.num_classes() == 4);
  CHECK(m1.feature_dim() == 8);
  CHECK(m1.parameter_count() == 12 * 8 + 8 + 8 * 8 + 8 + 8 * 4 + 4);
  bool identical = true, any_diff = false;
  for (std::size_t k = 0; k < m1.layers.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m1.layers[k].in_dim()));
    for (std::size_t i = 0; i < m1.layers[k].weight.size(); ++i) {
      const double v = m1.layers[k].weight.data[i];
      CHECK(std::fabs(v) <= bound);
      if (v != m2.layers[k].weight.data[i]) identical = false;
      if (v != m3.layers[k].weight.data[i]) any_diff = true;
    }
    for (double b : m1.layers[k].bias) CHECK(b == 0.0);
  }
  CHECK(identical);
  CHECK(any_diff);
  CHECK(m1.layers.back().activation == Activation::kIdentity);
  CHECK(m1.layers.front().activation == Activation::kRelu);
}

TEST_CASE("forward matches an independent matrix-product route") {
  Rng rng(2024);
  const ModelParams params = make_mlp({9, 7, 5, 3}, 11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({9}, rng, -2.0, 2.0);
    const ForwardTrace trace = forward(params, x);
    const std::vector<double> expect = eigen_forward(params, x.data);
    REQUIRE(trace.logits().size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(rel_err(trace.logits()[i], expect[i]) < 1e-12);
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng(55);
  const ModelParams params = make_mlp({6, 10, 4}, 3);
  const Tensor batch = random_tensor({8, 6}, rng, -1.5, 1.5);
  const BatchTrace bt = forward_batch(params, batch);
  REQUIRE(bt.logits().rows() == 8);
  for (std::size_t b = 0; b < 8; ++b) {
    Tensor x({6}, std::vector<double>(batch.data.begin() + b * 6,
                                      batch.data.begin() + (b + 1) * 6));
    const ForwardTrace ft = forward(params, x);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(bt.logits().at(b, j) == ft.logits()[j]);
    for (std::size_t j = 0; j < 10; ++j)
      CHECK(bt.features().at(b, j) == ft.feature()[j]);
  }
}

TEST_CASE("backward matches central finite differences (ce and gce)") {
  Rng rng(71);
  const ModelParams params = make_mlp({8, 6, 6, 4}, 17);
  const double step = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({8}, rng, -1.0, 1.0);
    const int label = static_cast<int>(rng.uniform_index(4));
    // Keep clear of the relu kink so the finite-difference path is smooth.
    const ForwardTrace trace = forward(params, x);
    double min_abs_pre = 1e9;
    for (std::size_t k = 0; k + 1 < trace.pre.size(); ++k)
      for (double p : trace.pre[k]) min_abs_pre = std::min(min_abs_pre, std::fabs(p));
    if (min_abs_pre < 1e-3) continue;

    check_grads_close(analytic_grads(params, x, label, 0.0),
                      fd_grads(params, x, label, 0.0, step), 1e-6);
    check_grads_close(analytic_grads(params, x, label, 0.7),
                      fd_grads(params, x, label, 0.7, step), 1e-6);
    check_grads_close(analytic_grads(params, x, label, 1.0),
                      fd_grads(params, x, label, 1.0, step), 1e-6);
  }
}

TEST_CASE("batched backward equals summed per-sample backward") {
  Rng rng(31);
  const ModelParams params = make_mlp({5, 9, 3}, 23);
  const std::size_t batch = 6;
  const Tensor xs = random_tensor({batch, 5}, rng, -1.0, 1.0);
  Tensor lgs({batch, 3}, 0.0);
  ParamGrads expect = zero_grads(params);
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor x({5}, std::vector<double>(xs.data.begin() + b * 5,
                                      xs.data.begin() + (b + 1) * 5));
    const ForwardTrace ft = forward(params, x);
    const std::vector<double> probs = softmax(ft.logits());
    const std::vector<double> lg = ce_logit_grad(probs, static_cast<int>(b % 3));
    for (std::size_t j = 0; j < 3; ++j) lgs.at(b, j) = lg[j];
    expect.accumulate(backward(params, ft, lg));
  }
  const BatchTrace bt = forward_batch(params, xs);
  const ParamGrads got = backward_batch(params, bt, lgs);
  for (std::size_t k = 0; k < got.weight.size(); ++k) {
    for (std::size_t i = 0; i < got.weight[k].size(); ++i)
      CHECK(rel_err(got.weight[k].data[i], expect.weight[k].data[i]) < 1e-12);
    for (std::size_t i = 0; i < got.bias[k].size(); ++i)
      CHECK(rel_err(got.bias[k][i], expect.bias[k][i]) < 1e-12);
  }
}

TEST_CASE("softmax normalizes and survives extreme logits") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(10);
    for (double& v : logits) v = rng.uniform(-30.0, 30.0);
    const std::vector<double> p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
  const std::vector<double> huge{1000.0, 999.0, -1000.0};
  const std::vector<double> p = softmax(huge);
  CHECK(std::isfinite(p[0]));
  CHECK(std::fabs(p[0] + p[1] + p[2] - 1.0) < 1e-12);
  CHECK(p[0] > p[1]);
}

TEST_CASE("gce approaches ce as alpha shrinks") {
  // sup over a probability grid of |gce - ce| for alpha = 1e-8.
  double sup = 0.0;
  for (double py = 0.01; py <= 1.0 + 1e-12; py += 0.01) {
    // Two-class logits realizing p_y = py exactly enough for the check.
    const double logit = std::log(py / std::max(1.0 - py, 1e-12));
    const std::vector<double> logits{logit, 0.0};
    const double ce = ce_loss_from_logits(logits, 0);
    const double gce = gce_loss_from_logits(logits, 0, 1e-8);
    sup = std::max(sup, std::fabs(gce - ce));
  }
  CHECK(sup < 1e-6);
}

TEST_CASE("gce at alpha=1 is the linear loss 1 - p_y") {
  const std::vector<double> logits{0.3, -0.2, 1.1};
  const std::vector<double> p = softmax(logits);
  CHECK(rel_err(gce_loss_from_logits(logits, 2, 1.0), 1.0 - p[2]) < 1e-12);
}

TEST_CASE("ce clamp counter fires on tiny probabilities") {
  reset_prob_clamp_count();
  const std::vector<double> probs{1.0, 0.0};
  const double loss = ce_loss_from_probs(probs, 1);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(-std::log(1e-300)));
  CHECK(prob_clamp_count() == 1);
  reset_prob_clamp_count();
  CHECK(prob_clamp_count() == 0);
}

TEST_CASE("argmax resolves ties to the lowest index") {
  const std::vector<double> v{0.25, 0.5, 0.5, 0.1};
  CHECK(argmax_lowest(v) == 1);
  const std::vector<double> all_equal{1.0, 1.0, 1.0};
  CHECK(argmax_lowest(all_equal) == 0);
}

TEST_CASE("sgd step matches a hand-computed trajectory") {
  // One parameter, no hidden layers: theta stored as a 1x1 weight.
  ModelParams m;
  Layer l;
  l.weight = Tensor({1, 1}, std::vector<double>{1.0});
  l.bias = {0.5};
  l.activation = Activation::kIdentity;
  m.layers.push_back(l);

  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.decay_factor = 0.1;
  cfg.decay_step_epochs = 40;
  SgdState opt(cfg, m);

  ParamGrads g = zero_grads(m);
  g.weight[0].data[0] = 2.0;
  g.bias[0][0] = -1.0;

  // Step 1: v_w = 2 + 0.01*1 = 2.01;           w = 1 - 0.1*2.01 = 0.799
  //         v_b = -1 + 0.01*0.5 = -0.995;      b = 0.5 + 0.0995 = 0.5995
  opt.step(m, g, 0);
  CHECK(m.layers[0].weight.data[0] == doctest::Approx(0.799).epsilon(1e-12));
  CHECK(m.layers[0].bias[0] == doctest::Approx(0.5995).epsilon(1e-12));

  // Step 2: v_w = 0.9*2.01 + 2 + 0.00799 = 3.81699; w = 0.799 - 0.381699
  opt.step(m, g, 0);
  CHECK(m.layers[0].weight.data[0] ==
        doctest::Approx(0.799 - 0.1 * (0.9 * 2.01 + 2.0 + 0.01 * 0.799))
            .epsilon(1e-12));

  CHECK(opt.effective_lr(0) == doctest::Approx(0.1));
  CHECK(opt.effective_lr(39) == doctest::Approx(0.1));
  CHECK(opt.effective_lr(40) == doctest::Approx(0.01));
  CHECK(opt.effective_lr(79) == doctest::Approx(0.01));
  CHECK(opt.effective_lr(80) == doctest::Approx(0.001));

  opt.reset_velocity();
  CHECK(opt.velocity.weight[0].data[0] == 0.0);
  CHECK(opt.velocity.bias[0][0] == 0.0);
}

TEST_CASE("sgd rejects non-finite gradients with the layer named") {
  ModelParams m = make_mlp({2, 3, 2}, 1);
  SgdState opt(SgdConfig{}, m);
  ParamGrads g = zero_grads(m);
  g.weight[1].data[0] = std::numeric_limits<double>::infinity();
  try {
    opt.step(m, g, 0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
  const ModelParams m = make_mlp({4, 5, 3}, 77);
  const std::string path = "ckpt_roundtrip.bin";
  save_params(m, path);
  const ModelParams r = load_params(path);
  REQUIRE(r.layers.size() == m.layers.size());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    CHECK(r.layers[k].activation == m.layers[k].activation);
    REQUIRE(r.layers[k].weight.shape == m.layers[k].weight.shape);
    for (std::size_t i = 0; i < m.layers[k].weight.size(); ++i)
      CHECK(r.layers[k].weight.data[i] == m.layers[k].weight.data[i]);
    for (std::size_t i = 0; i < m.layers[k].bias.size(); ++i)
      CHECK(r.layers[k].bias[i] == m.layers[k].bias[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  const std::string path = "ckpt_bad.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_params(path), FormatError);

  const ModelParams m = make_mlp({3, 2}, 5);
  save_params(m, path);
  {
    // Truncate the payload.
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
  }
  CHECK_THROWS_AS(load_params(path), FormatError);

  save_params(m, path);
  {
    std::ofstream f(path, std::ios::binary | std::ios::app);
    f << "x";
  }
  CHECK_THROWS_AS(load_params(path), FormatError);
  CHECK_THROWS_AS(load_params("no_such_file.bin"), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("model validation catches bad compositions") {
  ModelParams m = make_mlp({3, 4, 2}, 9);
  m.layers[1].weight = Tensor({2, 5}, 0.0);  // input dim no longer matches
  m.layers[1].bias.assign(2, 0.0);
  CHECK_THROWS_AS(m.validate(), DimensionError);

  ModelParams head = make_mlp({3, 2}, 9);
  head.layers.back().activation = Activation::kRelu;
  CHECK_THROWS_AS(head.validate(), DimensionError);
}
