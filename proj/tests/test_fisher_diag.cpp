// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/errors.hpp"
#include "pgdbench/fisher.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/losses.hpp"
#include "pgdbench/network.hpp"
#include "pgdbench/rng.hpp"

using namespace pgd;

namespace {

SamplingDistribution uniform_over(std::size_t n) {
  return SamplingDistribution::uniform(n);
}

/// Axis-aligned gradients scaled so the uniform-weighted EFI is exactly
/// diag(values).
std::vector<std::vector<double>> diagonal_gradients(
    const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  std::vector<std::vector<double>> grads;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> g(values.size(), 0.0);
    g[i] = std::sqrt(values[i] * n);
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace

TEST_CASE("a single gradient yields its outer product") {
  const std::vector<std::vector<double>> grads{{1.0, -2.0, 3.0}};
  SamplingDistribution dist;
  dist.probabilities = {1.0};
  const EfiMatrix m = efi_from_gradients(grads, dist);
  REQUIRE(m.dim == 3);
  const double expected[3][3] = {{1, -2, 3}, {-2, 4, -6}, {3, -6, 9}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(m.matrix.data[i * 3 + j] ==
            doctest::Approx(expected[i][j]).epsilon(1e-15));
}

TEST_CASE("uniform weights reduce to the conventional average") {
  Rng rng(601);
  std::vector<std::vector<double>> grads;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> g(4);
    for (double& v : g) v = rng.normal();
    grads.push_back(std::move(g));
  }
  const EfiMatrix m = efi_from_gradients(grads, uniform_over(20));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double manual = 0.0;
      for (const std::vector<double>& g : grads) manual += g[r] * g[c];
      manual /= 20.0;
      CHECK(m.matrix.data[r * 4 + c] ==
            doctest::Approx(manual).epsilon(1e-12));
    }
}

TEST_CASE("known diagonal spectrum gives a closed-form trace inverse") {
  EfiMatrix m = efi_from_gradients(diagonal_gradients({1.0, 2.0, 4.0}),
                                   uniform_over(3));
  m.ridge = 0.0;
  CHECK(trace_inverse(m) == doctest::Approx(1.75).epsilon(1e-12));

  const EigenSummary summary = eigen_summary(m);
  CHECK(summary.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(summary.max_eigenvalue == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(summary.median_eigenvalue == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("even dimension takes the middle-pair average as median") {
  EfiMatrix m = efi_from_gradients(diagonal_gradients({1.0, 2.0, 3.0, 4.0}),
                                   uniform_over(4));
  const EigenSummary summary = eigen_summary(m);
  CHECK(summary.median_eigenvalue == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("identity spectrum: trace inverse equals the dimension") {
  EfiMatrix m = efi_from_gradients(diagonal_gradients({1.0, 1.0, 1.0, 1.0, 1.0}),
                                   uniform_over(5));
  m.ridge = 0.0;
  CHECK(trace_inverse(m) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("trace inverse rejects indefinite and asymmetric matrices") {
  EfiMatrix bad;
  bad.dim = 2;
  bad.matrix = Tensor({2, 2}, 0.0);
  bad.matrix.data = {-1.0, 0.0, 0.0, 1.0};
  CHECK_THROWS_AS(trace_inverse(bad), NumericError);

  EfiMatrix skew;
  skew.dim = 2;
  skew.matrix = Tensor({2, 2}, 0.0);
  skew.matrix.data = {0.0, 1.0, 0.0, 0.0};
  CHECK_THROWS_AS(trace_inverse(skew), NumericError);
}

TEST_CASE("trace inverse is monotone decreasing in the ridge") {
  EfiMatrix m = efi_from_gradients(diagonal_gradients({0.5, 1.0, 2.0}),
                                   uniform_over(3));
  double prev = std::numeric_limits<double>::infinity();
  for (double ridge : {1e-8, 1e-6, 1e-4, 1e-2}) {
    m.ridge = ridge;
    const double ti = trace_inverse(m);
    CHECK(ti < prev);
    prev = ti;
  }
}

TEST_CASE("default ridge is 1e-6 of the mean diagonal") {
  const EfiMatrix m = efi_from_gradients(diagonal_gradients({1.0, 2.0, 3.0}),
                                         uniform_over(3));
  CHECK(default_ridge(m) == doctest::Approx(2e-6).epsilon(1e-10));
}

TEST_CASE("shared-ridge comparison evaluates all matrices at one ridge") {
  const EfiMatrix a = efi_from_gradients(diagonal_gradients({1.0, 1.0}),
                                         uniform_over(2));
  const EfiMatrix b = efi_from_gradients(diagonal_gradients({4.0, 4.0}),
                                         uniform_over(2));
  const std::vector<EfiMatrix> mats{a, b};
  const EfiComparison cmp = compare_trace_inverse(mats);
  // Mean diagonals are 1 and 4, so the shared ridge is 1e-6 * 2.5.
  CHECK(cmp.shared_ridge == doctest::Approx(2.5e-6).epsilon(1e-10));
  CHECK(cmp.trace_inverses[0] ==
        doctest::Approx(2.0 / (1.0 + cmp.shared_ridge)).epsilon(1e-12));
  CHECK(cmp.trace_inverses[1] ==
        doctest::Approx(2.0 / (4.0 + cmp.shared_ridge)).epsilon(1e-12));
}

TEST_CASE("efi over a model matches the per-sample gradient route") {
  DatasetSpec spec;
  spec.n_train = 40;
  spec.n_val = 8;
  spec.n_test = 8;
  spec.n_classes = 3;
  spec.rho = 0.3;
  spec.image.height = 8;
  spec.image.width = 8;
  spec.seed = 602;
  const Dataset data = generate_biased_dataset(spec);
  const std::vector<TrainView> views = training_view(data.train);
  const ModelParams params =
      make_mlp({spec.image.element_count(), 7, spec.n_classes}, 603);

  Rng rng(604);
  std::vector<double> scores(views.size());
  for (double& s : scores) s = rng.uniform(0.1, 2.0);
  const SamplingDistribution dist = sampling_distribution(scores);

  const EfiMatrix fast = efi(params, views, dist);

  // Independent route: explicit per-sample FC gradients, flattened the
  // documented way (weight row-major, then bias).
  std::vector<std::vector<double>> grads;
  for (const TrainView& view : views) {
    const ForwardTrace trace = forward(params, *view.image);
    const FcGradient g = fc_gradient(trace, view.target);
    std::vector<double> flat(g.weight.data);
    flat.insert(flat.end(), g.bias.begin(), g.bias.end());
    grads.push_back(std::move(flat));
  }
  const EfiMatrix slow = efi_from_gradients(grads, dist);

  REQUIRE(fast.dim == slow.dim);
  REQUIRE(fast.dim == spec.n_classes * (7 + 1));
  for (std::size_t i = 0; i < fast.dim * fast.dim; ++i)
    CHECK(fast.matrix.data[i] ==
          doctest::Approx(slow.matrix.data[i]).epsilon(1e-12));
}

TEST_CASE("efi assembly is bitwise deterministic") {
  DatasetSpec spec;
  spec.n_train = 200;
  spec.n_val = 8;
  spec.n_test = 8;
  spec.n_classes = 4;
  spec.image.height = 8;
  spec.image.width = 8;
  spec.seed = 605;
  const Dataset data = generate_biased_dataset(spec);
  const std::vector<TrainView> views = training_view(data.train);
  const ModelParams params =
      make_mlp({spec.image.element_count(), 5, spec.n_classes}, 606);
  const SamplingDistribution dist = uniform_over(views.size());
  const EfiMatrix a = efi(params, views, dist);
  const EfiMatrix b = efi(params, views, dist);
  CHECK(a.matrix.data == b.matrix.data);
}

TEST_CASE("toy uniform minimizer matches a numeric grid minimization") {
  Rng rng(607);
  for (int trial = 0; trial < 20; ++trial) {
    ToyProblem prob;
    prob.size_M = rng.uniform_int(1, 50);
    prob.size_m = rng.uniform_int(1, 50);
    prob.a = rng.uniform(0.2, 5.0);
    const double closed = toy_erm(prob);

    const double M = static_cast<double>(prob.size_M);
    const double m = static_cast<double>(prob.size_m);
    auto loss = [&](double theta) {
      return 0.5 * (M * (theta + prob.a) * (theta + prob.a) +
                    m * (theta - prob.a) * (theta - prob.a));
    };
    double best_theta = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int k = -4000; k <= 4000; ++k) {
      const double theta = prob.a * k / 2000.0;
      if (loss(theta) < best_loss) {
        best_loss = loss(theta);
        best_theta = theta;
      }
    }
    CHECK(std::abs(closed - best_theta) <= prob.a / 1000.0);
    // Stationarity: group gradients cancel in the size-weighted sum.
    const ToySolution sol = toy_optimal_h(prob);
    CHECK(M * sol.g_M + m * sol.g_m == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("toy optimal weights follow gradient magnitudes exactly") {
  ToyProblem prob;  // defaults: |M| = 9, |m| = 1, a = 1
  const ToySolution sol = toy_optimal_h(prob);
  CHECK(sol.theta_uniform == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(sol.g_M == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(sol.g_m == doctest::Approx(-1.8).epsilon(1e-15));
  CHECK(sol.h_M == doctest::Approx(1.0 / 18.0).epsilon(1e-15));
  CHECK(sol.h_m == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(608);
  for (int trial = 0; trial < 30; ++trial) {
    ToyProblem p;
    p.size_M = rng.uniform_int(1, 80);
    p.size_m = rng.uniform_int(1, 80);
    p.a = rng.uniform(0.1, 8.0);
    const ToySolution s = toy_optimal_h(p);
    // h ratio tracks |g| ratio, and the majority group holds half the mass.
    CHECK(s.h_M / s.h_m ==
          doctest::Approx(std::abs(s.g_M) / std::abs(s.g_m)).epsilon(1e-10));
    CHECK(std::abs(static_cast<double>(p.size_M) * s.h_M - 0.5) <= 1e-12);
    CHECK(std::abs(static_cast<double>(p.size_m) * s.h_m - 0.5) <= 1e-12);
  }
}

TEST_CASE("brute force lands on balanced mass for random problems") {
  Rng rng(609);
  for (int trial = 0; trial < 50; ++trial) {
    ToyProblem prob;
    prob.size_M = rng.uniform_int(1, 100);
    prob.size_m = rng.uniform_int(1, 100);
    prob.a = rng.uniform(0.1, 10.0);
    const ToyBruteForce bf = toy_brute_force(prob, 1001);
    CHECK(std::abs(bf.best_t - 0.5) <= 1.0 / 1002.0 + 1e-15);
  }
}

TEST_CASE("brute-force argmin does not depend on the loss scale") {
  ToyProblem narrow;
  narrow.a = 1.0;
  ToyProblem wide;
  wide.a = 3.0;
  const ToyBruteForce a = toy_brute_force(narrow, 501);
  const ToyBruteForce b = toy_brute_force(wide, 501);
  CHECK(a.best_index == b.best_index);
  CHECK(a.best_t == b.best_t);
}

TEST_CASE("fisher report writes parseable labeled rows") {
  FisherRunDiagnostic row;
  row.label = "demo";
  row.ridge = 1e-6;
  row.trace_inv = 42.0;
  row.summary.min_eigenvalue = 0.1;
  row.summary.max_eigenvalue = 2.0;
  row.summary.median_eigenvalue = 0.5;
  const std::string dir = "test_fisher_out";
  std::filesystem::create_directories(dir);
  write_fisher_report({row}, dir + "/fisher_report.json");
  std::ifstream in(dir + "/fisher_report.json");
  const nlohmann::json doc = nlohmann::json::parse(in);
  REQUIRE(doc.contains("runs"));
  REQUIRE(doc["runs"].size() == 1);
  CHECK(doc["runs"][0]["label"] == "demo");
  CHECK(doc["runs"][0]["trace_inverse"] == doctest::Approx(42.0));
  CHECK(doc.contains("protocol"));
  std::filesystem::remove_all(dir);
}
