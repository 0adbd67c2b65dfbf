// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0
//
// pgdbench: generate biased datasets, train debiasing pipelines, sweep
// experiment grids, and inspect Fisher-information diagnostics.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include "pgdbench/acceptance.hpp"
#include "pgdbench/config.hpp"
#include "pgdbench/dataset.hpp"
#include "pgdbench/errors.hpp"
#include "pgdbench/fisher.hpp"
#include "pgdbench/plan.hpp"
#include "pgdbench/report.hpp"

namespace {

using pgd::Config;

struct GlobalArgs {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config_path;
  std::size_t threads = 0;  // 0 = auto

  Config load_config() const {
    return config_path.empty() ? Config{}
                               : Config::parse_file(config_path);
  }

  std::size_t worker_count() const {
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

void add_global_flags(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--seed", args.seed,
                  "Override the dataset and training seeds");
  cmd->add_option("--out", args.out, "Output directory");
  cmd->add_option("--config", args.config_path,
                  "Config file (key = value sections; see README)");
  cmd->add_option("--threads", args.threads,
                  "Worker threads for sweeps (default: hardware)");
}

int cmd_gen_data(const GlobalArgs& args,
                 const std::optional<double>& rho_flag,
                 const std::optional<std::size_t>& n_train_flag) {
  const Config cfg = args.load_config();
  cfg.require_known(pgd::known_config_keys());
  pgd::DatasetSpec spec = pgd::parse_dataset_spec(cfg);
  if (rho_flag) spec.rho = *rho_flag;
  if (n_train_flag) spec.n_train = *n_train_flag;
  if (args.seed) spec.seed = *args.seed;
  spec.validate();

  const std::string out = args.out.empty() ? "data" : args.out;
  std::filesystem::create_directories(out);
  const pgd::Dataset data = pgd::generate_biased_dataset(spec);
  std::vector<std::uint64_t> checksums;
  checksums.push_back(
      pgd::write_raw_split(data.train, spec.image, out + "/train.bin"));
  checksums.push_back(
      pgd::write_raw_split(data.val, spec.image, out + "/val.bin"));
  checksums.push_back(
      pgd::write_raw_split(data.test, spec.image, out + "/test.bin"));
  pgd::write_manifest(data, checksums, out + "/manifest.json");
  std::printf("wrote %zu train / %zu val / %zu test samples to %s\n",
              data.train.size(), data.val.size(), data.test.size(),
              out.c_str());
  std::printf("manifest: %s/manifest.json (train checksum 0x%016llx)\n",
              out.c_str(), static_cast<unsigned long long>(checksums[0]));
  return 0;
}

int cmd_train(const GlobalArgs& args, const std::string& method_name) {
  const pgd::Method method = pgd::parse_method(method_name);
  const Config cfg = args.load_config();
  cfg.require_known(pgd::known_config_keys());
  pgd::DatasetSpec spec = pgd::parse_dataset_spec(cfg);
  pgd::TrainConfig train = pgd::parse_train_config(cfg);
  if (args.seed) {
    spec.seed = *args.seed;
    train.seed = *args.seed;
  }
  const pgd::JttConfig jtt = pgd::parse_jtt_config(cfg, spec.rho);

  const std::string out = args.out.empty() ? "run" : args.out;
  const pgd::Dataset data = pgd::generate_biased_dataset(spec);
  const pgd::RunResult result = pgd::run_method(method, data, train, jtt);
  pgd::write_run_report(out, method_name, spec, train, data, result);

  const pgd::EpochMetrics& last = result.history.back();
  std::printf("%s: %zu epochs, %.1f s\n", method_name.c_str(),
              result.history.size(), result.wall_time_seconds);
  std::printf("  final test accuracy %.4f (aligned %.4f, conflicting %.4f)\n",
              last.test.overall, last.test.aligned, last.test.conflicting);
  std::printf("  best val %.4f at epoch %zu\n", result.best_val_accuracy,
              result.best_epoch);
  std::printf("  report: %s/report.json\n", out.c_str());
  return 0;
}

int cmd_sweep(const GlobalArgs& args) {
  if (args.config_path.empty())
    throw pgd::FormatError("sweep needs --config <plan file>");
  const Config cfg = args.load_config();
  cfg.require_known(pgd::known_plan_keys());
  pgd::ExperimentPlan plan =
      pgd::parse_plan(cfg, args.out.empty() ? "sweep" : args.out);
  if (!args.out.empty()) plan.out_dir = args.out;
  if (args.seed) {
    plan.dataset.seed = *args.seed;
    plan.train.seed = *args.seed;
  }
  const pgd::PlanOutcome outcome =
      pgd::run_plan(plan, args.worker_count());
  std::printf("sweep: %zu completed, %zu skipped (resumed), %zu failed\n",
              outcome.completed, outcome.skipped, outcome.failed);
  for (const std::string& failure : outcome.failures)
    std::fprintf(stderr, "failed cell: %s\n", failure.c_str());
  std::printf("aggregate: %s/aggregate.csv\n", plan.out_dir.c_str());
  return outcome.failed == 0 ? 0 : 1;
}

int cmd_fisher(const GlobalArgs& args, const std::vector<std::string>& dirs) {
  std::vector<pgd::EfiMatrix> matrices;
  std::vector<std::string> labels;
  for (const std::string& dir : dirs) {
    const pgd::LoadedRun run = pgd::load_run_dir(dir);
    const pgd::Dataset data = pgd::generate_biased_dataset(run.dataset_spec);
    const std::vector<pgd::TrainView> views = pgd::training_view(data.train);
    const pgd::SamplingDistribution dist =
        run.sampling.probabilities.empty()
            ? pgd::SamplingDistribution::uniform(views.size())
            : run.sampling;
    matrices.push_back(pgd::efi(run.best_params, views, dist));
    labels.push_back(dir + " (" + run.method + ")");
  }
  const pgd::EfiComparison comparison = pgd::compare_trace_inverse(matrices);
  std::vector<pgd::FisherRunDiagnostic> rows;
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    pgd::FisherRunDiagnostic row;
    row.label = labels[i];
    row.summary = pgd::eigen_summary(matrices[i]);
    row.ridge = comparison.shared_ridge;
    row.trace_inv = comparison.trace_inverses[i];
    rows.push_back(row);
    std::printf("%-48s trace_inv %.6g (eig min %.3g max %.3g median %.3g)\n",
                row.label.c_str(), row.trace_inv, row.summary.min_eigenvalue,
                row.summary.max_eigenvalue, row.summary.median_eigenvalue);
  }
  std::printf("shared ridge: %.6g\n", comparison.shared_ridge);
  const std::string out = args.out.empty() ? "." : args.out;
  std::filesystem::create_directories(out);
  pgd::write_fisher_report(rows, out + "/fisher_report.json");
  std::printf("report: %s/fisher_report.json\n", out.c_str());
  return 0;
}

int cmd_toy(const GlobalArgs& args, std::size_t size_m_big,
            std::size_t size_small, double a, std::size_t grid) {
  pgd::ToyProblem prob;
  prob.size_M = size_m_big;
  prob.size_m = size_small;
  prob.a = a;
  const pgd::ToySolution sol = pgd::toy_optimal_h(prob);
  std::printf("uniform minimizer theta = %.10g\n", sol.theta_uniform);
  std::printf("per-sample gradients g_M = %.10g, g_m = %.10g\n", sol.g_M,
              sol.g_m);
  std::printf("h*_M = %.10g, h*_m = %.10g\n", sol.h_M, sol.h_m);
  std::printf("|M| h*_M = %.10g\n",
              static_cast<double>(prob.size_M) * sol.h_M);

  const pgd::ToyBruteForce bf = pgd::toy_brute_force(prob, grid);
  std::printf("\nbrute force over %zu grid points of t = |M| h_M:\n", grid);
  const std::size_t stride = std::max<std::size_t>(1, grid / 20);
  std::printf("%12s %18s\n", "t", "trace_inverse");
  for (std::size_t k = 0; k < grid; k += stride)
    std::printf("%12.6f %18.10g\n", bf.grid_t[k], bf.objective[k]);
  std::printf("argmin: t = %.10g, trace_inverse = %.10g\n", bf.best_t,
              bf.best_objective);

  if (!args.out.empty()) {
    std::filesystem::create_directories(args.out);
    const std::string path = args.out + "/toy_table.csv";
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr)
      throw pgd::FormatError("cannot open " + path + " for writing");
    std::fprintf(f, "t,trace_inverse\n");
    for (std::size_t k = 0; k < grid; ++k)
      std::fprintf(f, "%.17g,%.17g\n", bf.grid_t[k], bf.objective[k]);
    std::fclose(f);
    std::printf("table: %s\n", path.c_str());
  }
  return 0;
}

int cmd_accept(const GlobalArgs& args) {
  const std::string scratch =
      args.out.empty() ? "acceptance_runs" : args.out;
  const pgd::AcceptanceResult result =
      pgd::run_acceptance(scratch, std::cout);
  return result.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"debiasing benchmark toolkit"};
  app.require_subcommand(1);
  GlobalArgs args;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic biased dataset directory");
  add_global_flags(gen, args);
  std::optional<double> rho_flag;
  std::optional<std::size_t> n_train_flag;
  gen->add_option("--rho", rho_flag, "Bias-conflicting sample ratio");
  gen->add_option("--n-train", n_train_flag, "Training split size");

  CLI::App* train =
      app.add_subcommand("train", "Train one method and write a run report");
  add_global_flags(train, args);
  std::string method = "pgd";
  train
      ->add_option("--method", method,
                   "vanilla | pgd | pgd-single | pgd-reweight | "
                   "loss-resample | jtt | lff")
      ->required();

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run an experiment plan (methods x rho x norms x seeds)");
  add_global_flags(sweep, args);

  CLI::App* fisher = app.add_subcommand(
      "fisher", "Fisher-information diagnostics over finished run dirs");
  add_global_flags(fisher, args);
  std::vector<std::string> run_dirs;
  fisher->add_option("dirs", run_dirs, "Run directories")->required();

  CLI::App* toy = app.add_subcommand(
      "toy", "Closed-form and brute-force solutions of the two-group toy");
  add_global_flags(toy, args);
  std::size_t size_m_big = 9;
  std::size_t size_small = 1;
  double toy_a = 1.0;
  std::size_t toy_grid = 10001;
  toy->add_option("--size-m", size_m_big, "Majority group size |M|");
  toy->add_option("--size-s", size_small, "Minority group size |m|");
  toy->add_option("--a", toy_a, "Loss offset a");
  toy->add_option("--grid", toy_grid, "Brute-force grid points");

  CLI::App* accept =
      app.add_subcommand("accept", "Run the acceptance suite");
  add_global_flags(accept, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(args, rho_flag, n_train_flag);
    if (train->parsed()) return cmd_train(args, method);
    if (sweep->parsed()) return cmd_sweep(args);
    if (fisher->parsed()) return cmd_fisher(args, run_dirs);
    if (toy->parsed())
      return cmd_toy(args, size_m_big, size_small, toy_a, toy_grid);
    if (accept->parsed()) return cmd_accept(args);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
