// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgdbench/config.hpp"
#include "pgdbench/dataset.hpp"
#include "pgdbench/pipelines.hpp"

namespace pgd {

enum class Method {
  kVanilla,
  kPgd,
  kPgdSingleStage,
  kPgdReweight,
  kLossResample,
  kJtt,
  kLff,
};

/// Method names as they appear on the CLI and in reports: vanilla, pgd,
/// pgd-single, pgd-reweight, loss-resample, jtt, lff.
Method parse_method(const std::string& name);
std::string method_name(Method method);

/// Runs one method on one dataset. `jtt` is only consulted for Method::kJtt.
RunResult run_method(Method method, const Dataset& data,
                     const TrainConfig& cfg, const JttConfig& jtt);

/// A sweep: the cross product of methods, conflict ratios, norm settings,
/// and seeds. Per cell, `dataset.rho` and both seeds are overridden; the
/// rest of `dataset`/`train` is shared.
struct ExperimentPlan {
  std::vector<Method> methods;
  std::vector<double> rhos;
  std::vector<NormSpec> norms;
  std::size_t seed_count = 3;
  std::uint64_t seed_base = 0;
  std::string out_dir;
  DatasetSpec dataset;
  TrainConfig train;
  double jtt_lambda_up = 0.0;  ///< 0 means auto: 1/rho per cell

  void validate() const;  ///< nonempty method/rho/norm grids, seed_count >= 1
};

/// Reads `[plan]` plus the shared `[dataset]`/`[train]`/... sections.
/// `fallback_out` is used when the plan names no output directory.
ExperimentPlan parse_plan(const Config& cfg, const std::string& fallback_out);

/// All keys a plan file may contain.
std::vector<std::string> known_plan_keys();

struct PlanOutcome {
  std::size_t completed = 0;  ///< cells executed this invocation
  std::size_t skipped = 0;    ///< cells resumed via matching checksum
  std::size_t failed = 0;
  std::vector<std::string> failures;  ///< "cell-dir: reason"
};

/// Executes every cell with a pool of `workers` threads (>= 1). A finished
/// cell leaves `cell.done` holding a checksum of its exact configuration;
/// re-running the plan skips cells whose checksum still matches, so an
/// interrupted sweep resumes where it stopped. Cell failures are recorded
/// and the remaining cells still run. Finally aggregate.csv is rewritten
/// from all finished cells.
PlanOutcome run_plan(const ExperimentPlan& plan, std::size_t workers);

/// One row per (method, rho, norm) with mean/std across seeds, written as
/// aggregate.csv. Values are test metrics of the best-validation model;
/// efi_trace_inv is the mean trace of the inverse weighted EFI at those
/// parameters (the run's own sampling distribution when it has one, uniform
/// otherwise, each matrix under its default ridge).
void write_aggregate_csv(const ExperimentPlan& plan, const std::string& path);

}  // namespace pgd
