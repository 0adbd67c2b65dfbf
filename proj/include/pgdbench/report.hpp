// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "pgdbench/dataset.hpp"
#include "pgdbench/grad_scores.hpp"
#include "pgdbench/metrics.hpp"
#include "pgdbench/pipelines.hpp"

namespace pgd {

/// Files produced for one training run. Paths are relative to the run
/// directory. Everything in report.json is a deterministic function of
/// (method, configs); wall time goes to timing.txt, which is outside the
/// determinism contract.
struct RunPaths {
  std::string report_json = "report.json";
  std::string norms_csv;       ///< empty when the run produced no scores
  std::string checkpoint = "checkpoint.bin";
  std::string best_checkpoint = "best_checkpoint.bin";
  std::string distribution;  ///< empty when no sampling distribution exists
};

/// Writes report.json, checkpoints, the score CSV, the stored sampling
/// distribution, and timing.txt into `dir` (created if needed).
RunPaths write_run_report(const std::string& dir, const std::string& method,
                          const DatasetSpec& dataset_spec,
                          const TrainConfig& cfg, const Dataset& data,
                          const RunResult& result);

/// What the diagnostic tooling needs back from a run directory.
struct LoadedRun {
  std::string method;
  DatasetSpec dataset_spec;
  TrainConfig train_config;
  ModelParams final_params;
  ModelParams best_params;
  SamplingDistribution sampling;  ///< empty when the run stored none
};

LoadedRun load_run_dir(const std::string& dir);

/// Sampling distribution file: u32 LE magic 0x50474444, u32 LE version 1,
/// u64 LE count, then count f64 LE probabilities.
void write_distribution(const SamplingDistribution& dist,
                        const std::string& path);
SamplingDistribution read_distribution(const std::string& path);

}  // namespace pgd
