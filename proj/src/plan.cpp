// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/plan.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pgdbench/errors.hpp"
#include "pgdbench/fisher.hpp"
#include "pgdbench/metrics.hpp"
#include "pgdbench/report.hpp"
#include "pgdbench/rng.hpp"

namespace pgd {

namespace {

constexpr std::uint64_t kTagPlanData = 0x706c616e64617461ULL;   // "plandata"
constexpr std::uint64_t kTagPlanTrain = 0x706c616e7472616eULL;  // "plantran"

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Cell {
  std::size_t method_i = 0;
  std::size_t rho_i = 0;
  std::size_t norm_i = 0;
  std::size_t seed_i = 0;
};

std::vector<Cell> enumerate_cells(const ExperimentPlan& plan) {
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < plan.methods.size(); ++m)
    for (std::size_t r = 0; r < plan.rhos.size(); ++r)
      for (std::size_t n = 0; n < plan.norms.size(); ++n)
        for (std::size_t s = 0; s < plan.seed_count; ++s)
          cells.push_back({m, r, n, s});
  return cells;
}

std::string cell_dir_name(const ExperimentPlan& plan, const Cell& cell) {
  const NormSpec& norm = plan.norms[cell.norm_i];
  std::ostringstream name;
  name << method_name(plan.methods[cell.method_i]) << "_rho"
       << format_double(plan.rhos[cell.rho_i]) << "_"
       << norm_order_name(norm.s) << "_r" << format_double(norm.r) << "_seed"
       << cell.seed_i;
  return plan.out_dir + "/" + name.str();
}

/// Effective per-cell configuration after the plan's overrides.
struct CellConfig {
  DatasetSpec dataset;
  TrainConfig train;
  JttConfig jtt;
};

CellConfig cell_config(const ExperimentPlan& plan, const Cell& cell) {
  CellConfig out;
  out.dataset = plan.dataset;
  out.dataset.rho = plan.rhos[cell.rho_i];
  out.dataset.seed = derive_seed(plan.dataset.seed, kTagPlanData,
                                 plan.seed_base + cell.seed_i);
  out.train = plan.train;
  out.train.norms = plan.norms[cell.norm_i];
  out.train.seed = derive_seed(plan.train.seed, kTagPlanTrain,
                               plan.seed_base + cell.seed_i);
  out.jtt.lambda_up = plan.jtt_lambda_up > 0.0 ? plan.jtt_lambda_up
                                               : 1.0 / out.dataset.rho;
  return out;
}

std::string cell_signature(const ExperimentPlan& plan, const Cell& cell) {
  const CellConfig cfg = cell_config(plan, cell);
  std::ostringstream sig;
  sig << "cellsig/1\n";
  sig << "method=" << method_name(plan.methods[cell.method_i]) << "\n";
  const DatasetSpec& d = cfg.dataset;
  sig << "dataset=" << d.n_train << "," << d.n_val << "," << d.n_test << ","
      << d.n_classes << "," << format_full(d.rho) << ","
      << d.n_bias_attributes << "," << format_full(d.color_sigma) << ","
      << d.image.height << "," << d.image.width << "," << d.image.channels
      << "," << d.seed << ","
      << (d.source == DataSource::kProcedural ? "procedural" : "idx") << ","
      << d.idx_images_path << "," << d.idx_labels_path << "\n";
  const TrainConfig& t = cfg.train;
  sig << "train=" << t.epochs_biased << "," << t.epochs_debiased << ","
      << t.batch_size << ",";
  for (std::size_t h : t.hidden) sig << h << "+";
  sig << "," << format_full(t.gce_alpha) << "," << t.inherit_params << ","
      << format_full(t.lff_lambda) << "," << t.seed << "\n";
  sig << "sgd=" << format_full(t.sgd.learning_rate) << ","
      << format_full(t.sgd.momentum) << "," << format_full(t.sgd.weight_decay)
      << "," << format_full(t.sgd.decay_factor) << ","
      << t.sgd.decay_step_epochs << "\n";
  sig << "norms=" << norm_order_name(t.norms.s) << ","
      << format_full(t.norms.r) << "," << t.norms.full_network << "\n";
  sig << "augment=" << t.augmentation.enabled << ","
      << format_full(t.augmentation.rotation_max_deg) << ","
      << format_full(t.augmentation.color_jitter) << ","
      << t.augmentation.translate_max_px << "\n";
  sig << "jtt=" << format_full(cfg.jtt.lambda_up) << "\n";
  return sig.str();
}

std::string signature_hash(const std::string& sig) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx",
                static_cast<unsigned long long>(fnv1a64(
                    reinterpret_cast<const unsigned char*>(sig.data()),
                    sig.size())));
  return buf;
}

bool cell_is_done(const std::string& dir, const std::string& hash) {
  std::ifstream in(dir + "/cell.done");
  if (!in) return false;
  std::string stored;
  std::getline(in, stored);
  return stored == hash;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "vanilla") return Method::kVanilla;
  if (name == "pgd") return Method::kPgd;
  if (name == "pgd-single") return Method::kPgdSingleStage;
  if (name == "pgd-reweight") return Method::kPgdReweight;
  if (name == "loss-resample") return Method::kLossResample;
  if (name == "jtt") return Method::kJtt;
  if (name == "lff") return Method::kLff;
  throw FormatError(
      "unknown method '" + name +
      "' (expected vanilla, pgd, pgd-single, pgd-reweight, loss-resample, "
      "jtt, or lff)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kVanilla:
      return "vanilla";
    case Method::kPgd:
      return "pgd";
    case Method::kPgdSingleStage:
      return "pgd-single";
    case Method::kPgdReweight:
      return "pgd-reweight";
    case Method::kLossResample:
      return "loss-resample";
    case Method::kJtt:
      return "jtt";
    case Method::kLff:
      return "lff";
  }
  throw FormatError("unknown method enum value");
}

RunResult run_method(Method method, const Dataset& data,
                     const TrainConfig& cfg, const JttConfig& jtt) {
  switch (method) {
    case Method::kVanilla:
      return train_vanilla(data, cfg);
    case Method::kPgd:
      return train_pgd(data, cfg);
    case Method::kPgdSingleStage:
      return train_pgd_single_stage(data, cfg);
    case Method::kPgdReweight:
      return train_pgd_reweight(data, cfg);
    case Method::kLossResample:
      return train_loss_resample(data, cfg);
    case Method::kJtt:
      return train_jtt(data, cfg, jtt);
    case Method::kLff:
      return train_lff(data, cfg);
  }
  throw FormatError("unknown method enum value");
}

void ExperimentPlan::validate() const {
  if (methods.empty()) throw FormatError("plan has no methods");
  if (rhos.empty()) throw FormatError("plan has no rho values");
  if (norms.empty()) throw FormatError("plan has no norm settings");
  if (seed_count == 0) throw FormatError("plan needs seed_count >= 1");
  if (out_dir.empty()) throw FormatError("plan has no output directory");
  for (double rho : rhos)
    if (!(rho > 0.0) || rho > 1.0)
      throw FormatError("plan rho values must lie in (0, 1]");
  dataset.validate();
  train.validate();
  if (jtt_lambda_up < 0.0)
    throw FormatError("plan jtt_lambda_up must be nonnegative");
}

ExperimentPlan parse_plan(const Config& cfg, const std::string& fallback_out) {
  ExperimentPlan plan;
  const std::vector<std::string> methods =
      cfg.has("plan.methods") ? cfg.get_string_list("plan.methods")
                              : std::vector<std::string>{"vanilla", "pgd"};
  for (const std::string& name : methods)
    plan.methods.push_back(parse_method(name));
  plan.rhos = cfg.has("plan.rhos") ? cfg.get_double_list("plan.rhos")
                                   : std::vector<double>{0.01};
  const std::vector<std::string> orders =
      cfg.has("plan.norm_orders") ? cfg.get_string_list("plan.norm_orders")
                                  : std::vector<std::string>{"l2"};
  const std::vector<double> exponents =
      cfg.has("plan.norm_exponents") ? cfg.get_double_list("plan.norm_exponents")
                                     : std::vector<double>{1.0};
  for (const std::string& order : orders)
    for (double r : exponents) {
      NormSpec norm;
      norm.s = parse_norm_order(order);
      norm.r = r;
      plan.norms.push_back(norm);
    }
  plan.seed_count =
      static_cast<std::size_t>(cfg.get_int("plan.seed_count", 3));
  plan.seed_base = cfg.get_uint("plan.seed_base", 0);
  plan.out_dir = cfg.get_string("plan.out", fallback_out);
  plan.jtt_lambda_up = cfg.get_double("plan.jtt_lambda_up", 0.0);
  plan.dataset = parse_dataset_spec(cfg);
  plan.train = parse_train_config(cfg);
  plan.validate();
  return plan;
}

std::vector<std::string> known_plan_keys() {
  std::vector<std::string> keys = known_config_keys();
  const char* extra[] = {"plan.methods",        "plan.rhos",
                         "plan.norm_orders",    "plan.norm_exponents",
                         "plan.seed_count",     "plan.seed_base",
                         "plan.out",            "plan.jtt_lambda_up"};
  keys.insert(keys.end(), std::begin(extra), std::end(extra));
  return keys;
}

PlanOutcome run_plan(const ExperimentPlan& plan, std::size_t workers) {
  plan.validate();
  if (workers == 0) throw DimensionError("run_plan needs at least one worker");
  std::filesystem::create_directories(plan.out_dir);
  const std::vector<Cell> cells = enumerate_cells(plan);

  PlanOutcome outcome;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      const std::string dir = cell_dir_name(plan, cell);
      const std::string hash = signature_hash(cell_signature(plan, cell));
      if (cell_is_done(dir, hash)) {
        const std::lock_guard<std::mutex> lock(mu);
        ++outcome.skipped;
        continue;
      }
      try {
        const CellConfig cfg = cell_config(plan, cell);
        const Dataset data = generate_biased_dataset(cfg.dataset);
        const Method method = plan.methods[cell.method_i];
        const RunResult result =
            run_method(method, data, cfg.train, cfg.jtt);
        write_run_report(dir, method_name(method), cfg.dataset, cfg.train,
                         data, result);
        std::ofstream done(dir + "/cell.done", std::ios::trunc);
        done << hash << "\n";
        if (!done) throw FormatError("cannot write " + dir + "/cell.done");
        const std::lock_guard<std::mutex> lock(mu);
        ++outcome.completed;
      } catch (const std::exception& err) {
        const std::lock_guard<std::mutex> lock(mu);
        ++outcome.failed;
        outcome.failures.push_back(dir + ": " + err.what());
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers = std::min<std::size_t>(workers, cells.size());
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();

  write_aggregate_csv(plan, plan.out_dir + "/aggregate.csv");
  return outcome;
}

void write_aggregate_csv(const ExperimentPlan& plan, const std::string& path) {
  struct RowStats {
    std::vector<double> acc;
    std::vector<double> aligned;
    std::vector<double> conflicting;
    std::vector<double> worst_group;
    std::vector<double> efi_trace;
  };
  std::map<std::array<std::size_t, 3>, RowStats> rows;

  // Seed-major iteration so each dataset is generated once and released
  // before the next; cells reuse it across methods and norms.
  for (std::size_t r = 0; r < plan.rhos.size(); ++r) {
    for (std::size_t s = 0; s < plan.seed_count; ++s) {
      Dataset data;
      bool have_data = false;
      for (std::size_t m = 0; m < plan.methods.size(); ++m) {
        for (std::size_t n = 0; n < plan.norms.size(); ++n) {
          const Cell cell{m, r, n, s};
          const std::string dir = cell_dir_name(plan, cell);
          std::ifstream in(dir + "/report.json", std::ios::binary);
          if (!in) continue;  // failed or not-yet-run cell
          nlohmann::json doc;
          try {
            doc = nlohmann::json::parse(in);
          } catch (const nlohmann::json::exception&) {
            continue;
          }
          if (!doc.contains("best")) continue;
          const nlohmann::json& best = doc["best"]["test"];
          RowStats& stats = rows[{m, r, n}];
          stats.acc.push_back(best.at("overall").get<double>());
          stats.aligned.push_back(best.at("aligned").get<double>());
          stats.conflicting.push_back(best.at("conflicting").get<double>());
          stats.worst_group.push_back(best.at("worst_group").get<double>());

          if (!have_data) {
            data = generate_biased_dataset(cell_config(plan, cell).dataset);
            have_data = true;
          }
          const ModelParams params =
              load_params(dir + "/best_checkpoint.bin");
          const std::string dist_name =
              doc.at("artifacts").at("distribution").get<std::string>();
          const SamplingDistribution dist =
              dist_name.empty()
                  ? SamplingDistribution::uniform(data.train.size())
                  : read_distribution(dir + "/" + dist_name);
          const std::vector<TrainView> views = training_view(data.train);
          stats.efi_trace.push_back(trace_inverse(efi(params, views, dist)));
        }
      }
    }
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "method, rho, norm_s, norm_r, seed_count, acc_mean, acc_std, "
         "aligned_acc_mean, conflicting_acc_mean, worst_group_mean, "
         "efi_trace_inv\n";
  for (std::size_t m = 0; m < plan.methods.size(); ++m)
    for (std::size_t r = 0; r < plan.rhos.size(); ++r)
      for (std::size_t n = 0; n < plan.norms.size(); ++n) {
        const auto it = rows.find({m, r, n});
        if (it == rows.end()) continue;
        const RowStats& stats = it->second;
        out << method_name(plan.methods[m]) << ", "
            << format_double(plan.rhos[r]) << ", "
            << norm_order_name(plan.norms[n].s) << ", "
            << format_double(plan.norms[n].r) << ", " << stats.acc.size()
            << ", " << format_full(mean(stats.acc)) << ", "
            << format_full(sample_std(stats.acc)) << ", "
            << format_full(mean(stats.aligned)) << ", "
            << format_full(mean(stats.conflicting)) << ", "
            << format_full(mean(stats.worst_group)) << ", "
            << format_full(mean(stats.efi_trace)) << "\n";
      }
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace pgd
