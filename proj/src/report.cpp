// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/report.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pgdbench/config.hpp"
#include "pgdbench/errors.hpp"

namespace pgd {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint32_t kDistMagic = 0x50474444;  // "DDGP" little-endian
constexpr std::uint32_t kDistVersion = 1;

Json split_accuracy_json(const SplitAccuracy& acc) {
  Json j;
  j["overall"] = acc.overall;
  j["aligned"] = acc.aligned;
  j["conflicting"] = acc.conflicting;
  j["n"] = acc.n;
  j["n_aligned"] = acc.n_aligned;
  j["n_conflicting"] = acc.n_conflicting;
  return j;
}

SplitAccuracy split_accuracy_from_json(const Json& j) {
  SplitAccuracy acc;
  acc.overall = j.at("overall").get<double>();
  acc.aligned = j.at("aligned").get<double>();
  acc.conflicting = j.at("conflicting").get<double>();
  acc.n = j.at("n").get<std::size_t>();
  acc.n_aligned = j.at("n_aligned").get<std::size_t>();
  acc.n_conflicting = j.at("n_conflicting").get<std::size_t>();
  return acc;
}

Json metric_report_json(const MetricReport& report, bool with_histogram) {
  Json j = split_accuracy_json(report.accuracy);
  j["worst_group"] = report.worst_group;
  j["per_class"] = report.per_class;
  if (with_histogram) {
    j["histogram"] = {{"aligned", report.histogram.aligned},
                      {"conflicting", report.histogram.conflicting}};
  }
  return j;
}

Json dataset_spec_json(const DatasetSpec& spec) {
  Json j;
  j["n_train"] = spec.n_train;
  j["n_val"] = spec.n_val;
  j["n_test"] = spec.n_test;
  j["n_classes"] = spec.n_classes;
  j["rho"] = spec.rho;
  j["n_bias_attributes"] = spec.n_bias_attributes;
  j["color_sigma"] = spec.color_sigma;
  j["height"] = spec.image.height;
  j["width"] = spec.image.width;
  j["channels"] = spec.image.channels;
  j["seed"] = spec.seed;
  j["source"] =
      spec.source == DataSource::kProcedural ? "procedural" : "idx";
  j["idx_images"] = spec.idx_images_path;
  j["idx_labels"] = spec.idx_labels_path;
  return j;
}

DatasetSpec dataset_spec_from_json(const Json& j) {
  DatasetSpec spec;
  spec.n_train = j.at("n_train").get<std::size_t>();
  spec.n_val = j.at("n_val").get<std::size_t>();
  spec.n_test = j.at("n_test").get<std::size_t>();
  spec.n_classes = j.at("n_classes").get<std::size_t>();
  spec.rho = j.at("rho").get<double>();
  spec.n_bias_attributes = j.at("n_bias_attributes").get<std::size_t>();
  spec.color_sigma = j.at("color_sigma").get<double>();
  spec.image.height = j.at("height").get<std::size_t>();
  spec.image.width = j.at("width").get<std::size_t>();
  spec.image.channels = j.at("channels").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.source = j.at("source").get<std::string>() == "idx"
                    ? DataSource::kExternalIdx
                    : DataSource::kProcedural;
  spec.idx_images_path = j.at("idx_images").get<std::string>();
  spec.idx_labels_path = j.at("idx_labels").get<std::string>();
  return spec;
}

Json train_config_json(const TrainConfig& cfg) {
  Json j;
  j["epochs_biased"] = cfg.epochs_biased;
  j["epochs_debiased"] = cfg.epochs_debiased;
  j["batch_size"] = cfg.batch_size;
  j["hidden"] = cfg.hidden;
  j["gce_alpha"] = cfg.gce_alpha;
  j["inherit_params"] = cfg.inherit_params;
  j["lff_lambda"] = cfg.lff_lambda;
  j["seed"] = cfg.seed;
  j["optimizer"] = {{"learning_rate", cfg.sgd.learning_rate},
                    {"momentum", cfg.sgd.momentum},
                    {"weight_decay", cfg.sgd.weight_decay},
                    {"decay_factor", cfg.sgd.decay_factor},
                    {"decay_step_epochs", cfg.sgd.decay_step_epochs}};
  j["norms"] = {{"order", norm_order_name(cfg.norms.s)},
                {"exponent_r", cfg.norms.r},
                {"full_network", cfg.norms.full_network}};
  j["augment"] = {{"enabled", cfg.augmentation.enabled},
                  {"rotation_max_deg", cfg.augmentation.rotation_max_deg},
                  {"color_jitter", cfg.augmentation.color_jitter},
                  {"translate_max_px", cfg.augmentation.translate_max_px}};
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig cfg;
  cfg.epochs_biased = j.at("epochs_biased").get<std::size_t>();
  cfg.epochs_debiased = j.at("epochs_debiased").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  cfg.gce_alpha = j.at("gce_alpha").get<double>();
  cfg.inherit_params = j.at("inherit_params").get<bool>();
  cfg.lff_lambda = j.at("lff_lambda").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const Json& opt = j.at("optimizer");
  cfg.sgd.learning_rate = opt.at("learning_rate").get<double>();
  cfg.sgd.momentum = opt.at("momentum").get<double>();
  cfg.sgd.weight_decay = opt.at("weight_decay").get<double>();
  cfg.sgd.decay_factor = opt.at("decay_factor").get<double>();
  cfg.sgd.decay_step_epochs = opt.at("decay_step_epochs").get<std::size_t>();
  const Json& norms = j.at("norms");
  cfg.norms.s = parse_norm_order(norms.at("order").get<std::string>());
  cfg.norms.r = norms.at("exponent_r").get<double>();
  cfg.norms.full_network = norms.at("full_network").get<bool>();
  const Json& aug = j.at("augment");
  cfg.augmentation.enabled = aug.at("enabled").get<bool>();
  cfg.augmentation.rotation_max_deg =
      aug.at("rotation_max_deg").get<double>();
  cfg.augmentation.color_jitter = aug.at("color_jitter").get<double>();
  cfg.augmentation.translate_max_px =
      aug.at("translate_max_px").get<std::size_t>();
  return cfg;
}

}  // namespace

RunPaths write_run_report(const std::string& dir, const std::string& method,
                          const DatasetSpec& dataset_spec,
                          const TrainConfig& cfg, const Dataset& data,
                          const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  RunPaths paths;

  save_params(result.final_params, dir + "/" + paths.checkpoint);
  save_params(result.best_params, dir + "/" + paths.best_checkpoint);
  if (!result.score_records.empty()) {
    paths.norms_csv = "norms.csv";
    export_grad_norms_csv_eval(result.score_records, data.train,
                               dir + "/" + paths.norms_csv);
  }
  if (!result.sampling.probabilities.empty()) {
    paths.distribution = "distribution.bin";
    write_distribution(result.sampling, dir + "/" + paths.distribution);
  }

  Json doc;
  doc["method"] = method;
  doc["dataset"] = dataset_spec_json(dataset_spec);
  doc["train_config"] = train_config_json(cfg);
  doc["epochs"] = Json::array();
  for (const EpochMetrics& m : result.history) {
    Json row;
    row["train"] = split_accuracy_json(m.train);
    row["val"] = split_accuracy_json(m.val);
    row["test"] = split_accuracy_json(m.test);
    doc["epochs"].push_back(std::move(row));
  }
  if (!data.test.empty()) {
    doc["final"] = metric_report_json(
        evaluate(result.final_params, data.test), false);
    doc["best"] = {{"epoch", result.best_epoch},
                   {"val_accuracy", result.best_val_accuracy},
                   {"test", metric_report_json(
                                evaluate(result.best_params, data.test),
                                false)}};
  }
  if (!result.score_records.empty()) {
    const NormHistogram hist =
        norm_histogram(result.score_records, data.train);
    doc["train_histogram"] = {{"aligned", hist.aligned},
                              {"conflicting", hist.conflicting}};
  }
  doc["clamp_events"] = result.clamp_events;
  doc["artifacts"] = {{"norms_csv", paths.norms_csv},
                      {"checkpoint", paths.checkpoint},
                      {"best_checkpoint", paths.best_checkpoint},
                      {"distribution", paths.distribution}};

  {
    std::ofstream out(dir + "/" + paths.report_json,
                      std::ios::trunc | std::ios::binary);
    if (!out)
      throw FormatError("cannot open " + dir + "/report.json for writing");
    out << doc.dump(2) << "\n";
  }
  {
    std::ofstream timing(dir + "/timing.txt", std::ios::trunc);
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_time_seconds=%.6f\n",
                  result.wall_time_seconds);
    timing << buf;
  }
  return paths;
}

LoadedRun load_run_dir(const std::string& dir) {
  std::ifstream in(dir + "/report.json", std::ios::binary);
  if (!in) throw FormatError("cannot open " + dir + "/report.json");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(dir + "/report.json: " + err.what());
  }
  LoadedRun run;
  try {
    run.method = doc.at("method").get<std::string>();
    run.dataset_spec = dataset_spec_from_json(doc.at("dataset"));
    run.train_config = train_config_from_json(doc.at("train_config"));
    const Json& artifacts = doc.at("artifacts");
    run.final_params =
        load_params(dir + "/" + artifacts.at("checkpoint").get<std::string>());
    run.best_params = load_params(
        dir + "/" + artifacts.at("best_checkpoint").get<std::string>());
    const std::string dist = artifacts.at("distribution").get<std::string>();
    if (!dist.empty()) run.sampling = read_distribution(dir + "/" + dist);
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(dir + "/report.json: " + err.what());
  }
  return run;
}

void write_distribution(const SamplingDistribution& dist,
                        const std::string& path) {
  dist.validate();
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  auto put32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put32(kDistMagic);
  put32(kDistVersion);
  const std::uint64_t n = dist.probabilities.size();
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(n >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
  out.write(reinterpret_cast<const char*>(dist.probabilities.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw FormatError("short write to " + path);
}

SamplingDistribution read_distribution(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  auto get32 = [&in, &path]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw FormatError(path + ": truncated header");
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  if (get32() != kDistMagic)
    throw FormatError(path + ": not a sampling distribution file");
  if (get32() != kDistVersion)
    throw FormatError(path + ": unsupported distribution version");
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw FormatError(path + ": truncated header");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  SamplingDistribution dist;
  dist.probabilities.resize(n);
  if (!in.read(reinterpret_cast<char*>(dist.probabilities.data()),
               static_cast<std::streamsize>(n * sizeof(double))))
    throw FormatError(path + ": truncated probabilities");
  in.peek();
  if (!in.eof()) throw FormatError(path + ": trailing bytes");
  dist.validate();
  return dist;
}

}  // namespace pgd
