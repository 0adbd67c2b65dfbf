// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "pgdbench/errors.hpp"

namespace pgd {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_comment(const std::string& line) {
  const std::size_t pos = line.find_first_of("#;");
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw FormatError("config line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty())
        throw FormatError("config line " + std::to_string(line_no) +
                          ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty())
      throw FormatError("config line " + std::to_string(line_no) +
                        ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config key " + key + ": cannot parse '" + it->second +
                      "' as a number");
  }
}

std::int64_t Config::get_int(const std::string& key,
                             std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::int64_t v = 0;
  const char* begin = it->second.data();
  const char* end = begin + it->second.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("config key " + key + ": cannot parse '" + it->second +
                      "' as an integer");
  return v;
}

std::uint64_t Config::get_uint(const std::string& key,
                               std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const char* begin = it->second.data();
  const char* end = begin + it->second.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("config key " + key + ": cannot parse '" + it->second +
                      "' as an unsigned integer");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw FormatError("config key " + key + ": cannot parse '" + it->second +
                    "' as a boolean");
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::string> out;
  std::string_view rest = it->second;
  while (!rest.empty()) {
    const std::size_t comma = rest.find(',');
    const std::string item = trim(rest.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_string_list(key)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument("trailing");
      out.push_back(v);
    } catch (const std::exception&) {
      throw FormatError("config key " + key + ": cannot parse '" + item +
                        "' as a number");
    }
  }
  return out;
}

void Config::require_known(std::span<const std::string> known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw FormatError("unknown config key '" + key + "'");
  }
}

NormSpec::Order parse_norm_order(const std::string& text) {
  if (text == "l1") return NormSpec::Order::kL1;
  if (text == "l2") return NormSpec::Order::kL2;
  if (text == "linf") return NormSpec::Order::kLInf;
  throw FormatError("norm order must be l1, l2, or linf, got '" + text + "'");
}

std::string norm_order_name(NormSpec::Order order) {
  switch (order) {
    case NormSpec::Order::kL1:
      return "l1";
    case NormSpec::Order::kL2:
      return "l2";
    case NormSpec::Order::kLInf:
      return "linf";
  }
  throw FormatError("unknown norm order");
}

namespace {

std::size_t positive_size(const Config& cfg, const std::string& key,
                          std::int64_t fallback, bool allow_zero = false) {
  const std::int64_t v = cfg.get_int(key, fallback);
  if (v < 0 || (!allow_zero && v == 0))
    throw FormatError("config key " + key + " must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

TrainConfig parse_train_config(const Config& cfg) {
  TrainConfig out;
  out.epochs_biased = positive_size(cfg, "train.epochs_biased", 15, true);
  out.epochs_debiased = positive_size(cfg, "train.epochs_debiased", 15, true);
  out.batch_size = positive_size(cfg, "train.batch_size", 128);
  out.hidden.clear();
  const std::vector<double> hidden =
      cfg.has("train.hidden") ? cfg.get_double_list("train.hidden")
                              : std::vector<double>{64, 64};
  for (double h : hidden) {
    if (h < 1 || h != std::floor(h))
      throw FormatError("train.hidden entries must be positive integers");
    out.hidden.push_back(static_cast<std::size_t>(h));
  }
  out.gce_alpha = cfg.get_double("train.gce_alpha", 0.7);
  out.inherit_params = cfg.get_bool("train.inherit_params", true);
  out.lff_lambda = cfg.get_double("train.lff_lambda", 1.0);
  out.seed = cfg.get_uint("train.seed", 0);

  out.sgd.learning_rate = cfg.get_double("optimizer.learning_rate", 0.02);
  out.sgd.momentum = cfg.get_double("optimizer.momentum", 0.9);
  out.sgd.weight_decay = cfg.get_double("optimizer.weight_decay", 0.001);
  out.sgd.decay_factor = cfg.get_double("optimizer.decay_factor", 0.1);
  out.sgd.decay_step_epochs =
      positive_size(cfg, "optimizer.decay_step_epochs", 40);

  out.norms.s = parse_norm_order(cfg.get_string("norms.order", "l2"));
  out.norms.r = cfg.get_double("norms.exponent_r", 1.0);
  out.norms.full_network = cfg.get_bool("norms.full_network", false);

  out.augmentation.enabled = cfg.get_bool("augment.enabled", true);
  out.augmentation.rotation_max_deg =
      cfg.get_double("augment.rotation_max_deg", 15.0);
  out.augmentation.color_jitter = cfg.get_double("augment.color_jitter", 0.1);
  const std::int64_t translate = cfg.get_int("augment.translate_max_px", 2);
  if (translate < 0)
    throw FormatError("augment.translate_max_px must be nonnegative");
  out.augmentation.translate_max_px = static_cast<std::size_t>(translate);

  out.validate();
  return out;
}

DatasetSpec parse_dataset_spec(const Config& cfg) {
  DatasetSpec out;
  out.n_train = positive_size(cfg, "dataset.n_train", 10000);
  out.n_val = positive_size(cfg, "dataset.n_val", 2000, true);
  out.n_test = positive_size(cfg, "dataset.n_test", 2000, true);
  out.n_classes = positive_size(cfg, "dataset.n_classes", 10);
  out.rho = cfg.get_double("dataset.rho", 0.01);
  out.n_bias_attributes =
      positive_size(cfg, "dataset.n_bias_attributes", 1);
  out.color_sigma = cfg.get_double("dataset.color_sigma", 0.0001);
  out.image.height = positive_size(cfg, "dataset.height", 16);
  out.image.width = positive_size(cfg, "dataset.width", 16);
  out.image.channels = positive_size(cfg, "dataset.channels", 3);
  out.seed = cfg.get_uint("dataset.seed", 0);
  const std::string source = cfg.get_string("dataset.source", "procedural");
  if (source == "procedural") {
    out.source = DataSource::kProcedural;
  } else if (source == "idx") {
    out.source = DataSource::kExternalIdx;
  } else {
    throw FormatError("dataset.source must be 'procedural' or 'idx', got '" +
                      source + "'");
  }
  out.idx_images_path = cfg.get_string("dataset.idx_images", "");
  out.idx_labels_path = cfg.get_string("dataset.idx_labels", "");
  out.validate();
  return out;
}

JttConfig parse_jtt_config(const Config& cfg, double rho) {
  JttConfig out;
  out.lambda_up = cfg.get_double("jtt.lambda_up", 1.0 / rho);
  out.validate();
  return out;
}

std::vector<std::string> known_config_keys() {
  return {
      "train.epochs_biased",     "train.epochs_debiased",
      "train.batch_size",        "train.hidden",
      "train.gce_alpha",         "train.inherit_params",
      "train.lff_lambda",        "train.seed",
      "optimizer.learning_rate", "optimizer.momentum",
      "optimizer.weight_decay",  "optimizer.decay_factor",
      "optimizer.decay_step_epochs",
      "norms.order",             "norms.exponent_r",
      "norms.full_network",
      "augment.enabled",         "augment.rotation_max_deg",
      "augment.color_jitter",    "augment.translate_max_px",
      "dataset.n_train",         "dataset.n_val",
      "dataset.n_test",          "dataset.n_classes",
      "dataset.rho",             "dataset.n_bias_attributes",
      "dataset.color_sigma",     "dataset.height",
      "dataset.width",           "dataset.channels",
      "dataset.seed",            "dataset.source",
      "dataset.idx_images",      "dataset.idx_labels",
      "jtt.lambda_up",
  };
}

}  // namespace pgd
