// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pgdbench/dataset.hpp"
#include "pgdbench/pipelines.hpp"

namespace pgd {

/// Key-value config text: `[section]` headers, `key = value` lines, `#` or
/// `;` comments (full-line or trailing), blank lines ignored. Keys are
/// addressed as "section.key"; keys before any header have no prefix.
/// Duplicate keys keep the last value. Parsing is syntax-only; typed getters
/// and the profile loaders below do the validation.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated lists; empty value -> empty list.
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  /// Rejects keys outside `known` (FormatError naming the first offender).
  /// Catches config typos that would otherwise silently fall back to
  /// defaults.
  void require_known(std::span<const std::string> known) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Builds the training configuration from `[train]`, `[optimizer]`,
/// `[norms]`, and `[augment]` sections; every key has the default profile
/// value (see README) so an empty config is the desk-scale profile.
TrainConfig parse_train_config(const Config& cfg);

/// Builds the dataset description from the `[dataset]` section.
DatasetSpec parse_dataset_spec(const Config& cfg);

/// `[jtt]` section. `lambda_up` defaults to 1/rho.
JttConfig parse_jtt_config(const Config& cfg, double rho);

/// Every key the training/dataset/jtt loaders understand; the CLI passes
/// this to require_known.
std::vector<std::string> known_config_keys();

NormSpec::Order parse_norm_order(const std::string& text);
std::string norm_order_name(NormSpec::Order order);

}  // namespace pgd
