// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pgdbench/tensor.hpp"

namespace pgd {

enum class DataSource { kProcedural, kExternalIdx };

struct ImageShape {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;

  std::size_t pixel_count() const { return height * width; }
  std::size_t element_count() const { return height * width * channels; }
};

/// Full description of one synthetic biased dataset. `rho` is the fraction
/// of bias-conflicting samples; evaluation splits are generated at rho = 0.9
/// so color carries no usable class information there.
struct DatasetSpec {
  std::size_t n_train = 10000;
  std::size_t n_val = 2000;
  std::size_t n_test = 2000;
  std::size_t n_classes = 10;
  double rho = 0.01;
  std::size_t n_bias_attributes = 1;
  double color_sigma = 0.0001;
  ImageShape image;
  std::uint64_t seed = 0;
  DataSource source = DataSource::kProcedural;
  std::string idx_images_path;
  std::string idx_labels_path;

  void validate() const;
};

/// One labeled image. `bias_values[a]` is the color index attribute `a`
/// received; `aligned[a]` is true iff that index equals the target class.
/// Alignment is evaluation-only metadata: training code receives TrainView,
/// which does not expose it.
struct LabeledSample {
  Tensor image;  ///< rank-3, height x width x channels, values in [0,1]
  int target = 0;
  std::vector<int> bias_values;
  std::vector<bool> aligned;

  bool fully_aligned() const {
    for (bool a : aligned)
      if (!a) return false;
    return true;
  }
};

/// What the training path is allowed to see: pixels and the label, nothing
/// about bias alignment.
struct TrainView {
  const Tensor* image = nullptr;
  int target = 0;
};

std::vector<TrainView> training_view(const std::vector<LabeledSample>& samples);

struct Dataset {
  DatasetSpec spec;
  /// colors[attribute][class] = RGB bias color, drawn at generation start.
  std::vector<std::vector<std::array<double, 3>>> colors;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

/// Generates train/val/test splits. Pure function of the spec: each sample's
/// randomness derives from (seed, split, index), so output is reproducible
/// and order-independent.
Dataset generate_biased_dataset(const DatasetSpec& spec);

/// Deterministic binary glyph for a class, distinct per class (stroke
/// patterns on a seven-segment grid). Exposed for tests.
std::vector<std::uint8_t> glyph_mask(int cls, std::size_t height,
                                     std::size_t width);

/// IDX (big-endian) image/label reader. Images come back as rank-2 tensors
/// scaled to [0,1]. Throws FormatError on bad magic, truncation, or an
/// image/label count mismatch.
std::pair<std::vector<Tensor>, std::vector<int>> load_idx_images(
    const std::string& images_path, const std::string& labels_path);

struct AugmentationSpec {
  double rotation_max_deg = 15.0;
  double color_jitter = 0.1;
  std::size_t translate_max_px = 2;
  bool enabled = true;
};

/// Applies rotation (bilinear, zero-padded), integer translation, and
/// per-channel color jitter. Stateless: the same (seed, epoch, index) always
/// produces the same augmentation. The random stream is
/// Rng(derive_seed(seed, 0x6175676d656e7472, epoch, index)) with draws in the
/// order: angle, dx, dy (only if translate_max_px > 0), one jitter offset per
/// channel. This derivation is part of the contract so callers can reproduce
/// an augmentation without replaying a whole epoch.
Tensor augment(const Tensor& image, const AugmentationSpec& spec,
               std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

/// Partition sample indices by the conjunction of per-attribute alignment.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_by_alignment(const std::vector<LabeledSample>& samples);

/// FNV-1a 64-bit hash, used for split checksums in the manifest.
std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);

/// Serializes one split as float32 little-endian images plus uint32 labels
/// behind a small header (see README). Returns the FNV-1a checksum of the
/// payload bytes.
std::uint64_t write_raw_split(const std::vector<LabeledSample>& samples,
                              const ImageShape& shape, const std::string& path);

/// Writes the dataset manifest (spec, bias colors, split checksums) as JSON.
void write_manifest(const Dataset& data,
                    const std::vector<std::uint64_t>& split_checksums,
                    const std::string& path);

}  // namespace pgd
