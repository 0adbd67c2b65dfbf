// Copyright (c) 2026 pgdbench developers
// SPDX-License-Identifier: Apache-2.0

#include "pgdbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pgdbench/errors.hpp"
#include "pgdbench/rng.hpp"

namespace pgd {

namespace {

constexpr std::uint64_t kTagColors = 0x62696173636f6c6full;   // "biascolo"
constexpr std::uint64_t kTagSample = 0x73616d706c65726eull;   // "samplern"
constexpr std::uint64_t kTagAugment = 0x6175676d656e7472ull;  // "augmentr"

// Texture of the procedural glyphs. Stroke dropout and background speckle
// give the shape class intra-class variance, so shape is genuinely harder
// to learn than the (nearly constant) bias color.
constexpr double kGlyphDropout = 0.08;
constexpr double kSpeckleRate = 0.02;
constexpr double kMinStroke = 0.7;

constexpr std::uint64_t kSplitTrain = 0;
constexpr std::uint64_t kSplitVal = 1;
constexpr std::uint64_t kSplitTest = 2;

/// Evaluation splits are generated at this conflict rate: with 10 classes a
/// 0.9 conflict fraction spreads colors uniformly, removing the shortcut.
constexpr double kEvalRho = 0.9;

// Seven-segment encodings, bits: A=1 B=2 C=4 D=8 E=16 F=32 G=64.
constexpr int kDigitSegments[10] = {63, 6, 91, 79, 102, 109, 125, 7, 127, 111};

int popcount7(int m) {
  int n = 0;
  for (int b = 0; b < 7; ++b) n += (m >> b) & 1;
  return n;
}

int segments_for_class(int cls) {
  if (cls < 10) return kDigitSegments[cls];
  // Remaining classes walk the non-digit segment subsets (popcount >= 2) in a
  // fixed order, so every class below ~120 gets a distinct shape.
  std::vector<int> pool;
  for (int m = 1; m < 128; ++m) {
    if (popcount7(m) < 2) continue;
    if (std::find(std::begin(kDigitSegments), std::end(kDigitSegments), m) !=
        std::end(kDigitSegments))
      continue;
    pool.push_back(m);
  }
  std::sort(pool.begin(), pool.end(), [](int a, int b) {
    const int pa = popcount7(a), pb = popcount7(b);
    return pa != pb ? pa < pb : a < b;
  });
  return pool[static_cast<std::size_t>(cls - 10) % pool.size()];
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct SampleColors {
  std::vector<int> values;
  std::vector<bool> aligned;
  std::vector<std::array<double, 3>> rgb;
};

/// Per-attribute conflict coin, value index, and jittered color, drawn in a
/// fixed order from the per-sample stream.
SampleColors draw_sample_colors(
    Rng& rng, int target, double rho, double sigma,
    const std::vector<std::vector<std::array<double, 3>>>& colors) {
  SampleColors out;
  const std::size_t c = colors.front().size();
  for (std::size_t attr = 0; attr < colors.size(); ++attr) {
    const double u = rng.uniform();
    int value = target;
    if (u < rho) {
      const std::uint64_t k = rng.uniform_index(c - 1);
      value = static_cast<int>(k >= static_cast<std::uint64_t>(target) ? k + 1 : k);
    }
    std::array<double, 3> rgb;
    for (int ch = 0; ch < 3; ++ch)
      rgb[ch] = clamp01(colors[attr][value][ch] + sigma * rng.normal());
    out.values.push_back(value);
    out.aligned.push_back(value == target);
    out.rgb.push_back(rgb);
  }
  return out;
}

LabeledSample render_procedural(Rng& rng, int target, const ImageShape& shape,
                                const SampleColors& sc) {
  LabeledSample s;
  s.target = target;
  s.bias_values = sc.values;
  s.aligned = sc.aligned;
  s.image = Tensor({shape.height, shape.width, shape.channels}, 0.0);
  const std::vector<std::uint8_t> mask =
      glyph_mask(target, shape.height, shape.width);
  const bool has_bg = sc.rgb.size() > 1;
  for (std::size_t r = 0; r < shape.height; ++r) {
    for (std::size_t c = 0; c < shape.width; ++c) {
      const std::size_t p = r * shape.width + c;
      double* px = s.image.data.data() + p * shape.channels;
      bool lit = false;
      if (mask[p]) {
        lit = rng.uniform() >= kGlyphDropout;
      } else {
        lit = rng.uniform() < kSpeckleRate;
      }
      if (lit) {
        const double brightness = rng.uniform(kMinStroke, 1.0);
        for (std::size_t ch = 0; ch < shape.channels; ++ch)
          px[ch] = sc.rgb[0][ch % 3] * brightness;
      } else if (has_bg) {
        for (std::size_t ch = 0; ch < shape.channels; ++ch)
          px[ch] = sc.rgb[1][ch % 3];
      }
    }
  }
  return s;
}

LabeledSample render_colorized(Rng& rng, int target, const Tensor& gray,
                               const SampleColors& sc) {
  LabeledSample s;
  s.target = target;
  s.bias_values = sc.values;
  s.aligned = sc.aligned;
  const std::size_t h = gray.rows();
  const std::size_t w = gray.cols();
  s.image = Tensor({h, w, 3}, 0.0);
  const bool has_bg = sc.rgb.size() > 1;
  for (std::size_t p = 0; p < h * w; ++p) {
    const double g = gray.data[p];
    double* px = s.image.data.data() + p * 3;
    for (int ch = 0; ch < 3; ++ch) {
      px[ch] = g * sc.rgb[0][ch];
      if (has_bg) px[ch] += (1.0 - g) * sc.rgb[1][ch];
    }
  }
  (void)rng;
  return s;
}

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw FormatError("idx file truncated: " + path);
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_u32_le(out, bits);
}

}  // namespace

void DatasetSpec::validate() const {
  if (n_classes < 2) throw DimensionError("dataset needs at least 2 classes");
  if (!(rho > 0.0) || rho > 1.0)
    throw DimensionError("rho must lie in (0, 1]");
  if (n_bias_attributes < 1 || n_bias_attributes > 2)
    throw DimensionError("procedural renderer supports 1 or 2 bias attributes");
  if (color_sigma < 0.0) throw DimensionError("color_sigma must be nonnegative");
  if (image.height < 8 || image.width < 8)
    throw DimensionError("image must be at least 8x8");
  if (image.channels != 3) throw DimensionError("images are RGB (3 channels)");
  if (n_train == 0) throw DimensionError("n_train must be positive");
  if (source == DataSource::kExternalIdx &&
      (idx_images_path.empty() || idx_labels_path.empty()))
    throw DimensionError("external source needs image and label paths");
}

std::vector<TrainView> training_view(const std::vector<LabeledSample>& samples) {
  std::vector<TrainView> view;
  view.reserve(samples.size());
  for (const LabeledSample& s : samples) view.push_back({&s.image, s.target});
  return view;
}

std::vector<std::uint8_t> glyph_mask(int cls, std::size_t height,
                                     std::size_t width) {
  if (cls < 0) throw DimensionError("glyph class must be nonnegative");
  const int segs = segments_for_class(cls);
  const std::size_t top = height / 8;
  const std::size_t bottom = height - height / 8 - 1;
  const std::size_t left = width / 4;
  const std::size_t right = width - width / 4 - 1;
  const std::size_t mid = (top + bottom) / 2;
  const std::size_t th = std::max<std::size_t>(1, height / 8);
  std::vector<std::uint8_t> mask(height * width, 0);
  auto fill = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) mask[r * width + c] = 1;
  };
  if (segs & 1) fill(top, top + th - 1, left, right);                     // A
  if (segs & 2) fill(top, mid + th - 1, right - th + 1, right);           // B
  if (segs & 4) fill(mid, bottom, right - th + 1, right);                 // C
  if (segs & 8) fill(bottom - th + 1, bottom, left, right);               // D
  if (segs & 16) fill(mid, bottom, left, left + th - 1);                  // E
  if (segs & 32) fill(top, mid + th - 1, left, left + th - 1);            // F
  if (segs & 64) fill(mid, mid + th - 1, left, right);                    // G
  return mask;
}

Dataset generate_biased_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;

  std::vector<Tensor> ext_images;
  std::vector<int> ext_labels;
  if (spec.source == DataSource::kExternalIdx) {
    std::tie(ext_images, ext_labels) =
        load_idx_images(spec.idx_images_path, spec.idx_labels_path);
    const std::size_t need = spec.n_train + spec.n_val + spec.n_test;
    if (ext_images.size() < need)
      throw FormatError("external corpus has " + std::to_string(ext_images.size()) +
                        " images, need " + std::to_string(need));
    for (int label : ext_labels)
      if (label < 0 || static_cast<std::size_t>(label) >= spec.n_classes)
        throw FormatError("external label out of range for n_classes");
    data.spec.image.height = ext_images.front().rows();
    data.spec.image.width = ext_images.front().cols();
    data.spec.image.channels = 3;
  }

  data.colors.resize(spec.n_bias_attributes);
  for (std::size_t attr = 0; attr < spec.n_bias_attributes; ++attr) {
    Rng rng(derive_seed(spec.seed, kTagColors, attr));
    data.colors[attr].resize(spec.n_classes);
    for (std::size_t y = 0; y < spec.n_classes; ++y)
      for (int ch = 0; ch < 3; ++ch) data.colors[attr][y][ch] = rng.uniform();
  }

  struct SplitPlan {
    std::uint64_t tag;
    std::size_t count;
    double rho;
    std::size_t ext_offset;
    std::vector<LabeledSample>* out;
  };
  const std::vector<SplitPlan> plans{
      {kSplitTrain, spec.n_train, spec.rho, 0, &data.train},
      {kSplitVal, spec.n_val, kEvalRho, spec.n_train, &data.val},
      {kSplitTest, spec.n_test, kEvalRho, spec.n_train + spec.n_val, &data.test},
  };
  for (const SplitPlan& plan : plans) {
    plan.out->reserve(plan.count);
    for (std::size_t i = 0; i < plan.count; ++i) {
      Rng rng(derive_seed(spec.seed, kTagSample, plan.tag, i));
      int target;
      if (spec.source == DataSource::kExternalIdx)
        target = ext_labels[plan.ext_offset + i];
      else
        target = static_cast<int>(i % spec.n_classes);
      const SampleColors sc = draw_sample_colors(rng, target, plan.rho,
                                                 spec.color_sigma, data.colors);
      if (spec.source == DataSource::kExternalIdx)
        plan.out->push_back(
            render_colorized(rng, target, ext_images[plan.ext_offset + i], sc));
      else
        plan.out->push_back(render_procedural(rng, target, data.spec.image, sc));
    }
  }
  return data;
}

std::pair<std::vector<Tensor>, std::vector<int>> load_idx_images(
    const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgf(images_path, std::ios::binary);
  if (!imgf) throw FormatError("cannot open idx image file: " + images_path);
  if (read_u32_be(imgf, images_path) != 0x00000803u)
    throw FormatError("bad idx image magic: " + images_path);
  const std::uint32_t n = read_u32_be(imgf, images_path);
  const std::uint32_t rows = read_u32_be(imgf, images_path);
  const std::uint32_t cols = read_u32_be(imgf, images_path);
  if (rows == 0 || cols == 0)
    throw FormatError("zero image dims in idx file: " + images_path);
  std::vector<Tensor> images;
  images.reserve(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    imgf.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!imgf) throw FormatError("idx file truncated: " + images_path);
    Tensor img({rows, cols}, 0.0);
    for (std::size_t p = 0; p < buf.size(); ++p)
      img.data[p] = static_cast<double>(buf[p]) / 255.0;
    images.push_back(std::move(img));
  }

  std::ifstream labf(labels_path, std::ios::binary);
  if (!labf) throw FormatError("cannot open idx label file: " + labels_path);
  if (read_u32_be(labf, labels_path) != 0x00000801u)
    throw FormatError("bad idx label magic: " + labels_path);
  const std::uint32_t n_labels = read_u32_be(labf, labels_path);
  if (n_labels != n)
    throw FormatError("idx image/label count mismatch: " + std::to_string(n) +
                      " images vs " + std::to_string(n_labels) + " labels");
  std::vector<int> labels(n_labels);
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    char b;
    labf.read(&b, 1);
    if (!labf) throw FormatError("idx file truncated: " + labels_path);
    labels[i] = static_cast<unsigned char>(b);
  }
  return {std::move(images), std::move(labels)};
}

Tensor augment(const Tensor& image, const AugmentationSpec& spec,
               std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  if (!spec.enabled) return image;
  if (image.rank() != 3) throw DimensionError("augment expects a rank-3 image");
  const std::size_t h = image.shape[0];
  const std::size_t w = image.shape[1];
  const std::size_t ch = image.shape[2];

  Rng rng(derive_seed(seed, kTagAugment, epoch, index));
  const double angle_deg = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg);
  const std::int64_t t = static_cast<std::int64_t>(spec.translate_max_px);
  const std::int64_t dx = t > 0 ? rng.uniform_int(-t, t) : 0;
  const std::int64_t dy = t > 0 ? rng.uniform_int(-t, t) : 0;
  std::vector<double> jitter(ch, 0.0);
  for (double& j : jitter) j = rng.uniform(-spec.color_jitter, spec.color_jitter);

  Tensor out = image;
  if (angle_deg != 0.0) {
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor rotated(image.shape, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double yr = static_cast<double>(r) - cy;
        const double xr = static_cast<double>(c) - cx;
        const double src_x = cs * xr + sn * yr + cx;
        const double src_y = -sn * xr + cs * yr + cy;
        const double fx = std::floor(src_x), fy = std::floor(src_y);
        const double ax = src_x - fx, ay = src_y - fy;
        const std::int64_t x0 = static_cast<std::int64_t>(fx);
        const std::int64_t y0 = static_cast<std::int64_t>(fy);
        for (std::size_t k = 0; k < ch; ++k) {
          auto sample = [&](std::int64_t yy, std::int64_t xx) -> double {
            if (yy < 0 || xx < 0 || yy >= static_cast<std::int64_t>(h) ||
                xx >= static_cast<std::int64_t>(w))
              return 0.0;
            return image.data[(static_cast<std::size_t>(yy) * w +
                               static_cast<std::size_t>(xx)) *
                                  ch +
                              k];
          };
          const double v = (1 - ay) * ((1 - ax) * sample(y0, x0) + ax * sample(y0, x0 + 1)) +
                           ay * ((1 - ax) * sample(y0 + 1, x0) + ax * sample(y0 + 1, x0 + 1));
          rotated.data[(r * w + c) * ch + k] = v;
        }
      }
    }
    out = std::move(rotated);
  }

  if (dx != 0 || dy != 0) {
    Tensor shifted(out.shape, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const std::int64_t sr = static_cast<std::int64_t>(r) - dy;
      if (sr < 0 || sr >= static_cast<std::int64_t>(h)) continue;
      for (std::size_t c = 0; c < w; ++c) {
        const std::int64_t sc = static_cast<std::int64_t>(c) - dx;
        if (sc < 0 || sc >= static_cast<std::int64_t>(w)) continue;
        for (std::size_t k = 0; k < ch; ++k)
          shifted.data[(r * w + c) * ch + k] =
              out.data[(static_cast<std::size_t>(sr) * w +
                        static_cast<std::size_t>(sc)) *
                           ch +
                       k];
      }
    }
    out = std::move(shifted);
  }

  if (spec.color_jitter > 0.0) {
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t k = 0; k < ch; ++k) {
        double& v = out.data[p * ch + k];
        v = clamp01(v + jitter[k]);
      }
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_by_alignment(const std::vector<LabeledSample>& samples) {
  std::vector<std::size_t> aligned, conflicting;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].fully_aligned())
      aligned.push_back(i);
    else
      conflicting.push_back(i);
  }
  return {std::move(aligned), std::move(conflicting)};
}

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t write_raw_split(const std::vector<LabeledSample>& samples,
                              const ImageShape& shape, const std::string& path) {
  std::string out;
  out.reserve(24 + samples.size() * (shape.element_count() * 4 + 4));
  append_u32_le(out, 0x52444750u);  // "PGDR"
  append_u32_le(out, 1u);
  append_u32_le(out, static_cast<std::uint32_t>(samples.size()));
  append_u32_le(out, static_cast<std::uint32_t>(shape.height));
  append_u32_le(out, static_cast<std::uint32_t>(shape.width));
  append_u32_le(out, static_cast<std::uint32_t>(shape.channels));
  for (const LabeledSample& s : samples) {
    if (s.image.size() != shape.element_count())
      throw DimensionError("raw dump: sample does not match dataset shape");
    for (double v : s.image.data) append_f32_le(out, static_cast<float>(v));
  }
  for (const LabeledSample& s : samples)
    append_u32_le(out, static_cast<std::uint32_t>(s.target));
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot open raw dump for writing: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("raw dump write failed: " + path);
  return fnv1a64(reinterpret_cast<const unsigned char*>(out.data()), out.size());
}

void write_manifest(const Dataset& data,
                    const std::vector<std::uint64_t>& split_checksums,
                    const std::string& path) {
  if (split_checksums.size() != 3)
    throw DimensionError("manifest expects train/val/test checksums");
  nlohmann::json spec;
  const DatasetSpec& s = data.spec;
  spec["n_train"] = s.n_train;
  spec["n_val"] = s.n_val;
  spec["n_test"] = s.n_test;
  spec["n_classes"] = s.n_classes;
  spec["rho"] = s.rho;
  spec["n_bias_attributes"] = s.n_bias_attributes;
  spec["color_sigma"] = s.color_sigma;
  spec["image"] = {s.image.height, s.image.width, s.image.channels};
  spec["seed"] = s.seed;
  spec["source"] = s.source == DataSource::kProcedural ? "procedural" : "external-idx";

  nlohmann::json colors = nlohmann::json::array();
  for (const auto& attr : data.colors) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& rgb : attr) per_class.push_back({rgb[0], rgb[1], rgb[2]});
    colors.push_back(per_class);
  }

  char buf[19];
  auto hex = [&buf](std::uint64_t v) {
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
  };
  nlohmann::json splits;
  splits["train"] = {{"count", data.train.size()}, {"checksum", hex(split_checksums[0])}};
  splits["val"] = {{"count", data.val.size()}, {"checksum", hex(split_checksums[1])}};
  splits["test"] = {{"count", data.test.size()}, {"checksum", hex(split_checksums[2])}};

  nlohmann::json manifest;
  manifest["spec"] = spec;
  manifest["bias_colors"] = colors;
  manifest["splits"] = splits;

  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open manifest for writing: " + path);
  file << manifest.dump(2) << "\n";
}

}  // namespace pgd
