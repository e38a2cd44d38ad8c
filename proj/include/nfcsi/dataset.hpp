#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nfcsi/channel.hpp"
#include "nfcsi/common.hpp"
#include "nfcsi/io_util.hpp"
#include "nfcsi/parallel.hpp"
#include "nfcsi/rng.hpp"
#include "nfcsi/tensor.hpp"

namespace nfcsi {

inline constexpr int kImageSide = 32;
inline constexpr int kImageChannels = 2;
inline constexpr int kImageElems = kImageChannels * kImageSide * kImageSide;

// One CSI sample as the network sees it: plane 0 = Re(H), plane 1 = Im(H),
// each reshaped row-major to 32x32. Values are kept in 32-bit floats, the
// storage precision of the pipeline.
struct CsiImage {
  std::vector<float> values;  // [2][32][32] row-major
  bool normalized = false;

  float& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * kImageSide + y) * kImageSide + x];
  }
  float at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * kImageSide + y) * kImageSide + x];
  }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool valid() const { return hi >= lo; }
};

struct SamplingConfig {
  std::uint64_t seed = 1;
  std::int64_t n_train = 25000;
  std::int64_t n_val = 5000;
  std::int64_t n_test = 5000;
  Interval r_range{5.0, 300.0};                    // meters
  Interval theta_range{-std::numbers::pi / 3, std::numbers::pi / 3};
  Interval phi_range{-std::numbers::pi / 6, std::numbers::pi / 6};
  SystemGeometry geometry_template;  // (r, theta, phi) ignored

  std::int64_t total() const { return n_train + n_val + n_test; }
};

// Sampling plan with the r interval clipped to the open interval
// (validity guard, Rayleigh distance) so every sample is valid and near-field.
struct EffectiveSampling {
  SamplingConfig config;
  Interval r_effective;
  double guard = 0.0;
  double rayleigh = 0.0;
  bool clipped = false;
};

inline EffectiveSampling resolve_sampling(const SamplingConfig& cfg) {
  if (cfg.n_train <= 0 || cfg.n_val <= 0 || cfg.n_test <= 0) {
    throw ConfigError("split counts must be positive");
  }
  if (!cfg.r_range.valid() || !cfg.theta_range.valid() || !cfg.phi_range.valid()) {
    throw ConfigError("sampling ranges must have hi >= lo");
  }
  const auto& g = cfg.geometry_template;
  if (g.n_bs_antennas < 1 || g.n_user_antennas < 1 ||
      !(g.antenna_spacing > 0) || !(g.wavelength > 0)) {
    throw ConfigError("invalid geometry template");
  }
  EffectiveSampling eff;
  eff.config = cfg;
  eff.guard = (g.n_bs_antennas + g.n_user_antennas) * g.antenna_spacing;
  SystemGeometry probe = g;
  probe.range = eff.guard * 2 + 1;  // any valid range; only aperture matters
  eff.rayleigh = rayleigh_distance(probe);
  double lo = std::max(cfg.r_range.lo, eff.guard * (1.0 + 1e-6));
  double hi = std::min(cfg.r_range.hi, eff.rayleigh * (1.0 - 1e-6));
  if (!(lo < hi)) {
    throw ConfigError(
        "r_range does not intersect the valid near-field interval (" +
        std::to_string(eff.guard) + ", " + std::to_string(eff.rayleigh) + ")");
  }
  eff.clipped = lo != cfg.r_range.lo || hi != cfg.r_range.hi;
  eff.r_effective = {lo, hi};
  return eff;
}

// Draws (r, theta, phi) independently uniform; pure function of (seed, index).
inline SystemGeometry sample_geometry(const EffectiveSampling& eff,
                                      std::uint64_t index) {
  const auto& cfg = eff.config;
  SystemGeometry g = cfg.geometry_template;
  g.range = rng_uniform(cfg.seed, RngStream::kGeometry, index, 0,
                        eff.r_effective.lo, eff.r_effective.hi);
  g.transmit_angle = rng_uniform(cfg.seed, RngStream::kGeometry, index, 1,
                                 cfg.theta_range.lo, cfg.theta_range.hi);
  g.relative_angle = rng_uniform(cfg.seed, RngStream::kGeometry, index, 2,
                                 cfg.phi_range.lo, cfg.phi_range.hi);
  g.validate();
  return g;
}

// Re/Im split of a channel matrix into the 2x32x32 image layout. The complex
// matrix is flattened row-major (user antenna major) and reshaped row-major;
// requires N2*N1 = 1024.
inline CsiImage split_complex(const ChannelMatrix& h) {
  std::int64_t total = static_cast<std::int64_t>(h.rows()) * h.cols();
  if (total != kImageSide * kImageSide) {
    throw ShapeError("split_complex needs N2*N1 = 1024, got " +
                     std::to_string(total));
  }
  CsiImage img;
  img.values.resize(kImageElems);
  for (std::int64_t k = 0; k < total; ++k) {
    img.values[k] = static_cast<float>(h.entries[k].real());
    img.values[kImageSide * kImageSide + k] =
        static_cast<float>(h.entries[k].imag());
  }
  return img;
}

// Exact inverse of split_complex up to the f32 storage precision. The result
// carries the given geometry (shape source) or a 1x1024 default.
inline ChannelMatrix merge_complex(const CsiImage& img,
                                   const SystemGeometry* geometry = nullptr) {
  if (img.values.size() != kImageElems) {
    throw ShapeError("merge_complex needs a 2x32x32 image");
  }
  ChannelMatrix h;
  if (geometry != nullptr) {
    h.geometry = *geometry;
    std::int64_t total =
        static_cast<std::int64_t>(h.geometry.n_user_antennas) * h.geometry.n_bs_antennas;
    if (total != kImageSide * kImageSide) {
      throw ShapeError("merge_complex geometry must satisfy N2*N1 = 1024");
    }
  } else {
    h.geometry.n_user_antennas = 1;
    h.geometry.n_bs_antennas = kImageSide * kImageSide;
  }
  h.entries.resize(kImageSide * kImageSide);
  for (std::size_t k = 0; k < h.entries.size(); ++k) {
    h.entries[k] = {static_cast<double>(img.values[k]),
                    static_cast<double>(img.values[kImageSide * kImageSide + k])};
  }
  return h;
}

struct DatasetBundle {
  Tensor<float> train;  // (n_train, 2, 32, 32)
  Tensor<float> val;
  Tensor<float> test;
  double norm_min = 0.0;
  double norm_max = 1.0;
  nlohmann::json manifest;

  const Tensor<float>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split: " + name);
  }
};

// Global affine map x -> (x - min)/(max - min) over every plane of every
// split; the constants make the decoder's [0,1] output comparable across
// samples and are stored for exact de-normalization.
inline std::pair<double, double> normalize_bundle(
    std::vector<Tensor<float>*> splits) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::int64_t count = 0;
  for (auto* t : splits) {
    count += t->size();
    for (std::int64_t i = 0; i < t->size(); ++i) {
      double v = t->data()[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (count == 0) throw NormalizationError("empty bundle");
  if (!(hi > lo)) throw NormalizationError("constant-valued bundle");
  double scale = 1.0 / (hi - lo);
  for (auto* t : splits) {
    for (std::int64_t i = 0; i < t->size(); ++i) {
      t->data()[i] = static_cast<float>((t->data()[i] - lo) * scale);
    }
  }
  return {lo, hi};
}

inline double denormalize_value(double v, double lo, double hi) {
  return v * (hi - lo) + lo;
}

inline nlohmann::json sampling_manifest(const EffectiveSampling& eff) {
  const auto& cfg = eff.config;
  const auto& g = cfg.geometry_template;
  nlohmann::json m;
  m["format"] = "nfcsi-dataset";
  m["version"] = 1;
  m["seed"] = cfg.seed;
  m["counts"] = {{"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  m["shape"] = {kImageChannels, kImageSide, kImageSide};
  m["geometry"] = {{"n_bs_antennas", g.n_bs_antennas},
                   {"n_user_antennas", g.n_user_antennas},
                   {"antenna_spacing_m", g.antenna_spacing},
                   {"wavelength_m", g.wavelength}};
  m["ranges"] = {
      {"r_configured_m", {cfg.r_range.lo, cfg.r_range.hi}},
      {"r_effective_m", {eff.r_effective.lo, eff.r_effective.hi}},
      {"r_clipped", eff.clipped},
      {"theta_rad", {cfg.theta_range.lo, cfg.theta_range.hi}},
      {"phi_rad", {cfg.phi_range.lo, cfg.phi_range.hi}},
  };
  m["near_field"] = {{"validity_guard_m", eff.guard},
                     {"rayleigh_distance_m", eff.rayleigh}};
  return m;
}

// Generates the full train/val/test bundle: sample_geometry -> channel_matrix
// -> split_complex per index (parallel, substream per index), then one global
// normalization pass. Split assignment follows generation order.
inline DatasetBundle build_dataset(const SamplingConfig& cfg, int threads = 0) {
  EffectiveSampling eff = resolve_sampling(cfg);
  if (threads <= 0) threads = default_thread_count();

  DatasetBundle bundle;
  bundle.train.resize(static_cast<int>(cfg.n_train), kImageChannels, kImageSide, kImageSide);
  bundle.val.resize(static_cast<int>(cfg.n_val), kImageChannels, kImageSide, kImageSide);
  bundle.test.resize(static_cast<int>(cfg.n_test), kImageChannels, kImageSide, kImageSide);

  std::int64_t total = cfg.total();
  std::vector<double> sampled_r(total);
  auto slot = [&](std::int64_t i) -> float* {
    if (i < cfg.n_train) return bundle.train.sample(static_cast<int>(i));
    i -= cfg.n_train;
    if (i < cfg.n_val) return bundle.val.sample(static_cast<int>(i));
    return bundle.test.sample(static_cast<int>(i - cfg.n_val));
  };

  parallel_for(total, threads, [&](std::int64_t lo, std::int64_t hi, int) {
    for (std::int64_t i = lo; i < hi; ++i) {
      SystemGeometry g = sample_geometry(eff, static_cast<std::uint64_t>(i));
      sampled_r[i] = g.range;
      CsiImage img = split_complex(channel_matrix(g));
      std::copy(img.values.begin(), img.values.end(), slot(i));
    }
  });

  auto [lo, hi] = normalize_bundle({&bundle.train, &bundle.val, &bundle.test});
  bundle.norm_min = lo;
  bundle.norm_max = hi;

  bundle.manifest = sampling_manifest(eff);
  bundle.manifest["norm_min"] = lo;
  bundle.manifest["norm_max"] = hi;
  bundle.manifest["sampled_r_min"] =
      *std::min_element(sampled_r.begin(), sampled_r.end());
  bundle.manifest["sampled_r_max"] =
      *std::max_element(sampled_r.begin(), sampled_r.end());
  return bundle;
}

// --- persistence ---------------------------------------------------------
//
// Layout: magic "NFCS", u16 version, u64 counts (train/val/test),
// u32 channels/height/width, f64 norm_min/norm_max, then the three splits as
// raw little-endian f32 (sample-major, each sample [2][32][32] row-major),
// and a CRC32 footer over all preceding bytes.

inline constexpr char kDatasetMagic[4] = {'N', 'F', 'C', 'S'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::size_t dataset_header_bytes() {
  return 4 + 2 + 3 * 8 + 3 * 4 + 2 * 8;
}

inline void save_bundle(const DatasetBundle& b, const std::string& path) {
  CrcWriter w(path);
  w.write_bytes(kDatasetMagic, 4);
  w.write_pod<std::uint16_t>(kDatasetVersion);
  w.write_pod<std::uint64_t>(static_cast<std::uint64_t>(b.train.n()));
  w.write_pod<std::uint64_t>(static_cast<std::uint64_t>(b.val.n()));
  w.write_pod<std::uint64_t>(static_cast<std::uint64_t>(b.test.n()));
  w.write_pod<std::uint32_t>(kImageChannels);
  w.write_pod<std::uint32_t>(kImageSide);
  w.write_pod<std::uint32_t>(kImageSide);
  w.write_pod<double>(b.norm_min);
  w.write_pod<double>(b.norm_max);
  for (const Tensor<float>* t : {&b.train, &b.val, &b.test}) {
    w.write_bytes(t->data(), sizeof(float) * static_cast<std::size_t>(t->size()));
  }
  w.finish_with_crc();
}

inline DatasetBundle load_bundle(const std::string& path,
                                 const std::string& manifest_path = "") {
  CrcReader r(path);
  char magic[4];
  r.read_bytes(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw IoError("bad magic, not a dataset file: " + path);
  }
  auto version = r.read_pod<std::uint16_t>();
  if (version != kDatasetVersion) {
    throw IoError("unsupported dataset version " + std::to_string(version));
  }
  auto n_train = r.read_pod<std::uint64_t>();
  auto n_val = r.read_pod<std::uint64_t>();
  auto n_test = r.read_pod<std::uint64_t>();
  auto channels = r.read_pod<std::uint32_t>();
  auto height = r.read_pod<std::uint32_t>();
  auto width = r.read_pod<std::uint32_t>();
  if (channels != kImageChannels || height != kImageSide || width != kImageSide) {
    throw IoError("unexpected image shape in dataset header");
  }
  DatasetBundle b;
  b.norm_min = r.read_pod<double>();
  b.norm_max = r.read_pod<double>();
  b.train.resize(static_cast<int>(n_train), kImageChannels, kImageSide, kImageSide);
  b.val.resize(static_cast<int>(n_val), kImageChannels, kImageSide, kImageSide);
  b.test.resize(static_cast<int>(n_test), kImageChannels, kImageSide, kImageSide);
  for (Tensor<float>* t : {&b.train, &b.val, &b.test}) {
    r.read_bytes(t->data(), sizeof(float) * static_cast<std::size_t>(t->size()));
  }
  r.verify_crc();
  if (!manifest_path.empty()) {
    b.manifest = nlohmann::json::parse(read_text_file(manifest_path));
  }
  return b;
}

}  // namespace nfcsi
