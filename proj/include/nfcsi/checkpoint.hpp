#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfcsi/common.hpp"
#include "nfcsi/io_util.hpp"
#include "nfcsi/model.hpp"

namespace nfcsi {

// Model checkpoint: "NFCK" magic, u16 version, u32 JSON header length, JSON
// header (config echo + blob directory + training bookkeeping), raw f32
// little-endian payload, CRC32 footer. Blobs are one per named parameter or
// state entry plus optional optimizer moment vectors, in directory order.

inline constexpr char kCheckpointMagic[4] = {'N', 'F', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_nmse_db = 0.0;
  double val_rho = 0.0;
  double wall_seconds = 0.0;  // bookkeeping only; never serialized to CSV
};

struct Checkpoint {
  ModelConfig config;
  std::vector<float> params;
  std::vector<float> states;
  std::vector<float> adam_m;  // empty when the checkpoint carries no optimizer
  std::vector<float> adam_v;
  std::int64_t adam_step = 0;
  int epochs_completed = 0;
  double best_val_nmse_db = 0.0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
};

namespace detail_ckpt {

inline nlohmann::json history_to_json(const std::vector<EpochRecord>& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : h) {
    out.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"val_nmse_db", r.val_nmse_db},
                   {"val_rho", r.val_rho}});
  }
  return out;
}

inline std::vector<EpochRecord> history_from_json(const nlohmann::json& j) {
  std::vector<EpochRecord> out;
  for (const auto& r : j) {
    out.push_back({r.at("epoch"), r.at("train_loss"), r.at("val_nmse_db"),
                   r.at("val_rho"), 0.0});
  }
  return out;
}

}  // namespace detail_ckpt

template <typename T>
void save_checkpoint(const Autoencoder<T>& model, const Checkpoint& ck,
                     const std::string& path) {
  nlohmann::json header;
  header["format"] = "nfcsi-checkpoint";
  header["dtype"] = "f32";
  header["model"] = model.config().to_json();
  header["epochs_completed"] = ck.epochs_completed;
  header["best_val_nmse_db"] = ck.best_val_nmse_db;
  header["best_epoch"] = ck.best_epoch;
  header["adam_step"] = ck.adam_step;
  header["seed"] = ck.seed;
  header["history"] = detail_ckpt::history_to_json(ck.history);

  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& e : model.params().entries()) {
    blobs.push_back({{"name", e.name}, {"kind", "param"}, {"count", e.count}});
  }
  for (const auto& e : model.states().entries()) {
    blobs.push_back({{"name", e.name}, {"kind", "state"}, {"count", e.count}});
  }
  if (!ck.adam_m.empty()) {
    blobs.push_back({{"name", "adam.m"},
                     {"kind", "optimizer"},
                     {"count", static_cast<std::int64_t>(ck.adam_m.size())}});
    blobs.push_back({{"name", "adam.v"},
                     {"kind", "optimizer"},
                     {"count", static_cast<std::int64_t>(ck.adam_v.size())}});
  }
  header["blobs"] = blobs;
  std::string header_str = header.dump();

  CrcWriter w(path);
  w.write_bytes(kCheckpointMagic, 4);
  w.write_pod<std::uint16_t>(kCheckpointVersion);
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(header_str.size()));
  w.write_bytes(header_str.data(), header_str.size());
  w.write_bytes(ck.params.data(), ck.params.size() * sizeof(float));
  w.write_bytes(ck.states.data(), ck.states.size() * sizeof(float));
  if (!ck.adam_m.empty()) {
    w.write_bytes(ck.adam_m.data(), ck.adam_m.size() * sizeof(float));
    w.write_bytes(ck.adam_v.data(), ck.adam_v.size() * sizeof(float));
  }
  w.finish_with_crc();
}

// Convenience: snapshot the model's current parameters/state into a
// checkpoint struct (optimizer vectors supplied by the trainer).
template <typename T>
Checkpoint snapshot(const Autoencoder<T>& model) {
  Checkpoint ck;
  ck.config = model.config();
  const auto& v = model.params().values();
  const auto& s = model.states().values();
  ck.params.assign(v.begin(), v.end());
  ck.states.assign(s.begin(), s.end());
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  CrcReader r(path);
  char magic[4];
  r.read_bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError("bad magic, not a checkpoint: " + path);
  }
  auto version = r.read_pod<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  auto header_len = r.read_pod<std::uint32_t>();
  std::string header_str(header_len, '\0');
  r.read_bytes(header_str.data(), header_len);
  nlohmann::json header = nlohmann::json::parse(header_str);

  Checkpoint ck;
  ck.config = ModelConfig::from_json(header.at("model"));
  ck.epochs_completed = header.at("epochs_completed");
  ck.best_val_nmse_db = header.at("best_val_nmse_db");
  ck.best_epoch = header.at("best_epoch");
  ck.adam_step = header.at("adam_step");
  ck.seed = header.at("seed");
  ck.history = detail_ckpt::history_from_json(header.at("history"));

  for (const auto& blob : header.at("blobs")) {
    std::string kind = blob.at("kind");
    std::int64_t count = blob.at("count");
    std::vector<float>* dst = nullptr;
    if (kind == "param") {
      dst = &ck.params;
    } else if (kind == "state") {
      dst = &ck.states;
    } else if (kind == "optimizer") {
      dst = blob.at("name") == "adam.m" ? &ck.adam_m : &ck.adam_v;
    } else {
      throw IoError("unknown blob kind in checkpoint: " + kind);
    }
    std::size_t old = dst->size();
    dst->resize(old + count);
    r.read_bytes(dst->data() + old, count * sizeof(float));
  }
  r.verify_crc();
  return ck;
}

// Installs checkpoint parameters/state into a model built from the same
// config; registry sizes must line up exactly.
template <typename T>
void apply_checkpoint(const Checkpoint& ck, Autoencoder<T>& model) {
  if (model.params().size() != static_cast<std::int64_t>(ck.params.size()) ||
      static_cast<std::int64_t>(model.states().values().size()) !=
          static_cast<std::int64_t>(ck.states.size())) {
    throw ConfigError("checkpoint does not match model layout");
  }
  auto& v = model.params().values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(ck.params[i]);
  auto& s = model.states().values();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<T>(ck.states[i]);
}

}  // namespace nfcsi
