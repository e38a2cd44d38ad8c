#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nfcsi/common.hpp"
#include "nfcsi/dataset.hpp"
#include "nfcsi/io_util.hpp"
#include "nfcsi/model.hpp"
#include "nfcsi/training.hpp"

namespace nfcsi {

// Flat key = value run configuration. The key set doubles as the registry:
// anything not in the defaults is rejected, from files and overrides alike.
class RunConfig {
 public:
  RunConfig() : kv_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"dataset.seed", "1"},
        {"dataset.n_train", "25000"},
        {"dataset.n_val", "5000"},
        {"dataset.n_test", "5000"},
        {"dataset.r_min", "5.0"},
        {"dataset.r_max", "300.0"},
        {"dataset.theta_min", "-1.0471975511965976"},  // -pi/3
        {"dataset.theta_max", "1.0471975511965976"},
        {"dataset.phi_min", "-0.5235987755982988"},  // -pi/6
        {"dataset.phi_max", "0.5235987755982988"},
        {"geometry.n_bs_antennas", "1024"},
        {"geometry.n_user_antennas", "1"},
        {"geometry.antenna_spacing", "0.005"},
        {"geometry.wavelength", "0.01"},
        {"model.architecture", "extendnlnet"},
        {"model.cr", "16"},
        {"model.image_size", "32"},
        {"model.leaky_slope", "0.3"},
        {"model.nl_downsampled_channels", "16"},
        {"model.nl_embed_channels", "8"},
        {"model.nl_blocks_encoder", "1"},
        {"model.nl_blocks_decoder", "1"},
        {"train.epochs", "100"},
        {"train.batch_size", "250"},
        {"train.learning_rate", "0.001"},
        {"train.seed", "1"},
        {"train.checkpoint_every", "10"},
        {"train.grad_clip", "0.0"},
        {"train.threads", "0"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    if (defaults().find(key) == defaults().end()) {
      throw ConfigError("unknown config key: " + key);
    }
    kv_[key] = value;
  }

  // Parses "key = value" lines; '#' starts a comment, blank lines ignored.
  void load_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key = value");
      }
      set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
  }

  void load_file(const std::string& path) { load_text(read_text_file(path)); }

  // "key=value" override from the command line.
  void apply_override(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must be key=value: " + kv);
    }
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  const std::string& get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  std::int64_t get_int(const std::string& key) const {
    try {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an integer: " + get(key));
    }
  }

  double get_double(const std::string& key) const {
    try {
      std::size_t pos = 0;
      double v = std::stod(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: " + get(key));
    }
  }

  // Sorted key = value dump; rerunning with this file reproduces the run.
  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
  }

  SamplingConfig sampling_config() const {
    SamplingConfig c;
    c.seed = static_cast<std::uint64_t>(get_int("dataset.seed"));
    c.n_train = get_int("dataset.n_train");
    c.n_val = get_int("dataset.n_val");
    c.n_test = get_int("dataset.n_test");
    c.r_range = {get_double("dataset.r_min"), get_double("dataset.r_max")};
    c.theta_range = {get_double("dataset.theta_min"), get_double("dataset.theta_max")};
    c.phi_range = {get_double("dataset.phi_min"), get_double("dataset.phi_max")};
    c.geometry_template.n_bs_antennas =
        static_cast<int>(get_int("geometry.n_bs_antennas"));
    c.geometry_template.n_user_antennas =
        static_cast<int>(get_int("geometry.n_user_antennas"));
    c.geometry_template.antenna_spacing = get_double("geometry.antenna_spacing");
    c.geometry_template.wavelength = get_double("geometry.wavelength");
    return c;
  }

  ModelConfig model_config() const {
    ModelConfig c;
    c.architecture = architecture_from_name(get("model.architecture"));
    c.compression_ratio = static_cast<int>(get_int("model.cr"));
    c.image_size = static_cast<int>(get_int("model.image_size"));
    c.leaky_slope = get_double("model.leaky_slope");
    c.nl_downsampled_channels =
        static_cast<int>(get_int("model.nl_downsampled_channels"));
    c.nl_embed_channels = static_cast<int>(get_int("model.nl_embed_channels"));
    c.nl_blocks_encoder = static_cast<int>(get_int("model.nl_blocks_encoder"));
    c.nl_blocks_decoder = static_cast<int>(get_int("model.nl_blocks_decoder"));
    c.validate();
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.epochs = static_cast<int>(get_int("train.epochs"));
    c.batch_size = static_cast<int>(get_int("train.batch_size"));
    c.learning_rate = get_double("train.learning_rate");
    c.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    c.checkpoint_every = static_cast<int>(get_int("train.checkpoint_every"));
    c.grad_clip = get_double("train.grad_clip");
    c.threads = static_cast<int>(get_int("train.threads"));
    c.model = model_config();
    return c;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace nfcsi
