#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfcsi/checkpoint.hpp"
#include "nfcsi/common.hpp"
#include "nfcsi/dataset.hpp"
#include "nfcsi/metrics.hpp"
#include "nfcsi/model.hpp"
#include "nfcsi/training.hpp"

namespace nfcsi {

struct EvalReport {
  std::string architecture;
  int cr = 0;
  double nmse_db = 0.0;  // -inf encodes perfect reconstruction
  double rho = 0.0;
  std::int64_t rho_excluded_columns = 0;
  double nmse_db_denormalized = 0.0;
  double rho_denormalized = 0.0;
  ParameterAudit audit;
  std::vector<double> per_sample_nmse_ratio;
  std::vector<double> per_sample_rho;
  std::string checkpoint_path;
  nlohmann::json dataset_manifest;
  std::vector<EpochRecord> history;  // optional training curves

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["architecture"] = architecture;
    j["cr"] = cr;
    j["metric_space"] =
        "normalized network input/output space; denormalized values alongside";
    j["rho_column_convention"] =
        "columns of the complex 32x32 reshape (N_c = 32)";
    j["nmse_db"] = encode_db(nmse_db);
    j["rho"] = rho;
    j["rho_excluded_columns"] = rho_excluded_columns;
    j["denormalized"] = {{"nmse_db", encode_db(nmse_db_denormalized)},
                         {"rho", rho_denormalized}};
    j["parameters"] = audit.to_json();
    j["per_sample"] = {{"nmse_ratio", per_sample_nmse_ratio},
                       {"rho", per_sample_rho}};
    j["checkpoint"] = checkpoint_path;
    if (!dataset_manifest.is_null()) j["dataset_manifest"] = dataset_manifest;
    if (!history.empty()) {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& r : history) {
        h.push_back({{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"val_nmse_db", r.val_nmse_db},
                     {"val_rho", r.val_rho}});
      }
      j["history"] = h;
    }
    return j;
  }

  // JSON has no -inf literal; encode the perfect-reconstruction sentinel as
  // the string "-Infinity".
  static nlohmann::json encode_db(double v) {
    if (std::isinf(v) && v < 0) return "-Infinity";
    return v;
  }
  static double decode_db(const nlohmann::json& v) {
    if (v.is_string()) return -std::numeric_limits<double>::infinity();
    return v.get<double>();
  }
};

// A reconstruction pipeline: maps a batch of normalized images to their
// reconstructions. Lets tests evaluate fixtures (identity, constant) through
// the same path as real models.
using ReconstructFn = std::function<void(const Tensor<float>&, Tensor<float>&)>;

template <typename T>
ReconstructFn model_reconstructor(Autoencoder<T>& model) {
  return [&model](const Tensor<float>& in, Tensor<float>& out) {
    typename Autoencoder<T>::Ctx ctx;
    Tensor<T> batch(in.n(), in.c(), in.h(), in.w());
    for (std::int64_t i = 0; i < in.size(); ++i) {
      batch.data()[i] = static_cast<T>(in.data()[i]);
    }
    Tensor<T>& y = model.forward(batch, /*train=*/false, ctx);
    out.resize(in.n(), in.c(), in.h(), in.w());
    for (std::int64_t i = 0; i < in.size(); ++i) {
      out.data()[i] = static_cast<float>(y.data()[i]);
    }
  };
}

// Runs a reconstruction pipeline over a split in batches.
inline void run_reconstruction(const ReconstructFn& fn, const Tensor<float>& in,
                               Tensor<float>& out, int batch_size = 250) {
  out.resize(in.n(), in.c(), in.h(), in.w());
  Tensor<float> batch, yb;
  for (std::int64_t at = 0; at < in.n(); at += batch_size) {
    std::int64_t end = std::min<std::int64_t>(in.n(), at + batch_size);
    batch.resize(static_cast<int>(end - at), in.c(), in.h(), in.w());
    for (std::int64_t n = at; n < end; ++n) {
      const float* s = in.sample(static_cast<int>(n));
      std::copy(s, s + in.sample_size(), batch.sample(static_cast<int>(n - at)));
    }
    fn(batch, yb);
    if (yb.n() != batch.n() || yb.sample_size() != in.sample_size()) {
      throw ShapeError("reconstruction changed the batch shape");
    }
    for (std::int64_t n = at; n < end; ++n) {
      const float* s = yb.sample(static_cast<int>(n - at));
      std::copy(s, s + in.sample_size(), out.sample(static_cast<int>(n)));
    }
  }
}

inline Tensor<float> denormalize_split(const Tensor<float>& t, double lo,
                                       double hi) {
  Tensor<float> out(t.n(), t.c(), t.h(), t.w());
  for (std::int64_t i = 0; i < t.size(); ++i) {
    out.data()[i] = static_cast<float>(denormalize_value(t.data()[i], lo, hi));
  }
  return out;
}

// Full evaluation over the test split: NMSE, rho (both also on de-normalized
// channels) and the parameter audit.
inline EvalReport evaluate(const ReconstructFn& reconstruct,
                           const DatasetBundle& bundle,
                           const ParameterAudit& audit,
                           const std::string& architecture, int cr,
                           const std::string& checkpoint_path = "") {
  EvalReport rep;
  rep.architecture = architecture;
  rep.cr = cr;
  rep.audit = audit;
  rep.checkpoint_path = checkpoint_path;
  rep.dataset_manifest = bundle.manifest;

  Tensor<float> out;
  run_reconstruction(reconstruct, bundle.test, out);
  rep.per_sample_nmse_ratio = nmse_ratios(bundle.test, out);
  rep.nmse_db = nmse_db_from_ratios(rep.per_sample_nmse_ratio);
  auto cs = cosine_similarity(bundle.test, out);
  rep.rho = cs.rho;
  rep.rho_excluded_columns = cs.excluded_columns;
  rep.per_sample_rho = std::move(cs.per_sample);

  Tensor<float> in_dn = denormalize_split(bundle.test, bundle.norm_min, bundle.norm_max);
  Tensor<float> out_dn = denormalize_split(out, bundle.norm_min, bundle.norm_max);
  rep.nmse_db_denormalized = nmse(in_dn, out_dn);
  rep.rho_denormalized = cosine_similarity(in_dn, out_dn).rho;
  return rep;
}

// Evaluates a model checkpoint against a bundle (the usual CLI path).
inline EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                                      const DatasetBundle& bundle,
                                      int threads = 0) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  Autoencoder<float> model(ck.config);
  if (threads > 0) model.set_threads(threads);
  apply_checkpoint(ck, model);
  auto fn = model_reconstructor(model);
  EvalReport rep = evaluate(fn, bundle, model.audit(),
                            architecture_name(ck.config.architecture),
                            ck.config.compression_ratio, checkpoint_path);
  rep.history = ck.history;
  return rep;
}

// Plot-data series (epoch, metric) matching the training-progress figures.
inline std::string plot_csv(const std::vector<EpochRecord>& history,
                            const std::string& metric) {
  std::string out = "epoch," + metric + "\n";
  char buf[96];
  for (const auto& r : history) {
    double v = metric == "val_nmse_db"  ? r.val_nmse_db
               : metric == "val_rho"    ? r.val_rho
               : metric == "train_loss" ? r.train_loss
                                        : throw ConfigError("unknown metric: " + metric);
    std::snprintf(buf, sizeof(buf), "%d,%.9g\n", r.epoch, v);
    out += buf;
  }
  return out;
}

// Merges single-run reports into one comparison table (rows = architecture,
// columns = CR) shaped like the paper's results table.
inline std::string comparison_table(const std::vector<nlohmann::json>& reports) {
  std::vector<int> crs;
  std::vector<std::string> archs;
  for (const auto& r : reports) {
    int cr = r.at("cr");
    std::string a = r.at("architecture");
    if (std::find(crs.begin(), crs.end(), cr) == crs.end()) crs.push_back(cr);
    if (std::find(archs.begin(), archs.end(), a) == archs.end()) archs.push_back(a);
  }
  std::sort(crs.begin(), crs.end());
  auto find = [&](const std::string& a, int cr) -> const nlohmann::json* {
    for (const auto& r : reports) {
      if (r.at("architecture") == a && r.at("cr") == cr) return &r;
    }
    return nullptr;
  };
  std::string out = "metric,architecture";
  for (int cr : crs) out += ",cr" + std::to_string(cr);
  out += "\n";
  for (const std::string& metric : {"nmse_db", "rho"}) {
    for (const auto& a : archs) {
      out += metric + "," + a;
      for (int cr : crs) {
        const nlohmann::json* r = find(a, cr);
        if (r == nullptr) {
          out += ",";
          continue;
        }
        char buf[48];
        double v = metric == "nmse_db" ? EvalReport::decode_db(r->at("nmse_db"))
                                       : r->at("rho").get<double>();
        std::snprintf(buf, sizeof(buf), ",%.6g", v);
        out += buf;
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace nfcsi
