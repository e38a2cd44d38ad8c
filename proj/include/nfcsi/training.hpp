#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nfcsi/checkpoint.hpp"
#include "nfcsi/common.hpp"
#include "nfcsi/dataset.hpp"
#include "nfcsi/metrics.hpp"
#include "nfcsi/model.hpp"
#include "nfcsi/rng.hpp"
#include "nfcsi/tensor.hpp"

namespace nfcsi {

// Mean of squared elementwise differences over the whole batch.
template <typename T>
double mse_loss(const Tensor<T>& h_in, const Tensor<T>& h_out) {
  if (!h_in.same_shape(h_out)) throw ShapeError("mse: shape mismatch");
  if (h_in.size() == 0) throw ShapeError("mse: empty tensors");
  double acc = 0;
  const T* a = h_in.data();
  const T* b = h_out.data();
  for (std::int64_t i = 0; i < h_in.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(h_in.size());
}

// d(mse)/d(out) = 2*(out - in)/M.
template <typename T>
void mse_grad(const Tensor<T>& h_in, const Tensor<T>& h_out, Tensor<T>& d_out) {
  if (!h_in.same_shape(h_out)) throw ShapeError("mse: shape mismatch");
  d_out.resize(h_out.n(), h_out.c(), h_out.h(), h_out.w());
  T scale = static_cast<T>(2.0 / static_cast<double>(h_out.size()));
  const T* a = h_in.data();
  const T* b = h_out.data();
  T* g = d_out.data();
  for (std::int64_t i = 0; i < h_out.size(); ++i) g[i] = scale * (b[i] - a[i]);
}

// Adaptive moment estimation with bias correction; deterministic given a
// fixed update order.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::int64_t n) : m_(n, T{}), v_(n, T{}) {}

  void step(std::vector<T>& params, const std::vector<T>& grads, double lr) {
    ++t_;
    double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      double g = grads[i];
      m_[i] = static_cast<T>(kBeta1 * m_[i] + (1 - kBeta1) * g);
      v_[i] = static_cast<T>(kBeta2 * v_[i] + (1 - kBeta2) * g * g);
      double mhat = m_[i] / c1;
      double vhat = v_[i] / c2;
      params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + kEps));
    }
  }

  std::vector<T>& m() { return m_; }
  std::vector<T>& v() { return v_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<T> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 250;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  int checkpoint_every = 0;  // additionally save "latest" every N epochs
  int threads = 0;           // 0 = hardware concurrency
  ModelConfig model;
  std::string out_dir;  // empty = keep everything in memory only

  void validate(std::int64_t n_train) const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1 || batch_size > n_train) {
      throw ConfigError("batch_size must be in [1, n_train]");
    }
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    model.validate();
  }
};

struct TrainHistory {
  std::vector<EpochRecord> records;
  std::uint64_t seed = 0;

  std::string to_csv() const {
    std::string out = "epoch,train_loss,val_nmse_db,val_rho\n";
    char buf[160];
    for (const auto& r : records) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.epoch,
                    r.train_loss, r.val_nmse_db, r.val_rho);
      out += buf;
    }
    return out;
  }
};

struct TrainResult {
  TrainHistory history;
  double best_val_nmse_db = 0.0;
  int best_epoch = 0;
  Checkpoint best;   // parameters at the best-validation-NMSE epoch
  Checkpoint final;  // parameters after the last epoch
  std::string best_path, final_path;
};

namespace detail_train {

// Deterministic Fisher-Yates permutation for one epoch.
inline std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed,
                                             int epoch) {
  std::vector<std::int64_t> idx(n);
  for (std::int64_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed, RngStream::kShuffle, static_cast<std::uint64_t>(epoch));
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::uint64_t j = rng.next_below(static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[static_cast<std::int64_t>(j)]);
  }
  return idx;
}

template <typename T>
void gather_batch(const Tensor<float>& src, const std::vector<std::int64_t>& order,
                  std::int64_t begin, std::int64_t end, Tensor<T>& out) {
  out.resize(static_cast<int>(end - begin), src.c(), src.h(), src.w());
  std::int64_t m = src.sample_size();
  for (std::int64_t k = begin; k < end; ++k) {
    const float* s = src.sample(static_cast<int>(order[k]));
    T* d = out.sample(static_cast<int>(k - begin));
    for (std::int64_t i = 0; i < m; ++i) d[i] = static_cast<T>(s[i]);
  }
}

}  // namespace detail_train

// Runs the autoencoder over a split in eval mode and returns (nmse_db, rho).
template <typename T>
std::pair<double, double> validate_model(Autoencoder<T>& model,
                                         const Tensor<float>& split,
                                         int batch_size) {
  typename Autoencoder<T>::Ctx ctx;
  Tensor<T> batch;
  Tensor<T> outputs(split.n(), split.c(), split.h(), split.w());
  std::vector<std::int64_t> order(split.n());
  for (std::int64_t i = 0; i < split.n(); ++i) order[i] = i;
  for (std::int64_t at = 0; at < split.n(); at += batch_size) {
    std::int64_t end = std::min<std::int64_t>(split.n(), at + batch_size);
    detail_train::gather_batch(split, order, at, end, batch);
    Tensor<T>& y = model.forward(batch, /*train=*/false, ctx);
    for (std::int64_t n = at; n < end; ++n) {
      const T* s = y.sample(static_cast<int>(n - at));
      T* d = outputs.sample(static_cast<int>(n));
      std::copy(s, s + outputs.sample_size(), d);
    }
  }
  Tensor<float> out_f(outputs.n(), outputs.c(), outputs.h(), outputs.w());
  for (std::int64_t i = 0; i < outputs.size(); ++i) {
    out_f.data()[i] = static_cast<float>(outputs.data()[i]);
  }
  double db = nmse(split, out_f);
  double rho = cosine_similarity(split, out_f).rho;
  return {db, rho};
}

// End-to-end MSE training of encoder+decoder. Deterministic for a fixed
// (seed, thread count): shuffles, init and all reductions are
// order-stable. Pass a resume checkpoint to continue a run.
inline TrainResult train(const TrainConfig& cfg, const DatasetBundle& bundle,
                         const Checkpoint* resume = nullptr,
                         std::function<void(const EpochRecord&)> on_epoch = {}) {
  cfg.validate(bundle.train.n());
  if (bundle.train.c() != cfg.model.image_channels ||
      bundle.train.h() != cfg.model.image_size) {
    throw ConfigError("dataset image shape does not match model config");
  }

  Autoencoder<float> model(cfg.model);
  int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
  model.set_threads(threads);
  Adam<float> adam(model.params().size());
  int start_epoch = 0;
  TrainResult result;
  result.history.seed = cfg.seed;
  double best_nmse = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  if (resume != nullptr) {
    if (resume->config.to_json() != cfg.model.to_json()) {
      throw ConfigError("resume checkpoint model config differs from train config");
    }
    apply_checkpoint(*resume, model);
    if (!resume->adam_m.empty()) {
      adam.m().assign(resume->adam_m.begin(), resume->adam_m.end());
      adam.v().assign(resume->adam_v.begin(), resume->adam_v.end());
      adam.set_steps(resume->adam_step);
    }
    start_epoch = resume->epochs_completed;
    result.history.records = resume->history;
    best_nmse = resume->best_val_nmse_db;
    best_epoch = resume->best_epoch;
    if (result.history.records.empty() && start_epoch > 0) {
      throw ConfigError("resume checkpoint carries no history");
    }
  } else {
    model.init_params(cfg.seed);
  }

  bool persist = !cfg.out_dir.empty();
  if (persist) std::filesystem::create_directories(cfg.out_dir);
  auto fill_ck = [&](Checkpoint& ck, int epoch, bool with_optimizer) {
    ck.epochs_completed = epoch;
    ck.best_val_nmse_db = best_nmse;
    ck.best_epoch = best_epoch;
    ck.seed = cfg.seed;
    ck.history = result.history.records;
    if (with_optimizer) {
      ck.adam_m = adam.m();
      ck.adam_v = adam.v();
      ck.adam_step = adam.steps();
    }
  };

  typename Autoencoder<float>::Ctx ctx;
  Tensor<float> batch, d_out;
  std::int64_t n_train = bundle.train.n();
  std::int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto order = detail_train::epoch_order(n_train, cfg.seed, epoch);
    double loss_acc = 0;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      std::int64_t lo = s * cfg.batch_size;
      std::int64_t hi = std::min(n_train, lo + cfg.batch_size);
      detail_train::gather_batch(bundle.train, order, lo, hi, batch);
      Tensor<float>& y = model.forward(batch, /*train=*/true, ctx);
      double loss = mse_loss(batch, y);
      if (!std::isfinite(loss)) {
        throw Error("non-finite training loss at epoch " +
                    std::to_string(epoch + 1) + " step " + std::to_string(s));
      }
      loss_acc += loss * static_cast<double>(hi - lo);
      mse_grad(batch, y, d_out);
      model.params().zero_grads();
      model.backward(batch, d_out, ctx);
      if (cfg.grad_clip > 0) {
        double norm2 = 0;
        for (float g : model.params().grads()) norm2 += static_cast<double>(g) * g;
        double norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) {
          float scale = static_cast<float>(cfg.grad_clip / norm);
          for (float& g : model.params().grads()) g *= scale;
        }
      }
      adam.step(model.params().values(), model.params().grads(),
                cfg.learning_rate);
    }

    auto [val_db, val_rho] = validate_model(model, bundle.val, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_acc / static_cast<double>(n_train);
    rec.val_nmse_db = val_db;
    rec.val_rho = val_rho;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.history.records.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val_db < best_nmse) {
      best_nmse = val_db;
      best_epoch = epoch + 1;
      result.best = snapshot(model);
      fill_ck(result.best, epoch + 1, /*with_optimizer=*/false);
      if (persist) {
        result.best_path = cfg.out_dir + "/best.ckpt";
        save_checkpoint(model, result.best, result.best_path);
      }
    }
    if (persist && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      Checkpoint latest = snapshot(model);
      fill_ck(latest, epoch + 1, /*with_optimizer=*/true);
      save_checkpoint(model, latest, cfg.out_dir + "/latest.ckpt");
    }
  }

  result.best_val_nmse_db = best_nmse;
  result.best_epoch = best_epoch;
  result.final = snapshot(model);
  fill_ck(result.final, std::max(cfg.epochs, start_epoch), /*with_optimizer=*/true);
  if (persist) {
    result.final_path = cfg.out_dir + "/final.ckpt";
    save_checkpoint(model, result.final, result.final_path);
    write_text_file(cfg.out_dir + "/history.csv", result.history.to_csv());
  }
  if (result.best.params.empty()) {
    result.best = result.final;  // resumed run that never improved
  }
  return result;
}

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::int64_t params_checked = 0;
  // Coordinates where the +-step interval crossed a LeakyReLU kink and the
  // step had to shrink for the central difference to estimate a derivative.
  std::int64_t kink_adjusted = 0;

  operator double() const { return max_rel_error; }
};

// Central-difference gradient verification over every parameter of a
// miniature model; returns the max relative error. Runs in the scalar type
// of the model (double for the real check).
//
// The default step is used everywhere the loss is smooth across the
// interval. Batchnorm centers activations at zero, so for a few coordinates
// a 1e-3 step flips some LeakyReLU input sign; a central difference across
// a kink measures the kink, not the derivative. Those coordinates are
// detected exactly (activation sign signatures must match between the three
// evaluation points) and re-evaluated with a halved step until valid.
template <typename T>
GradientCheckResult gradient_check(Autoencoder<T>& model, const Tensor<T>& input,
                                   double step = 1e-3,
                                   std::function<void(std::vector<T>&)> corrupt = {}) {
  // Miniature inputs: thread fan-out costs more than it saves here.
  model.set_threads(1);
  typename Autoencoder<T>::Ctx ctx;
  Tensor<T> d_out;
  Tensor<T>& y0 = model.forward(input, /*train=*/true, ctx);
  std::vector<bool> base_sig = model.kink_signature(ctx);
  mse_grad(input, y0, d_out);
  model.params().zero_grads();
  model.backward(input, d_out, ctx);
  std::vector<T> analytic = model.params().grads();
  if (corrupt) corrupt(analytic);

  GradientCheckResult res;
  auto& params = model.params().values();
  res.params_checked = static_cast<std::int64_t>(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    T saved = params[i];
    double h = step;
    double numeric = 0;
    bool adjusted = false;
    for (int attempt = 0; attempt < 24; ++attempt) {
      params[i] = saved + static_cast<T>(h);
      double f_plus = mse_loss(input, model.forward(input, true, ctx));
      bool clean = model.kink_signature(ctx) == base_sig;
      params[i] = saved - static_cast<T>(h);
      double f_minus = mse_loss(input, model.forward(input, true, ctx));
      clean = clean && model.kink_signature(ctx) == base_sig;
      params[i] = saved;
      numeric = (f_plus - f_minus) / (2 * h);
      if (clean) break;
      h *= 0.5;
      adjusted = true;
    }
    if (adjusted) ++res.kink_adjusted;
    double a = static_cast<double>(analytic[i]);
    double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
  }
  return res;
}

}  // namespace nfcsi
