#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nfcsi/common.hpp"
#include "nfcsi/parallel.hpp"
#include "nfcsi/tensor.hpp"

namespace nfcsi {

// Flat parameter arena. Layers register named slices at construction; the
// trainer, the checkpoint writer and the audit all walk the same registry.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::int64_t offset = 0;
    std::int64_t count = 0;
    std::vector<int> shape;
    bool fully_connected = false;  // the two big dense layers
    std::int64_t fan_in = 0;       // 0 = affine/batchnorm (skip random init)
  };

  std::int64_t add(const std::string& name, std::vector<int> shape,
                   bool fully_connected = false, std::int64_t fan_in = 0) {
    std::int64_t count = 1;
    for (int d : shape) count *= d;
    Entry e{name, static_cast<std::int64_t>(values_.size()), count,
            std::move(shape), fully_connected, fan_in};
    values_.resize(values_.size() + count, T{});
    grads_.resize(values_.size(), T{});
    entries_.push_back(std::move(e));
    return entries_.back().offset;
  }

  T* value(std::int64_t offset) { return values_.data() + offset; }
  const T* value(std::int64_t offset) const { return values_.data() + offset; }
  T* grad(std::int64_t offset) { return grads_.data() + offset; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::vector<T>& grads() { return grads_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  void zero_grads() { std::fill(grads_.begin(), grads_.end(), T{}); }

 private:
  std::vector<T> values_;
  std::vector<T> grads_;
  std::vector<Entry> entries_;
};

// Non-trainable per-layer state (batchnorm running statistics).
template <typename T>
class StateStore {
 public:
  struct Entry {
    std::string name;
    std::int64_t offset = 0;
    std::int64_t count = 0;
  };

  std::int64_t add(const std::string& name, std::int64_t count, T init) {
    Entry e{name, static_cast<std::int64_t>(values_.size()), count};
    values_.resize(values_.size() + count, init);
    entries_.push_back(std::move(e));
    return entries_.back().offset;
  }
  T* value(std::int64_t offset) { return values_.data() + offset; }
  const T* value(std::int64_t offset) const { return values_.data() + offset; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<T> values_;
  std::vector<Entry> entries_;
};

// Per-thread scratch reused across layer calls.
template <typename T>
struct Workspace {
  struct PerThread {
    std::vector<T> col;
    std::vector<T> dcol;
    std::vector<T> w_partial;
    std::vector<T> b_partial;
    std::vector<double> stat_partial;
  };
  std::vector<PerThread> threads;
  int thread_count = 1;

  void configure(int threads_wanted) {
    thread_count = std::max(1, threads_wanted);
    threads.resize(static_cast<std::size_t>(thread_count));
  }
};

namespace detail {

template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Map = Eigen::Map<ColMat<T>>;
template <typename T>
using CMap = Eigen::Map<const ColMat<T>>;

// im2col into a row-major (ci*k*k, ho*wo) buffer: entry
// [(c*k+ky)*k+kx][oy*wo+ox] = x(c, oy*s-p+ky, ox*s-p+kx), zero outside.
template <typename T>
void im2col(const T* x, int ci, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* col) {
  for (int c = 0; c < ci; ++c) {
    const T* plane = x + static_cast<std::int64_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::int64_t>(c) * k * k + ky * k + kx) *
                           ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T{});
            continue;
          }
          const T* src = plane + static_cast<std::int64_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{};
          }
        }
      }
    }
  }
}

// Scatter-add of a col buffer back to an image; the adjoint of im2col.
template <typename T>
void col2im_add(const T* col, int ci, int h, int w, int k, int stride, int pad,
                int ho, int wo, T* x) {
  for (int c = 0; c < ci; ++c) {
    T* plane = x + static_cast<std::int64_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::int64_t>(c) * k * k + ky * k + kx) *
                                 ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::int64_t>(iy) * w;
          const T* src = row + static_cast<std::int64_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, weights (co, ci*k*k) + bias (co). Forward/backward run
// im2col + gemm per sample, parallel across samples; weight-gradient partials
// are reduced in shard order so results are bit-reproducible.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int ci, int co, int k,
         int stride = 1, int pad = -1)
      : ps_(&ps), ci_(ci), co_(co), k_(k), stride_(stride),
        pad_(pad < 0 ? k / 2 : pad) {
    std::int64_t fan = static_cast<std::int64_t>(ci) * k * k;
    w_off_ = ps.add(name + ".weight", {co, ci, k, k}, false, fan);
    b_off_ = ps.add(name + ".bias", {co}, false, fan);
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  int in_channels() const { return ci_; }
  int out_channels() const { return co_; }
  int fan_in() const { return ci_ * k_ * k_; }
  std::int64_t weight_offset() const { return w_off_; }
  std::int64_t bias_offset() const { return b_off_; }

  void forward(const Tensor<T>& x, Tensor<T>& y, Workspace<T>& ws) const {
    if (x.c() != ci_) throw ShapeError("conv input channels mismatch");
    int ho = out_size(x.h()), wo = out_size(x.w());
    y.resize(x.n(), co_, ho, wo);
    std::int64_t rows = static_cast<std::int64_t>(ci_) * k_ * k_;
    std::int64_t cols = static_cast<std::int64_t>(ho) * wo;
    detail::CMap<T> wt(ps_->value(w_off_), rows, co_);  // transposed view
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(
        ps_->value(b_off_), co_);
    parallel_for(x.n(), ws.thread_count, [&](std::int64_t lo, std::int64_t hi,
                                             int t) {
      auto& scratch = ws.threads[t];
      scratch.col.resize(rows * cols);
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::im2col(x.sample(static_cast<int>(n)), ci_, x.h(), x.w(), k_,
                       stride_, pad_, ho, wo, scratch.col.data());
        detail::CMap<T> col_t(scratch.col.data(), cols, rows);
        detail::Map<T> y_t(y.sample(static_cast<int>(n)), cols, co_);
        y_t.noalias() = col_t * wt;
        y_t.rowwise() += bias.transpose();
      }
    });
  }

  // Accumulates dW/db into the store and writes dx (unless dx == nullptr).
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx,
                Workspace<T>& ws) const {
    int ho = dy.h(), wo = dy.w();
    std::int64_t rows = static_cast<std::int64_t>(ci_) * k_ * k_;
    std::int64_t cols = static_cast<std::int64_t>(ho) * wo;
    std::int64_t wcount = rows * co_;
    if (dx != nullptr) dx->resize(x.n(), ci_, x.h(), x.w());
    detail::CMap<T> wt(ps_->value(w_off_), rows, co_);
    int shards = ws.thread_count;
    parallel_for(x.n(), shards, [&](std::int64_t lo, std::int64_t hi, int t) {
      auto& scratch = ws.threads[t];
      scratch.col.resize(rows * cols);
      scratch.dcol.resize(rows * cols);
      scratch.w_partial.assign(wcount, T{});
      scratch.b_partial.assign(co_, T{});
      detail::Map<T> dw_t(scratch.w_partial.data(), rows, co_);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(
          scratch.b_partial.data(), co_);
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::im2col(x.sample(static_cast<int>(n)), ci_, x.h(), x.w(), k_,
                       stride_, pad_, ho, wo, scratch.col.data());
        detail::CMap<T> col_t(scratch.col.data(), cols, rows);
        detail::CMap<T> dy_t(dy.sample(static_cast<int>(n)), cols, co_);
        dw_t.noalias() += col_t.transpose() * dy_t;
        db.noalias() += dy_t.colwise().sum().transpose();
        if (dx != nullptr) {
          detail::Map<T> dcol_t(scratch.dcol.data(), cols, rows);
          dcol_t.noalias() = dy_t * wt.transpose();
          T* dxs = dx->sample(static_cast<int>(n));
          std::fill(dxs, dxs + dx->sample_size(), T{});
          detail::col2im_add(scratch.dcol.data(), ci_, x.h(), x.w(), k_,
                             stride_, pad_, ho, wo, dxs);
        }
      }
    });
    reduce_partials(ws, wcount);
  }

 private:
  void reduce_partials(Workspace<T>& ws, std::int64_t wcount) const {
    T* gw = ps_->grad(w_off_);
    T* gb = ps_->grad(b_off_);
    // Shards that did not run this call were cleared by the previous reduce;
    // clear unconditionally so nothing stale ever survives to the next one.
    for (auto& scratch : ws.threads) {
      if (scratch.w_partial.size() == static_cast<std::size_t>(wcount)) {
        for (std::int64_t i = 0; i < wcount; ++i) gw[i] += scratch.w_partial[i];
        for (int i = 0; i < co_; ++i) gb[i] += scratch.b_partial[i];
      }
      scratch.w_partial.clear();
      scratch.b_partial.clear();
    }
  }

  ParamStore<T>* ps_ = nullptr;
  int ci_ = 0, co_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  std::int64_t w_off_ = 0, b_off_ = 0;
};

// Transposed 2-D convolution, weights (ci, co*k*k) + bias (co); the exact
// adjoint of a Conv2d with the same (k, stride, pad) mapping out -> in.
// Output size is fixed by the constructor's out_size (the "output padding"
// is implied by the requested canvas).
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& ps, const std::string& name, int ci, int co,
                  int k, int stride, int pad)
      : ps_(&ps), ci_(ci), co_(co), k_(k), stride_(stride), pad_(pad) {
    std::int64_t fan = static_cast<std::int64_t>(ci) * k * k;
    w_off_ = ps.add(name + ".weight", {ci, co, k, k}, false, fan);
    b_off_ = ps.add(name + ".bias", {co}, false, fan);
  }

  int fan_in() const { return ci_ * k_ * k_; }
  std::int64_t weight_offset() const { return w_off_; }
  std::int64_t bias_offset() const { return b_off_; }

  void forward(const Tensor<T>& x, Tensor<T>& y, int out_h, int out_w,
               Workspace<T>& ws) const {
    if (x.c() != ci_) throw ShapeError("conv_transpose input channels mismatch");
    y.resize(x.n(), co_, out_h, out_w);
    std::int64_t rows = static_cast<std::int64_t>(co_) * k_ * k_;
    std::int64_t cols = static_cast<std::int64_t>(x.h()) * x.w();
    detail::CMap<T> wt(ps_->value(w_off_), rows, ci_);  // transposed view
    const T* bias = ps_->value(b_off_);
    parallel_for(x.n(), ws.thread_count, [&](std::int64_t lo, std::int64_t hi,
                                             int t) {
      auto& scratch = ws.threads[t];
      scratch.col.resize(rows * cols);
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::CMap<T> x_t(x.sample(static_cast<int>(n)), cols, ci_);
        detail::Map<T> col_t(scratch.col.data(), cols, rows);
        col_t.noalias() = x_t * wt.transpose();
        T* ys = y.sample(static_cast<int>(n));
        for (int c = 0; c < co_; ++c) {
          T* plane = ys + static_cast<std::int64_t>(c) * out_h * out_w;
          std::fill(plane, plane + static_cast<std::int64_t>(out_h) * out_w,
                    bias[c]);
        }
        detail::col2im_add(scratch.col.data(), co_, out_h, out_w, k_, stride_,
                           pad_, x.h(), x.w(), ys);
      }
    });
  }

  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx,
                Workspace<T>& ws) const {
    std::int64_t rows = static_cast<std::int64_t>(co_) * k_ * k_;
    std::int64_t cols = static_cast<std::int64_t>(x.h()) * x.w();
    std::int64_t wcount = rows * ci_;
    if (dx != nullptr) dx->resize(x.n(), ci_, x.h(), x.w());
    detail::CMap<T> wt(ps_->value(w_off_), rows, ci_);
    parallel_for(x.n(), ws.thread_count, [&](std::int64_t lo, std::int64_t hi,
                                             int t) {
      auto& scratch = ws.threads[t];
      scratch.col.resize(rows * cols);
      scratch.w_partial.assign(wcount, T{});
      scratch.b_partial.assign(co_, T{});
      detail::Map<T> dw_t(scratch.w_partial.data(), rows, ci_);
      for (std::int64_t n = lo; n < hi; ++n) {
        // cols of dy under the conv that maps (out_h, out_w) -> (h, w)
        detail::im2col(dy.sample(static_cast<int>(n)), co_, dy.h(), dy.w(), k_,
                       stride_, pad_, x.h(), x.w(), scratch.col.data());
        detail::CMap<T> dycol_t(scratch.col.data(), cols, rows);
        detail::CMap<T> x_t(x.sample(static_cast<int>(n)), cols, ci_);
        dw_t.noalias() += dycol_t.transpose() * x_t;
        const T* dys = dy.sample(static_cast<int>(n));
        std::int64_t plane = static_cast<std::int64_t>(dy.h()) * dy.w();
        for (int c = 0; c < co_; ++c) {
          T acc{};
          const T* p = dys + c * plane;
          for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
          scratch.b_partial[c] += acc;
        }
        if (dx != nullptr) {
          detail::Map<T> dx_t(dx->sample(static_cast<int>(n)), cols, ci_);
          dx_t.noalias() = dycol_t * wt;
        }
      }
    });
    T* gw = ps_->grad(w_off_);
    T* gb = ps_->grad(b_off_);
    for (auto& scratch : ws.threads) {
      if (scratch.w_partial.size() == static_cast<std::size_t>(wcount)) {
        for (std::int64_t i = 0; i < wcount; ++i) gw[i] += scratch.w_partial[i];
        for (int i = 0; i < co_; ++i) gb[i] += scratch.b_partial[i];
      }
      scratch.w_partial.clear();
      scratch.b_partial.clear();
    }
  }

 private:
  ParamStore<T>* ps_ = nullptr;
  int ci_ = 0, co_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  std::int64_t w_off_ = 0, b_off_ = 0;
};

// Per-channel batch normalization over (N, H, W) with trainable affine and
// running statistics for eval mode (retention 0.9, unbiased running variance).
template <typename T>
class BatchNorm2d {
 public:
  struct BatchStats {
    std::vector<double> mean;
    std::vector<double> inv_std;
  };

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& ps, StateStore<T>& ss, const std::string& name,
              int channels)
      : ps_(&ps), ss_(&ss), c_(channels) {
    gamma_off_ = ps.add(name + ".gamma", {channels});
    beta_off_ = ps.add(name + ".beta", {channels});
    std::fill_n(ps.value(gamma_off_), channels, T{1});
    rmean_off_ = ss.add(name + ".running_mean", channels, T{0});
    rvar_off_ = ss.add(name + ".running_var", channels, T{1});
  }

  int channels() const { return c_; }
  std::int64_t gamma_offset() const { return gamma_off_; }
  std::int64_t beta_offset() const { return beta_off_; }

  void forward(const Tensor<T>& x, Tensor<T>& y, bool train, BatchStats* stats,
               Workspace<T>& ws) const {
    if (x.c() != c_) throw ShapeError("batchnorm channel mismatch");
    y.resize(x.n(), x.c(), x.h(), x.w());
    std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    std::int64_t m = static_cast<std::int64_t>(x.n()) * plane;
    std::vector<double> mean(c_), var(c_);
    if (train) {
      accumulate_moments(x, ws, mean, var);
      T* rm = ss_->value(rmean_off_);
      T* rv = ss_->value(rvar_off_);
      double unbias = m > 1 ? static_cast<double>(m) / (m - 1) : 1.0;
      for (int c = 0; c < c_; ++c) {
        rm[c] = static_cast<T>(kRetention * rm[c] + (1 - kRetention) * mean[c]);
        rv[c] = static_cast<T>(kRetention * rv[c] +
                               (1 - kRetention) * var[c] * unbias);
      }
    } else {
      const T* rm = ss_->value(rmean_off_);
      const T* rv = ss_->value(rvar_off_);
      for (int c = 0; c < c_; ++c) {
        mean[c] = rm[c];
        var[c] = rv[c];
      }
    }
    if (stats != nullptr) {
      stats->mean = mean;
      stats->inv_std.resize(c_);
    }
    const T* gamma = ps_->value(gamma_off_);
    const T* beta = ps_->value(beta_off_);
    std::vector<T> scale(c_), shift(c_);
    for (int c = 0; c < c_; ++c) {
      double inv = 1.0 / std::sqrt(var[c] + kEps);
      if (stats != nullptr) stats->inv_std[c] = inv;
      scale[c] = static_cast<T>(gamma[c] * inv);
      shift[c] = static_cast<T>(beta[c] - gamma[c] * inv * mean[c]);
    }
    parallel_for(x.n(), ws.thread_count, [&](std::int64_t lo, std::int64_t hi,
                                             int) {
      for (std::int64_t n = lo; n < hi; ++n) {
        const T* xs = x.sample(static_cast<int>(n));
        T* ys = y.sample(static_cast<int>(n));
        for (int c = 0; c < c_; ++c) {
          for (std::int64_t i = 0; i < plane; ++i) {
            ys[c * plane + i] = scale[c] * xs[c * plane + i] + shift[c];
          }
        }
      }
    });
  }

  void backward(const Tensor<T>& x, const Tensor<T>& dy,
                const BatchStats& stats, Tensor<T>* dx, Workspace<T>& ws) const {
    std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    std::int64_t m = static_cast<std::int64_t>(x.n()) * plane;
    // Per-shard partial sums of dy and dy*xhat per channel, shard-ordered.
    int shards = ws.thread_count;
    std::vector<double> sum_dy(static_cast<std::size_t>(shards) * c_, 0.0);
    std::vector<double> sum_dyx(static_cast<std::size_t>(shards) * c_, 0.0);
    parallel_for(x.n(), shards, [&](std::int64_t lo, std::int64_t hi, int t) {
      for (std::int64_t n = lo; n < hi; ++n) {
        const T* xs = x.sample(static_cast<int>(n));
        const T* dys = dy.sample(static_cast<int>(n));
        for (int c = 0; c < c_; ++c) {
          double s1 = 0, s2 = 0;
          double mu = stats.mean[c], inv = stats.inv_std[c];
          for (std::int64_t i = 0; i < plane; ++i) {
            double g = dys[c * plane + i];
            s1 += g;
            s2 += g * (xs[c * plane + i] - mu) * inv;
          }
          sum_dy[static_cast<std::size_t>(t) * c_ + c] += s1;
          sum_dyx[static_cast<std::size_t>(t) * c_ + c] += s2;
        }
      }
    });
    std::vector<double> s1(c_, 0.0), s2(c_, 0.0);
    for (int t = 0; t < shards; ++t) {
      for (int c = 0; c < c_; ++c) {
        s1[c] += sum_dy[static_cast<std::size_t>(t) * c_ + c];
        s2[c] += sum_dyx[static_cast<std::size_t>(t) * c_ + c];
      }
    }
    T* ggamma = ps_->grad(gamma_off_);
    T* gbeta = ps_->grad(beta_off_);
    const T* gamma = ps_->value(gamma_off_);
    for (int c = 0; c < c_; ++c) {
      gbeta[c] += static_cast<T>(s1[c]);
      ggamma[c] += static_cast<T>(s2[c]);
    }
    if (dx == nullptr) return;
    dx->resize(x.n(), x.c(), x.h(), x.w());
    std::vector<double> k1(c_), k2(c_), k3(c_);
    for (int c = 0; c < c_; ++c) {
      double ginv = gamma[c] * stats.inv_std[c];
      k1[c] = ginv;
      k2[c] = ginv * s1[c] / static_cast<double>(m);
      k3[c] = ginv * s2[c] / static_cast<double>(m);
    }
    parallel_for(x.n(), shards, [&](std::int64_t lo, std::int64_t hi, int) {
      for (std::int64_t n = lo; n < hi; ++n) {
        const T* xs = x.sample(static_cast<int>(n));
        const T* dys = dy.sample(static_cast<int>(n));
        T* dxs = dx->sample(static_cast<int>(n));
        for (int c = 0; c < c_; ++c) {
          double mu = stats.mean[c], inv = stats.inv_std[c];
          for (std::int64_t i = 0; i < plane; ++i) {
            double xhat = (xs[c * plane + i] - mu) * inv;
            dxs[c * plane + i] = static_cast<T>(
                k1[c] * dys[c * plane + i] - k2[c] - xhat * k3[c]);
          }
        }
      }
    });
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kRetention = 0.9;

 private:
  void accumulate_moments(const Tensor<T>& x, Workspace<T>& ws,
                          std::vector<double>& mean,
                          std::vector<double>& var) const {
    std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    std::int64_t m = static_cast<std::int64_t>(x.n()) * plane;
    int shards = ws.thread_count;
    std::vector<double> psum(static_cast<std::size_t>(shards) * c_, 0.0);
    std::vector<double> psq(static_cast<std::size_t>(shards) * c_, 0.0);
    parallel_for(x.n(), shards, [&](std::int64_t lo, std::int64_t hi, int t) {
      for (std::int64_t n = lo; n < hi; ++n) {
        const T* xs = x.sample(static_cast<int>(n));
        for (int c = 0; c < c_; ++c) {
          double s = 0, q = 0;
          for (std::int64_t i = 0; i < plane; ++i) {
            double v = xs[c * plane + i];
            s += v;
            q += v * v;
          }
          psum[static_cast<std::size_t>(t) * c_ + c] += s;
          psq[static_cast<std::size_t>(t) * c_ + c] += q;
        }
      }
    });
    for (int c = 0; c < c_; ++c) {
      double s = 0, q = 0;
      for (int t = 0; t < shards; ++t) {
        s += psum[static_cast<std::size_t>(t) * c_ + c];
        q += psq[static_cast<std::size_t>(t) * c_ + c];
      }
      mean[c] = s / static_cast<double>(m);
      var[c] = std::max(0.0, q / static_cast<double>(m) - mean[c] * mean[c]);
    }
  }

  ParamStore<T>* ps_ = nullptr;
  StateStore<T>* ss_ = nullptr;
  int c_ = 0;
  std::int64_t gamma_off_ = 0, beta_off_ = 0, rmean_off_ = 0, rvar_off_ = 0;
};

// Fully connected layer y = x W^T + b treating each sample's CHW block as a
// flat row-major vector (flat index = (c*H + y)*W + x).
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(ParamStore<T>& ps, const std::string& name, int in, int out,
        bool fully_connected)
      : ps_(&ps), in_(in), out_(out) {
    w_off_ = ps.add(name + ".weight", {out, in}, fully_connected, in);
    b_off_ = ps.add(name + ".bias", {out}, fully_connected, in);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  int fan_in() const { return in_; }
  std::int64_t weight_offset() const { return w_off_; }
  std::int64_t bias_offset() const { return b_off_; }

  void forward(const Tensor<T>& x, Tensor<T>& y) const {
    if (x.sample_size() != in_) throw ShapeError("dense input size mismatch");
    y.resize(x.n(), out_, 1, 1);
    detail::CMap<T> x_t(x.data(), in_, x.n());
    detail::CMap<T> w_t(ps_->value(w_off_), in_, out_);
    detail::Map<T> y_t(y.data(), out_, y.n());
    y_t.noalias() = w_t.transpose() * x_t;
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(
        ps_->value(b_off_), out_);
    y_t.colwise() += bias;
  }

  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) const {
    detail::CMap<T> x_t(x.data(), in_, x.n());
    detail::CMap<T> dy_t(dy.data(), out_, dy.n());
    detail::Map<T> dw_t(ps_->grad(w_off_), in_, out_);
    dw_t.noalias() += x_t * dy_t.transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(ps_->grad(b_off_), out_);
    db.noalias() += dy_t.rowwise().sum();
    if (dx != nullptr) {
      dx->resize(x.n(), x.c(), x.h(), x.w());
      detail::Map<T> dx_t(dx->data(), in_, x.n());
      detail::CMap<T> w_t(ps_->value(w_off_), in_, out_);
      dx_t.noalias() = w_t * dy_t;
    }
  }

 private:
  ParamStore<T>* ps_ = nullptr;
  int in_ = 0, out_ = 0;
  std::int64_t w_off_ = 0, b_off_ = 0;
};

template <typename T>
void leaky_relu_forward(const Tensor<T>& x, Tensor<T>& y, T slope,
                        Workspace<T>& ws) {
  y.resize(x.n(), x.c(), x.h(), x.w());
  parallel_for(x.size(), ws.thread_count,
               [&](std::int64_t lo, std::int64_t hi, int) {
                 const T* xs = x.data();
                 T* ys = y.data();
                 for (std::int64_t i = lo; i < hi; ++i) {
                   ys[i] = xs[i] >= T{0} ? xs[i] : slope * xs[i];
                 }
               });
}

template <typename T>
void leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx,
                         T slope, Workspace<T>& ws) {
  dx.resize(x.n(), x.c(), x.h(), x.w());
  parallel_for(x.size(), ws.thread_count,
               [&](std::int64_t lo, std::int64_t hi, int) {
                 const T* xs = x.data();
                 const T* dys = dy.data();
                 T* dxs = dx.data();
                 for (std::int64_t i = lo; i < hi; ++i) {
                   dxs[i] = xs[i] >= T{0} ? dys[i] : slope * dys[i];
                 }
               });
}

template <typename T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y, Workspace<T>& ws) {
  y.resize(x.n(), x.c(), x.h(), x.w());
  parallel_for(x.size(), ws.thread_count,
               [&](std::int64_t lo, std::int64_t hi, int) {
                 const T* xs = x.data();
                 T* ys = y.data();
                 for (std::int64_t i = lo; i < hi; ++i) {
                   double v = xs[i];
                   double e = std::exp(-std::abs(v));
                   double s = v >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
                   ys[i] = static_cast<T>(s);
                 }
               });
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx,
                      Workspace<T>& ws) {
  dx.resize(y.n(), y.c(), y.h(), y.w());
  parallel_for(y.size(), ws.thread_count,
               [&](std::int64_t lo, std::int64_t hi, int) {
                 const T* ys = y.data();
                 const T* dys = dy.data();
                 T* dxs = dx.data();
                 for (std::int64_t i = lo; i < hi; ++i) {
                   dxs[i] = dys[i] * ys[i] * (T{1} - ys[i]);
                 }
               });
}

template <typename T>
void add_inplace(Tensor<T>& y, const Tensor<T>& x, Workspace<T>& ws) {
  if (!y.same_shape(x)) throw ShapeError("residual add shape mismatch");
  parallel_for(y.size(), ws.thread_count,
               [&](std::int64_t lo, std::int64_t hi, int) {
                 T* ys = y.data();
                 const T* xs = x.data();
                 for (std::int64_t i = lo; i < hi; ++i) ys[i] += xs[i];
               });
}

}  // namespace nfcsi
