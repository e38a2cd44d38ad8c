#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfcsi/common.hpp"
#include "nfcsi/layers.hpp"
#include "nfcsi/rng.hpp"
#include "nfcsi/tensor.hpp"

namespace nfcsi {

enum class Architecture { kExtendNLNet, kCsiNetBaseline };

inline std::string architecture_name(Architecture a) {
  return a == Architecture::kExtendNLNet ? "extendnlnet" : "csinet";
}

inline Architecture architecture_from_name(const std::string& s) {
  if (s == "extendnlnet") return Architecture::kExtendNLNet;
  if (s == "csinet") return Architecture::kCsiNetBaseline;
  throw ConfigError("unknown architecture: " + s +
                    " (expected extendnlnet or csinet)");
}

struct ModelConfig {
  Architecture architecture = Architecture::kExtendNLNet;
  int compression_ratio = 16;
  int image_size = 32;     // spatial side; 32 for the real pipeline
  int image_channels = 2;  // Re/Im planes
  double leaky_slope = 0.3;
  int nl_downsampled_channels = 16;
  int nl_embed_channels = 8;
  int nl_blocks_encoder = 1;
  int nl_blocks_decoder = 1;

  int flattened_length() const {
    return image_channels * image_size * image_size;
  }
  int codeword_length() const { return flattened_length() / compression_ratio; }

  void validate() const {
    if (image_channels < 1 || image_size < 2 || image_size % 2 != 0) {
      throw ConfigError("image must have >=1 channels and even spatial size");
    }
    if (compression_ratio < 1 ||
        flattened_length() % compression_ratio != 0) {
      throw ConfigError("compression_ratio must divide L = " +
                        std::to_string(flattened_length()) + " exactly");
    }
    if (nl_downsampled_channels < 1 || nl_embed_channels < 1 ||
        nl_blocks_encoder < 0 || nl_blocks_decoder < 0) {
      throw ConfigError("non-local channel/block counts must be positive");
    }
  }

  nlohmann::json to_json() const {
    return {{"architecture", architecture_name(architecture)},
            {"compression_ratio", compression_ratio},
            {"image_size", image_size},
            {"image_channels", image_channels},
            {"leaky_slope", leaky_slope},
            {"nl_downsampled_channels", nl_downsampled_channels},
            {"nl_embed_channels", nl_embed_channels},
            {"nl_blocks_encoder", nl_blocks_encoder},
            {"nl_blocks_decoder", nl_blocks_decoder}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = architecture_from_name(j.at("architecture"));
    c.compression_ratio = j.at("compression_ratio");
    c.image_size = j.at("image_size");
    c.image_channels = j.at("image_channels");
    c.leaky_slope = j.at("leaky_slope");
    c.nl_downsampled_channels = j.at("nl_downsampled_channels");
    c.nl_embed_channels = j.at("nl_embed_channels");
    c.nl_blocks_encoder = j.at("nl_blocks_encoder");
    c.nl_blocks_decoder = j.at("nl_blocks_decoder");
    c.validate();
    return c;
  }
};

// Non-Local block: stride-2 downsample, embedded-Gaussian attention over all
// positions of the downsampled map, channel restore, transposed-conv
// upsample, residual add of the block input. The two spatial convolutions
// are batch normalized; the 1x1 attention embeddings are not.
template <typename T>
class NonLocalBlock {
 public:
  struct Ctx {
    Tensor<T> down, bn_down, theta, phi, g, attn, attn_y, post, up, out;
    typename BatchNorm2d<T>::BatchStats down_stats, up_stats;
  };

  NonLocalBlock() = default;
  NonLocalBlock(ParamStore<T>& ps, StateStore<T>& ss, const std::string& name,
                int channels, int down_channels, int embed_channels)
      : channels_(channels), down_channels_(down_channels),
        embed_channels_(embed_channels),
        down_(ps, name + ".down", channels, down_channels, 3, 2, 1),
        bn_down_(ps, ss, name + ".bn_down", down_channels),
        theta_(ps, name + ".theta", down_channels, embed_channels, 1, 1, 0),
        phi_(ps, name + ".phi", down_channels, embed_channels, 1, 1, 0),
        g_(ps, name + ".g", down_channels, embed_channels, 1, 1, 0),
        post_(ps, name + ".post", embed_channels, down_channels, 1, 1, 0),
        up_(ps, name + ".up", down_channels, channels, 3, 2, 1),
        bn_up_(ps, ss, name + ".bn_up", channels) {}

  void forward(const Tensor<T>& x, bool train, Ctx& ctx, Workspace<T>& ws) const {
    if (x.h() != x.w()) throw ShapeError("non-local block expects square maps");
    int side = x.h();
    down_.forward(x, ctx.down, ws);
    bn_down_.forward(ctx.down, ctx.bn_down, train, &ctx.down_stats, ws);
    theta_.forward(ctx.bn_down, ctx.theta, ws);
    phi_.forward(ctx.bn_down, ctx.phi, ws);
    g_.forward(ctx.bn_down, ctx.g, ws);
    attention_forward(ctx, ws);
    post_.forward(ctx.attn_y, ctx.post, ws);
    up_.forward(ctx.post, ctx.up, side, side, ws);
    bn_up_.forward(ctx.up, ctx.out, train, &ctx.up_stats, ws);
    add_inplace(ctx.out, x, ws);
  }

  // dy -> dx; parameter grads accumulate in the store.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Ctx& ctx,
                Tensor<T>& dx, Workspace<T>& ws) const {
    Tensor<T>& d_up = ctx.out;  // reuse buffers that are no longer needed
    bn_up_.backward(ctx.up, dy, ctx.up_stats, &d_up, ws);
    Tensor<T> d_post, d_attn_y, d_g, d_theta, d_phi, d_embed_in, d_bn_down;
    up_.backward(ctx.post, d_up, &d_post, ws);
    post_.backward(ctx.attn_y, d_post, &d_attn_y, ws);
    attention_backward(ctx, d_attn_y, d_theta, d_phi, d_g, ws);
    // three 1x1 embeddings share the same input; sum their input grads
    g_.backward(ctx.bn_down, d_g, &d_embed_in, ws);
    theta_.backward(ctx.bn_down, d_theta, &d_bn_down, ws);
    add_inplace(d_embed_in, d_bn_down, ws);
    phi_.backward(ctx.bn_down, d_phi, &d_bn_down, ws);
    add_inplace(d_embed_in, d_bn_down, ws);
    Tensor<T> d_down;
    bn_down_.backward(ctx.down, d_embed_in, ctx.down_stats, &d_down, ws);
    down_.backward(x, d_down, &dx, ws);
    add_inplace(dx, dy, ws);  // residual path
  }

  int positions(int side) const { return (side / 2) * (side / 2); }

 private:
  // Embedded-Gaussian attention. For each output position i,
  // y_i = sum_j softmax_j(theta_i . phi_j) * g_j. ctx.attn stores, per
  // sample, the column-major (P x P) matrix A with A(j, i) = weight of j in
  // the i-th output, i.e. each column sums to 1.
  void attention_forward(Ctx& ctx, Workspace<T>& ws) const {
    int hp = ctx.theta.h(), wp = ctx.theta.w();
    int p = hp * wp;
    int ce = embed_channels_;
    ctx.attn.resize(ctx.theta.n(), 1, p, p);
    ctx.attn_y.resize(ctx.theta.n(), ce, hp, wp);
    parallel_for(ctx.theta.n(), ws.thread_count,
                 [&](std::int64_t lo, std::int64_t hi, int) {
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::CMap<T> theta_t(ctx.theta.sample(static_cast<int>(n)), p, ce);
        detail::CMap<T> phi_t(ctx.phi.sample(static_cast<int>(n)), p, ce);
        detail::CMap<T> g_t(ctx.g.sample(static_cast<int>(n)), p, ce);
        detail::Map<T> a(ctx.attn.sample(static_cast<int>(n)), p, p);
        // a(j, i) = phi_j . theta_i, then column-wise softmax
        a.noalias() = phi_t * theta_t.transpose();
        for (int i = 0; i < p; ++i) {
          auto col = a.col(i);
          T m = col.maxCoeff();
          col = (col.array() - m).exp();
          col /= col.sum();
        }
        detail::Map<T> y_t(ctx.attn_y.sample(static_cast<int>(n)), p, ce);
        y_t.noalias() = a.transpose() * g_t;
      }
    });
  }

  void attention_backward(Ctx& ctx, const Tensor<T>& d_attn_y,
                          Tensor<T>& d_theta, Tensor<T>& d_phi, Tensor<T>& d_g,
                          Workspace<T>& ws) const {
    int hp = ctx.theta.h(), wp = ctx.theta.w();
    int p = hp * wp;
    int ce = embed_channels_;
    d_theta.resize(ctx.theta.n(), ce, hp, wp);
    d_phi.resize(ctx.theta.n(), ce, hp, wp);
    d_g.resize(ctx.theta.n(), ce, hp, wp);
    parallel_for(ctx.theta.n(), ws.thread_count,
                 [&](std::int64_t lo, std::int64_t hi, int t) {
      auto& scratch = ws.threads[t];
      scratch.col.resize(static_cast<std::int64_t>(p) * p);
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::CMap<T> theta_t(ctx.theta.sample(static_cast<int>(n)), p, ce);
        detail::CMap<T> phi_t(ctx.phi.sample(static_cast<int>(n)), p, ce);
        detail::CMap<T> g_t(ctx.g.sample(static_cast<int>(n)), p, ce);
        detail::CMap<T> a(ctx.attn.sample(static_cast<int>(n)), p, p);
        detail::CMap<T> dy_t(d_attn_y.sample(static_cast<int>(n)), p, ce);
        detail::Map<T> dg_t(d_g.sample(static_cast<int>(n)), p, ce);
        dg_t.noalias() = a * dy_t;
        // dA(j,i) = g_j . dy_i, then softmax backward per column
        detail::Map<T> ds(scratch.col.data(), p, p);
        ds.noalias() = g_t * dy_t.transpose();
        for (int i = 0; i < p; ++i) {
          auto acol = a.col(i);
          auto dcol = ds.col(i);
          T dot = acol.dot(dcol);
          dcol = acol.array() * (dcol.array() - dot);
        }
        detail::Map<T> dtheta_t(d_theta.sample(static_cast<int>(n)), p, ce);
        detail::Map<T> dphi_t(d_phi.sample(static_cast<int>(n)), p, ce);
        dtheta_t.noalias() = ds.transpose() * phi_t;
        dphi_t.noalias() = ds * theta_t;
      }
    });
  }

  int channels_ = 0, down_channels_ = 0, embed_channels_ = 0;
  Conv2d<T> down_;
  BatchNorm2d<T> bn_down_;
  Conv2d<T> theta_, phi_, g_, post_;
  ConvTranspose2d<T> up_;
  BatchNorm2d<T> bn_up_;
};

// Residual three-convolution refinement: widths 8/16/2, each convolution
// batch normalized, LeakyReLU between stages and after the residual add.
template <typename T>
class RefineNetBlock {
 public:
  struct Ctx {
    Tensor<T> c1, b1, a1, c2, b2, a2, c3, b3, out;
    typename BatchNorm2d<T>::BatchStats s1, s2, s3;
  };

  RefineNetBlock() = default;
  RefineNetBlock(ParamStore<T>& ps, StateStore<T>& ss, const std::string& name,
                 int channels, int k1, int k2, int k3, T slope)
      : slope_(slope),
        conv1_(ps, name + ".conv1", channels, 8, k1),
        bn1_(ps, ss, name + ".bn1", 8),
        conv2_(ps, name + ".conv2", 8, 16, k2),
        bn2_(ps, ss, name + ".bn2", 16),
        conv3_(ps, name + ".conv3", 16, channels, k3),
        bn3_(ps, ss, name + ".bn3", channels) {}

  void forward(const Tensor<T>& x, bool train, Ctx& ctx, Workspace<T>& ws) const {
    conv1_.forward(x, ctx.c1, ws);
    bn1_.forward(ctx.c1, ctx.b1, train, &ctx.s1, ws);
    leaky_relu_forward(ctx.b1, ctx.a1, slope_, ws);
    conv2_.forward(ctx.a1, ctx.c2, ws);
    bn2_.forward(ctx.c2, ctx.b2, train, &ctx.s2, ws);
    leaky_relu_forward(ctx.b2, ctx.a2, slope_, ws);
    conv3_.forward(ctx.a2, ctx.c3, ws);
    bn3_.forward(ctx.c3, ctx.b3, train, &ctx.s3, ws);
    add_inplace(ctx.b3, x, ws);  // ctx.b3 becomes the pre-activation sum
    leaky_relu_forward(ctx.b3, ctx.out, slope_, ws);
  }

  void backward(const Tensor<T>& x, const Tensor<T>& dy, Ctx& ctx,
                Tensor<T>& dx, Workspace<T>& ws) const {
    Tensor<T> d_sum, d_b3, d_a2, d_b2, d_a1, d_b1;
    leaky_relu_backward(ctx.b3, dy, d_sum, slope_, ws);
    bn3_.backward(ctx.c3, d_sum, ctx.s3, &d_b3, ws);
    conv3_.backward(ctx.a2, d_b3, &d_a2, ws);
    leaky_relu_backward(ctx.b2, d_a2, d_b2, slope_, ws);
    bn2_.backward(ctx.c2, d_b2, ctx.s2, &d_a1, ws);
    conv2_.backward(ctx.a1, d_a1, &d_b1, ws);
    leaky_relu_backward(ctx.b1, d_b1, d_b1, slope_, ws);
    bn1_.backward(ctx.c1, d_b1, ctx.s1, &d_b1, ws);
    conv1_.backward(x, d_b1, &dx, ws);
    add_inplace(dx, d_sum, ws);  // residual path
  }

 private:
  T slope_ = T{0.3};
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Conv2d<T> conv3_;
  BatchNorm2d<T> bn3_;
};

struct ParameterAudit {
  struct Row {
    std::string name;
    std::int64_t count = 0;
    bool fully_connected = false;
  };
  std::int64_t total = 0;
  std::int64_t fc_params = 0;
  std::int64_t non_fc_params = 0;
  std::vector<Row> rows;

  nlohmann::json to_json() const {
    nlohmann::json per_layer = nlohmann::json::array();
    for (const auto& r : rows) {
      per_layer.push_back({{"name", r.name},
                           {"count", r.count},
                           {"fully_connected", r.fully_connected}});
    }
    return {{"total", total},
            {"fc_params", fc_params},
            {"non_fc_params", non_fc_params},
            {"per_layer", per_layer}};
  }
};

// The full autoencoder. Owns parameters, running statistics and scratch;
// forward passes are pure functions of (input, parameters, mode).
template <typename T>
class Autoencoder {
 public:
  struct Ctx {
    // encoder
    Tensor<T> enc_conv, enc_bn, enc_act, codeword;
    typename BatchNorm2d<T>::BatchStats enc_bn_stats;
    std::vector<typename NonLocalBlock<T>::Ctx> enc_nl;
    // decoder
    Tensor<T> dec_dense, dec_final_conv, output;
    std::vector<typename NonLocalBlock<T>::Ctx> dec_nl;
    std::vector<typename RefineNetBlock<T>::Ctx> refine;
  };

  explicit Autoencoder(const ModelConfig& config)
      : config_(config),
        ps_(std::make_unique<ParamStore<T>>()),
        ss_(std::make_unique<StateStore<T>>()) {
    config_.validate();
    int c = config_.image_channels;
    bool nl = config_.architecture == Architecture::kExtendNLNet;
    int enc_nl_blocks = nl ? config_.nl_blocks_encoder : 0;
    int dec_nl_blocks = nl ? config_.nl_blocks_decoder : 0;

    enc_conv_ = Conv2d<T>(*ps_, "encoder.conv1", c, c, 3);
    enc_bn_ = BatchNorm2d<T>(*ps_, *ss_, "encoder.bn1", c);
    for (int i = 0; i < enc_nl_blocks; ++i) {
      enc_nl_.emplace_back(*ps_, *ss_, "encoder.nl" + std::to_string(i + 1), c,
                           config_.nl_downsampled_channels,
                           config_.nl_embed_channels);
    }
    enc_dense_ = Dense<T>(*ps_, "encoder.dense", config_.flattened_length(),
                          config_.codeword_length(), true);
    dec_dense_ = Dense<T>(*ps_, "decoder.dense", config_.codeword_length(),
                          config_.flattened_length(), true);
    for (int i = 0; i < dec_nl_blocks; ++i) {
      dec_nl_.emplace_back(*ps_, *ss_, "decoder.nl" + std::to_string(i + 1), c,
                           config_.nl_downsampled_channels,
                           config_.nl_embed_channels);
    }
    int k1 = 3, k2 = nl ? 5 : 3, k3 = nl ? 9 : 3;
    T slope = static_cast<T>(config_.leaky_slope);
    for (int i = 0; i < 2; ++i) {
      refine_.emplace_back(*ps_, *ss_, "decoder.refine" + std::to_string(i + 1),
                           c, k1, k2, k3, slope);
    }
    dec_final_ = Conv2d<T>(*ps_, "decoder.conv_out", c, c, 3);
    ws_.configure(default_thread_count());
  }

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return *ps_; }
  const ParamStore<T>& params() const { return *ps_; }
  StateStore<T>& states() { return *ss_; }
  const StateStore<T>& states() const { return *ss_; }
  Workspace<T>& workspace() { return ws_; }
  void set_threads(int threads) { ws_.configure(threads); }

  // Uniform fan-in initialization U(+-1/sqrt(fan_in)) for conv/dense weights
  // and biases; batchnorm keeps gamma=1, beta=0. Pure function of the seed.
  void init_params(std::uint64_t seed) {
    for (const auto& e : ps_->entries()) {
      if (e.fan_in == 0) {
        T v = e.name.ends_with(".gamma") ? T{1} : T{0};
        std::fill_n(ps_->value(e.offset), e.count, v);
        continue;
      }
      double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
      T* p = ps_->value(e.offset);
      for (std::int64_t i = 0; i < e.count; ++i) {
        p[i] = static_cast<T>(rng_uniform(seed, RngStream::kWeightInit, 0,
                                          static_cast<std::uint64_t>(e.offset + i),
                                          -bound, bound));
      }
    }
    for (const auto& s : ss_->entries()) {
      T init = s.name.ends_with("running_var") ? T{1} : T{0};
      std::fill_n(ss_->value(s.offset), s.count, init);
    }
  }

  Tensor<T>& encode(const Tensor<T>& x, bool train, Ctx& ctx) {
    require_image(x);
    enc_conv_.forward(x, ctx.enc_conv, ws_);
    enc_bn_.forward(ctx.enc_conv, ctx.enc_bn, train, &ctx.enc_bn_stats, ws_);
    leaky_relu_forward(ctx.enc_bn, ctx.enc_act, slope(), ws_);
    ctx.enc_nl.resize(enc_nl_.size());
    const Tensor<T>* cur = &ctx.enc_act;
    for (std::size_t i = 0; i < enc_nl_.size(); ++i) {
      enc_nl_[i].forward(*cur, train, ctx.enc_nl[i], ws_);
      cur = &ctx.enc_nl[i].out;
    }
    // flatten is the identity on the row-major (c,h,w) block
    enc_dense_.forward(*cur, ctx.codeword);
    return ctx.codeword;
  }

  Tensor<T>& decode(const Tensor<T>& s, bool train, Ctx& ctx) {
    if (s.sample_size() != config_.codeword_length()) {
      throw ShapeError("codeword length mismatch: expected " +
                       std::to_string(config_.codeword_length()) + ", got " +
                       std::to_string(s.sample_size()));
    }
    dec_dense_.forward(s, ctx.dec_dense);
    ctx.dec_dense.reshape(s.n(), config_.image_channels, config_.image_size,
                          config_.image_size);
    ctx.dec_nl.resize(dec_nl_.size());
    const Tensor<T>* cur = &ctx.dec_dense;
    for (std::size_t i = 0; i < dec_nl_.size(); ++i) {
      dec_nl_[i].forward(*cur, train, ctx.dec_nl[i], ws_);
      cur = &ctx.dec_nl[i].out;
    }
    ctx.refine.resize(refine_.size());
    for (std::size_t i = 0; i < refine_.size(); ++i) {
      refine_[i].forward(*cur, train, ctx.refine[i], ws_);
      cur = &ctx.refine[i].out;
    }
    dec_final_.forward(*cur, ctx.dec_final_conv, ws_);
    sigmoid_forward(ctx.dec_final_conv, ctx.output, ws_);
    return ctx.output;
  }

  Tensor<T>& forward(const Tensor<T>& x, bool train, Ctx& ctx) {
    return decode(encode(x, train, ctx), train, ctx);
  }

  // Backpropagates d(loss)/d(output); accumulates parameter gradients.
  // dx, when non-null, receives d(loss)/d(input).
  void backward(const Tensor<T>& x, const Tensor<T>& d_output, Ctx& ctx,
                Tensor<T>* dx = nullptr) {
    Tensor<T> d_cur, d_tmp;
    sigmoid_backward(ctx.output, d_output, d_cur, ws_);
    const Tensor<T>* final_in =
        refine_.empty() ? &ctx.dec_dense : &ctx.refine.back().out;
    dec_final_.backward(*final_in, d_cur, &d_tmp, ws_);
    std::swap(d_cur, d_tmp);
    for (std::size_t i = refine_.size(); i-- > 0;) {
      const Tensor<T>& in = refine_input(ctx, i);
      refine_[i].backward(in, d_cur, ctx.refine[i], d_tmp, ws_);
      std::swap(d_cur, d_tmp);
    }
    for (std::size_t i = dec_nl_.size(); i-- > 0;) {
      const Tensor<T>& in = i == 0 ? ctx.dec_dense : ctx.dec_nl[i - 1].out;
      dec_nl_[i].backward(in, d_cur, ctx.dec_nl[i], d_tmp, ws_);
      std::swap(d_cur, d_tmp);
    }
    d_cur.reshape(d_cur.n(), config_.flattened_length(), 1, 1);
    dec_dense_.backward(ctx.codeword, d_cur, &d_tmp);
    std::swap(d_cur, d_tmp);
    const Tensor<T>* enc_out =
        enc_nl_.empty() ? &ctx.enc_act : &ctx.enc_nl.back().out;
    enc_dense_.backward(*enc_out, d_cur, &d_tmp);
    std::swap(d_cur, d_tmp);
    d_cur.reshape(d_cur.n(), config_.image_channels, config_.image_size,
                  config_.image_size);
    for (std::size_t i = enc_nl_.size(); i-- > 0;) {
      const Tensor<T>& in = i == 0 ? ctx.enc_act : ctx.enc_nl[i - 1].out;
      enc_nl_[i].backward(in, d_cur, ctx.enc_nl[i], d_tmp, ws_);
      std::swap(d_cur, d_tmp);
    }
    leaky_relu_backward(ctx.enc_bn, d_cur, d_tmp, slope(), ws_);
    std::swap(d_cur, d_tmp);
    enc_bn_.backward(ctx.enc_conv, d_cur, ctx.enc_bn_stats, &d_tmp, ws_);
    std::swap(d_cur, d_tmp);
    enc_conv_.backward(x, d_cur, dx, ws_);
  }

  ParameterAudit audit() const {
    ParameterAudit a;
    for (const auto& e : ps_->entries()) {
      a.rows.push_back({e.name, e.count, e.fully_connected});
      a.total += e.count;
      (e.fully_connected ? a.fc_params : a.non_fc_params) += e.count;
    }
    return a;
  }

  // Test hooks: zero one named parameter tensor (returns false if absent).
  bool zero_param(const std::string& name) {
    for (const auto& e : ps_->entries()) {
      if (e.name == name) {
        std::fill_n(ps_->value(e.offset), e.count, T{});
        return true;
      }
    }
    return false;
  }

  const Tensor<T>& attention_matrix(const Ctx& ctx, bool encoder_side,
                                    std::size_t block = 0) const {
    const auto& v = encoder_side ? ctx.enc_nl : ctx.dec_nl;
    if (block >= v.size()) throw ConfigError("no such non-local block");
    return v[block].attn;
  }

  // Sign pattern of every LeakyReLU input in the last forward pass. Two
  // evaluations with the same signature lie on the same smooth piece of the
  // loss, which is what makes a central difference a valid derivative there.
  std::vector<bool> kink_signature(const Ctx& ctx) const {
    std::vector<bool> sig;
    auto push = [&sig](const Tensor<T>& t) {
      for (std::int64_t i = 0; i < t.size(); ++i) sig.push_back(t.data()[i] >= T{0});
    };
    push(ctx.enc_bn);
    for (const auto& r : ctx.refine) {
      push(r.b1);
      push(r.b2);
      push(r.b3);  // post-residual sum feeding the final activation
    }
    return sig;
  }

 private:
  T slope() const { return static_cast<T>(config_.leaky_slope); }

  void require_image(const Tensor<T>& x) const {
    if (x.c() != config_.image_channels || x.h() != config_.image_size ||
        x.w() != config_.image_size) {
      throw ShapeError("expected input (N," +
                       std::to_string(config_.image_channels) + "," +
                       std::to_string(config_.image_size) + "," +
                       std::to_string(config_.image_size) + "), got " +
                       x.shape_str());
    }
  }

  const Tensor<T>& refine_input(const Ctx& ctx, std::size_t i) const {
    if (i > 0) return ctx.refine[i - 1].out;
    if (!ctx.dec_nl.empty()) return ctx.dec_nl.back().out;
    return ctx.dec_dense;
  }

  ModelConfig config_;
  std::unique_ptr<ParamStore<T>> ps_;
  std::unique_ptr<StateStore<T>> ss_;
  Workspace<T> ws_;

  Conv2d<T> enc_conv_;
  BatchNorm2d<T> enc_bn_;
  std::vector<NonLocalBlock<T>> enc_nl_;
  Dense<T> enc_dense_;
  Dense<T> dec_dense_;
  std::vector<NonLocalBlock<T>> dec_nl_;
  std::vector<RefineNetBlock<T>> refine_;
  Conv2d<T> dec_final_;
};

template <typename T>
ParameterAudit count_parameters(const Autoencoder<T>& model) {
  return model.audit();
}

}  // namespace nfcsi
