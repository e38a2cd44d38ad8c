#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "nfcsi/channel.hpp"
#include "nfcsi/common.hpp"
#include "nfcsi/dataset.hpp"
#include "nfcsi/tensor.hpp"

namespace nfcsi {

// Per-sample squared-error ratios ||in - out||_F^2 / ||in||_F^2.
template <typename T>
std::vector<double> nmse_ratios(const Tensor<T>& h_in, const Tensor<T>& h_out) {
  if (!h_in.same_shape(h_out)) throw ShapeError("nmse: shape mismatch");
  std::vector<double> ratios(h_in.n());
  std::int64_t m = h_in.sample_size();
  for (int n = 0; n < h_in.n(); ++n) {
    const T* a = h_in.sample(n);
    const T* b = h_out.sample(n);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < m; ++i) {
      double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      num += d * d;
      den += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    }
    if (den == 0.0) throw DomainError("nmse: zero-energy reference sample");
    ratios[n] = num / den;
  }
  return ratios;
}

inline double nmse_db_from_ratios(const std::vector<double>& ratios) {
  if (ratios.empty()) throw DomainError("nmse: empty sample set");
  double mean = 0;
  for (double r : ratios) mean += r;
  mean /= static_cast<double>(ratios.size());
  // perfect reconstruction encodes as -infinity
  if (mean == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(mean);
}

// NMSE in dB: 10*log10( E_samples[ ||in-out||^2 / ||in||^2 ] ).
template <typename T>
double nmse(const Tensor<T>& h_in, const Tensor<T>& h_out) {
  return nmse_db_from_ratios(nmse_ratios(h_in, h_out));
}

struct CosineSimilarityResult {
  double rho = 0.0;
  std::int64_t excluded_columns = 0;  // zero-norm columns skipped
  std::vector<double> per_sample;
};

namespace detail_metrics {

// Mean over the 32 columns of the complex 32x32 reshape of
// |h_out(n)^H h_in(n)| / (||h_out(n)|| ||h_in(n)||).
template <typename T>
double sample_rho(const T* in, const T* out, std::int64_t* excluded) {
  constexpr int side = kImageSide;
  constexpr std::int64_t plane = static_cast<std::int64_t>(side) * side;
  double acc = 0;
  int counted = 0;
  for (int col = 0; col < side; ++col) {
    std::complex<double> dot{0, 0};
    double nin = 0, nout = 0;
    for (int row = 0; row < side; ++row) {
      std::int64_t k = static_cast<std::int64_t>(row) * side + col;
      std::complex<double> hin(in[k], in[plane + k]);
      std::complex<double> hout(out[k], out[plane + k]);
      dot += std::conj(hout) * hin;
      nin += std::norm(hin);
      nout += std::norm(hout);
    }
    if (nin == 0.0 || nout == 0.0) {
      ++(*excluded);
      continue;
    }
    acc += std::abs(dot) / std::sqrt(nin * nout);
    ++counted;
  }
  return counted > 0 ? acc / counted : 0.0;
}

}  // namespace detail_metrics

// Cosine similarity rho averaged over samples; images must be 2x32x32.
template <typename T>
CosineSimilarityResult cosine_similarity(const Tensor<T>& h_in,
                                         const Tensor<T>& h_out) {
  if (!h_in.same_shape(h_out)) throw ShapeError("rho: shape mismatch");
  if (h_in.c() != kImageChannels || h_in.h() != kImageSide ||
      h_in.w() != kImageSide) {
    throw ShapeError("rho is defined on 2x32x32 images");
  }
  CosineSimilarityResult res;
  res.per_sample.resize(h_in.n());
  double acc = 0;
  for (int n = 0; n < h_in.n(); ++n) {
    res.per_sample[n] = detail_metrics::sample_rho(
        h_in.sample(n), h_out.sample(n), &res.excluded_columns);
    acc += res.per_sample[n];
  }
  res.rho = h_in.n() > 0 ? acc / h_in.n() : 0.0;
  return res;
}

// Fraction of the perfect-CSI matched-filter beamforming gain retained when
// precoding with the recovered channel instead of the true one (N2 = 1).
// The noise power cancels in the ratio; the parameter is kept for the
// probe's signature.
inline double precoding_snr_probe(const ChannelMatrix& h_true,
                                  const ChannelMatrix& h_recovered,
                                  double /*noise_power*/ = 1.0) {
  if (h_true.rows() != 1 || h_recovered.rows() != 1) {
    throw DomainError("precoding probe requires N2 = 1");
  }
  if (h_true.cols() != h_recovered.cols()) {
    throw ShapeError("precoding probe: channel length mismatch");
  }
  double n_true = 0, n_rec = 0;
  std::complex<double> dot{0, 0};
  for (std::size_t i = 0; i < h_true.entries.size(); ++i) {
    n_true += std::norm(h_true.entries[i]);
    n_rec += std::norm(h_recovered.entries[i]);
    // v = h_rec^H / ||h_rec||, received amplitude = h_true . v
    dot += h_true.entries[i] * std::conj(h_recovered.entries[i]);
  }
  if (n_true == 0.0 || n_rec == 0.0) {
    throw DomainError("precoding probe: zero channel");
  }
  return std::norm(dot) / (n_rec * n_true);
}

}  // namespace nfcsi
