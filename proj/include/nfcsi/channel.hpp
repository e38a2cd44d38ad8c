#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "nfcsi/common.hpp"

namespace nfcsi {

// Geometric free-space spherical-wave model for a BS uniform linear array of
// N1 antennas and a user array of N2 antennas. The BS array lies along the
// y-axis with antenna n1 at (0, n1*d); the reference point of the user array
// sits at polar (r, theta) and the user array extends in direction
// (sin(phi), cos(phi)), antenna n2 offset by n2*d. Indices are one-based and
// offsets start at d, matching the defining equations verbatim.
struct SystemGeometry {
  int n_bs_antennas = 1024;   // N1
  int n_user_antennas = 1;    // N2
  double antenna_spacing = 0.005;  // d, meters
  double wavelength = 0.01;        // lambda, meters
  double range = 10.0;             // r: first user antenna to first BS antenna
  double transmit_angle = 0.0;     // theta, radians
  double relative_angle = 0.0;     // phi, radians

  void validate() const {
    if (n_bs_antennas < 1) throw ConfigError("n_bs_antennas must be >= 1");
    if (n_user_antennas < 1) throw ConfigError("n_user_antennas must be >= 1");
    if (!(antenna_spacing > 0)) throw ConfigError("antenna_spacing must be > 0");
    if (!(wavelength > 0)) throw ConfigError("wavelength must be > 0");
    if (!(range > 0)) throw ConfigError("range must be > 0");
    // Guard keeps the user clear of the array so no pairwise distance can
    // reach zero.
    double guard = (n_bs_antennas + n_user_antennas) * antenna_spacing;
    if (!(range > guard)) {
      throw ConfigError("range " + std::to_string(range) +
                        " must exceed (N1+N2)*d = " + std::to_string(guard));
    }
  }
};

struct ChannelMatrix {
  std::vector<std::complex<double>> entries;  // row-major N2 x N1
  SystemGeometry geometry;

  int rows() const { return geometry.n_user_antennas; }
  int cols() const { return geometry.n_bs_antennas; }
  std::complex<double>& at(int n2, int n1) {
    return entries[static_cast<std::size_t>(n2 - 1) * cols() + (n1 - 1)];
  }
  const std::complex<double>& at(int n2, int n1) const {
    return entries[static_cast<std::size_t>(n2 - 1) * cols() + (n1 - 1)];
  }
};

inline void check_antenna_indices(const SystemGeometry& g, int n1, int n2) {
  if (n1 < 1 || n1 > g.n_bs_antennas) {
    throw DomainError("BS antenna index " + std::to_string(n1) +
                      " out of range 1.." + std::to_string(g.n_bs_antennas));
  }
  if (n2 < 1 || n2 > g.n_user_antennas) {
    throw DomainError("user antenna index " + std::to_string(n2) +
                      " out of range 1.." + std::to_string(g.n_user_antennas));
  }
}

// Distance from BS antenna n1 to user antenna n2, expanded form:
//   sqrt(r^2 + d1^2 + d2^2 + 2(r*d2*sin(theta+phi) - r*d1*sin(theta)
//        - d1*d2*cos(phi)))
// with d1 = n1*d, d2 = n2*d.
inline double pairwise_distance(const SystemGeometry& g, int n1, int n2) {
  g.validate();
  check_antenna_indices(g, n1, n2);
  double d1 = n1 * g.antenna_spacing;
  double d2 = n2 * g.antenna_spacing;
  double r = g.range;
  double theta = g.transmit_angle;
  double phi = g.relative_angle;
  double radicand =
      r * r + d1 * d1 + d2 * d2 +
      2.0 * (r * d2 * std::sin(theta + phi) - r * d1 * std::sin(theta) -
             d1 * d2 * std::cos(phi));
  if (!(radicand > 0)) {
    throw DegenerateGeometryError(
        "non-positive squared distance: user placed inside/on the array");
  }
  return std::sqrt(radicand);
}

// Channel coefficient (1/r_pair) * exp(-j*2*pi*r_pair/lambda): unit-power
// free-space path loss with spherical-wave phase.
inline std::complex<double> channel_entry(const SystemGeometry& g, int n1,
                                          int n2) {
  double dist = pairwise_distance(g, n1, n2);
  double phase = -2.0 * std::numbers::pi * dist / g.wavelength;
  return std::polar(1.0 / dist, phase);
}

inline ChannelMatrix channel_matrix(const SystemGeometry& g) {
  g.validate();
  ChannelMatrix out;
  out.geometry = g;
  out.entries.resize(static_cast<std::size_t>(g.n_user_antennas) *
                     g.n_bs_antennas);
  for (int n2 = 1; n2 <= g.n_user_antennas; ++n2) {
    for (int n1 = 1; n1 <= g.n_bs_antennas; ++n1) {
      out.at(n2, n1) = channel_entry(g, n1, n2);
    }
  }
  return out;
}

// Near/far-field boundary 2*D^2/lambda for aperture D = (N1-1)*d.
inline double rayleigh_distance(const SystemGeometry& g) {
  g.validate();
  double aperture = (g.n_bs_antennas - 1) * g.antenna_spacing;
  return 2.0 * aperture * aperture / g.wavelength;
}

}  // namespace nfcsi
