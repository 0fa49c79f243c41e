// schedule.hpp: bridge probability-path schedule and the SNR-matching
// change of variables between bridge states and VP diffusion inputs.
//
// The conditional path between endpoints (x0, x1) is
//   x_t ~ N(mu_t, sigma_t^2 I),  mu_t = (1-t) x0 + t x1,
//   sigma_t^2 = t (1-t) tau,
// and a bridge state x_t at noise scale sigma_t corresponds to the VP
// diffusion input y at level alpha_bar through equal signal-to-noise:
//   alpha_bar = 1 / (sigma_t^2 + 1),  y = x_t / sqrt(sigma_t^2 + 1).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbridge/batch.hpp"

namespace sbridge {

// Bridge-schedule parameters.
struct SbParams {
  double tau = 6.25;       // path variance scale, tau >= 0
  double t0 = 0.2;         // initial bridge time in [0, 1)
  double t_clamp = 1e-3;   // velocity evaluation keeps t in [t_clamp, 1-t_clamp]

  void validate() const {
    if (!(tau >= 0.0)) throw std::invalid_argument("SbParams: tau must be >= 0");
    if (!(t0 >= 0.0 && t0 < 1.0))
      throw std::invalid_argument("SbParams: t0 must be in [0, 1)");
    if (!(t_clamp > 0.0 && t_clamp < 0.5))
      throw std::invalid_argument("SbParams: t_clamp must be in (0, 0.5)");
  }
};

// Solver configuration for one translation run.
struct BridgeConfig {
  SbParams sb;
  double omega = 11.0;        // guidance scale, >= 0
  int nfe = 8;                // predictor evaluations per sample, >= 1
  bool final_denoise = true;  // spend the last evaluation on a denoising step
  std::uint64_t seed = 0;

  void validate() const {
    sb.validate();
    if (nfe < 1) throw std::invalid_argument("BridgeConfig: nfe must be >= 1");
    if (!(omega >= 0.0))
      throw std::invalid_argument("BridgeConfig: omega must be >= 0");
  }
};

// VP diffusion noise level.  The complement 1 - alpha_bar is stored
// explicitly: recomputing it by subtraction loses all significance when
// sigma_t^2 << 1, and the SNR identity alpha_bar/(1-alpha_bar) = 1/sigma^2
// must hold to ~1e-12 relative.
struct NoiseLevel {
  double alpha_bar = 1.0;       // in (0, 1]
  double one_minus = 0.0;       // 1 - alpha_bar, computed without cancellation

  static NoiseLevel from_alpha_bar(double ab) {
    if (!(ab > 0.0 && ab <= 1.0))
      throw std::invalid_argument("NoiseLevel: alpha_bar must be in (0, 1]");
    return {ab, 1.0 - ab};
  }
  static NoiseLevel from_sigma_sq(double s2) {
    if (!(s2 >= 0.0))
      throw std::invalid_argument("NoiseLevel: sigma^2 must be >= 0");
    return {1.0 / (s2 + 1.0), s2 / (s2 + 1.0)};
  }

  double snr() const { return alpha_bar / one_minus; }  // inf at alpha_bar = 1
  double sqrt_ab() const { return std::sqrt(alpha_bar); }
  double sqrt_omab() const { return std::sqrt(one_minus); }
};

// sigma_t = sqrt(t (1-t) tau).  Zero at both endpoints, peak at t = 1/2.
inline double sb_sigma(double t, double tau) {
  return std::sqrt(t * (1.0 - t) * tau);
}

inline double sb_sigma_sq(double t, double tau) { return t * (1.0 - t) * tau; }

// mu_t = (1-t) x0 + t x1.
inline Point sb_mu(std::span<const double> x0, std::span<const double> x1,
                   double t) {
  require_same_dim(x0, x1, "sb_mu");
  Point mu(x0.size());
  for (std::size_t k = 0; k < x0.size(); ++k)
    mu[k] = (1.0 - t) * x0[k] + t * x1[k];
  return mu;
}

// SNR matching: bridge state -> (noise level, VP input).
// At sigma_t = 0 this is the identity (alpha_bar = 1, y = x_t).
inline NoiseLevel snr_match_level(double t, double tau) {
  return NoiseLevel::from_sigma_sq(sb_sigma_sq(t, tau));
}

inline std::pair<NoiseLevel, Point> snr_match(std::span<const double> x_t,
                                              double t, double tau) {
  NoiseLevel level = snr_match_level(t, tau);
  double scale = level.sqrt_ab();
  Point y(x_t.size());
  for (std::size_t k = 0; k < x_t.size(); ++k) y[k] = x_t[k] * scale;
  return {level, y};
}

inline double clamp_time(double t, double t_clamp) {
  return std::clamp(t, t_clamp, 1.0 - t_clamp);
}

// Coefficient of the noise predictor in the bridge ODE velocity:
// (1/2 - t) sqrt(tau) / sqrt(t (1-t)).  Diverges at the endpoints, which
// is why velocity evaluation clamps t.
inline double noise_coefficient(double t, double tau) {
  return (0.5 - t) * std::sqrt(tau) / std::sqrt(t * (1.0 - t));
}

}  // namespace sbridge
