// baselines.hpp: matched-budget comparison translators over the learned
// denoiser: corrupt-then-denoise and invert-then-generate.
//
// Both run a deterministic denoising-step update along a noise-level path:
// at each level, Tweedie gives a clean estimate from the (optionally
// guided) noise prediction, and the state is re-embedded at the next
// level with the same noise estimate.  Level paths are uniform in log-SNR
// between their endpoints.  Each step spends one network evaluation, so a
// run at budget nfe makes exactly nfe steps.

#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/mlp.hpp"
#include "sbridge/rng.hpp"
#include "sbridge/schedule.hpp"

namespace sbridge {

struct BaselineParams {
  double abar_hi = 0.999;  // cleanest level used for embedding/extraction
  double abar_lo = 0.02;   // noisiest level (inversion terminal)

  void validate() const {
    if (!(abar_lo > 0.0 && abar_hi <= 1.0 && abar_lo < abar_hi))
      throw std::invalid_argument(
          "BaselineParams: need 0 < abar_lo < abar_hi <= 1");
  }
};

struct PfOdeConfig {
  int nfe = 8;
  double omega = 1.0;
  Domain token = Domain::target;
  std::vector<NoiseLevel> path;  // nfe+1 levels, monotone in alpha_bar

  void validate() const {
    if (nfe < 1) throw std::invalid_argument("PfOdeConfig: nfe must be >= 1");
    if (path.size() != static_cast<std::size_t>(nfe) + 1)
      throw std::invalid_argument("PfOdeConfig: path must hold nfe+1 levels");
    bool up = path.back().alpha_bar >= path.front().alpha_bar;
    for (std::size_t i = 1; i < path.size(); ++i) {
      bool step_up = path[i].alpha_bar >= path[i - 1].alpha_bar;
      if (step_up != up)
        throw std::invalid_argument("PfOdeConfig: path is not monotone");
    }
  }
};

// count+1 levels from `from` to `to`, uniform in log-SNR.
inline std::vector<NoiseLevel> level_path(NoiseLevel from, NoiseLevel to,
                                          std::size_t count) {
  if (count < 1) throw std::invalid_argument("level_path: count must be >= 1");
  const double lam0 = std::log(from.snr());
  const double lam1 = std::log(to.snr());
  std::vector<NoiseLevel> path;
  path.reserve(count + 1);
  path.push_back(from);
  for (std::size_t i = 1; i < count; ++i) {
    double lam = lam0 + (lam1 - lam0) * static_cast<double>(i) /
                            static_cast<double>(count);
    path.push_back(NoiseLevel::from_sigma_sq(std::exp(-lam)));
  }
  path.push_back(to);
  return path;
}

// One deterministic denoising-step update between two levels.
inline Point pf_ode_step(const NoisePredictor& net, std::span<const double> y,
                         NoiseLevel from, NoiseLevel to, Domain c,
                         double omega) {
  const std::size_t d = y.size();
  Point eps = net(y, from, c);
  if (omega != 1.0) {
    Point eps_null = net(y, from, Domain::null_token);
    for (std::size_t k = 0; k < d; ++k)
      eps[k] = (1.0 - omega) * eps_null[k] + omega * eps[k];
  }
  Point out(d);
  const double sa = from.sqrt_ab(), so = from.sqrt_omab();
  const double sa2 = to.sqrt_ab(), so2 = to.sqrt_omab();
  for (std::size_t k = 0; k < d; ++k) {
    double xhat = (y[k] - so * eps[k]) / sa;
    out[k] = sa2 * xhat + so2 * eps[k];
  }
  return out;
}

namespace detail {

inline SampleBatch run_pf_ode(const NoisePredictor& net, SampleBatch y,
                              const std::vector<NoiseLevel>& path, Domain c,
                              double omega) {
  for (std::size_t s = 0; s + 1 < path.size(); ++s) {
    for (std::size_t i = 0; i < y.n; ++i) {
      Point next = pf_ode_step(net, y.row(i), path[s], path[s + 1], c, omega);
      y.set_row(i, next);
    }
  }
  return y;
}

}  // namespace detail

// Corrupt-then-denoise: the input is noised by the forward process to the
// level whose SNR matches the bridge state at t0, then denoised toward the
// target with nfe guided steps.
inline SampleBatch sdedit_translate(const SampleBatch& x0, int nfe,
                                    const SbParams& sb, const NoisePredictor& net,
                                    double omega, RngStream& rng,
                                    BaselineParams bp = {}) {
  bp.validate();
  sb.validate();
  x0.validate();
  if (nfe < 1) throw std::invalid_argument("sdedit_translate: nfe must be >= 1");
  NoiseLevel start = snr_match_level(sb.t0, sb.tau);
  SampleBatch y(x0.n, x0.d);
  const double sa = start.sqrt_ab(), so = start.sqrt_omab();
  for (std::size_t i = 0; i < x0.n * x0.d; ++i)
    y.data[i] = sa * x0.data[i] + so * rng.normal();

  NoiseLevel end = NoiseLevel::from_alpha_bar(bp.abar_hi);
  auto path = level_path(start, end, static_cast<std::size_t>(nfe));
  y = detail::run_pf_ode(net, std::move(y), path, Domain::target, omega);
  for (double& v : y.data) v /= end.sqrt_ab();
  return y;
}

// Invert-then-generate: embed the input at the clean level, spend half the
// budget inverting toward the noisy terminal with source conditioning
// (unguided: the guided field is not the one whose inverse reproduces the
// data), then the other half generating back with target conditioning and
// guidance.
inline SampleBatch dual_bridge_translate(const SampleBatch& x0, int nfe,
                                         const NoisePredictor& net, double omega,
                                         BaselineParams bp = {}) {
  bp.validate();
  x0.validate();
  if (nfe < 2 || nfe % 2 != 0)
    throw std::invalid_argument("dual_bridge_translate: nfe must be even and "
                                ">= 2, got " + std::to_string(nfe));
  const std::size_t half = static_cast<std::size_t>(nfe) / 2;
  NoiseLevel hi = NoiseLevel::from_alpha_bar(bp.abar_hi);
  NoiseLevel lo = NoiseLevel::from_alpha_bar(bp.abar_lo);

  SampleBatch y(x0.n, x0.d);
  for (std::size_t i = 0; i < x0.n * x0.d; ++i)
    y.data[i] = hi.sqrt_ab() * x0.data[i];

  auto down = level_path(hi, lo, half);
  y = detail::run_pf_ode(net, std::move(y), down, Domain::source, 1.0);
  auto up = level_path(lo, hi, half);
  y = detail::run_pf_ode(net, std::move(y), up, Domain::target, omega);
  for (double& v : y.data) v /= hi.sqrt_ab();
  return y;
}

inline NoisePredictor as_predictor(std::shared_ptr<const Mlp> model) {
  if (!model) throw std::invalid_argument("as_predictor: missing model");
  return [model](std::span<const double> y, NoiseLevel level, Domain c) {
    return model->forward(y, level, c);
  };
}

}  // namespace sbridge
