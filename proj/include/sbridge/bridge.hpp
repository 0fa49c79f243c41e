// bridge.hpp: the decomposed bridge ODE and its Euler solver.
//
// The velocity field combines the predictor triple as
//   v(x, t) = (1/2 - t) sqrt(tau) / sqrt(t(1-t)) * epshat + x1hat - x0hat,
// pushing mass toward the target prediction, away from the source
// prediction, and along the noise direction with a sign that flips at the
// midpoint.  Integration runs from t0 to 1 on a uniform grid; the budget
// counts one predictor evaluation per Euler step plus one for the optional
// terminal denoising step, which replaces the reached state by the target
// prediction at the last grid time (the state's actual residual noise
// level; sigma at t = 1 is zero and carries no usable level).

#pragma once

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/io.hpp"
#include "sbridge/predictors.hpp"
#include "sbridge/rng.hpp"
#include "sbridge/schedule.hpp"

namespace sbridge {

struct Trajectory {
  std::vector<double> times;         // snapshot times, strictly increasing
  std::vector<SampleBatch> states;   // filled only when snapshots requested
  SampleBatch final;
};

// Velocity from an already-evaluated predictor triple.
inline Point velocity_from(const PredictorTriple& p, double t, double tau) {
  const double c = noise_coefficient(t, tau);
  Point v(p.x1hat.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    v[k] = c * p.epshat[k] + p.x1hat[k] - p.x0hat[k];
  return v;
}

inline Point velocity(const PredictorSet& preds, std::span<const double> x_t,
                      double t, const SbParams& sb) {
  if (!(t >= sb.t_clamp && t <= 1.0 - sb.t_clamp))
    throw std::invalid_argument("velocity: t=" + std::to_string(t) +
                                " outside the clamp range [" +
                                std::to_string(sb.t_clamp) + ", " +
                                std::to_string(1.0 - sb.t_clamp) + "]");
  return velocity_from(preds.eval(x_t, t), t, sb.tau);
}

// x_{t0} = (1-t0) x0 + sigma_{t0} eps, one fresh standard normal per
// coordinate, drawn row by row from the given stream.
inline SampleBatch init_state(const SampleBatch& x0, double t0, double tau,
                              RngStream& rng) {
  if (!(t0 >= 0.0 && t0 < 1.0))
    throw std::invalid_argument("init_state: t0 must be in [0, 1)");
  const double sigma = sb_sigma(t0, tau);
  SampleBatch out(x0.n, x0.d);
  for (std::size_t i = 0; i < x0.n * x0.d; ++i)
    out.data[i] = (1.0 - t0) * x0.data[i] + sigma * rng.normal();
  return out;
}

// One target-prediction evaluation per row; the denoising step.
inline SampleBatch final_denoise(const SampleBatch& x_last, double t_last,
                                 const PredictorSet& preds) {
  SampleBatch out(x_last.n, x_last.d);
  for (std::size_t i = 0; i < x_last.n; ++i) {
    PredictorTriple p = preds.eval(x_last.row(i), t_last);
    out.set_row(i, p.x1hat);
  }
  return out;
}

// Integrates the decomposed ODE for a whole batch.  With M = nfe minus the
// optional denoising evaluation, the grid is t_i = t0 + (1-t0)(i-1)/M and
// every Euler step advances dt = (1-t0)/M, so the run spends exactly nfe
// predictor evaluations per sample.
inline Trajectory solve(const SampleBatch& x0, const BridgeConfig& cfg,
                        const PredictorSet& preds, bool keep_states = false) {
  cfg.validate();
  x0.validate();
  const int steps = cfg.nfe - (cfg.final_denoise ? 1 : 0);
  if (steps < 1)
    throw std::invalid_argument(
        "solve: nfe=" + std::to_string(cfg.nfe) +
        " leaves no integration step after the denoising evaluation");
  const double t0 = cfg.sb.t0;
  const double tau = cfg.sb.tau;
  const double dt = (1.0 - t0) / static_cast<double>(steps);

  Trajectory traj;
  RngStream rng(cfg.seed, "bridge-init");
  SampleBatch state = init_state(x0, t0, tau, rng);
  auto snapshot = [&](double t) {
    if (!keep_states) return;
    traj.times.push_back(t);
    traj.states.push_back(state);
  };
  snapshot(t0);

  double t_grid = t0;
  for (int i = 1; i <= steps; ++i) {
    t_grid = t0 + (1.0 - t0) * static_cast<double>(i - 1) /
                      static_cast<double>(steps);
    const double te = clamp_time(t_grid, cfg.sb.t_clamp);
    for (std::size_t r = 0; r < state.n; ++r) {
      auto row = state.row(r);
      Point v = velocity_from(preds.eval(row, te), te, tau);
      for (std::size_t k = 0; k < state.d; ++k) row[k] += dt * v[k];
    }
    for (double x : state.data)
      if (!std::isfinite(x))
        throw std::runtime_error("solve: non-finite state after step " +
                                 std::to_string(i));
    snapshot(t0 + dt * static_cast<double>(i));
  }

  if (cfg.final_denoise) {
    const double te = clamp_time(t_grid, cfg.sb.t_clamp);
    traj.final = final_denoise(state, te, preds);
  } else {
    traj.final = std::move(state);
  }
  traj.final.validate();
  return traj;
}

// One row per (time, sample) for external plotting.
inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const Trajectory& traj) {
  auto out = open_for_write(path);
  out << "t,index";
  const std::size_t d = traj.final.d;
  for (std::size_t k = 0; k < d; ++k) out << ",c" << k;
  out << '\n';
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    const SampleBatch& b = traj.states[s];
    for (std::size_t i = 0; i < b.n; ++i) {
      out << format_double(traj.times[s]) << ',' << i;
      for (double v : b.row(i)) out << ',' << format_double(v);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace sbridge
