// mlp.hpp: small conditional noise-prediction network.
//
// A plain feed-forward net eps(y, level, c): the input is the noisy point
// concatenated with sinusoidal features of the log-SNR and a learned
// embedding of the domain token c in {source, target, null}.  Hidden
// layers use tanh; the output layer is linear and zero-initialized so an
// untrained model predicts exactly zero noise.  Gradients are hand-rolled
// reverse-mode over a flat parameter vector, which keeps training fully
// deterministic for a given seed.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/io.hpp"
#include "sbridge/rng.hpp"
#include "sbridge/schedule.hpp"

namespace sbridge {

enum class Domain : std::uint8_t { source = 0, target = 1, null_token = 2 };

inline constexpr std::size_t kNumDomains = 3;

struct MlpArch {
  std::size_t dim = 2;                       // data dimension (input and output)
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embed_dim = 4;                 // learned domain-embedding width

  static constexpr std::size_t kNumFreqs = 4;
  static constexpr std::size_t feat_dim() { return 2 * kNumFreqs; }
  std::size_t input_dim() const { return dim + feat_dim() + embed_dim; }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    w.push_back(input_dim());
    for (auto h : hidden) w.push_back(h);
    w.push_back(dim);
    return w;
  }
  std::size_t param_count() const {
    auto w = widths();
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) p += w[l + 1] * (w[l] + 1);
    return p + kNumDomains * embed_dim;
  }
  void validate() const {
    if (dim < 1) throw std::invalid_argument("MlpArch: dim must be >= 1");
    if (embed_dim < 1)
      throw std::invalid_argument("MlpArch: embed_dim must be >= 1");
    for (auto h : hidden)
      if (h < 1) throw std::invalid_argument("MlpArch: hidden width must be >= 1");
  }
};

namespace detail {

// Sinusoidal features of the clamped log-SNR; smooth in the level and
// bounded, so conditioning stays well-scaled across the training range.
inline void log_snr_features(NoiseLevel level, double* out) {
  static constexpr double kFreqs[MlpArch::kNumFreqs] = {0.25, 0.5, 1.0, 2.0};
  double lam = std::log(level.snr());
  lam = std::min(12.0, std::max(-12.0, lam));
  for (std::size_t k = 0; k < MlpArch::kNumFreqs; ++k) {
    out[2 * k + 0] = std::sin(kFreqs[k] * lam);
    out[2 * k + 1] = std::cos(kFreqs[k] * lam);
  }
}

}  // namespace detail

class Mlp {
 public:
  Mlp() : Mlp(MlpArch{}, 0) {}
  explicit Mlp(MlpArch arch, std::uint64_t seed = 0) : arch_(std::move(arch)) {
    arch_.validate();
    init_offsets();
    params_.assign(arch_.param_count(), 0.0);
    RngStream rng(seed, "mlp-init");
    auto w = arch_.widths();
    // Uniform fan-balanced init for hidden layers; the final layer stays
    // zero so the fresh model is the zero predictor.
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      if (l + 2 == w.size()) continue;
      double a = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
      double* W = params_.data() + w_off_[l];
      for (std::size_t k = 0; k < w[l + 1] * w[l]; ++k)
        W[k] = rng.uniform(-a, a);
    }
    double* emb = params_.data() + embed_off_;
    for (std::size_t k = 0; k < kNumDomains * arch_.embed_dim; ++k)
      emb[k] = 0.1 * rng.normal();
  }

  const MlpArch& arch() const { return arch_; }
  std::span<const double> params() const { return params_; }
  std::span<double> params_mut() { return params_; }
  std::size_t param_count() const { return params_.size(); }

  void set_params(std::vector<double> p) {
    if (p.size() != arch_.param_count())
      throw std::invalid_argument("Mlp: parameter vector has wrong length");
    params_ = std::move(p);
  }

  bool params_finite() const {
    for (double v : params_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Scratch space for one forward/backward pass, reusable across calls.
  struct Tape {
    std::vector<std::vector<double>> act;  // act[0] = input, then hidden
    std::vector<double> out;
    std::vector<double> delta, delta_prev;
  };

  void forward(std::span<const double> y, NoiseLevel level, Domain c,
               Tape& tape) const {
    if (y.size() != arch_.dim)
      throw std::invalid_argument("Mlp::forward: input has dimension " +
                                  std::to_string(y.size()) + ", model expects " +
                                  std::to_string(arch_.dim));
    auto w = arch_.widths();
    const std::size_t layers = w.size() - 1;
    tape.act.resize(layers);
    tape.act[0].resize(w[0]);
    double* in = tape.act[0].data();
    for (std::size_t k = 0; k < arch_.dim; ++k) in[k] = y[k];
    detail::log_snr_features(level, in + arch_.dim);
    const double* emb = params_.data() + embed_off_ +
                        static_cast<std::size_t>(c) * arch_.embed_dim;
    for (std::size_t k = 0; k < arch_.embed_dim; ++k)
      in[arch_.dim + MlpArch::feat_dim() + k] = emb[k];

    for (std::size_t l = 0; l < layers; ++l) {
      const bool last = (l + 1 == layers);
      const double* src = tape.act[l].data();
      std::vector<double>& dst = last ? tape.out : tape.act[l + 1];
      dst.resize(w[l + 1]);
      const double* W = params_.data() + w_off_[l];
      const double* b = params_.data() + b_off_[l];
      for (std::size_t r = 0; r < w[l + 1]; ++r) {
        double z = b[r];
        const double* row = W + r * w[l];
        for (std::size_t k = 0; k < w[l]; ++k) z += row[k] * src[k];
        dst[r] = last ? z : std::tanh(z);
      }
    }
  }

  Point forward(std::span<const double> y, NoiseLevel level, Domain c) const {
    Tape tape;
    forward(y, level, c, tape);
    return Point(tape.out.begin(), tape.out.end());
  }

  // Accumulates d(loss)/d(params) into grad, given d(loss)/d(output) for
  // the pass recorded on the tape.  grad must have param_count entries.
  void backward(const Tape& tape, std::span<const double> dloss_dout, Domain c,
                std::span<double> grad, Tape& scratch) const {
    auto w = arch_.widths();
    const std::size_t layers = w.size() - 1;
    scratch.delta.assign(dloss_dout.begin(), dloss_dout.end());
    for (std::size_t l = layers; l-- > 0;) {
      const double* src = tape.act[l].data();
      const double* W = params_.data() + w_off_[l];
      double* gW = grad.data() + w_off_[l];
      double* gb = grad.data() + b_off_[l];
      for (std::size_t r = 0; r < w[l + 1]; ++r) {
        const double dr = scratch.delta[r];
        double* grow = gW + r * w[l];
        for (std::size_t k = 0; k < w[l]; ++k) grow[k] += dr * src[k];
        gb[r] += dr;
      }
      scratch.delta_prev.assign(w[l], 0.0);
      for (std::size_t r = 0; r < w[l + 1]; ++r) {
        const double dr = scratch.delta[r];
        const double* row = W + r * w[l];
        for (std::size_t k = 0; k < w[l]; ++k)
          scratch.delta_prev[k] += row[k] * dr;
      }
      if (l > 0) {
        // tanh' = 1 - a^2 through the stored activation
        for (std::size_t k = 0; k < w[l]; ++k) {
          double a = tape.act[l][k];
          scratch.delta_prev[k] *= 1.0 - a * a;
        }
        scratch.delta.swap(scratch.delta_prev);
      } else {
        double* gemb = grad.data() + embed_off_ +
                       static_cast<std::size_t>(c) * arch_.embed_dim;
        const std::size_t off = arch_.dim + MlpArch::feat_dim();
        for (std::size_t k = 0; k < arch_.embed_dim; ++k)
          gemb[k] += scratch.delta_prev[off + k];
      }
    }
  }

 private:
  void init_offsets() {
    auto w = arch_.widths();
    w_off_.clear();
    b_off_.clear();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      w_off_.push_back(off);
      off += w[l + 1] * w[l];
      b_off_.push_back(off);
      off += w[l + 1];
    }
    embed_off_ = off;
  }

  MlpArch arch_;
  std::vector<double> params_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t embed_off_ = 0;
};

inline Point forward(const Mlp& model, std::span<const double> y,
                     NoiseLevel level, Domain c) {
  return model.forward(y, level, c);
}

// ---- denoising score matching ---------------------------------------------

struct TrainConfig {
  std::size_t steps = 6000;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double cond_dropout = 0.1;      // P(replace c with null) per draw
  double alpha_bar_lo = 0.02;     // sampling range for the noise level
  double alpha_bar_hi = 0.999;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps > 0 && batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (!(cond_dropout >= 0.0 && cond_dropout < 1.0))
      throw std::invalid_argument("TrainConfig: cond_dropout must be in [0,1)");
    if (!(alpha_bar_lo > 0.0 && alpha_bar_hi <= 1.0 &&
          alpha_bar_lo < alpha_bar_hi))
      throw std::invalid_argument(
          "TrainConfig: need 0 < alpha_bar_lo < alpha_bar_hi <= 1");
  }
};

// One training example: clean point, injected noise, noisy input, level,
// and the conditioning token actually fed to the network.
struct DsmDraw {
  Point x;
  Point eps;
  Point y;
  NoiseLevel level;
  Domain c = Domain::null_token;
};

// Draws count training examples: domain by fair coin, level log-uniform in
// SNR over the configured range, conditioning dropped to null with
// probability cond_dropout (the clean point keeps its true domain).
inline std::vector<DsmDraw> make_dsm_draws(const SampleBatch& batch0,
                                           const SampleBatch& batch1,
                                           const TrainConfig& cfg,
                                           std::size_t count, RngStream& rng) {
  require_same_dim(batch0, batch1);
  const std::size_t d = batch0.d;
  const double lam_lo = std::log(cfg.alpha_bar_lo / (1.0 - cfg.alpha_bar_lo));
  const double lam_hi = cfg.alpha_bar_hi >= 1.0
                            ? std::log(1e12)
                            : std::log(cfg.alpha_bar_hi / (1.0 - cfg.alpha_bar_hi));
  std::vector<DsmDraw> draws(count);
  for (auto& dr : draws) {
    const bool from_target = rng.uniform_int(2) == 1;
    const SampleBatch& src = from_target ? batch1 : batch0;
    auto row = src.row(rng.uniform_int(src.n));
    dr.x.assign(row.begin(), row.end());
    const double lam = rng.uniform(lam_lo, lam_hi);
    dr.level = NoiseLevel::from_sigma_sq(std::exp(-lam));
    dr.eps.resize(d);
    dr.y.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      dr.eps[k] = rng.normal();
      dr.y[k] = dr.level.sqrt_ab() * dr.x[k] + dr.level.sqrt_omab() * dr.eps[k];
    }
    dr.c = (cfg.cond_dropout > 0.0 && rng.uniform() < cfg.cond_dropout)
               ? Domain::null_token
               : (from_target ? Domain::target : Domain::source);
  }
  return draws;
}

using NoisePredictor =
    std::function<Point(std::span<const double>, NoiseLevel, Domain)>;

// Mean squared noise-prediction error of an arbitrary predictor on fixed
// draws; lets tests feed oracles through the same loss path as the model.
inline double dsm_loss_on(const std::vector<DsmDraw>& draws,
                          const NoisePredictor& pred) {
  if (draws.empty()) throw std::invalid_argument("dsm_loss_on: no draws");
  double loss = 0.0;
  for (const auto& dr : draws) {
    Point out = pred(dr.y, dr.level, dr.c);
    for (std::size_t k = 0; k < dr.eps.size(); ++k) {
      double e = dr.eps[k] - out[k];
      loss += e * e;
    }
  }
  return loss / static_cast<double>(draws.size());
}

// Loss and exact parameter gradient over one sampled minibatch.  grad is
// overwritten (not accumulated) and sized to the model.
inline double dsm_loss(const Mlp& model, const SampleBatch& batch0,
                       const SampleBatch& batch1, const TrainConfig& cfg,
                       RngStream& rng, std::vector<double>& grad) {
  auto draws = make_dsm_draws(batch0, batch1, cfg, cfg.batch_size, rng);
  grad.assign(model.param_count(), 0.0);
  Mlp::Tape tape, scratch;
  std::vector<double> dout(model.arch().dim);
  const double inv_n = 1.0 / static_cast<double>(draws.size());
  double loss = 0.0;
  for (const auto& dr : draws) {
    model.forward(dr.y, dr.level, dr.c, tape);
    for (std::size_t k = 0; k < dout.size(); ++k) {
      double e = tape.out[k] - dr.eps[k];
      loss += e * e;
      dout[k] = 2.0 * e * inv_n;
    }
    model.backward(tape, dout, dr.c, grad, scratch);
  }
  return loss * inv_n;
}

struct TrainResult {
  Mlp model;
  std::vector<double> loss_history;  // one entry per step
};

// Adam with fixed (0.9, 0.999) moments and no weight decay.
inline TrainResult train(const SampleBatch& dataset0, const SampleBatch& dataset1,
                         const TrainConfig& cfg, MlpArch arch = {}) {
  cfg.validate();
  dataset0.validate();
  dataset1.validate();
  require_same_dim(dataset0, dataset1);
  arch.dim = dataset0.d;
  TrainResult result{Mlp(arch, derive_seed(cfg.seed, "mlp-init")), {}};
  if (cfg.steps == 0) return result;

  RngStream rng(cfg.seed, "dsm-train");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;
  std::vector<double> grad, m(result.model.param_count(), 0.0),
      v(result.model.param_count(), 0.0);
  result.loss_history.reserve(cfg.steps);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    double loss = dsm_loss(result.model, dataset0, dataset1, cfg, rng, grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: loss diverged at step " +
                               std::to_string(step));
    result.loss_history.push_back(loss);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto params = result.model.params_mut();
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
      params[k] -= cfg.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_hat);
    }
    if (!result.model.params_finite())
      throw std::runtime_error("train: non-finite parameters at step " +
                               std::to_string(step));
  }
  return result;
}

// ---- checkpoint format -----------------------------------------------------

namespace detail {
inline constexpr char kCkptMagic[8] = {'S', 'B', 'C', 'K', 'P', 'T', '1', '\n'};
}

inline void save_model(const std::filesystem::path& path, const Mlp& model) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  const auto& arch = model.arch();
  detail::put_raw(out, static_cast<std::uint64_t>(arch.dim));
  detail::put_raw(out, static_cast<std::uint64_t>(arch.hidden.size()));
  for (auto h : arch.hidden) detail::put_raw(out, static_cast<std::uint64_t>(h));
  detail::put_raw(out, static_cast<std::uint64_t>(arch.embed_dim));
  detail::put_raw(out, static_cast<std::uint64_t>(model.param_count()));
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.param_count() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Mlp load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  MlpArch arch;
  arch.dim = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  auto n_hidden = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  if (n_hidden > 64) throw std::runtime_error("checkpoint: implausible layer count");
  arch.hidden.resize(n_hidden);
  for (auto& h : arch.hidden)
    h = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  arch.embed_dim = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  arch.validate();
  auto count = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  if (count != arch.param_count())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  std::vector<double> params(count);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint file truncated");
  for (double p : params)
    if (!std::isfinite(p))
      throw std::runtime_error("checkpoint: non-finite parameter");
  Mlp model(arch, 0);
  model.set_params(std::move(params));
  return model;
}

}  // namespace sbridge
