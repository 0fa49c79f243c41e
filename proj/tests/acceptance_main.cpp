// acceptance_main.cpp: the end-to-end acceptance gate.  Each criterion
// prints exactly one [PASS]/[FAIL] line with its measured quantity, its
// pinned tolerance, and the elapsed time; the exit code is the number of
// failed criteria.  Run with no arguments for all ten, or pass criterion
// numbers to run a subset (8 and 9 share one expensive training sweep).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sbridge/baselines.hpp"
#include "sbridge/bridge.hpp"
#include "sbridge/coupling.hpp"
#include "sbridge/datasets.hpp"
#include "sbridge/experiment.hpp"
#include "sbridge/metrics.hpp"
#include "sbridge/mlp.hpp"
#include "sbridge/predictors.hpp"
#include "sbridge/rng.hpp"
#include "sbridge/schedule.hpp"

using namespace sbridge;

namespace {

// ---- pinned tolerances and budgets ----------------------------------------

constexpr double kSnrIdentityRelTol = 1e-12;    // criterion 1
constexpr double kSnrIdentitySec = 1.0;
constexpr double kPosteriorResidTol = 1e-10;    // criterion 2
constexpr double kPosteriorSec = 5.0;
constexpr double kGuidanceResidTol = 1e-10;     // criterion 3
constexpr double kGuidanceSec = 5.0;
constexpr double kVelocityRmsRelTol = 0.01;     // criterion 4
constexpr double kVelocitySec = 120.0;
constexpr double kEnergyFactor = 2.0;           // criterion 5
constexpr double kOracleBridgeSec = 120.0;
constexpr double kMarginalL1Tol = 1e-6;         // criterion 6
constexpr double kPlanElementTol = 1e-8;
constexpr double kAssignmentMassMin = 0.95;
constexpr double kSinkhornSec = 60.0;
constexpr double kGradRelTol = 1e-4;            // criterion 7
constexpr double kGradSec = 10.0;
constexpr double kBudgetSlackFactor = 1.10;     // criterion 8: nfe=32 vs nfe=8
constexpr double kTrainedSweepSec = 600.0;      // criteria 8 and 9 combined
constexpr double kAblationFactor = 2.0;         // criterion 9
constexpr double kDeterminismSec = 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_minus(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// ---- criterion 1: snr matching identity -----------------------------------

Outcome criterion_snr_identity() {
  auto t0 = std::chrono::steady_clock::now();
  RngStream rng(101, "acc-snr");
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double t = rng.uniform(0.001, 0.999);
    double tau = rng.uniform_pos() * 10.0;
    double target = 1.0 / sb_sigma_sq(t, tau);
    double rel = std::abs(snr_match_level(t, tau).snr() - target) / target;
    worst = std::max(worst, rel);
  }
  double sec = now_minus(t0);
  return {worst <= kSnrIdentityRelTol && sec < kSnrIdentitySec,
          "max rel err " + fmt(worst) + " (tol " + fmt(kSnrIdentityRelTol) +
              "), " + fmt(sec) + "s"};
}

// ---- criterion 2: posterior consistency identity --------------------------

Outcome criterion_posterior_consistency() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int probes_total = 0;
  for (int rep = 0; rep < 10; ++rep) {
    RngStream rng(202, "acc-posterior", static_cast<std::uint64_t>(rep));
    const double tau = rep % 2 == 0 ? 6.25 : 2.25;

    SampleBatch a(8, 2), b(8, 2);
    for (auto& v : a.data) v = rng.uniform(-2.0, 2.0);
    for (auto& v : b.data) v = rng.uniform(-2.0, 2.0);
    CouplingPlan plan;
    if (rep < 5) {  // random dense plans
      std::vector<double> w(64);
      for (auto& v : w) v = rng.uniform_pos();
      plan = dense_coupling(std::move(a), std::move(b), w);
    } else {  // entropic plans, alternating matched and unmatched reg
      double reg = rep % 2 == 0 ? 2.0 * tau : 1.3;
      plan = sinkhorn(std::move(a), std::move(b), {reg, 20000, 1e-12});
    }
    auto preds = empirical_bayes(std::move(plan), tau);

    for (int probe = 0; probe < 100; ++probe) {
      double t = rng.uniform(0.02, 0.98);
      Point x = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      auto p = preds.eval(x, t);
      double u = 1.0 - t, sigma = sb_sigma(t, tau);
      for (std::size_t k = 0; k < 2; ++k) {
        double r =
            x[k] - u * p.x0hat[k] - t * p.x1hat[k] - sigma * p.epshat[k];
        worst = std::max(worst, std::abs(r));
      }
      ++probes_total;
    }
  }
  double sec = now_minus(t0);
  return {worst <= kPosteriorResidTol && sec < kPosteriorSec,
          "max residual " + fmt(worst) + " over " +
              std::to_string(probes_total) + " probes (tol " +
              fmt(kPosteriorResidTol) + "), " + fmt(sec) + "s"};
}

// ---- criterion 3: guidance scaling identity -------------------------------

Outcome criterion_guidance_identity() {
  auto t0 = std::chrono::steady_clock::now();
  MlpArch arch;
  Mlp model(arch, 303);
  {
    auto p = model.params_mut();
    RngStream rng(304, "acc-cfg-params");
    for (auto& v : p) v += 0.15 * rng.normal();
  }
  auto shared = std::make_shared<const Mlp>(std::move(model));
  auto unguided = vp_backend(shared, 6.25, 1.0);
  RngStream rng(305, "acc-cfg-probes");
  double worst = 0.0;
  for (double omega : {0.0, 1.0, 3.0, 11.0}) {
    auto guided = vp_backend(shared, 6.25, omega);
    for (int probe = 0; probe < 250; ++probe) {
      Point x = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
      double t = rng.uniform(0.01, 0.99);
      worst = std::max(worst, cfg_scale_check(guided, unguided, omega, x, t));
    }
  }
  double sec = now_minus(t0);
  return {worst <= kGuidanceResidTol && sec < kGuidanceSec,
          "max residual " + fmt(worst) + " at omega in {0,1,3,11} (tol " +
              fmt(kGuidanceResidTol) + "), " + fmt(sec) + "s"};
}

// ---- criterion 4: zero-noise velocity against Monte Carlo -----------------

// With tau = 0, the product coupling, and a standard normal target, the
// bridge velocity reduces to the conditional displacement
//   v(x, t) = (x - E[x0 | x_t = x]) / t,
// and the posterior over x0 has the exact Gaussian likelihood
// N(x; (1-t) x0, t^2 I).  Self-normalized importance sampling over draws
// from the source (antithetic pairs) estimates E[x0 | x_t = x] without any
// library code.
Outcome criterion_velocity_vs_mc() {
  auto t0 = std::chrono::steady_clock::now();
  const Point src_mean = {2.0, 0.0};
  const double src_var = 0.5;
  GmmSpec p0{{{1.0, src_mean, {src_var, src_var}}}};
  GmmSpec p1{{{1.0, {0.0, 0.0}, {1.0, 1.0}}}};
  auto preds = gaussian_analytic(p0, p1, 0.0);

  const std::size_t n_pairs = 500000;  // one million draws per time
  RngStream rng(404, "acc-mc");
  std::vector<double> draws(2 * n_pairs * 2);
  double num = 0.0, den = 0.0;

  for (double t : {0.1, 0.5, 0.9}) {
    const double u = 1.0 - t;
    const double sd = std::sqrt(src_var);
    for (std::size_t s = 0; s < n_pairs; ++s) {
      double zx = rng.normal(), zy = rng.normal();
      draws[4 * s + 0] = src_mean[0] + sd * zx;
      draws[4 * s + 1] = src_mean[1] + sd * zy;
      draws[4 * s + 2] = src_mean[0] - sd * zx;  // antithetic partner
      draws[4 * s + 3] = src_mean[1] - sd * zy;
    }
    const double inv2t2 = 1.0 / (2.0 * t * t);
    for (int gx = -2; gx <= 2; ++gx) {
      for (int gy = -2; gy <= 2; ++gy) {
        Point x = {u * src_mean[0] + 0.5 * gx, 0.5 * gy};

        double mx = -std::numeric_limits<double>::infinity();
        const std::size_t n_draws = 2 * n_pairs;
        std::vector<double> logw(n_draws);
        for (std::size_t s = 0; s < n_draws; ++s) {
          double rx = x[0] - u * draws[2 * s];
          double ry = x[1] - u * draws[2 * s + 1];
          logw[s] = -(rx * rx + ry * ry) * inv2t2;
          mx = std::max(mx, logw[s]);
        }
        double total = 0.0, ex = 0.0, ey = 0.0;
        for (std::size_t s = 0; s < n_draws; ++s) {
          double w = std::exp(logw[s] - mx);
          total += w;
          ex += w * draws[2 * s];
          ey += w * draws[2 * s + 1];
        }
        Point v_mc = {(x[0] - ex / total) / t, (x[1] - ey / total) / t};

        Point v = velocity_from(preds.eval(x, t), t, 0.0);
        for (std::size_t k = 0; k < 2; ++k) {
          double r = v[k] - v_mc[k];
          num += r * r;
          den += v_mc[k] * v_mc[k];
        }
      }
    }
  }
  double rms_rel = std::sqrt(num / den);
  double sec = now_minus(t0);
  return {rms_rel <= kVelocityRmsRelTol && sec < kVelocitySec,
          "rms rel err " + fmt(rms_rel) + " over 75 probes x 1e6 draws (tol " +
              fmt(kVelocityRmsRelTol) + "), " + fmt(sec) + "s"};
}

// ---- criterion 5: oracle bridge recovers the target distribution ----------

// The bound compares means over three independent repetitions: a single
// energy-distance draw between 2048-sample batches of the same distribution
// fluctuates by about 3x across seeds, so a one-draw ratio would test the
// luck of the draw rather than the solver.
Outcome criterion_oracle_bridge() {
  auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = 2048;
  const double tau = 1.0;  // sqrt tau = 1
  double sum_translated = 0.0, sum_self = 0.0;
  for (std::uint64_t root : {505ull, 606ull, 707ull}) {
    SampleBatch x0 =
        gen_toy("eight-gaussians", n, derive_seed(root, "acc-src"));
    SampleBatch x1 = gen_toy("two-moons", n, derive_seed(root, "acc-tgt"));
    SampleBatch ref_a = gen_toy("two-moons", n, derive_seed(root, "acc-ref-a"));
    SampleBatch ref_b = gen_toy("two-moons", n, derive_seed(root, "acc-ref-b"));

    CouplingPlan plan = sinkhorn(x0, x1, {2.0 * tau, 5000, 1e-9});
    auto preds = empirical_bayes(std::move(plan), tau);

    BridgeConfig cfg;
    cfg.sb.tau = tau;
    // Start at the clamp floor: the usual deployment start time (0.2) trades
    // a known initialization bias for fewer steps, and that bias would swamp
    // the sampling noise floor this criterion compares against.
    cfg.sb.t0 = 1e-3;
    cfg.nfe = 257;  // 256 integration steps plus the terminal denoise
    cfg.final_denoise = true;
    cfg.seed = root + 1;
    Trajectory traj = solve(x0, cfg, preds);

    sum_translated += energy_distance(traj.final, ref_b);
    sum_self += energy_distance(ref_a, ref_b);
  }
  double d_translated = sum_translated / 3.0, d_self = sum_self / 3.0;
  double sec = now_minus(t0);
  bool pass = d_translated <= kEnergyFactor * d_self && sec < kOracleBridgeSec;
  return {pass, "mean energy " + fmt(d_translated) + " vs self-distance " +
                    fmt(d_self) + " over 3 repetitions (factor " +
                    fmt(d_translated / std::max(d_self, 1e-300)) + ", limit " +
                    fmt(kEnergyFactor) + "), " + fmt(sec) + "s"};
}

// ---- criterion 6: entropic coupling solver --------------------------------

Outcome criterion_sinkhorn() {
  auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;

  {  // (a) marginal feasibility at 64x64
    RngStream rng(606, "acc-sk-a");
    SampleBatch a(64, 2), b(64, 2);
    for (auto& v : a.data) v = rng.uniform(-2.0, 2.0);
    for (auto& v : b.data) v = rng.uniform(-2.0, 2.0);
    CouplingPlan plan = sinkhorn(a, b, {0.5, 20000, 1e-10});
    double l1 = 0.0;
    for (double r : plan.row_marginals()) l1 += std::abs(r - 1.0 / 64);
    for (double c : plan.col_marginals()) l1 += std::abs(c - 1.0 / 64);
    pass = pass && l1 <= kMarginalL1Tol;
    detail += "marginal L1 " + fmt(l1);
  }

  {  // (b) elementwise agreement with the scaling fixed point at 5x5
    RngStream rng(607, "acc-sk-b");
    SampleBatch a(5, 2), b(5, 2);
    for (auto& v : a.data) v = rng.uniform(-2.0, 2.0);
    for (auto& v : b.data) v = rng.uniform(-2.0, 2.0);
    CouplingPlan plan = sinkhorn(a, b, {1.0, 50000, 1e-14});
    auto ref = oracle::scaling_sinkhorn(pairwise_sq_dists(a, b), 5, 5, 1.0,
                                        20000);
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        worst = std::max(worst, std::abs(plan.weight(i, j) - ref[i * 5 + j]));
    pass = pass && worst <= kPlanElementTol;
    detail += ", fixed-point err " + fmt(worst);
  }

  {  // (c) low-reg concentration on the brute-force assignment at 6x6
    RngStream rng(608, "acc-sk-c");
    SampleBatch a(6, 2), b(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
      double cx = 2.0 * static_cast<double>(i);
      a.set_row(i, Point{cx + 0.05 * rng.normal(), 0.05 * rng.normal()});
      b.set_row(i, Point{cx + 0.05 * rng.normal(), 0.3 + 0.05 * rng.normal()});
    }
    CouplingPlan plan = sinkhorn(a, b, {0.01, 200000, 1e-9});
    auto perm = oracle::best_assignment(pairwise_sq_dists(a, b), 6);
    double mass = 0.0;
    for (std::size_t i = 0; i < 6; ++i) mass += plan.weight(i, perm[i]);
    pass = pass && mass >= kAssignmentMassMin;
    detail += ", assignment mass " + fmt(mass);
  }

  double sec = now_minus(t0);
  return {pass && sec < kSinkhornSec, detail + ", " + fmt(sec) + "s"};
}

// ---- criterion 7: training gradient against finite differences ------------

Outcome criterion_gradient_check() {
  auto t0 = std::chrono::steady_clock::now();
  MlpArch arch;
  arch.dim = 2;
  arch.hidden = {16, 16};
  Mlp model(arch, 707);
  {
    auto p = model.params_mut();
    RngStream rng(708, "acc-grad-params");
    for (auto& v : p) v += 0.2 * rng.normal();
  }
  RngStream data_rng(709, "acc-grad-data");
  SampleBatch b0(16, 2), b1(16, 2);
  for (auto& v : b0.data) v = data_rng.uniform(-1.5, 1.5);
  for (auto& v : b1.data) v = data_rng.uniform(-1.5, 1.5);
  TrainConfig cfg;
  cfg.batch_size = 16;

  auto loss_at = [&](std::vector<double> params) {
    Mlp m(arch, 0);
    m.set_params(std::move(params));
    RngStream r(710);
    std::vector<double> g;
    return dsm_loss(m, b0, b1, cfg, r, g);
  };
  std::vector<double> grad;
  {
    RngStream r(710);
    dsm_loss(model, b0, b1, cfg, r, grad);
  }
  std::vector<double> base(model.params().begin(), model.params().end());

  RngStream pick(711, "acc-grad-pick");
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    std::size_t idx = pick.uniform_int(base.size());
    double fd = oracle::central_diff(
        [&](double v) {
          auto p = base;
          p[idx] = v;
          return loss_at(p);
        },
        base[idx], 1e-5);
    double rel =
        std::abs(grad[idx] - fd) / std::max({std::abs(grad[idx]), std::abs(fd),
                                             1e-8});
    worst = std::max(worst, rel);
  }
  double sec = now_minus(t0);
  return {worst <= kGradRelTol && sec < kGradSec,
          "max rel err " + fmt(worst) + " over 10 parameters (tol " +
              fmt(kGradRelTol) + "), " + fmt(sec) + "s"};
}

// ---- criteria 8 and 9: trained bridge vs baselines, plus the matching
// ablation.  One shared sweep: train per seed, choose the guidance scale on
// seed 0 only, then translate with every method at fixed settings.

struct TaskOutcome {
  std::vector<double> lsb8, lsb32, sdedit8, dual8, no_match8;
  double omega = 0.0;
  double seconds = 0.0;
  std::string error;
};

GmmSpec column_mixture(double cx) {
  GmmSpec spec;
  for (double cy : {-2.5, 0.0, 2.5})
    spec.components.push_back({1.0 / 3.0, {cx, cy}, {0.25, 0.25}});
  return spec;
}

const TaskOutcome& trained_task() {
  static const TaskOutcome result = [] {
    TaskOutcome out;
    auto t0 = std::chrono::steady_clock::now();
    try {
      const GmmSpec src_spec = column_mixture(-4.0);
      const GmmSpec tgt_spec = column_mixture(4.0);
      const std::size_t n = 1024;
      const double tau = 6.25;  // sqrt tau = 2.5
      SbParams sb;
      sb.tau = tau;

      auto make_model = [&](std::uint64_t root, SampleBatch* keep_src,
                            SampleBatch* keep_ref) {
        SampleBatch x0 =
            sample_gmm(src_spec, n, derive_seed(root, "acc-task-src"));
        SampleBatch x1 =
            sample_gmm(tgt_spec, n, derive_seed(root, "acc-task-tgt"));
        if (keep_ref)
          *keep_ref = sample_gmm(tgt_spec, n, derive_seed(root, "acc-task-ref"));
        TrainConfig cfg;
        cfg.steps = 16000;
        cfg.seed = root + 72;
        auto model = std::make_shared<const Mlp>(train(x0, x1, cfg).model);
        if (keep_src) *keep_src = std::move(x0);
        return model;
      };

      auto lsb_frechet = [&](const std::shared_ptr<const Mlp>& model,
                             const SampleBatch& src, const SampleBatch& ref,
                             int nfe, double omega, bool matching,
                             std::uint64_t bridge_seed) {
        VpOptions opts;
        opts.snr_matching = matching;
        auto preds = vp_backend(model, tau, omega, opts);
        BridgeConfig cfg;
        cfg.sb = sb;
        cfg.omega = omega;
        cfg.nfe = nfe;
        cfg.seed = bridge_seed;
        Trajectory traj = solve(src, cfg, preds);
        return gaussian_frechet(traj.final, ref);
      };

      // Guidance scale: grid search on a held-out tuning run (its own data
      // and training seed), then frozen for the evaluation seeds.
      {
        SampleBatch tune_src, tune_ref;
        auto tune_model = make_model(807, &tune_src, &tune_ref);
        double best = std::numeric_limits<double>::infinity();
        for (double omega : {1.0, 2.0, 3.0, 5.0, 7.0, 11.0}) {
          double f =
              lsb_frechet(tune_model, tune_src, tune_ref, 8, omega, true, 989);
          if (f < best) {
            best = f;
            out.omega = omega;
          }
        }
      }

      for (std::uint64_t s = 0; s < 3; ++s) {
        SampleBatch src, ref;
        auto model = make_model(808 + s, &src, &ref);
        auto net = as_predictor(model);
        out.lsb8.push_back(
            lsb_frechet(model, src, ref, 8, out.omega, true, 990 + s));
        out.lsb32.push_back(
            lsb_frechet(model, src, ref, 32, out.omega, true, 990 + s));
        out.no_match8.push_back(
            lsb_frechet(model, src, ref, 8, out.omega, false, 990 + s));
        RngStream rng(995 + s, "acc-task-sdedit");
        out.sdedit8.push_back(gaussian_frechet(
            sdedit_translate(src, 8, sb, net, out.omega, rng), ref));
        out.dual8.push_back(gaussian_frechet(
            dual_bridge_translate(src, 8, net, out.omega), ref));
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.seconds = now_minus(t0);
    return out;
  }();
  return result;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Outcome criterion_trained_bridge() {
  const TaskOutcome& task = trained_task();
  if (!task.error.empty()) return {false, "sweep failed: " + task.error};

  bool beats_baselines = true;
  for (std::size_t s = 0; s < 3; ++s)
    beats_baselines = beats_baselines && task.lsb8[s] < task.sdedit8[s] &&
                      task.lsb8[s] < task.dual8[s];
  double m8 = mean_of(task.lsb8), m32 = mean_of(task.lsb32);
  bool budget_stable = m32 <= kBudgetSlackFactor * m8;
  bool pass = beats_baselines && budget_stable &&
              task.seconds < kTrainedSweepSec;
  std::ostringstream os;
  os << "frechet@8 " << fmt(m8) << " vs sdedit " << fmt(mean_of(task.sdedit8))
     << ", dual " << fmt(mean_of(task.dual8)) << " (per-seed wins "
     << (beats_baselines ? "3/3" : "no") << "), @32 " << fmt(m32)
     << (budget_stable ? " within " : " exceeds ") << "+10%, omega "
     << task.omega << ", " << fmt(task.seconds) << "s";
  return {pass, os.str()};
}

Outcome criterion_matching_ablation() {
  const TaskOutcome& task = trained_task();
  if (!task.error.empty()) return {false, "sweep failed: " + task.error};
  double with = mean_of(task.lsb8), without = mean_of(task.no_match8);
  bool pass = without >= kAblationFactor * with;
  return {pass, "frechet " + fmt(with) + " matched vs " + fmt(without) +
                    " unmatched (" + fmt(without / with) + "x, need >= " +
                    fmt(kAblationFactor) + "x)"};
}

// ---- criterion 10: byte-identical reruns ----------------------------------

Outcome criterion_determinism() {
  auto t0 = std::chrono::steady_clock::now();
  auto dir = std::filesystem::temp_directory_path() / "sbridge-acceptance-10";
  std::filesystem::remove_all(dir);

  ExperimentConfig cfg;
  cfg.out_dir = dir.string();
  cfg.n = 256;
  cfg.seed = 1010;
  cfg.backend = "oracle";
  cfg.nfe = 8;
  cfg.save_trajectory = true;

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };

  run_gen_data(cfg);
  std::string source1 = slurp(dir / files::kSource);
  run_gen_data(cfg);
  bool same_data = slurp(dir / files::kSource) == source1;

  run_translate(cfg);
  std::string translated1 = slurp(dir / files::kTranslated);
  std::string report1 = slurp(dir / files::kReport);
  std::string traj1 = slurp(dir / files::kTrajectory);
  // second run additionally exercises the cached-plan load path
  run_translate(cfg);
  bool same_out = slurp(dir / files::kTranslated) == translated1 &&
                  slurp(dir / files::kReport) == report1 &&
                  slurp(dir / files::kTrajectory) == traj1;
  bool nonempty = !translated1.empty() && !report1.empty() && !traj1.empty();

  double sec = now_minus(t0);
  bool pass = same_data && same_out && nonempty && sec < kDeterminismSec;
  return {pass, std::string("rerun bytes ") +
                    (same_data && same_out ? "identical" : "differ") +
                    " across gen-data and translate (incl. cached plan), " +
                    fmt(sec) + "s"};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "snr matching identity", criterion_snr_identity},
      {2, "posterior consistency identity", criterion_posterior_consistency},
      {3, "guidance scaling identity", criterion_guidance_identity},
      {4, "zero-noise velocity vs monte carlo", criterion_velocity_vs_mc},
      {5, "oracle bridge recovers the target", criterion_oracle_bridge},
      {6, "entropic coupling solver", criterion_sinkhorn},
      {7, "training gradient vs finite differences", criterion_gradient_check},
      {8, "trained bridge beats matched-budget baselines",
       criterion_trained_bridge},
      {9, "snr matching ablation degrades results",
       criterion_matching_ablation},
      {10, "byte-identical reruns", criterion_determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria()) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
      continue;
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %2d: %s: %s\n",
                outcome.pass ? "PASS" : "FAIL", c.id, c.title,
                outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures;
}
