// coupling.hpp: discrete couplings between two point sets.
//
// Builds entropic-OT plans with a log-domain Sinkhorn solver (uniform
// marginals, squared-Euclidean cost), the independent product plan, and
// plans from explicit weight matrices.  Plans keep their atoms plus a
// compact weight representation: Sinkhorn plans store only the dual
// potentials, so entries can be reconstructed lazily and downstream
// posterior queries can exploit the Gibbs-kernel structure.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/io.hpp"
#include "sbridge/rng.hpp"

namespace sbridge {

enum class CouplingKind : std::uint8_t { independent = 0, sinkhorn = 1, dense = 2 };

struct SinkhornConfig {
  double reg = 2.0;           // entropic regularization, cost units
  std::size_t max_iter = 5000;
  double tol = 1e-9;          // L1 marginal violation at convergence
};

// A joint distribution over (source atom, target atom) pairs.  Weights sum
// to 1 and the marginals are uniform for the solver-produced kinds.
struct CouplingPlan {
  CouplingKind kind = CouplingKind::independent;
  SampleBatch x0_atoms;
  SampleBatch x1_atoms;
  double reg = 0.0;            // Sinkhorn only
  std::vector<double> f, g;    // Sinkhorn duals, cost units
  std::vector<double> log_w;   // dense only: normalized log-weights, row-major
  std::size_t iters = 0;       // Sinkhorn diagnostics
  double marginal_err = 0.0;

  std::size_t n0() const { return x0_atoms.n; }
  std::size_t n1() const { return x1_atoms.n; }

  double log_weight(std::size_t i, std::size_t j) const {
    switch (kind) {
      case CouplingKind::independent:
        return -std::log(static_cast<double>(n0()) * static_cast<double>(n1()));
      case CouplingKind::sinkhorn:
        return (f[i] + g[j] - sq_dist(x0_atoms.row(i), x1_atoms.row(j))) / reg;
      case CouplingKind::dense:
        return log_w[i * n1() + j];
    }
    return 0.0;  // unreachable
  }
  double weight(std::size_t i, std::size_t j) const {
    return std::exp(log_weight(i, j));
  }
  std::vector<double> dense_weights() const {
    std::vector<double> w(n0() * n1());
    for (std::size_t i = 0; i < n0(); ++i)
      for (std::size_t j = 0; j < n1(); ++j) w[i * n1() + j] = weight(i, j);
    return w;
  }
  std::vector<double> row_marginals() const {
    std::vector<double> r(n0(), 0.0);
    for (std::size_t i = 0; i < n0(); ++i)
      for (std::size_t j = 0; j < n1(); ++j) r[i] += weight(i, j);
    return r;
  }
  std::vector<double> col_marginals() const {
    std::vector<double> c(n1(), 0.0);
    for (std::size_t i = 0; i < n0(); ++i)
      for (std::size_t j = 0; j < n1(); ++j) c[j] += weight(i, j);
    return c;
  }
};

inline std::vector<double> pairwise_sq_dists(const SampleBatch& a,
                                             const SampleBatch& b) {
  require_same_dim(a, b);
  std::vector<double> c(a.n * b.n);
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j)
      c[i * b.n + j] = sq_dist(a.row(i), b.row(j));
  return c;
}

// Log-domain Sinkhorn with uniform marginals.  Each half-update is an
// exact row (resp. column) rebalance computed through a max-shifted
// log-sum-exp, so no rescaling pass is ever needed.
inline CouplingPlan sinkhorn(SampleBatch x0s, SampleBatch x1s,
                             SinkhornConfig cfg = {}) {
  x0s.validate();
  x1s.validate();
  require_same_dim(x0s, x1s);
  if (!(cfg.reg > 0.0))
    throw std::invalid_argument("sinkhorn: reg must be > 0");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be > 0");

  const std::size_t n0 = x0s.n, n1 = x1s.n;
  const double log_a = -std::log(static_cast<double>(n0));
  const double log_b = -std::log(static_cast<double>(n1));
  const std::vector<double> cost = pairwise_sq_dists(x0s, x1s);

  CouplingPlan plan;
  plan.kind = CouplingKind::sinkhorn;
  plan.x0_atoms = std::move(x0s);
  plan.x1_atoms = std::move(x1s);
  plan.reg = cfg.reg;
  plan.f.assign(n0, 0.0);
  plan.g.assign(n1, 0.0);

  std::vector<double> col_sum(n1);
  double err = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < cfg.max_iter; ++it) {
    // f_i <- reg*(log a_i - LSE_j((g_j - C_ij)/reg))
    for (std::size_t i = 0; i < n0; ++i) {
      const double* ci = cost.data() + i * n1;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n1; ++j)
        m = std::max(m, (plan.g[j] - ci[j]) / cfg.reg);
      double s = 0.0;
      for (std::size_t j = 0; j < n1; ++j)
        s += std::exp((plan.g[j] - ci[j]) / cfg.reg - m);
      plan.f[i] = cfg.reg * (log_a - m - std::log(s));
    }
    // g_j <- reg*(log b_j - LSE_i((f_i - C_ij)/reg))
    for (std::size_t j = 0; j < n1; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n0; ++i)
        m = std::max(m, (plan.f[i] - cost[i * n1 + j]) / cfg.reg);
      double s = 0.0;
      for (std::size_t i = 0; i < n0; ++i)
        s += std::exp((plan.f[i] - cost[i * n1 + j]) / cfg.reg - m);
      plan.g[j] = cfg.reg * (log_b - m - std::log(s));
    }
    // After the g-update columns are exact; convergence is measured by how
    // far the rows have drifted.
    err = 0.0;
    for (std::size_t i = 0; i < n0; ++i) {
      const double* ci = cost.data() + i * n1;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n1; ++j)
        m = std::max(m, (plan.f[i] + plan.g[j] - ci[j]) / cfg.reg);
      double s = 0.0;
      for (std::size_t j = 0; j < n1; ++j)
        s += std::exp((plan.f[i] + plan.g[j] - ci[j]) / cfg.reg - m);
      err += std::abs(std::exp(m) * s - 1.0 / static_cast<double>(n0));
    }
    if (err < cfg.tol) break;
  }
  if (err >= cfg.tol)
    throw std::runtime_error(
        "sinkhorn: no convergence after " + std::to_string(cfg.max_iter) +
        " iterations (marginal L1 violation " + std::to_string(err) + ")");
  plan.iters = it + 1;
  plan.marginal_err = err;
  return plan;
}

inline CouplingPlan independent_coupling(SampleBatch x0s, SampleBatch x1s) {
  x0s.validate();
  x1s.validate();
  require_same_dim(x0s, x1s);
  CouplingPlan plan;
  plan.kind = CouplingKind::independent;
  plan.x0_atoms = std::move(x0s);
  plan.x1_atoms = std::move(x1s);
  return plan;
}

// Plan from an explicit nonnegative weight matrix (row-major n0 x n1);
// weights are normalized to sum 1.
inline CouplingPlan dense_coupling(SampleBatch x0s, SampleBatch x1s,
                                   const std::vector<double>& weights) {
  x0s.validate();
  x1s.validate();
  require_same_dim(x0s, x1s);
  if (weights.size() != x0s.n * x1s.n)
    throw std::invalid_argument("dense_coupling: weight matrix is " +
                                std::to_string(weights.size()) +
                                " entries, expected " +
                                std::to_string(x0s.n * x1s.n));
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument(
          "dense_coupling: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0))
    throw std::invalid_argument("dense_coupling: all weights are zero");
  CouplingPlan plan;
  plan.kind = CouplingKind::dense;
  plan.x0_atoms = std::move(x0s);
  plan.x1_atoms = std::move(x1s);
  plan.log_w.resize(weights.size());
  const double log_total = std::log(total);
  for (std::size_t k = 0; k < weights.size(); ++k)
    plan.log_w[k] = weights[k] > 0.0
                        ? std::log(weights[k]) - log_total
                        : -std::numeric_limits<double>::infinity();
  return plan;
}

inline std::vector<std::pair<std::size_t, std::size_t>> sample_pair_indices(
    const CouplingPlan& plan, std::size_t k, RngStream& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(k);
  if (plan.kind == CouplingKind::independent) {
    for (std::size_t s = 0; s < k; ++s)
      out.emplace_back(rng.uniform_int(plan.n0()), rng.uniform_int(plan.n1()));
    return out;
  }
  // Categorical over all entries via a one-time cumulative table.
  std::vector<double> cdf = plan.dense_weights();
  double acc = 0.0;
  for (double& v : cdf) {
    acc += v;
    v = acc;
  }
  for (std::size_t s = 0; s < k; ++s) {
    double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t flat = it == cdf.end() ? cdf.size() - 1
                                       : static_cast<std::size_t>(it - cdf.begin());
    out.emplace_back(flat / plan.n1(), flat % plan.n1());
  }
  return out;
}

// k paired draws from the plan, returned as two row-aligned batches.
inline std::pair<SampleBatch, SampleBatch> sample_pairs(const CouplingPlan& plan,
                                                        std::size_t k,
                                                        RngStream& rng) {
  if (k < 1) throw std::invalid_argument("sample_pairs: k must be >= 1");
  const std::size_t d = plan.x0_atoms.d;
  SampleBatch b0(k, d), b1(k, d);
  auto idx = sample_pair_indices(plan, k, rng);
  for (std::size_t s = 0; s < k; ++s) {
    b0.set_row(s, plan.x0_atoms.row(idx[s].first));
    b1.set_row(s, plan.x1_atoms.row(idx[s].second));
  }
  return {std::move(b0), std::move(b1)};
}

// Expected squared displacement sum_ij w_ij ||x0_i - x1_j||^2.
inline double transport_cost(const CouplingPlan& plan) {
  double c = 0.0;
  for (std::size_t i = 0; i < plan.n0(); ++i)
    for (std::size_t j = 0; j < plan.n1(); ++j)
      c += plan.weight(i, j) *
           sq_dist(plan.x0_atoms.row(i), plan.x1_atoms.row(j));
  return c;
}

// Shannon entropy -sum w log w of the plan (0 log 0 := 0).
inline double plan_entropy(const CouplingPlan& plan) {
  double h = 0.0;
  for (std::size_t i = 0; i < plan.n0(); ++i)
    for (std::size_t j = 0; j < plan.n1(); ++j) {
      double lw = plan.log_weight(i, j);
      if (std::isfinite(lw)) h -= std::exp(lw) * lw;
    }
  return h;
}

// ---- plan file format ------------------------------------------------------
// Fixed-layout little-endian binary: magic, kind, sizes, atoms, then the
// kind-specific weight representation.  Used by the CLI to cache plans.

namespace detail {
inline constexpr char kPlanMagic[8] = {'S', 'B', 'P', 'L', 'A', 'N', '1', '\n'};
}

inline void save_plan(const std::filesystem::path& path,
                      const CouplingPlan& plan) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(detail::kPlanMagic, sizeof(detail::kPlanMagic));
  detail::put_raw(out, static_cast<std::uint8_t>(plan.kind));
  detail::put_raw(out, static_cast<std::uint64_t>(plan.n0()));
  detail::put_raw(out, static_cast<std::uint64_t>(plan.n1()));
  detail::put_raw(out, static_cast<std::uint64_t>(plan.x0_atoms.d));
  detail::put_raw(out, plan.reg);
  detail::put_raw(out, static_cast<std::uint64_t>(plan.iters));
  detail::put_raw(out, plan.marginal_err);
  detail::put_doubles(out, plan.x0_atoms.data);
  detail::put_doubles(out, plan.x1_atoms.data);
  if (plan.kind == CouplingKind::sinkhorn) {
    detail::put_doubles(out, plan.f);
    detail::put_doubles(out, plan.g);
  } else if (plan.kind == CouplingKind::dense) {
    detail::put_doubles(out, plan.log_w);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline CouplingPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kPlanMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a plan file: " + path.string());
  CouplingPlan plan;
  auto kind = detail::get_raw<std::uint8_t>(in);
  if (kind > 2) throw std::runtime_error("plan file: unknown kind");
  plan.kind = static_cast<CouplingKind>(kind);
  auto n0 = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  auto n1 = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  auto d = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  plan.reg = detail::get_raw<double>(in);
  plan.iters = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in));
  plan.marginal_err = detail::get_raw<double>(in);
  plan.x0_atoms = SampleBatch(n0, d);
  plan.x1_atoms = SampleBatch(n1, d);
  detail::get_doubles(in, plan.x0_atoms.data, n0 * d);
  detail::get_doubles(in, plan.x1_atoms.data, n1 * d);
  if (plan.kind == CouplingKind::sinkhorn) {
    if (!(plan.reg > 0.0)) throw std::runtime_error("plan file: bad reg");
    detail::get_doubles(in, plan.f, n0);
    detail::get_doubles(in, plan.g, n1);
  } else if (plan.kind == CouplingKind::dense) {
    detail::get_doubles(in, plan.log_w, n0 * n1);
  }
  plan.x0_atoms.validate();
  plan.x1_atoms.validate();
  return plan;
}

}  // namespace sbridge
