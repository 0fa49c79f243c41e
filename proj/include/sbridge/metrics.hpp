// metrics.hpp: distribution distances for evaluating translated batches.
//
// All estimators use the biased V-statistic forms: they are exactly zero
// on identical multisets, which is what the determinism and
// identity-of-indiscernibles tests pin down, and the bias cancels in the
// method-vs-method comparisons these feed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/rng.hpp"

namespace sbridge {

// 2 E||a-b|| - E||a-a'|| - E||b-b'|| over all index pairs.
inline double energy_distance(const SampleBatch& a, const SampleBatch& b) {
  a.validate();
  b.validate();
  require_same_dim(a, b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) ab += dist(a.row(i), b.row(j));
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < a.n; ++j) aa += dist(a.row(i), a.row(j));
  for (std::size_t i = 0; i < b.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) bb += dist(b.row(i), b.row(j));
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
  return 2.0 * ab / (na * nb) - aa / (na * na) - bb / (nb * nb);
}

namespace detail {

// 2-Wasserstein distance between two 1D samples; equal sizes pair sorted
// values directly, otherwise both inverse CDFs are compared on a common
// quantile grid with linear interpolation between order statistics.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double r = a[i] - b[i];
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
  }
  auto inv_cdf = [](const std::vector<double>& v, double q) {
    double pos = q * static_cast<double>(v.size()) - 0.5;
    if (pos <= 0.0) return v.front();
    if (pos >= static_cast<double>(v.size() - 1)) return v.back();
    std::size_t lo = static_cast<std::size_t>(pos);
    double f = pos - static_cast<double>(lo);
    return (1.0 - f) * v[lo] + f * v[lo + 1];
  };
  const std::size_t grid = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < grid; ++k) {
    double q = (static_cast<double>(k) + 0.5) / static_cast<double>(grid);
    double r = inv_cdf(a, q) - inv_cdf(b, q);
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(grid));
}

}  // namespace detail

// Mean over seeded random unit directions of the 1D 2-Wasserstein distance
// between the projections.
inline double sliced_wasserstein(const SampleBatch& a, const SampleBatch& b,
                                 std::size_t n_proj, std::uint64_t seed) {
  a.validate();
  b.validate();
  require_same_dim(a, b);
  if (n_proj < 1)
    throw std::invalid_argument("sliced_wasserstein: n_proj must be >= 1");
  RngStream rng(seed, "sw-directions");
  std::vector<double> dir(a.d), pa(a.n), pb(b.n);
  double total = 0.0;
  for (std::size_t p = 0; p < n_proj; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& v : dir) v /= norm;
    for (std::size_t i = 0; i < a.n; ++i) {
      double s = 0.0;
      auto row = a.row(i);
      for (std::size_t k = 0; k < a.d; ++k) s += dir[k] * row[k];
      pa[i] = s;
    }
    for (std::size_t i = 0; i < b.n; ++i) {
      double s = 0.0;
      auto row = b.row(i);
      for (std::size_t k = 0; k < b.d; ++k) s += dir[k] * row[k];
      pb[i] = s;
    }
    total += detail::wasserstein_1d(pa, pb);
  }
  return total / static_cast<double>(n_proj);
}

namespace detail {

// Cyclic Jacobi eigendecomposition for small symmetric matrices.
// A is n x n row-major and is destroyed; eigenvalues land in evals and,
// when evecs is non-null, columns of evecs are the eigenvectors.
inline void jacobi_eigen(std::vector<double>& A, std::size_t n,
                         std::vector<double>& evals,
                         std::vector<double>* evecs = nullptr) {
  if (evecs) {
    evecs->assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) (*evecs)[i * n + i] = 1.0;
  }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A[p * n + q] * A[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = A[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double theta = (A[q * n + q] - A[p * n + p]) / (2.0 * apq);
        double tabs = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double tan_r = theta >= 0.0 ? tabs : -tabs;
        double c = 1.0 / std::sqrt(tan_r * tan_r + 1.0);
        double s = tan_r * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = A[k * n + p], akq = A[k * n + q];
          A[k * n + p] = c * akp - s * akq;
          A[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = A[p * n + k], aqk = A[q * n + k];
          A[p * n + k] = c * apk - s * aqk;
          A[q * n + k] = s * apk + c * aqk;
        }
        if (evecs) {
          for (std::size_t k = 0; k < n; ++k) {
            double vkp = (*evecs)[k * n + p], vkq = (*evecs)[k * n + q];
            (*evecs)[k * n + p] = c * vkp - s * vkq;
            (*evecs)[k * n + q] = s * vkp + c * vkq;
          }
        }
      }
    }
  }
  evals.resize(n);
  for (std::size_t i = 0; i < n; ++i) evals[i] = A[i * n + i];
}

// Symmetric PSD square root via eigendecomposition; slightly negative
// eigenvalues are clipped to zero and the largest clip is reported.
inline std::vector<double> psd_sqrt(std::vector<double> A, std::size_t n,
                                    double* worst_clip = nullptr) {
  std::vector<double> evals, evecs;
  jacobi_eigen(A, n, evals, &evecs);
  double clip = 0.0;
  for (auto& ev : evals) {
    if (ev < 0.0) {
      clip = std::max(clip, -ev);
      ev = 0.0;
    }
  }
  if (worst_clip) *worst_clip = clip;
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += evecs[i * n + k] * std::sqrt(evals[k]) * evecs[j * n + k];
      out[i * n + j] = s;
    }
  return out;
}

inline void mean_and_cov(const SampleBatch& a, std::vector<double>& mean,
                         std::vector<double>& cov) {
  const std::size_t d = a.d;
  mean.assign(d, 0.0);
  for (std::size_t i = 0; i < a.n; ++i) {
    auto row = a.row(i);
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  }
  for (auto& m : mean) m /= static_cast<double>(a.n);
  cov.assign(d * d, 0.0);
  for (std::size_t i = 0; i < a.n; ++i) {
    auto row = a.row(i);
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = 0; q < d; ++q)
        cov[p * d + q] += (row[p] - mean[p]) * (row[q] - mean[q]);
  }
  for (auto& c : cov) c /= static_cast<double>(a.n);
}

}  // namespace detail

// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}) with population
// moments.  The cross square root is computed as sqrt(S_A)^T-conjugated so
// the eigenproblem stays symmetric; clipped_flag (optional) reports a
// negative-eigenvalue clip beyond round-off scale.
inline double gaussian_frechet(const SampleBatch& a, const SampleBatch& b,
                               bool* clipped_flag = nullptr) {
  a.validate();
  b.validate();
  require_same_dim(a, b);
  const std::size_t d = a.d;
  if (a.n <= d || b.n <= d)
    throw std::invalid_argument(
        "gaussian_frechet: need more samples than dimensions");
  std::vector<double> mu_a, mu_b, cov_a, cov_b;
  detail::mean_and_cov(a, mu_a, cov_a);
  detail::mean_and_cov(b, mu_b, cov_b);

  double mean_term = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double r = mu_a[k] - mu_b[k];
    mean_term += r * r;
  }
  double trace_ab = 0.0;
  for (std::size_t k = 0; k < d; ++k)
    trace_ab += cov_a[k * d + k] + cov_b[k * d + k];

  // tr((S_A S_B)^{1/2}) = tr((sqrt(S_A) S_B sqrt(S_A))^{1/2})
  std::vector<double> root_a = detail::psd_sqrt(cov_a, d);
  std::vector<double> m(d * d, 0.0), tmp(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += root_a[i * d + k] * cov_b[k * d + j];
      tmp[i * d + j] = s;
    }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += tmp[i * d + k] * root_a[k * d + j];
      m[i * d + j] = s;
    }
  // Symmetrize against round-off before decomposing.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      double v = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = m[j * d + i] = v;
    }
  double worst_clip = 0.0;
  std::vector<double> evals, scratch = m;
  detail::jacobi_eigen(scratch, d, evals);
  double cross = 0.0;
  for (double ev : evals) {
    if (ev < 0.0) {
      worst_clip = std::max(worst_clip, -ev);
      ev = 0.0;
    }
    cross += std::sqrt(ev);
  }
  if (clipped_flag) *clipped_flag = worst_clip > 1e-6;
  double fd = mean_term + trace_ab - 2.0 * cross;
  return fd > 0.0 ? fd : 0.0;
}

// Mean squared displacement of a row-aligned translation.
inline double avg_transport_cost(const SampleBatch& x0s,
                                 const SampleBatch& translated) {
  x0s.validate();
  translated.validate();
  require_same_dim(x0s, translated);
  if (x0s.n != translated.n)
    throw std::invalid_argument("avg_transport_cost: batches have " +
                                std::to_string(x0s.n) + " and " +
                                std::to_string(translated.n) + " rows");
  double s = 0.0;
  for (std::size_t i = 0; i < x0s.n; ++i)
    s += sq_dist(x0s.row(i), translated.row(i));
  return s / static_cast<double>(x0s.n);
}

// One evaluation outcome: ordered metric values plus provenance.
struct EvalReport {
  std::vector<std::pair<std::string, double>> values;
  std::size_t n_translated = 0;
  std::size_t n_reference = 0;
  std::uint64_t seed = 0;
  double runtime_sec = 0.0;  // informational; kept out of deterministic files

  double at(std::string_view name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    throw std::out_of_range("EvalReport: no metric named " + std::string(name));
  }
};

inline constexpr std::size_t kSlicedProjections = 128;

// Standard metric battery for a translated batch against a reference
// target batch, with the source batch for displacement cost.
inline EvalReport evaluate_translation(const SampleBatch& x0s,
                                       const SampleBatch& translated,
                                       const SampleBatch& target_ref,
                                       std::uint64_t seed) {
  EvalReport report;
  report.n_translated = translated.n;
  report.n_reference = target_ref.n;
  report.seed = seed;
  report.values.emplace_back("energy_distance",
                             energy_distance(translated, target_ref));
  report.values.emplace_back(
      "sliced_wasserstein",
      sliced_wasserstein(translated, target_ref, kSlicedProjections, seed));
  report.values.emplace_back("gaussian_frechet",
                             gaussian_frechet(translated, target_ref));
  report.values.emplace_back("avg_transport_cost",
                             avg_transport_cost(x0s, translated));
  return report;
}

}  // namespace sbridge
