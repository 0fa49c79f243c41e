// batch.hpp: SampleBatch: an n x d matrix of points from one domain.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbridge {

using Point = std::vector<double>;

// Row-major n x d sample matrix.  The unit of all translation and
// evaluation.  Invariants: n >= 1, d >= 1, every entry finite.
struct SampleBatch {
  std::vector<double> data;  // n * d, row-major
  std::size_t n = 0;
  std::size_t d = 0;

  SampleBatch() = default;
  SampleBatch(std::size_t n_, std::size_t d_)
      : data(n_ * d_, 0.0), n(n_), d(d_) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * d, d}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * d, d};
  }

  Point point(std::size_t i) const {
    return Point(data.begin() + static_cast<std::ptrdiff_t>(i * d),
                 data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }

  void set_row(std::size_t i, std::span<const double> p) {
    for (std::size_t k = 0; k < d; ++k) data[i * d + k] = p[k];
  }

  void validate() const {
    if (n < 1 || d < 1)
      throw std::invalid_argument("SampleBatch: need n >= 1 and d >= 1");
    if (data.size() != n * d)
      throw std::invalid_argument("SampleBatch: data size != n * d");
    for (double v : data)
      if (!std::isfinite(v))
        throw std::invalid_argument("SampleBatch: non-finite entry");
  }
};

inline void require_same_dim(std::span<const double> a,
                             std::span<const double> b, const char* where) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
}

inline void require_same_dim(const SampleBatch& a, const SampleBatch& b) {
  if (a.d != b.d)
    throw std::invalid_argument("batch dimension mismatch (" +
                                std::to_string(a.d) + " vs " +
                                std::to_string(b.d) + ")");
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double dk = a[k] - b[k];
    s += dk * dk;
  }
  return s;
}

inline double dist(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(sq_dist(a, b));
}

}  // namespace sbridge
