// datasets.hpp: seeded 2D toy dataset generators.
//
// Dataset ids: eight-gaussians, two-moons, checkerboard, swiss-roll-2d,
// gaussian(mx,my[,var]) / gaussian(mx,my,vx,vy).  All generators draw
// i.i.d. points from the named distribution; identical (name, n, seed)
// yields a bit-identical batch.

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbridge/batch.hpp"
#include "sbridge/rng.hpp"

namespace sbridge {

// One Gaussian mixture component with diagonal covariance.
struct GmmComponent {
  double weight = 1.0;
  Point mean;
  Point var;  // per-axis variances, all > 0
};

// Mixture specification; closed-form posterior predictors are available
// for datasets expressible in this form.
struct GmmSpec {
  std::vector<GmmComponent> components;
  std::size_t dim() const {
    return components.empty() ? 0 : components.front().mean.size();
  }
};

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

inline std::vector<double> parse_args(std::string_view name,
                                      std::string_view inner) {
  std::vector<double> args;
  std::string token;
  std::istringstream in{std::string(inner)};
  while (std::getline(in, token, ',')) {
    std::size_t pos = 0;
    double v;
    try {
      v = std::stod(token, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("dataset: bad parameter '" + token + "' in " +
                                  std::string(name));
    }
    while (pos < token.size() && std::isspace(static_cast<unsigned char>(token[pos])))
      ++pos;
    if (pos != token.size())
      throw std::invalid_argument("dataset: bad parameter '" + token + "' in " +
                                  std::string(name));
    args.push_back(v);
  }
  return args;
}

// gaussian(...) arguments -> (mean, per-axis variance).
inline std::pair<Point, Point> parse_gaussian(std::string_view name) {
  auto open = name.find('(');
  if (open == std::string_view::npos) return {{0.0, 0.0}, {1.0, 1.0}};
  if (name.back() != ')')
    throw std::invalid_argument("dataset: malformed '" + std::string(name) + "'");
  auto args = parse_args(name, name.substr(open + 1, name.size() - open - 2));
  Point mean, var;
  if (args.size() == 2) {
    mean = {args[0], args[1]};
    var = {1.0, 1.0};
  } else if (args.size() == 3) {
    mean = {args[0], args[1]};
    var = {args[2], args[2]};
  } else if (args.size() == 4) {
    mean = {args[0], args[1]};
    var = {args[2], args[3]};
  } else {
    throw std::invalid_argument("dataset: gaussian takes 2-4 parameters, got " +
                                std::to_string(args.size()));
  }
  for (double v : var)
    if (!(v > 0.0))
      throw std::invalid_argument("dataset: gaussian variance must be > 0");
  return {mean, var};
}

}  // namespace detail

inline bool is_known_dataset(std::string_view name) {
  return name == "eight-gaussians" || name == "two-moons" ||
         name == "checkerboard" || name == "swiss-roll-2d" ||
         name.rfind("gaussian", 0) == 0;
}

// Mixture form of a dataset id, when one exists (the ring of eight
// Gaussians and gaussian(...); the other generators have no mixture form).
inline std::optional<GmmSpec> dataset_gmm(std::string_view name) {
  if (name == "eight-gaussians") {
    GmmSpec spec;
    for (int k = 0; k < 8; ++k) {
      double a = detail::kPi / 4.0 * k;
      spec.components.push_back(
          {1.0 / 8.0, {2.0 * std::cos(a), 2.0 * std::sin(a)}, {0.04, 0.04}});
    }
    return spec;
  }
  if (name.rfind("gaussian", 0) == 0) {
    auto [mean, var] = detail::parse_gaussian(name);
    return GmmSpec{{{1.0, mean, var}}};
  }
  return std::nullopt;
}

// Draws n i.i.d. points from an explicit mixture specification.
inline SampleBatch sample_gmm(const GmmSpec& spec, std::size_t n,
                              std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_gmm: n must be >= 1");
  if (spec.components.empty())
    throw std::invalid_argument("sample_gmm: empty mixture");
  const std::size_t d = spec.dim();
  double total = 0.0;
  for (const auto& c : spec.components) {
    if (c.mean.size() != d || c.var.size() != d)
      throw std::invalid_argument("sample_gmm: inconsistent component dims");
    if (!(c.weight > 0.0))
      throw std::invalid_argument("sample_gmm: component weight must be > 0");
    total += c.weight;
  }
  SampleBatch batch(n, d);
  RngStream rng(seed, "gmm");
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    std::size_t pick = 0;
    for (double acc = 0.0; pick + 1 < spec.components.size(); ++pick) {
      acc += spec.components[pick].weight;
      if (u < acc) break;
    }
    const auto& c = spec.components[pick];
    for (std::size_t k = 0; k < d; ++k)
      batch.data[i * d + k] = c.mean[k] + std::sqrt(c.var[k]) * rng.normal();
  }
  return batch;
}

// Draws n i.i.d. points from the named 2D distribution.
inline SampleBatch gen_toy(std::string_view name, std::size_t n,
                           std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_toy: n must be >= 1");
  if (!is_known_dataset(name))
    throw std::invalid_argument("gen_toy: unknown dataset '" +
                                std::string(name) + "'");
  SampleBatch batch(n, 2);
  RngStream rng(seed, "dataset");

  if (name == "eight-gaussians") {
    for (std::size_t i = 0; i < n; ++i) {
      auto mode = rng.uniform_int(8);
      double a = detail::kPi / 4.0 * static_cast<double>(mode);
      batch.data[2 * i + 0] = 2.0 * std::cos(a) + 0.2 * rng.normal();
      batch.data[2 * i + 1] = 2.0 * std::sin(a) + 0.2 * rng.normal();
    }
  } else if (name == "two-moons") {
    // Two interleaved half circles, centered and scaled to ~[-2.3, 2.3].
    for (std::size_t i = 0; i < n; ++i) {
      double phi = detail::kPi * rng.uniform();
      bool lower = rng.uniform_int(2) == 1;
      double x = lower ? 1.0 - std::cos(phi) : std::cos(phi);
      double y = lower ? 0.5 - std::sin(phi) : std::sin(phi);
      batch.data[2 * i + 0] = 1.5 * (x - 0.5) + 0.1 * rng.normal();
      batch.data[2 * i + 1] = 1.5 * (y - 0.25) + 0.1 * rng.normal();
    }
  } else if (name == "checkerboard") {
    // Uniform over the black cells of a 4x4 board on [-2, 2]^2.
    for (std::size_t i = 0; i < n; ++i) {
      double x = rng.uniform(-2.0, 2.0);
      double off = rng.uniform() - static_cast<double>(rng.uniform_int(2)) * 2.0;
      double parity = std::fmod(std::floor(x) + 4.0, 2.0);
      batch.data[2 * i + 0] = x;
      batch.data[2 * i + 1] = off + parity;
    }
  } else if (name == "swiss-roll-2d") {
    double scale = 2.0 / (4.5 * detail::kPi);
    for (std::size_t i = 0; i < n; ++i) {
      double theta = 1.5 * detail::kPi * (1.0 + 2.0 * rng.uniform());
      batch.data[2 * i + 0] = scale * theta * std::cos(theta) + 0.05 * rng.normal();
      batch.data[2 * i + 1] = scale * theta * std::sin(theta) + 0.05 * rng.normal();
    }
  } else {  // gaussian(...)
    auto [mean, var] = detail::parse_gaussian(name);
    double sx = std::sqrt(var[0]), sy = std::sqrt(var[1]);
    for (std::size_t i = 0; i < n; ++i) {
      batch.data[2 * i + 0] = mean[0] + sx * rng.normal();
      batch.data[2 * i + 1] = mean[1] + sy * rng.normal();
    }
  }
  return batch;
}

}  // namespace sbridge
