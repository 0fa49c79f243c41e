#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <stdexcept>

#include "sbridge/baselines.hpp"
#include "sbridge/datasets.hpp"
#include "sbridge/rng.hpp"

using namespace sbridge;

namespace {

NoisePredictor zero_net() {
  return [](std::span<const double> y, NoiseLevel, Domain) -> Point {
    return Point(y.size(), 0.0);
  };
}

}  // namespace

TEST_CASE("level paths are uniform in log-snr with exact endpoints",
          "[baselines]") {
  auto lo = NoiseLevel::from_alpha_bar(0.02);
  auto hi = NoiseLevel::from_alpha_bar(0.999);
  auto path = level_path(lo, hi, 8);
  REQUIRE(path.size() == 9);
  REQUIRE(path.front().alpha_bar == lo.alpha_bar);
  REQUIRE(path.back().alpha_bar == hi.alpha_bar);
  double step = (std::log(hi.snr()) - std::log(lo.snr())) / 8.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    double gap = std::log(path[i].snr()) - std::log(path[i - 1].snr());
    REQUIRE(gap == Catch::Approx(step).epsilon(1e-9));
  }
  REQUIRE_THROWS_AS(level_path(lo, hi, 0), std::invalid_argument);
}

TEST_CASE("a step between equal levels is the identity", "[baselines]") {
  Point c = {0.4, -0.7};
  NoisePredictor constant = [&](std::span<const double> y, NoiseLevel,
                                Domain) -> Point { return c; };
  auto level = NoiseLevel::from_alpha_bar(0.37);
  Point y = {1.2, -0.8};
  Point out = pf_ode_step(constant, y, level, level, Domain::target, 1.0);
  REQUIRE(out[0] == Catch::Approx(y[0]).margin(1e-14));
  REQUIRE(out[1] == Catch::Approx(y[1]).margin(1e-14));
}

TEST_CASE("with zero noise prediction a step is a pure rescale", "[baselines]") {
  auto from = NoiseLevel::from_alpha_bar(0.5);
  auto to = NoiseLevel::from_alpha_bar(0.9);
  Point y = {2.0, -3.0};
  Point out = pf_ode_step(zero_net(), y, from, to, Domain::target, 1.0);
  double ratio = to.sqrt_ab() / from.sqrt_ab();
  REQUIRE(out[0] == Catch::Approx(2.0 * ratio).epsilon(1e-14));
  REQUIRE(out[1] == Catch::Approx(-3.0 * ratio).epsilon(1e-14));
}

TEST_CASE("guidance mixes the conditional against the null direction",
          "[baselines]") {
  NoisePredictor by_domain = [](std::span<const double> y, NoiseLevel,
                                Domain c) -> Point {
    return Point(y.size(), c == Domain::null_token ? 0.2 : 1.0);
  };
  auto from = NoiseLevel::from_alpha_bar(0.5);
  Point y = {0.0, 0.0};
  // omega = 2: eps = (1 - 2) * 0.2 + 2 * 1.0 = 1.8
  Point out = pf_ode_step(by_domain, y, from, from, Domain::target, 2.0);
  // equal levels: out = y - so * eps + so * eps = y (identity even guided)
  REQUIRE(out[0] == Catch::Approx(0.0).margin(1e-14));

  // distinguishable through a level change
  auto to = NoiseLevel::from_alpha_bar(0.9);
  Point guided = pf_ode_step(by_domain, y, from, to, Domain::target, 2.0);
  Point unguided = pf_ode_step(by_domain, y, from, to, Domain::target, 1.0);
  double expect_ratio = 1.8 / 1.0;
  REQUIRE(guided[0] == Catch::Approx(unguided[0] * expect_ratio).epsilon(1e-12));
}

TEST_CASE("corrupt-then-denoise with a null net adds matched noise",
          "[baselines]") {
  SampleBatch x0(6000, 2);
  for (auto& v : x0.data) v = 1.0;
  SbParams sb;  // t0 = 0.2, tau = 6.25: matched level has snr 1
  RngStream rng(40);
  SampleBatch out = sdedit_translate(x0, 6, sb, zero_net(), 1.0, rng);
  REQUIRE(out.n == 6000);
  // with eps-hat = 0 every step is a rescale, so the output is exactly
  // x0 + sigma_eff z with sigma_eff^2 = 1 / snr(start) = 1
  double mean = 0.0, var = 0.0;
  for (double v : out.data) mean += v;
  mean /= static_cast<double>(out.data.size());
  for (double v : out.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.data.size());
  REQUIRE(mean == Catch::Approx(1.0).margin(0.05));
  REQUIRE(var == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("invert-then-generate with a null net is the identity",
          "[baselines]") {
  SampleBatch x0 = gen_toy("eight-gaussians", 64, 41);
  SampleBatch out = dual_bridge_translate(x0, 8, zero_net(), 3.0);
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    REQUIRE(out.data[i] == Catch::Approx(x0.data[i]).margin(1e-9));
}

TEST_CASE("invert-then-generate rejects odd or tiny budgets", "[baselines]") {
  SampleBatch x0(2, 2);
  x0.data = {0.0, 0.0, 1.0, 1.0};
  REQUIRE_THROWS_AS(dual_bridge_translate(x0, 7, zero_net(), 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(dual_bridge_translate(x0, 0, zero_net(), 1.0),
                    std::invalid_argument);
  REQUIRE_NOTHROW(dual_bridge_translate(x0, 2, zero_net(), 1.0));
}

TEST_CASE("corrupt-then-denoise is reproducible by stream", "[baselines]") {
  SampleBatch x0 = gen_toy("eight-gaussians", 32, 42);
  SbParams sb;
  RngStream r1(43), r2(43), r3(44);
  SampleBatch a = sdedit_translate(x0, 4, sb, zero_net(), 1.0, r1);
  SampleBatch b = sdedit_translate(x0, 4, sb, zero_net(), 1.0, r2);
  SampleBatch c = sdedit_translate(x0, 4, sb, zero_net(), 1.0, r3);
  REQUIRE(a.data == b.data);
  REQUIRE(a.data != c.data);
}

TEST_CASE("path configs enforce shape and monotonicity", "[baselines]") {
  PfOdeConfig cfg;
  cfg.nfe = 3;
  cfg.path = level_path(NoiseLevel::from_alpha_bar(0.1),
                        NoiseLevel::from_alpha_bar(0.9), 3);
  REQUIRE_NOTHROW(cfg.validate());
  cfg.path.pop_back();
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.path = level_path(NoiseLevel::from_alpha_bar(0.1),
                        NoiseLevel::from_alpha_bar(0.9), 3);
  std::swap(cfg.path[1], cfg.path[2]);
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);

  BaselineParams bp;
  bp.abar_lo = 0.9;
  bp.abar_hi = 0.5;
  REQUIRE_THROWS_AS(bp.validate(), std::invalid_argument);
}

TEST_CASE("model wrapper matches direct forward calls", "[baselines]") {
  MlpArch arch;
  Mlp model(arch, 45);
  {
    auto p = model.params_mut();
    RngStream rng(46);
    for (auto& v : p) v += 0.1 * rng.normal();
  }
  auto shared = std::make_shared<const Mlp>(std::move(model));
  auto net = as_predictor(shared);
  Point y = {0.3, 0.6};
  auto level = NoiseLevel::from_alpha_bar(0.4);
  REQUIRE(net(y, level, Domain::source) ==
          shared->forward(y, level, Domain::source));
  REQUIRE_THROWS_AS(as_predictor(nullptr), std::invalid_argument);
}
