// Command-line front end.  All real work lives in the headers; this file
// only parses flags, layers them over config-file and environment settings,
// and maps outcomes to exit codes (0 = success, 1 = any failure).

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sbridge/experiment.hpp"

namespace {

using sbridge::ExperimentConfig;

// Flag values collected before the config object exists; applied on top of
// defaults < file < environment, so the command line always wins.
struct Overrides {
  std::optional<std::string> config_path;
  std::vector<std::string> sets;  // raw key=value
  std::optional<std::string> out, source, target, backend, method;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<double> sqrt_tau, t0, omega;
  std::optional<int> nfe;
  std::string ablate;  // comma list: snr,teps,cfg,denoise
  bool save_trajectory = false;
};

void add_common_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "key=value settings file");
  cmd->add_option("--set", ov.sets, "extra key=value override (repeatable)");
  cmd->add_option("--out", ov.out, "output directory");
  cmd->add_option("--seed", ov.seed, "root RNG seed");
  cmd->add_option("--source", ov.source, "source dataset name");
  cmd->add_option("--target", ov.target, "target dataset name");
  cmd->add_option("-n,--num-samples", ov.n, "samples per dataset");
  cmd->add_option("--sqrt-tau", ov.sqrt_tau, "bridge noise scale (sqrt of tau)");
  cmd->add_option("--t0", ov.t0, "start time of the solve");
  cmd->add_option("--omega", ov.omega, "guidance weight");
  cmd->add_option("--nfe", ov.nfe, "denoiser evaluations per sample");
  cmd->add_option("--backend", ov.backend,
                  "bridge predictor backend: oracle|analytic|learned");
  cmd->add_option("--method", ov.method,
                  "translation method: lsb|sdedit|dual-bridge");
  cmd->add_option("--ablate", ov.ablate,
                  "comma list of features to disable: snr,teps,cfg,denoise");
  cmd->add_flag("--save-trajectory", ov.save_trajectory,
                "also write the per-step solver states");
}

ExperimentConfig build_config(const Overrides& ov) {
  std::optional<std::filesystem::path> path;
  if (ov.config_path) path = *ov.config_path;
  ExperimentConfig cfg = sbridge::load_config(path);
  for (const auto& kv : ov.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    sbridge::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (ov.out) cfg.out_dir = *ov.out;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.source) cfg.source = *ov.source;
  if (ov.target) cfg.target = *ov.target;
  if (ov.n) cfg.n = *ov.n;
  if (ov.sqrt_tau) cfg.sqrt_tau = *ov.sqrt_tau;
  if (ov.t0) cfg.t0 = *ov.t0;
  if (ov.omega) cfg.omega = *ov.omega;
  if (ov.nfe) cfg.nfe = *ov.nfe;
  if (ov.backend) cfg.backend = *ov.backend;
  if (ov.method) cfg.method = *ov.method;
  if (ov.save_trajectory) cfg.save_trajectory = true;
  std::istringstream in(ov.ablate);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    if (tok == "snr")
      cfg.ablate_snr_matching = true;
    else if (tok == "teps")
      cfg.ablate_time_dep_eps = true;
    else if (tok == "cfg")
      cfg.ablate_cfg = true;
    else if (tok == "denoise")
      cfg.ablate_denoise = true;
    else
      throw std::invalid_argument("--ablate: unknown feature '" + tok +
                                  "' (expected snr, teps, cfg, denoise)");
  }
  return cfg;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

std::vector<std::string> parse_name_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void print_row(const sbridge::ReportRow& row) {
  std::printf("%-12s nfe=%-3d seed=%llu ", row.method.c_str(), row.nfe,
              static_cast<unsigned long long>(row.seed));
  if (row.metrics) {
    std::printf("energy=%.6g sliced_w2=%.6g frechet=%.6g cost=%.6g\n",
                row.metrics->at("energy_distance"),
                row.metrics->at("sliced_wasserstein"),
                row.metrics->at("gaussian_frechet"),
                row.metrics->at("avg_transport_cost"));
  } else {
    std::printf("%s\n", row.status.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-step unpaired translation between toy 2-D distributions"};
  app.require_subcommand(1);

  Overrides ov;
  std::string nfe_list, method_list;
  double sigma_fault = 0.0;

  CLI::App* gen = app.add_subcommand("gen-data", "sample the two datasets");
  CLI::App* train = app.add_subcommand("train", "fit the noise-prediction MLP");
  CLI::App* translate =
      app.add_subcommand("translate", "map source samples to the target");
  CLI::App* sweep =
      app.add_subcommand("sweep", "translate across methods and budgets");
  CLI::App* check =
      app.add_subcommand("check", "run the internal-consistency battery");
  for (CLI::App* cmd : {gen, train, translate, sweep, check})
    add_common_options(cmd, ov);
  sweep->add_option("--nfe-list", nfe_list, "comma list of budgets");
  sweep->add_option("--methods", method_list, "comma list of methods");
  check->add_option("--sigma-fault", sigma_fault,
                    "offset injected into one side of the SNR identity "
                    "(nonzero must fail the check)");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = build_config(ov);
    if (gen->parsed()) {
      sbridge::run_gen_data(cfg);
      std::printf("wrote %s and %s (n=%zu)\n",
                  cfg.path(sbridge::files::kSource).string().c_str(),
                  cfg.path(sbridge::files::kTarget).string().c_str(), cfg.n);
    } else if (train->parsed()) {
      sbridge::run_train(cfg);
      std::printf("wrote %s\n",
                  cfg.path(sbridge::files::kCheckpoint).string().c_str());
    } else if (translate->parsed()) {
      sbridge::ReportRow row = sbridge::run_translate(cfg);
      print_row(row);
      std::printf("wrote %s\n",
                  cfg.path(sbridge::files::kReport).string().c_str());
    } else if (sweep->parsed()) {
      auto rows = sbridge::run_sweep(cfg, parse_int_list(nfe_list),
                                     parse_name_list(method_list));
      bool any_error = false;
      for (const auto& row : rows) {
        print_row(row);
        any_error = any_error || row.status != "ok";
      }
      std::printf("wrote %s\n",
                  cfg.path(sbridge::files::kSweep).string().c_str());
      if (any_error) return 1;
    } else if (check->parsed()) {
      sbridge::CheckReport report =
          sbridge::run_check(cfg, {sigma_fault});
      for (const auto& item : report.items)
        std::printf("[%s] %-22s residual=%.3e tol=%.0e\n",
                    item.pass ? "PASS" : "FAIL", item.name.c_str(),
                    item.residual, item.tol);
      if (!report.all_pass()) return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
