// uxsim: command-line front end for single runs and sweeps.
//
//   uxsim run      --config c.yaml [--scheme S] [--n-ue N] [--seed K] [--out DIR] [--event-log F] [--verbose]
//   uxsim sweep    --config c.yaml --out DIR [--workers W] [--verbose]
//   uxsim sweep    --out DIR                 (resume from DIR/manifest.yaml)
//   uxsim validate --config c.yaml
//   uxsim report   --out DIR [--config c.yaml]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "uxrc/uxrc.hpp"

namespace fs = std::filesystem;
using namespace uxrc;

namespace {

void print_curves(const std::vector<CapacityCurve>& curves) {
  std::cout << std::left << std::setw(17) << "scheme" << std::right;
  if (!curves.empty())
    for (const auto& p : curves.front().points) std::cout << std::setw(7) << ("N=" + std::to_string(p.n_ue));
  std::cout << "  capacity\n";
  for (const auto& c : curves) {
    std::cout << std::left << std::setw(17) << c.scheme << std::right << std::fixed << std::setprecision(2);
    for (const auto& p : c.points) std::cout << std::setw(7) << p.ratio.mean;
    std::cout << "  " << c.ux_capacity;
    if (!c.holes.empty()) {
      std::cout << "  (missing loads:";
      for (int h : c.holes) std::cout << ' ' << h;
      std::cout << ')';
    }
    std::cout << '\n';
  }
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-aware multi-user rate control simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, event_log, scheme_name;
  int n_ue = 0, workers = 0;
  std::uint64_t seed = 0;
  bool verbose = false;

  auto* run = app.add_subcommand("run", "simulate one cell");
  run->add_option("--config", config_path, "experiment configuration (YAML)");
  run->add_option("--scheme", scheme_name, "rate control scheme (default: first in config)");
  run->add_option("--n-ue", n_ue, "UEs in the cell (default: first load in config)");
  run->add_option("--seed", seed, "master seed (default: first seed in config)");
  run->add_option("--out", out_dir, "write cell_report.csv here");
  run->add_option("--event-log", event_log, "write an NDJSON event log to this file");
  run->add_flag("--verbose,-v", verbose, "per-UE outcomes and counters");

  auto* sweep = app.add_subcommand("sweep", "run the scheme x load x seed grid");
  sweep->add_option("--config", config_path, "experiment configuration (YAML); omit to resume from --out");
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep->add_option("--workers", workers, "parallel runs (default: config value)");
  sweep->add_flag("--verbose,-v", verbose, "report each finished cell");

  auto* val = app.add_subcommand("validate", "check a configuration without running it");
  val->add_option("--config", config_path, "experiment configuration (YAML)")->required();

  auto* rep = app.add_subcommand("report", "re-aggregate an existing cell_report.csv");
  rep->add_option("--out", out_dir, "sweep output directory")->required();
  rep->add_option("--config", config_path, "configuration (default: DIR/manifest.yaml if present)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*val) {
      const auto cfg = load_config(config_path);
      const auto errs = validation_errors(cfg);
      if (errs.empty()) {
        std::cout << config_path << ": ok (" << sweep_grid(cfg).size() << " cells)\n";
        return 0;
      }
      for (const auto& e : errs) std::cerr << config_path << ": " << e << '\n';
      return 1;
    }

    if (*run) {
      auto cfg = config_or_default(config_path);
      validate(cfg);
      const Scheme s = scheme_name.empty() ? cfg.schemes.front() : parse_scheme(scheme_name);
      const int n = n_ue > 0 ? n_ue : cfg.loads.front();
      const std::uint64_t sd = run->count("--seed") ? seed : cfg.seeds.front();
      const auto inputs = load_inputs(cfg);
      std::ofstream log_file;
      if (!event_log.empty()) {
        log_file.open(event_log);
        if (!log_file) throw std::runtime_error("cannot open " + event_log);
      }
      const auto r = run_single(cfg, s, n, sd, inputs, event_log.empty() ? nullptr : &log_file);
      write_cell_report(std::cout, {r.report});
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / "cell_report.csv");
        write_cell_report(f, {r.report});
      }
      if (verbose) {
        std::cerr << "ue,satisfied,above_fraction,msd_ms,psnr_p5_db,mean_rate_mbps,displayed\n";
        for (const auto& u : r.ues)
          std::cerr << u.ue_id << ',' << u.satisfied << ',' << fmt_double(u.above_fraction) << ','
                    << fmt_double(u.msd_ms) << ',' << fmt_double(u.psnr_p5_db) << ','
                    << fmt_double(u.mean_rate_mbps) << ',' << u.displayed << '\n';
        std::cerr << "grants=" << r.grants << " harq_failures=" << r.harq_failures
                  << " idle_rbgs_with_backlog=" << r.idle_rbgs_with_backlog
                  << " bits_conserved=" << (r.bits_conserved() ? "yes" : "no") << '\n';
        if (!r.lambda_trace.empty()) std::cerr << "final_lambda=" << fmt_double(r.lambda_trace.back()) << '\n';
      }
      return 0;
    }

    if (*sweep) {
      const fs::path dir(out_dir);
      ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = load_config(config_path);
      } else if (fs::exists(dir / "manifest.yaml")) {
        cfg = load_manifest_config((dir / "manifest.yaml").string());
      } else {
        std::cerr << "sweep: need --config or an existing " << (dir / "manifest.yaml") << '\n';
        return 2;
      }
      SweepOptions opt;
      opt.out_dir = dir;
      opt.workers = workers;
      if (verbose) opt.progress = [](const std::string& m) { std::cerr << m << '\n'; };
      const auto res = run_sweep(cfg, opt);
      std::cerr << "cells: " << res.executed << " run, " << res.reused << " reused, " << res.failures.size()
                << " failed\n";
      for (const auto& f : res.failures)
        std::cerr << "  " << to_string(f.point.scheme) << " n=" << f.point.n_ue << " seed=" << f.point.seed << ": "
                  << f.error << '\n';
      print_curves(res.curves);
      return res.failures.empty() ? 0 : 1;
    }

    if (*rep) {
      const fs::path dir(out_dir);
      ExperimentConfig cfg;
      if (!config_path.empty())
        cfg = load_config(config_path);
      else if (fs::exists(dir / "manifest.yaml"))
        cfg = load_manifest_config((dir / "manifest.yaml").string());
      std::ifstream in(dir / "cell_report.csv");
      if (!in) throw std::runtime_error("cannot open " + (dir / "cell_report.csv").string());
      const auto reports = read_cell_report(in, (dir / "cell_report.csv").string());
      const auto curves = aggregate_reports(cfg, reports);
      std::ofstream cap(dir / "capacity.csv");
      write_capacity(cap, curves);
      print_curves(curves);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
