// uxrc/experiment.hpp
//
// Experiment configuration (YAML), validation, run manifests, single runs and
// resumable multi-threaded sweeps with CSV outputs.
#pragma once

#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <tuple>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "uxrc/channel.hpp"
#include "uxrc/controllers.hpp"
#include "uxrc/metrics.hpp"
#include "uxrc/scene_io.hpp"
#include "uxrc/simulator.hpp"

namespace uxrc {

inline constexpr const char* kVersion = "0.1.0";

enum class ChannelSource { synthetic, traces };

struct ExperimentConfig {
  std::vector<Scheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<int> loads{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double duration_s = 30.0;
  double warmup_s = 1.0;
  double fps = 60.0;
  std::string scene_library;  ///< empty: built-in library
  ChannelSource channel_source = ChannelSource::synthetic;
  ChannelParams channel;
  std::vector<std::string> trace_files;
  SceneScheduleParams scene_schedule;
  HarqParams harq;
  EcnParams ecn;
  PipelineParams pipeline;
  SchedulerParams scheduler;
  ControllerConfig controller;
  int workers = 1;
  int bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 1;
};

// ---------------------------------------------------------------------------
// number formatting shared by YAML and CSV writers (shortest round-trip form)

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, p);
}

namespace detail {

template <typename Owner>
struct DoubleKey {
  const char* key;
  double Owner::*ptr;
};

inline const std::vector<DoubleKey<ControllerConfig>>& controller_keys() {
  static const std::vector<DoubleKey<ControllerConfig>> keys = {
      {"mu_target", &ControllerConfig::mu_target},
      {"gamma_db", &ControllerConfig::gamma_db},
      {"maxmin_q_min_db", &ControllerConfig::maxmin_q_min_db},
      {"maxmin_q_max_db", &ControllerConfig::maxmin_q_max_db},
      {"maxmin_tolerance_db", &ControllerConfig::maxmin_tolerance_db},
      {"price_step", &ControllerConfig::price_step},
      {"price_initial", &ControllerConfig::price_initial},
      {"price_quality_scale_db", &ControllerConfig::price_quality_scale_db},
      {"t_period_qoe_ms", &ControllerConfig::t_period_qoe_ms},
      {"d_stall_ms", &ControllerConfig::d_stall_ms},
      {"sigma", &ControllerConfig::sigma},
      {"rtt_low_ms", &ControllerConfig::rtt_low_ms},
      {"rtt_high_ms", &ControllerConfig::rtt_high_ms},
      {"alpha_up", &ControllerConfig::alpha_up},
      {"alpha_down", &ControllerConfig::alpha_down},
      {"rtt_max_ms", &ControllerConfig::rtt_max_ms},
      {"ott_q_min_db", &ControllerConfig::ott_q_min_db},
      {"ott_q_max_db", &ControllerConfig::ott_q_max_db},
      {"q_upper", &ControllerConfig::q_upper},
      {"q_lower", &ControllerConfig::q_lower},
      {"t_period_rtt_ms", &ControllerConfig::t_period_rtt_ms},
      {"t_win_rtt_ms", &ControllerConfig::t_win_rtt_ms},
      {"rate_floor_mbps", &ControllerConfig::rate_floor_mbps},
      {"rate_cap_mbps", &ControllerConfig::rate_cap_mbps},
      {"initial_rate_mbps", &ControllerConfig::initial_rate_mbps},
      {"packet_bits", &ControllerConfig::packet_bits},
  };
  return keys;
}

inline std::string_view to_string(UnadmittedPolicy p) { return p == UnadmittedPolicy::share ? "share" : "strict"; }
inline std::string_view to_string(ChannelSource c) { return c == ChannelSource::synthetic ? "synthetic" : "traces"; }
inline std::string_view to_string(MetricGranularity g) {
  return g == MetricGranularity::per_rbg ? "per-rbg" : "per-slot";
}

inline std::pair<double, double> range_of(const YAML::Node& n, const std::string& source, const char* what) {
  if (!n.IsSequence() || n.size() != 2) throw ConfigError(source, line_of(n), std::string(what) + " must be [lo, hi]");
  const double lo = scalar_as<double>(n[0], source, what), hi = scalar_as<double>(n[1], source, what);
  if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError(source, line_of(n), std::string(what) + " needs 0 < lo <= hi");
  return {lo, hi};
}

template <typename T>
std::vector<T> list_of(const YAML::Node& n, const std::string& source, const char* what) {
  if (!n.IsSequence() || n.size() == 0)
    throw ConfigError(source, line_of(n), std::string(what) + " must be a non-empty list");
  std::vector<T> out;
  for (const auto& x : n) out.push_back(scalar_as<T>(x, source, what));
  return out;
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path q(p);
  if (q.is_relative() && !base.empty()) q = base / q;
  return q.lexically_normal().string();
}

}  // namespace detail

/// Parse a configuration document. Relative paths are resolved against `base_dir`.
inline ExperimentConfig parse_config(const YAML::Node& root, const std::string& source = "<config>",
                                     const std::filesystem::path& base_dir = {}) {
  using detail::line_of;
  using detail::scalar_as;
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError(source, line_of(root), "configuration must be a mapping");
  detail::reject_unknown(root,
                         {"schemes", "loads", "seeds", "duration_s", "warmup_s", "fps", "scene_library", "channel",
                          "scene_schedule", "radio", "controller", "workers", "bootstrap_resamples",
                          "bootstrap_seed"},
                         source, "configuration");

  if (auto n = root["schemes"]) {
    c.schemes.clear();
    for (const auto& name : detail::list_of<std::string>(n, source, "schemes")) {
      try {
        c.schemes.push_back(parse_scheme(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(source, line_of(n), e.what());
      }
    }
  }
  if (auto n = root["loads"]) c.loads = detail::list_of<int>(n, source, "loads");
  if (auto n = root["seeds"]) c.seeds = detail::list_of<std::uint64_t>(n, source, "seeds");
  if (auto n = root["duration_s"]) c.duration_s = scalar_as<double>(n, source, "duration_s");
  if (auto n = root["warmup_s"]) c.warmup_s = scalar_as<double>(n, source, "warmup_s");
  if (auto n = root["fps"]) c.fps = scalar_as<double>(n, source, "fps");
  if (auto n = root["scene_library"])
    c.scene_library = detail::resolve_path(scalar_as<std::string>(n, source, "scene_library"), base_dir);
  if (auto n = root["workers"]) c.workers = scalar_as<int>(n, source, "workers");
  if (auto n = root["bootstrap_resamples"]) c.bootstrap_resamples = scalar_as<int>(n, source, "bootstrap_resamples");
  if (auto n = root["bootstrap_seed"]) c.bootstrap_seed = scalar_as<std::uint64_t>(n, source, "bootstrap_seed");

  if (auto ch = root["channel"]) {
    if (!ch.IsMap()) throw ConfigError(source, line_of(ch), "'channel' must be a mapping");
    detail::reject_unknown(ch, {"source", "mean_mbps", "doppler_ms", "shadow_sigma_db", "shadow_corr_ms",
                                "envelope_depth", "traces"},
                           source, "channel");
    if (auto n = ch["source"]) {
      const auto v = scalar_as<std::string>(n, source, "channel.source");
      if (v == "synthetic")
        c.channel_source = ChannelSource::synthetic;
      else if (v == "traces")
        c.channel_source = ChannelSource::traces;
      else
        throw ConfigError(source, line_of(n), "channel.source must be 'synthetic' or 'traces'");
    }
    if (auto n = ch["mean_mbps"]) std::tie(c.channel.mean_mbps_lo, c.channel.mean_mbps_hi) = detail::range_of(n, source, "channel.mean_mbps");
    if (auto n = ch["doppler_ms"]) std::tie(c.channel.doppler_ms_lo, c.channel.doppler_ms_hi) = detail::range_of(n, source, "channel.doppler_ms");
    if (auto n = ch["shadow_sigma_db"]) c.channel.fading.shadow_sigma_db = scalar_as<double>(n, source, "shadow_sigma_db");
    if (auto n = ch["shadow_corr_ms"]) c.channel.fading.shadow_corr_ms = scalar_as<double>(n, source, "shadow_corr_ms");
    if (auto n = ch["envelope_depth"]) c.channel.fading.envelope_depth = scalar_as<double>(n, source, "envelope_depth");
    if (auto n = ch["traces"]) {
      c.trace_files.clear();
      for (const auto& p : detail::list_of<std::string>(n, source, "channel.traces"))
        c.trace_files.push_back(detail::resolve_path(p, base_dir));
    }
  }
  if (auto sc = root["scene_schedule"]) {
    if (!sc.IsMap()) throw ConfigError(source, line_of(sc), "'scene_schedule' must be a mapping");
    detail::reject_unknown(sc, {"mean_duration_ms", "min_duration_ms"}, source, "scene_schedule");
    if (auto n = sc["mean_duration_ms"]) c.scene_schedule.mean_duration_ms = scalar_as<double>(n, source, "mean_duration_ms");
    if (auto n = sc["min_duration_ms"]) c.scene_schedule.min_duration_ms = scalar_as<double>(n, source, "min_duration_ms");
  }
  if (auto r = root["radio"]) {
    if (!r.IsMap()) throw ConfigError(source, line_of(r), "'radio' must be a mapping");
    detail::reject_unknown(r, {"bler", "harq_delay_slots", "ecn_low_ms", "ecn_high_ms", "encode_ms", "backhaul_ms",
                               "decode_ms", "display_budget_ms", "ewma_tau_ms", "scheduler_granularity"},
                           source, "radio");
    if (auto n = r["bler"]) c.harq.bler = scalar_as<double>(n, source, "bler");
    if (auto n = r["harq_delay_slots"]) c.harq.retx_delay_slots = scalar_as<int>(n, source, "harq_delay_slots");
    if (auto n = r["ecn_low_ms"]) c.ecn.low_ms = scalar_as<double>(n, source, "ecn_low_ms");
    if (auto n = r["ecn_high_ms"]) c.ecn.high_ms = scalar_as<double>(n, source, "ecn_high_ms");
    if (auto n = r["encode_ms"]) c.pipeline.encode_ms = scalar_as<double>(n, source, "encode_ms");
    if (auto n = r["backhaul_ms"]) c.pipeline.backhaul_ms = scalar_as<double>(n, source, "backhaul_ms");
    if (auto n = r["decode_ms"]) c.pipeline.decode_ms = scalar_as<double>(n, source, "decode_ms");
    if (auto n = r["display_budget_ms"]) c.pipeline.display_budget_ms = scalar_as<double>(n, source, "display_budget_ms");
    if (auto n = r["ewma_tau_ms"]) c.scheduler.ewma_tau_ms = scalar_as<double>(n, source, "ewma_tau_ms");
    if (auto n = r["scheduler_granularity"]) {
      const auto v = scalar_as<std::string>(n, source, "scheduler_granularity");
      if (v == "per-rbg")
        c.scheduler.granularity = MetricGranularity::per_rbg;
      else if (v == "per-slot")
        c.scheduler.granularity = MetricGranularity::per_slot;
      else
        throw ConfigError(source, line_of(n), "scheduler_granularity must be 'per-rbg' or 'per-slot'");
    }
  }
  if (auto ctl = root["controller"]) {
    if (!ctl.IsMap()) throw ConfigError(source, line_of(ctl), "'controller' must be a mapping");
    std::set<std::string> known{"maxcap_unadmitted"};
    for (const auto& k : detail::controller_keys()) known.insert(k.key);
    detail::reject_unknown(ctl, known, source, "controller");
    for (const auto& k : detail::controller_keys())
      if (auto n = ctl[k.key]) c.controller.*(k.ptr) = scalar_as<double>(n, source, k.key);
    if (auto n = ctl["maxcap_unadmitted"]) {
      const auto v = scalar_as<std::string>(n, source, "maxcap_unadmitted");
      if (v == "share")
        c.controller.maxcap_unadmitted = UnadmittedPolicy::share;
      else if (v == "strict")
        c.controller.maxcap_unadmitted = UnadmittedPolicy::strict;
      else
        throw ConfigError(source, line_of(n), "maxcap_unadmitted must be 'share' or 'strict'");
    }
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>",
                                          const std::filesystem::path& base_dir = {}) {
  return parse_config(detail::load_yaml(text, source), source, base_dir);
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(detail::load_yaml_file(path), path, std::filesystem::path(path).parent_path());
}

inline void emit_config(YAML::Emitter& out, const ExperimentConfig& c) {
  auto num = [&](const char* k, double v) { out << YAML::Key << k << YAML::Value << fmt_double(v); };
  out << YAML::BeginMap;
  out << YAML::Key << "schemes" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto s : c.schemes) out << std::string(to_string(s));
  out << YAML::EndSeq;
  out << YAML::Key << "loads" << YAML::Value << YAML::Flow << c.loads;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  num("duration_s", c.duration_s);
  num("warmup_s", c.warmup_s);
  num("fps", c.fps);
  if (!c.scene_library.empty()) out << YAML::Key << "scene_library" << YAML::Value << c.scene_library;
  out << YAML::Key << "workers" << YAML::Value << c.workers;
  out << YAML::Key << "bootstrap_resamples" << YAML::Value << c.bootstrap_resamples;
  out << YAML::Key << "bootstrap_seed" << YAML::Value << c.bootstrap_seed;

  out << YAML::Key << "channel" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << std::string(detail::to_string(c.channel_source));
  out << YAML::Key << "mean_mbps" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << fmt_double(c.channel.mean_mbps_lo) << fmt_double(c.channel.mean_mbps_hi) << YAML::EndSeq;
  out << YAML::Key << "doppler_ms" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << fmt_double(c.channel.doppler_ms_lo) << fmt_double(c.channel.doppler_ms_hi) << YAML::EndSeq;
  num("shadow_sigma_db", c.channel.fading.shadow_sigma_db);
  num("shadow_corr_ms", c.channel.fading.shadow_corr_ms);
  num("envelope_depth", c.channel.fading.envelope_depth);
  if (!c.trace_files.empty()) out << YAML::Key << "traces" << YAML::Value << c.trace_files;
  out << YAML::EndMap;

  out << YAML::Key << "scene_schedule" << YAML::Value << YAML::BeginMap;
  num("mean_duration_ms", c.scene_schedule.mean_duration_ms);
  num("min_duration_ms", c.scene_schedule.min_duration_ms);
  out << YAML::EndMap;

  out << YAML::Key << "radio" << YAML::Value << YAML::BeginMap;
  num("bler", c.harq.bler);
  out << YAML::Key << "harq_delay_slots" << YAML::Value << c.harq.retx_delay_slots;
  num("ecn_low_ms", c.ecn.low_ms);
  num("ecn_high_ms", c.ecn.high_ms);
  num("encode_ms", c.pipeline.encode_ms);
  num("backhaul_ms", c.pipeline.backhaul_ms);
  num("decode_ms", c.pipeline.decode_ms);
  num("display_budget_ms", c.pipeline.display_budget_ms);
  num("ewma_tau_ms", c.scheduler.ewma_tau_ms);
  out << YAML::Key << "scheduler_granularity" << YAML::Value << std::string(detail::to_string(c.scheduler.granularity));
  out << YAML::EndMap;

  out << YAML::Key << "controller" << YAML::Value << YAML::BeginMap;
  for (const auto& k : detail::controller_keys()) num(k.key, c.controller.*(k.ptr));
  out << YAML::Key << "maxcap_unadmitted" << YAML::Value
      << std::string(detail::to_string(c.controller.maxcap_unadmitted));
  out << YAML::EndMap;
  out << YAML::EndMap;
}

inline std::string config_to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  emit_config(out, c);
  return std::string(out.c_str()) + "\n";
}

/// Structured validation; every problem is reported, not just the first.
inline std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> errs;
  auto need = [&](bool ok, std::string msg) {
    if (!ok) errs.push_back(std::move(msg));
  };
  need(!c.schemes.empty(), "at least one scheme is required");
  need(!c.loads.empty(), "at least one load is required");
  for (int n : c.loads) need(n >= 1, "loads must be >= 1 (got " + std::to_string(n) + ")");
  need(!c.seeds.empty(), "at least one seed is required");
  need(c.duration_s >= 20.0, "duration_s must be at least 20 s");
  need(c.warmup_s >= 0.0 && c.warmup_s < c.duration_s, "warmup_s must be in [0, duration_s)");
  need(c.fps > 0.0, "fps must be positive");
  need(c.workers >= 1, "workers must be >= 1");
  need(c.bootstrap_resamples >= 1, "bootstrap_resamples must be >= 1");
  need(c.harq.bler >= 0.0 && c.harq.bler < 1.0, "bler must be in [0, 1)");
  need(c.harq.retx_delay_slots >= 1, "harq_delay_slots must be >= 1");
  need(c.ecn.low_ms < c.ecn.high_ms, "ecn_low_ms must be below ecn_high_ms");
  need(c.scheduler.ewma_tau_ms > 0.0, "ewma_tau_ms must be positive");
  need(c.pipeline.display_budget_ms > 0.0, "display_budget_ms must be positive");
  need(c.scene_schedule.mean_duration_ms > c.scene_schedule.min_duration_ms && c.scene_schedule.min_duration_ms >= 0.0,
       "scene_schedule needs 0 <= min_duration_ms < mean_duration_ms");
  const auto& f = c.channel.fading;
  need(f.shadow_sigma_db >= 0.0 && f.shadow_corr_ms > 0.0 && f.envelope_depth >= 0.0 && f.envelope_depth < 1.0,
       "channel fading parameters invalid");
  try {
    c.controller.validate();
  } catch (const std::invalid_argument& e) {
    errs.push_back(e.what());
  }
  if (!c.scene_library.empty() && !std::filesystem::exists(c.scene_library))
    errs.push_back("scene library not found: " + c.scene_library);
  if (c.channel_source == ChannelSource::traces) {
    need(!c.trace_files.empty(), "channel.source is 'traces' but no trace files are listed");
    for (const auto& p : c.trace_files)
      if (!std::filesystem::exists(p)) errs.push_back("trace file not found: " + p);
  }
  return errs;
}

inline void validate(const ExperimentConfig& c) {
  const auto errs = validation_errors(c);
  if (errs.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw std::invalid_argument(msg);
}

/// Load scene library and traces once; shared read-only by all runs.
inline SimInputs load_inputs(const ExperimentConfig& c) {
  SimInputs in;
  in.scenes = std::make_shared<const SceneLibrary>(c.scene_library.empty() ? default_scene_library()
                                                                           : load_scene_library(c.scene_library));
  if (c.channel_source == ChannelSource::traces) {
    auto traces = std::make_shared<std::vector<CapacityTrace>>();
    for (const auto& p : c.trace_files) traces->push_back(ingest_trace(p));
    const auto need = static_cast<std::size_t>(std::llround(c.duration_s * 1000.0 / SlotClock::kSlotMs));
    for (std::size_t i = 0; i < traces->size(); ++i)
      if ((*traces)[i].size() < need)
        throw std::invalid_argument("trace " + c.trace_files[i] + " has " + std::to_string((*traces)[i].size()) +
                                    " slots; the run needs " + std::to_string(need));
    in.traces = std::move(traces);
  }
  return in;
}

inline SimConfig make_sim_config(const ExperimentConfig& c, Scheme scheme, int n_ue, std::uint64_t seed) {
  SimConfig s;
  s.scheme = scheme;
  s.n_ue = n_ue;
  s.seed = seed;
  s.duration_s = c.duration_s;
  s.warmup_s = c.warmup_s;
  s.fps = c.fps;
  s.controller = c.controller;
  s.channel = c.channel;
  s.scenes = c.scene_schedule;
  s.harq = c.harq;
  s.ecn = c.ecn;
  s.ecn.packet_bits = c.controller.packet_bits;
  s.pipeline = c.pipeline;
  s.scheduler = c.scheduler;
  return s;
}

inline RunResult run_single(const ExperimentConfig& c, Scheme scheme, int n_ue, std::uint64_t seed,
                            const SimInputs& inputs, std::ostream* event_log = nullptr) {
  return simulate(make_sim_config(c, scheme, n_ue, seed), inputs, event_log);
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCellReportHeader = "scheme,n_ue,seed,satisfaction_ratio,min_psnr_p5,utilization,mean_rate";
inline constexpr const char* kCapacityHeader = "scheme,n_ue,mean_ratio,ci_lo,ci_hi";

inline std::string cell_csv_row(const CellReport& r) {
  return r.scheme + "," + std::to_string(r.n_ue) + "," + std::to_string(r.seed) + "," +
         fmt_double(r.satisfaction_ratio) + "," + fmt_double(r.min_psnr_p5) + "," + fmt_double(r.utilization) +
         "," + fmt_double(r.mean_rate);
}

inline CellReport parse_cell_csv_row(const std::string& line, const std::string& source = "<csv>", int lineno = 0) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) f.push_back(tok);
  if (f.size() != 7) throw ConfigError(source, lineno, "expected 7 columns");
  try {
    CellReport r;
    r.scheme = f[0];
    r.n_ue = std::stoi(f[1]);
    r.seed = std::stoull(f[2]);
    r.satisfaction_ratio = std::stod(f[3]);
    r.min_psnr_p5 = std::stod(f[4]);
    r.utilization = std::stod(f[5]);
    r.mean_rate = std::stod(f[6]);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(source, lineno, "malformed row");
  }
}

inline void write_cell_report(std::ostream& out, const std::vector<CellReport>& rows) {
  out << kCellReportHeader << '\n';
  for (const auto& r : rows) out << cell_csv_row(r) << '\n';
}

inline std::vector<CellReport> read_cell_report(std::istream& in, const std::string& source = "<csv>") {
  std::vector<CellReport> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != kCellReportHeader) throw ConfigError(source, 1, "unexpected header");
      continue;
    }
    rows.push_back(parse_cell_csv_row(line, source, lineno));
  }
  return rows;
}

inline void write_capacity(std::ostream& out, const std::vector<CapacityCurve>& curves) {
  out << kCapacityHeader << '\n';
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << c.scheme << ',' << p.n_ue << ',' << fmt_double(p.ratio.mean) << ',' << fmt_double(p.ratio.lo) << ','
          << fmt_double(p.ratio.hi) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridPoint {
  Scheme scheme;
  int n_ue;
  std::uint64_t seed;
};

inline std::vector<GridPoint> sweep_grid(const ExperimentConfig& c) {
  std::vector<GridPoint> g;
  for (auto s : c.schemes)
    for (int n : c.loads)
      for (auto seed : c.seeds) g.push_back({s, n, seed});
  return g;
}

inline std::string cell_file_name(const GridPoint& p) {
  return std::string(to_string(p.scheme)) + "_n" + std::to_string(p.n_ue) + "_s" + std::to_string(p.seed) + ".csv";
}

struct SweepOptions {
  std::optional<std::filesystem::path> out_dir;  ///< none: keep results in memory only
  int workers = 0;                               ///< 0: take from config
  std::function<void(const GridPoint&, const RunResult&)> on_result;  ///< called under a lock
  std::function<void(const std::string&)> progress;
};

struct SweepFailure {
  GridPoint point;
  std::string error;
};

struct SweepResult {
  std::vector<CellReport> reports;  ///< grid order; failed or missing cells omitted
  std::vector<CapacityCurve> curves;
  std::vector<SweepFailure> failures;
  std::size_t executed = 0;
  std::size_t reused = 0;
};

inline void write_manifest(const std::filesystem::path& path, const ExperimentConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << kVersion;
  out << YAML::Key << "config" << YAML::Value;
  emit_config(out, c);
  out << YAML::Key << "outputs" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "cell_report" << YAML::Value << "cell_report.csv";
  out << YAML::Key << "capacity" << YAML::Value << "capacity.csv";
  out << YAML::Key << "cells_dir" << YAML::Value << "cells";
  out << YAML::EndMap;
  out << YAML::Key << "runs" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : sweep_grid(c)) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "scheme" << YAML::Value << std::string(to_string(p.scheme))
        << YAML::Key << "n_ue" << YAML::Value << p.n_ue << YAML::Key << "seed" << YAML::Value << p.seed
        << YAML::Key << "output" << YAML::Value << ("cells/" + cell_file_name(p)) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  std::ofstream f(path);
  f << out.c_str() << '\n';
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

inline ExperimentConfig load_manifest_config(const std::string& path) {
  const auto root = detail::load_yaml_file(path);
  if (!root.IsMap() || !root["config"]) throw ConfigError(path, 0, "manifest has no 'config' section");
  return parse_config(root["config"], path, std::filesystem::path(path).parent_path());
}

inline std::vector<CapacityCurve> aggregate_reports(const ExperimentConfig& c, const std::vector<CellReport>& reports) {
  return aggregate(reports, c.loads, c.bootstrap_seed, c.bootstrap_resamples);
}

/// Run every (scheme, load, seed) cell. With an output directory, each finished
/// cell is persisted on its own, so re-running the same sweep only computes the
/// cells that are missing. Results are merged by grid index.
inline SweepResult run_sweep(const ExperimentConfig& c, const SweepOptions& opt = {}) {
  validate(c);
  const SimInputs inputs = load_inputs(c);
  const auto grid = sweep_grid(c);
  std::vector<std::optional<CellReport>> slots(grid.size());
  std::vector<std::optional<std::string>> errors(grid.size());
  SweepResult res;

  std::filesystem::path cells;
  if (opt.out_dir) {
    cells = *opt.out_dir / "cells";
    std::filesystem::create_directories(cells);
    write_manifest(*opt.out_dir / "manifest.yaml", c);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::ifstream in(cells / cell_file_name(grid[i]));
      if (!in) continue;
      try {
        auto rows = read_cell_report(in, (cells / cell_file_name(grid[i])).string());
        if (rows.size() == 1) {
          slots[i] = rows.front();
          ++res.reused;
        }
      } catch (const std::exception&) {
        // unreadable leftovers are recomputed
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) {
      if (slots[i]) continue;
      const auto& p = grid[i];
      try {
        RunResult r = run_single(c, p.scheme, p.n_ue, p.seed, inputs);
        if (opt.out_dir) {
          const auto tmp = cells / (cell_file_name(p) + ".tmp");
          {
            std::ofstream f(tmp);
            write_cell_report(f, {r.report});
          }
          std::filesystem::rename(tmp, cells / cell_file_name(p));
        }
        std::lock_guard lk(mu);
        slots[i] = r.report;
        ++res.executed;
        if (opt.on_result) opt.on_result(p, r);
        if (opt.progress)
          opt.progress(std::string(to_string(p.scheme)) + " n=" + std::to_string(p.n_ue) + " seed=" +
                       std::to_string(p.seed) + " satisfaction=" + fmt_double(r.report.satisfaction_ratio));
      } catch (const std::exception& e) {
        std::lock_guard lk(mu);
        errors[i] = e.what();
      }
    }
  };
  const int workers = std::max(1, opt.workers > 0 ? opt.workers : c.workers);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (slots[i]) res.reports.push_back(*slots[i]);
    if (errors[i]) res.failures.push_back({grid[i], *errors[i]});
  }
  res.curves = aggregate_reports(c, res.reports);
  if (opt.out_dir) {
    std::ofstream cr(*opt.out_dir / "cell_report.csv");
    write_cell_report(cr, res.reports);
    std::ofstream cap(*opt.out_dir / "capacity.csv");
    write_capacity(cap, res.curves);
    if (!res.failures.empty()) {
      std::ofstream fl(*opt.out_dir / "failures.csv");
      fl << "scheme,n_ue,seed,error\n";
      for (const auto& f : res.failures)
        fl << to_string(f.point.scheme) << ',' << f.point.n_ue << ',' << f.point.seed << ",\"" << f.error << "\"\n";
    }
  }
  return res;
}

}  // namespace uxrc
