// uxrc/channel.hpp
//
// Per-UE radio capacity: slot timing, capacity traces (synthetic or loaded from
// file) and the windowed full-resource rate estimate C_n.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uxrc/rng.hpp"

namespace uxrc {

enum class SlotKind : std::uint8_t { downlink, special, uplink };

/// 0.5 ms slots in a repeating DDDSU pattern.
struct SlotClock {
  static constexpr double kSlotMs = 0.5;
  static constexpr int kPatternLength = 5;
  static constexpr int kRbgsPerSlot = 4;

  static constexpr SlotKind kind(std::int64_t slot) noexcept {
    switch (slot % kPatternLength) {
      case 3: return SlotKind::special;
      case 4: return SlotKind::uplink;
      default: return SlotKind::downlink;
    }
  }
  static constexpr bool is_downlink(std::int64_t slot) noexcept {
    return kind(slot) == SlotKind::downlink;
  }
  static constexpr double start_ms(std::int64_t slot) noexcept {
    return static_cast<double>(slot) * kSlotMs;
  }
  /// Index of the slot containing time t (slots are [start, start + 0.5)).
  static std::int64_t slot_at(double t_ms) noexcept {
    return static_cast<std::int64_t>(std::floor(t_ms / kSlotMs + 1e-9));
  }
  /// Start time of the first uplink slot beginning at or after t.
  static double next_uplink_start(double t_ms) noexcept {
    std::int64_t s = static_cast<std::int64_t>(std::ceil(t_ms / kSlotMs - 1e-9));
    while (kind(s) != SlotKind::uplink) ++s;
    return start_ms(s);
  }
};

/// Bits per RBG per slot, one entry per slot, before HARQ/BLER losses.
struct CapacityTrace {
  int ue_id = 0;
  double slot_duration_ms = SlotClock::kSlotMs;
  int rbgs_per_slot = SlotClock::kRbgsPerSlot;
  std::vector<double> bits_per_rbg;

  std::size_t size() const noexcept { return bits_per_rbg.size(); }
  double at(std::int64_t slot) const { return bits_per_rbg.at(static_cast<std::size_t>(slot)); }
};

struct SynthTraceParams {
  double shadow_sigma_db = 3.0;
  double shadow_corr_ms = 2000.0;  ///< spacing of independent shadowing values
  double envelope_depth = 0.3;     ///< amplitude of the sinusoidal envelope around 1
};

/// Synthetic capacity: log-normal shadowing (unit mean) times a slow sinusoidal
/// envelope (unit mean over a period). Deterministic in `seed`.
///
/// Shadowing is a smooth process: independent standard normals at knots spaced
/// shadow_corr_ms apart, joined by raised-cosine interpolation and rescaled so
/// every slot keeps an exact N(0, 1) marginal.
inline CapacityTrace synth_trace(std::uint64_t seed, std::int64_t duration_slots, double mean_mbps,
                                 double doppler_period_ms, const SynthTraceParams& p = {},
                                 int ue_id = 0) {
  if (!(mean_mbps > 0.0) || !std::isfinite(mean_mbps))
    throw std::invalid_argument("synth_trace: mean_mbps must be positive");
  if (duration_slots <= 0) throw std::invalid_argument("synth_trace: duration must be positive");
  if (!(doppler_period_ms > 0.0))
    throw std::invalid_argument("synth_trace: doppler period must be positive");
  if (p.shadow_sigma_db < 0.0 || !(p.shadow_corr_ms > 0.0) || p.envelope_depth < 0.0 ||
      p.envelope_depth >= 1.0)
    throw std::invalid_argument("synth_trace: fading parameters invalid");

  CapacityTrace tr;
  tr.ue_id = ue_id;
  tr.bits_per_rbg.resize(static_cast<std::size_t>(duration_slots));

  Rng rng(seed);
  const double sigma_ln = p.shadow_sigma_db * std::numbers::ln10 / 10.0;
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const double base_bits = mean_mbps * 1000.0 * SlotClock::kSlotMs / SlotClock::kRbgsPerSlot;

  std::int64_t knot = 0;
  double z0 = rng.normal(), z1 = rng.normal();
  for (std::int64_t s = 0; s < duration_slots; ++s) {
    const double t = SlotClock::start_ms(s);
    const double pos = t / p.shadow_corr_ms;
    while (static_cast<double>(knot + 1) <= pos) {
      ++knot;
      z0 = z1;
      z1 = rng.normal();
    }
    const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * (pos - static_cast<double>(knot))));
    const double x = ((1.0 - w) * z0 + w * z1) / std::sqrt((1.0 - w) * (1.0 - w) + w * w);
    const double envelope =
        1.0 + p.envelope_depth * std::sin(2.0 * std::numbers::pi * t / doppler_period_ms + phase);
    const double shadow = std::exp(sigma_ln * x - 0.5 * sigma_ln * sigma_ln);
    tr.bits_per_rbg[static_cast<std::size_t>(s)] = base_bits * envelope * shadow;
  }
  return tr;
}

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Trace text format:
///   # comment lines and blank lines are ignored
///   ue_id <int>
///   slot_duration_ms <double>
///   rbgs_per_slot <int>
///   <bits per RBG for slot 0>
///   <bits per RBG for slot 1>
///   ...
/// The three header keys must precede the first value.
inline CapacityTrace parse_trace(std::istream& in, const std::string& source = "<trace>") {
  CapacityTrace tr;
  bool have_id = false, have_slot = false, have_rbgs = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    auto read_rest = [&](auto& value) {
      if (!(ls >> value)) throw TraceParseError(source, lineno, "missing value for '" + tok + "'");
      std::string extra;
      if (ls >> extra) throw TraceParseError(source, lineno, "trailing text '" + extra + "'");
    };
    if (tok == "ue_id") {
      read_rest(tr.ue_id);
      have_id = true;
    } else if (tok == "slot_duration_ms") {
      read_rest(tr.slot_duration_ms);
      if (!(tr.slot_duration_ms > 0.0))
        throw TraceParseError(source, lineno, "slot_duration_ms must be positive");
      have_slot = true;
    } else if (tok == "rbgs_per_slot") {
      read_rest(tr.rbgs_per_slot);
      if (tr.rbgs_per_slot <= 0)
        throw TraceParseError(source, lineno, "rbgs_per_slot must be positive");
      have_rbgs = true;
    } else {
      if (!(have_id && have_slot && have_rbgs))
        throw TraceParseError(source, lineno,
                              "header (ue_id, slot_duration_ms, rbgs_per_slot) must come first");
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw TraceParseError(source, lineno, "expected a capacity value, got '" + tok + "'");
      }
      if (used != tok.size())
        throw TraceParseError(source, lineno, "expected a capacity value, got '" + tok + "'");
      std::string extra;
      if (ls >> extra) throw TraceParseError(source, lineno, "one value per line expected");
      if (!std::isfinite(v) || v < 0.0)
        throw TraceParseError(source, lineno, "capacity must be finite and >= 0");
      tr.bits_per_rbg.push_back(v);
    }
  }
  if (tr.bits_per_rbg.empty())
    throw TraceParseError(source, lineno, "trace contains no capacity values");
  return tr;
}

inline CapacityTrace ingest_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path);
  return parse_trace(in, path);
}

inline void write_trace(std::ostream& out, const CapacityTrace& tr) {
  out << "ue_id " << tr.ue_id << "\nslot_duration_ms " << tr.slot_duration_ms
      << "\nrbgs_per_slot " << tr.rbgs_per_slot << "\n";
  out.precision(17);
  for (double v : tr.bits_per_rbg) out << v << "\n";
}

struct ChannelEstimate {
  int ue_id = 0;
  double c_mbps = 0.0;  ///< rate with all RBGs of every downlink slot in the window
  double window_ms = 0.0;
};

/// Full-resource rate over slots [first_slot, end_slot). Only downlink slots carry data.
inline ChannelEstimate estimate_capacity(const CapacityTrace& tr, std::int64_t first_slot,
                                         std::int64_t end_slot) {
  if (end_slot <= first_slot) throw std::invalid_argument("estimate window is empty");
  double bits = 0.0;
  for (std::int64_t s = first_slot; s < end_slot; ++s)
    if (SlotClock::is_downlink(s)) bits += tr.at(s);
  const double window_ms = static_cast<double>(end_slot - first_slot) * tr.slot_duration_ms;
  // bits per ms == kbit/s; divide by 1000 for Mbps
  return {tr.ue_id, bits * tr.rbgs_per_slot / window_ms / 1000.0, window_ms};
}

/// Window ending at `now_ms` and spanning `window_ms` (rounded to whole slots, at least one).
inline ChannelEstimate estimate_capacity(const CapacityTrace& tr, double now_ms, double window_ms) {
  const std::int64_t end = SlotClock::slot_at(now_ms);
  const auto n = std::max<std::int64_t>(1, std::llround(window_ms / tr.slot_duration_ms));
  return estimate_capacity(tr, std::max<std::int64_t>(0, end - n), std::max<std::int64_t>(end, 1));
}

}  // namespace uxrc
