// uxrc/radio.hpp
//
// Building blocks of the slot-level downlink MAC: PF / UX-aware PF scheduling,
// BLER draws, L4S ECN marking, RTT accounting and stall detection. The event
// loop that strings them together lives in simulator.hpp.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uxrc/channel.hpp"
#include "uxrc/media.hpp"
#include "uxrc/rng.hpp"

namespace uxrc {

struct SchedulerUeState {
  double r_inst = 0.0;    ///< Mbps with all RBGs this slot
  double r_avg = 0.0;     ///< EWMA of served throughput, Mbps
  double s_factor = 0.0;  ///< last reported satisfaction, [0, 1]
};

enum class SchedulerPolicy { pf, ux_pf };
enum class MetricGranularity { per_rbg, per_slot };

struct SchedulerParams {
  double ewma_tau_ms = 100.0;
  double r_avg_floor_mbps = 0.01;
  MetricGranularity granularity = MetricGranularity::per_rbg;

  double ewma_alpha() const noexcept { return SlotClock::kSlotMs / ewma_tau_ms; }
};

inline double pf_metric(const SchedulerUeState& s, double r_avg_floor = 0.01) {
  return s.r_inst / std::max(s.r_avg, r_avg_floor);
}

inline double ux_pf_metric(const SchedulerUeState& s, double r_avg_floor = 0.01) {
  return pf_metric(s, r_avg_floor) * (1.0 - std::clamp(s.s_factor, 0.0, 1.0));
}

struct RbgGrant {
  int ue = -1;  ///< -1: idle
  double bits = 0.0;
};

struct SlotAssignment {
  std::array<RbgGrant, SlotClock::kRbgsPerSlot> rbg{};
  int occupied() const noexcept {
    return static_cast<int>(std::count_if(rbg.begin(), rbg.end(), [](auto& g) { return g.ue >= 0; }));
  }
};

/// Allocate the RBGs of one downlink slot. `backlog_bits[n]` is what UE n can
/// send now, `rbg_bits[n]` its per-RBG capacity this slot. An RBG goes to the
/// highest-metric UE that still has ungranted backlog; ties go to the lowest id.
inline SlotAssignment schedule_slot(std::span<const double> backlog_bits,
                                    std::span<const SchedulerUeState> states,
                                    std::span<const double> rbg_bits, SchedulerPolicy policy,
                                    const SchedulerParams& params = {}) {
  const std::size_t n = backlog_bits.size();
  SlotAssignment out;
  std::vector<double> granted(n, 0.0);
  const double a = params.ewma_alpha();

  auto metric = [&](std::size_t ue) {
    SchedulerUeState s = states[ue];
    if (params.granularity == MetricGranularity::per_rbg) {
      const double granted_mbps = granted[ue] / SlotClock::kSlotMs / 1000.0;
      s.r_avg = (1.0 - a) * s.r_avg + a * granted_mbps;
    }
    return policy == SchedulerPolicy::pf ? pf_metric(s, params.r_avg_floor_mbps)
                                         : ux_pf_metric(s, params.r_avg_floor_mbps);
  };

  for (auto& grant : out.rbg) {
    int best = -1;
    double best_metric = 0.0;
    for (std::size_t ue = 0; ue < n; ++ue) {
      if (backlog_bits[ue] - granted[ue] <= 0.0) continue;
      const double m = metric(ue);
      if (best < 0 || m > best_metric) {
        best = static_cast<int>(ue);
        best_metric = m;
      }
    }
    if (best < 0) break;
    const auto b = static_cast<std::size_t>(best);
    grant.ue = best;
    grant.bits = std::min(backlog_bits[b] - granted[b], rbg_bits[b]);
    granted[b] += grant.bits;
  }
  return out;
}

/// Per-slot EWMA of served throughput (called every slot, including non-downlink ones).
inline void update_average(SchedulerUeState& s, double served_bits, const SchedulerParams& params) {
  const double a = params.ewma_alpha();
  s.r_avg = (1.0 - a) * s.r_avg + a * (served_bits / SlotClock::kSlotMs / 1000.0);
}

// ---------------------------------------------------------------------------
// HARQ / BLER

struct HarqParams {
  double bler = 0.10;
  int retx_delay_slots = 4;
};

/// First-attempt failure for the grant on (slot, rbg). Counter-based, so the
/// draw for a given resource is the same whichever UE or scheme uses it.
inline bool harq_failure(std::uint64_t bler_seed, std::int64_t slot, int rbg, double bler) {
  return to_unit(hash_counter(bler_seed, Stream::bler, static_cast<std::uint64_t>(slot),
                              static_cast<std::uint64_t>(rbg))) < bler;
}

struct BlerOutcome {
  bool delivered;
  std::int64_t slot;  ///< delivery slot if delivered, otherwise the slot the bits re-enter the queue
};

/// Resolve a grant given the uniform draw `u` for it.
inline BlerOutcome apply_bler(std::int64_t grant_slot, double u, const HarqParams& p = {}) {
  if (u < p.bler) return {false, grant_slot + p.retx_delay_slots};
  return {true, grant_slot};
}

// ---------------------------------------------------------------------------
// ECN (L4S)

struct EcnParams {
  double low_ms = 4.0;
  double high_ms = 17.0;
  double packet_bits = 12000.0;
};

inline double ecn_mark_probability(double queue_delay_ms, const EcnParams& p = {}) {
  return std::clamp((queue_delay_ms - p.low_ms) / (p.high_ms - p.low_ms), 0.0, 1.0);
}

/// Mark decision for one packet given its uniform draw.
inline bool mark_ecn(double queue_delay_ms, double u, const EcnParams& p = {}) {
  return u < ecn_mark_probability(queue_delay_ms, p);
}

// ---------------------------------------------------------------------------
// Latency, RTT and display

struct PipelineParams {
  double encode_ms = 1.0;
  double backhaul_ms = 1.0;
  double decode_ms = 1.0;
  double display_budget_ms = 20.0;
};

/// Frame RTT: downlink latency plus the wait for the next uplink slot and the
/// backhaul leg back to the server. Undefined for undelivered frames.
inline std::optional<double> measure_rtt(const FrameRecord& f, const PipelineParams& p = {}) {
  if (!f.t_fully_delivered) return std::nullopt;
  const double t = *f.t_fully_delivered;
  return (t - f.t_generated) + (SlotClock::next_uplink_start(t) - t) + p.backhaul_ms;
}

/// Time at which the AS learns about the frame's delivery.
inline std::optional<double> feedback_arrival(const FrameRecord& f, const PipelineParams& p = {}) {
  if (!f.t_fully_delivered) return std::nullopt;
  return SlotClock::next_uplink_start(*f.t_fully_delivered) + p.backhaul_ms;
}

/// Display time (delivery plus decode) if the frame was delivered within the
/// budget counted from generation, else nullopt (skipped).
inline std::optional<double> display_time(const FrameRecord& f, const PipelineParams& p = {}) {
  if (!f.t_fully_delivered) return std::nullopt;
  if (*f.t_fully_delivered - f.t_generated > p.display_budget_ms + 1e-9) return std::nullopt;
  return *f.t_fully_delivered + p.decode_ms;
}

struct StallInterval {
  double start_ms;     ///< when the next frame was due
  double duration_ms;  ///< gap - frame period
};

struct StallReport {
  std::vector<StallInterval> stalls;
  double msd_ms = 0.0;  ///< maximum stall duration
};

/// Scan consecutive display times; a gap above period + tolerance is a stall of
/// (gap - period). With `horizon_end`, the tail after the last display counts too.
inline StallReport detect_stalls(std::span<const double> display_times, double fps,
                                 double tolerance_ms = 1.0,
                                 std::optional<double> horizon_end = std::nullopt) {
  StallReport r;
  const double period = 1000.0 / fps;
  auto consider = [&](double from, double to) {
    const double gap = to - from;
    if (gap > period + tolerance_ms) {
      r.stalls.push_back({from + period, gap - period});
      r.msd_ms = std::max(r.msd_ms, gap - period);
    }
  };
  for (std::size_t i = 1; i < display_times.size(); ++i)
    consider(display_times[i - 1], display_times[i]);
  if (horizon_end && !display_times.empty()) consider(display_times.back(), *horizon_end);
  return r;
}

}  // namespace uxrc
