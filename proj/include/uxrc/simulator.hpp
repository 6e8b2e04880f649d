// uxrc/simulator.hpp
//
// Slot-driven event loop for one cell: frame sources, RAN queues, scheduler,
// HARQ, ECN, uplink feedback and the rate controller under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uxrc/channel.hpp"
#include "uxrc/controllers.hpp"
#include "uxrc/media.hpp"
#include "uxrc/metrics.hpp"
#include "uxrc/radio.hpp"
#include "uxrc/rng.hpp"

namespace uxrc {

struct ChannelParams {
  double mean_mbps_lo = 400.0;  ///< per-UE mean capacity is log-uniform in [lo, hi]
  double mean_mbps_hi = 1600.0;
  double doppler_ms_lo = 4000.0;
  double doppler_ms_hi = 12000.0;
  SynthTraceParams fading;
};

struct SimConfig {
  Scheme scheme = Scheme::maxcap_central;
  int n_ue = 1;
  double duration_s = 30.0;
  double warmup_s = 1.0;
  std::uint64_t seed = 1;
  double fps = 60.0;
  ControllerConfig controller;
  ChannelParams channel;
  SceneScheduleParams scenes;
  HarqParams harq;
  EcnParams ecn;
  PipelineParams pipeline;
  SchedulerParams scheduler;
  SatisfactionParams satisfaction;  ///< gamma and d_stall follow `controller`
  bool force_zero_satisfaction = false;
  bool keep_frames = false;

  double horizon_ms() const noexcept { return duration_s * 1000.0; }
};

/// Shared read-only inputs. `traces`, when non-empty, replaces the synthetic
/// channel: UE n uses traces[n % size].
struct SimInputs {
  std::shared_ptr<const SceneLibrary> scenes;
  std::shared_ptr<const std::vector<CapacityTrace>> traces;
};

struct UeCounters {
  std::int64_t generated_bits = 0;
  std::int64_t delivered_bits = 0;
  std::int64_t queued_bits = 0;     ///< at the RAN, waiting for a grant
  std::int64_t harq_bits = 0;       ///< failed, waiting for retransmission
  std::int64_t backhaul_bits = 0;   ///< generated, not yet at the RAN
  std::int64_t frames_generated = 0;
  std::int64_t frames_delivered = 0;
  std::int64_t frames_displayed = 0;

  bool conserved() const noexcept {
    return generated_bits == delivered_bits + queued_bits + harq_bits + backhaul_bits;
  }
};

struct RunResult {
  CellReport report;
  std::vector<UeOutcome> ues;
  std::vector<UeCounters> counters;
  std::vector<double> control_loads;  ///< sum R/C at each control tick after warm-up
  std::vector<double> period_utilization;  ///< occupied / available RBGs between control ticks after warm-up
  std::vector<double> lambda_trace;
  std::int64_t occupied_rbgs = 0;      ///< measurement window only
  std::int64_t available_rbgs = 0;
  std::int64_t idle_rbgs_with_backlog = 0;
  std::int64_t harq_failures = 0;
  std::int64_t grants = 0;
  std::uint64_t allocation_hash = 0xcbf29ce484222325ULL;
  std::vector<FrameRecord> frames;

  bool bits_conserved() const noexcept {
    for (const auto& c : counters)
      if (!c.conserved()) return false;
    return true;
  }
};

namespace detail {

inline void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
}

struct FrameState {
  FrameRecord rec;
  std::int64_t outstanding = 0;
  std::int64_t delivered = 0;
  long marked = 0;
  long unmarked = 0;
};

struct QueueEntry {
  std::size_t frame;
  std::int64_t bits;
};

struct HarqReturn {
  std::size_t frame;
  std::int64_t bits;
};

enum class EventKind : int {
  // order of processing among events at the same instant
  harq_return = 0,
  ran_arrival = 1,
  feedback = 2,
  control_tick = 3,
  generate = 4,
};

struct Event {
  double t;
  EventKind kind;
  std::uint64_t seq;
  int ue;
  std::size_t frame;
  std::vector<HarqReturn> harq;

  bool operator>(const Event& o) const {
    if (t != o.t) return t > o.t;
    if (kind != o.kind) return kind > o.kind;
    return seq > o.seq;
  }
};

struct RttSample {
  double t_arrival;
  double rtt_ms;
  double psnr_db;
};

}  // namespace detail

/// Everything a run sees that does not depend on the scheme: channel traces,
/// scene schedules and frame phases, all drawn from the seed's own streams.
struct CellEnvironment {
  std::vector<CapacityTrace> traces;
  std::vector<SceneSchedule> schedules;
  std::vector<double> phases_ms;
};

inline CellEnvironment make_environment(const SimConfig& cfg, const SimInputs& in) {
  const auto n = static_cast<std::size_t>(cfg.n_ue);
  const auto n_slots = static_cast<std::int64_t>(std::llround(cfg.horizon_ms() / SlotClock::kSlotMs));
  const SceneLibrary fallback = in.scenes ? SceneLibrary{} : default_scene_library();
  const SceneLibrary& lib = in.scenes ? *in.scenes : fallback;
  CellEnvironment env;
  for (std::size_t u = 0; u < n; ++u) {
    if (in.traces && !in.traces->empty()) {
      const auto& tr = (*in.traces)[u % in.traces->size()];
      if (static_cast<std::int64_t>(tr.size()) < n_slots)
        throw std::invalid_argument("capacity trace for UE " + std::to_string(u) + " is shorter than the run");
      env.traces.push_back(tr);
      env.traces.back().ue_id = static_cast<int>(u);
    } else {
      Rng r(derive_seed(cfg.seed, Stream::channel, u));
      const auto& cp = cfg.channel;
      const double mean = std::exp(r.uniform(std::log(cp.mean_mbps_lo), std::log(cp.mean_mbps_hi)));
      const double doppler = r.uniform(cp.doppler_ms_lo, cp.doppler_ms_hi);
      env.traces.push_back(synth_trace(r.next(), n_slots, mean, doppler, cp.fading, static_cast<int>(u)));
    }
    Rng scene_rng(derive_seed(cfg.seed, Stream::scenes, u));
    env.schedules.push_back(make_scene_schedule(lib, cfg.horizon_ms(), scene_rng, cfg.scenes));
    env.phases_ms.push_back(scene_rng.uniform() * 1000.0 / cfg.fps);
  }
  return env;
}

class CellSimulator {
 public:
  CellSimulator(SimConfig cfg, SimInputs inputs, std::ostream* event_log = nullptr)
      : cfg_(std::move(cfg)), in_(std::move(inputs)), log_(event_log) {
    if (cfg_.n_ue < 1) throw std::invalid_argument("n_ue must be at least 1");
    if (!(cfg_.duration_s > cfg_.warmup_s) || cfg_.warmup_s < 0.0)
      throw std::invalid_argument("duration must exceed warm-up");
    if (!in_.scenes) in_.scenes = std::make_shared<const SceneLibrary>(default_scene_library());
    cfg_.controller.validate();
    cfg_.satisfaction.gamma_db = cfg_.controller.gamma_db;
    cfg_.satisfaction.d_stall_ms = cfg_.controller.d_stall_ms;
  }

  RunResult run() {
    setup();
    const std::int64_t n_slots = slots();
    const std::int64_t warm_slot = SlotClock::slot_at(cfg_.warmup_s * 1000.0);
    const auto n = static_cast<std::size_t>(cfg_.n_ue);
    std::vector<double> backlog(n), rbg_bits(n);
    std::vector<std::int64_t> served(n);

    for (std::int64_t s = 0; s < n_slots; ++s) {
      const double t = SlotClock::start_ms(s);
      drain_events(t);
      std::fill(served.begin(), served.end(), 0);

      if (SlotClock::is_downlink(s)) {
        for (std::size_t u = 0; u < n; ++u) {
          backlog[u] = static_cast<double>(counters_[u].queued_bits);
          rbg_bits[u] = std::floor(trace(u).at(s));
          sched_[u].r_inst = rbg_bits[u] * SlotClock::kRbgsPerSlot / SlotClock::kSlotMs / 1000.0;
        }
        const auto a = schedule_slot(backlog, sched_, rbg_bits, policy_, cfg_.scheduler);
        serve(s, a, served);
        if (s >= warm_slot) {
          res_.occupied_rbgs += a.occupied();
          res_.available_rbgs += SlotClock::kRbgsPerSlot;
        }
        period_occupied_ += a.occupied();
        period_available_ += SlotClock::kRbgsPerSlot;
        bool backlog_left = false;
        for (std::size_t u = 0; u < n; ++u) backlog_left |= counters_[u].queued_bits > 0;
        if (backlog_left) res_.idle_rbgs_with_backlog += SlotClock::kRbgsPerSlot - a.occupied();
      }
      for (std::size_t u = 0; u < n; ++u) update_average(sched_[u], static_cast<double>(served[u]), cfg_.scheduler);
    }
    drain_events(cfg_.horizon_ms() - 1e-9);
    return finish();
  }

 private:
  std::int64_t slots() const {
    return static_cast<std::int64_t>(std::llround(cfg_.horizon_ms() / SlotClock::kSlotMs));
  }
  const CapacityTrace& trace(std::size_t u) const { return traces_[u]; }

  void setup() {
    const auto n = static_cast<std::size_t>(cfg_.n_ue);
    res_ = RunResult{};
    counters_.assign(n, {});
    sched_.assign(n, {});
    queues_.assign(n, {});
    rtt_window_.assign(n, {});
    last_displayed_.assign(n, -1);
    displays_.assign(n, {});
    rate_sum_.assign(n, 0.0);
    rate_count_.assign(n, 0);
    pending_s_.assign(n, 0.0);
    have_pending_s_ = false;
    period_occupied_ = period_available_ = 0;
    frames_.clear();
    traces_.clear();
    sources_.clear();
    bler_seed_ = derive_seed(cfg_.seed, Stream::bler);
    ecn_seed_ = derive_seed(cfg_.seed, Stream::ecn);

    auto env = make_environment(cfg_, in_);
    traces_ = std::move(env.traces);
    for (std::size_t u = 0; u < n; ++u) {
      sources_.emplace_back(static_cast<int>(u), *in_.scenes, std::move(env.schedules[u]),
                            SourceParams{cfg_.fps, cfg_.pipeline.encode_ms, env.phases_ms[u]},
                            cfg_.controller.initial_rate_mbps);
      const double r0 = trace(u).at(0) * SlotClock::kRbgsPerSlot / SlotClock::kSlotMs / 1000.0;
      sched_[u].r_avg = std::max(r0, cfg_.scheduler.r_avg_floor_mbps);
      push({sources_[u].next_generation_time(), detail::EventKind::generate, 0, static_cast<int>(u), 0, {}});
    }
    controller_ = make_controller(cfg_.scheme, cfg_.controller, cfg_.force_zero_satisfaction);
    policy_ = controller_->scheduler();
    push({controller_->period_ms(), detail::EventKind::control_tick, 0, -1, 0, {}});
  }

  void push(detail::Event e) {
    e.seq = seq_++;
    events_.push(std::move(e));
  }

  void drain_events(double t) {
    while (!events_.empty() && events_.top().t <= t + 1e-9) {
      detail::Event e = events_.top();
      events_.pop();
      switch (e.kind) {
        case detail::EventKind::generate: on_generate(e); break;
        case detail::EventKind::ran_arrival: on_arrival(e); break;
        case detail::EventKind::harq_return: on_harq_return(e); break;
        case detail::EventKind::feedback: on_feedback(e); break;
        case detail::EventKind::control_tick: on_tick(e); break;
      }
    }
  }

  void on_generate(const detail::Event& e) {
    const auto u = static_cast<std::size_t>(e.ue);
    auto& src = sources_[u];
    FrameRecord f = src.generate();
    if (f.t_generated < cfg_.horizon_ms())
      push({src.next_generation_time(), detail::EventKind::generate, 0, e.ue, 0, {}});
    if (f.t_generated >= cfg_.warmup_s * 1000.0) {
      rate_sum_[u] += f.target_mbps;
      ++rate_count_[u];
    }
    if (f.size_bits <= 0) return;  // source switched off
    auto& c = counters_[u];
    c.generated_bits += f.size_bits;
    c.backhaul_bits += f.size_bits;
    ++c.frames_generated;
    const double arrive = f.t_encoded + cfg_.pipeline.backhaul_ms;
    frames_.push_back({f, f.size_bits, 0, 0, 0});
    log("frame_generated", f.t_generated, e.ue,
        {{"frame", f.frame_index}, {"bits", f.size_bits}, {"rate_mbps", f.target_mbps}, {"scene", f.scene_id}});
    push({arrive, detail::EventKind::ran_arrival, 0, e.ue, frames_.size() - 1, {}});
  }

  void on_arrival(const detail::Event& e) {
    const auto u = static_cast<std::size_t>(e.ue);
    auto& fs = frames_[e.frame];
    fs.rec.t_enqueued_at_ran = e.t;
    counters_[u].backhaul_bits -= fs.rec.size_bits;
    counters_[u].queued_bits += fs.rec.size_bits;
    queues_[u].push_back({e.frame, fs.rec.size_bits});
  }

  void on_harq_return(const detail::Event& e) {
    const auto u = static_cast<std::size_t>(e.ue);
    for (auto it = e.harq.rbegin(); it != e.harq.rend(); ++it) {
      queues_[u].push_front({it->frame, it->bits});
      counters_[u].harq_bits -= it->bits;
      counters_[u].queued_bits += it->bits;
    }
  }

  void serve(std::int64_t s, const SlotAssignment& a, std::vector<std::int64_t>& served) {
    const double t = SlotClock::start_ms(s);
    const double t_end = t + SlotClock::kSlotMs;
    std::vector<std::vector<detail::HarqReturn>> failed(static_cast<std::size_t>(cfg_.n_ue));
    for (int r = 0; r < SlotClock::kRbgsPerSlot; ++r) {
      const auto& g = a.rbg[static_cast<std::size_t>(r)];
      if (g.ue < 0) continue;
      const auto u = static_cast<std::size_t>(g.ue);
      auto bits = static_cast<std::int64_t>(g.bits);
      const bool fail = harq_failure(bler_seed_, s, r, cfg_.harq.bler);
      ++res_.grants;
      res_.harq_failures += fail ? 1 : 0;
      detail::fnv_mix(res_.allocation_hash, static_cast<std::uint64_t>(s));
      detail::fnv_mix(res_.allocation_hash, static_cast<std::uint64_t>(r * 1000 + g.ue));
      detail::fnv_mix(res_.allocation_hash, static_cast<std::uint64_t>(bits));
      served[u] += bits;
      auto& q = queues_[u];
      counters_[u].queued_bits -= bits;
      while (bits > 0) {
        auto& head = q.front();
        const auto take = std::min(bits, head.bits);
        const std::size_t fi = head.frame;
        head.bits -= take;
        bits -= take;
        if (head.bits == 0) q.pop_front();
        if (fail) {
          failed[u].push_back({fi, take});
          counters_[u].harq_bits += take;
        } else {
          deliver(u, fi, take, t, t_end);
        }
      }
    }
    for (std::size_t u = 0; u < failed.size(); ++u) {
      if (failed[u].empty()) continue;
      push({SlotClock::start_ms(s + cfg_.harq.retx_delay_slots), detail::EventKind::harq_return, 0,
            static_cast<int>(u), 0, std::move(failed[u])});
    }
  }

  void deliver(std::size_t u, std::size_t fi, std::int64_t bits, double t, double t_end) {
    auto& fs = frames_[fi];
    auto& c = counters_[u];
    c.delivered_bits += bits;
    const auto pkt = static_cast<std::int64_t>(cfg_.ecn.packet_bits);
    const std::int64_t before = fs.delivered;
    fs.delivered += bits;
    fs.outstanding -= bits;
    // packets whose last bit leaves in this grant
    const std::int64_t size = fs.rec.size_bits;
    const std::int64_t n_before = before >= size ? (size + pkt - 1) / pkt : before / pkt;
    const std::int64_t n_after = fs.delivered >= size ? (size + pkt - 1) / pkt : fs.delivered / pkt;
    const double sojourn = t - fs.rec.t_enqueued_at_ran.value_or(t);
    for (std::int64_t k = n_before; k < n_after; ++k) {
      const double uu = to_unit(hash_counter(ecn_seed_, Stream::ecn, u,
                                             static_cast<std::uint64_t>(fs.rec.frame_index) * 4096 +
                                                 static_cast<std::uint64_t>(k)));
      if (mark_ecn(sojourn, uu, cfg_.ecn))
        ++fs.marked;
      else
        ++fs.unmarked;
    }
    if (fs.outstanding > 0) return;

    fs.rec.t_fully_delivered = t_end;
    ++c.frames_delivered;
    const auto disp = display_time(fs.rec, cfg_.pipeline);
    if (disp && fs.rec.frame_index > last_displayed_[u]) {
      fs.rec.t_displayed = disp;
      last_displayed_[u] = fs.rec.frame_index;
      displays_[u].push_back({*disp, fs.rec.encode_psnr});
      ++c.frames_displayed;
    }
    log("frame_delivered", t_end, static_cast<int>(u),
        {{"frame", fs.rec.frame_index}, {"latency_ms", t_end - fs.rec.t_generated},
         {"displayed", fs.rec.t_displayed.has_value()}, {"marked", fs.marked}});
    push({*feedback_arrival(fs.rec, cfg_.pipeline), detail::EventKind::feedback, 0, static_cast<int>(u), fi, {}});
  }

  void on_feedback(const detail::Event& e) {
    const auto u = static_cast<std::size_t>(e.ue);
    const auto& fs = frames_[e.frame];
    const double rtt = *measure_rtt(fs.rec, cfg_.pipeline);
    rtt_window_[u].push_back({e.t, rtt, fs.rec.encode_psnr});
    auto& src = sources_[u];
    if (auto r = controller_->on_acks(e.ue, e.t, fs.unmarked, fs.marked, rtt, src.target_rate())) {
      if (*r != src.target_rate()) log("rate", e.t, e.ue, {{"rate_mbps", *r}, {"marked", fs.marked}});
      src.set_target_rate(*r);
    }
  }

  void on_tick(const detail::Event& e) {
    const double now = e.t;
    const auto n = static_cast<std::size_t>(cfg_.n_ue);
    if (now < cfg_.horizon_ms())
      push({now + controller_->period_ms(), detail::EventKind::control_tick, 0, -1, 0, {}});
    if (now - controller_->period_ms() >= cfg_.warmup_s * 1000.0 && period_available_ > 0)
      res_.period_utilization.push_back(static_cast<double>(period_occupied_) /
                                        static_cast<double>(period_available_));
    period_occupied_ = period_available_ = 0;

    // satisfaction reports sent at the previous tick reach the scheduler now
    if (have_pending_s_)
      for (std::size_t u = 0; u < n; ++u) sched_[u].s_factor = pending_s_[u];

    CellView view;
    view.now_ms = now;
    view.ues.resize(n);
    const double goodput = 1.0 - cfg_.harq.bler;
    const double period = controller_->period_ms();
    for (std::size_t u = 0; u < n; ++u) {
      auto& v = view.ues[u];
      v.curve = &sources_[u].active_scene(now).curve;
      v.capacity_mbps = estimate_capacity(trace(u), now, period).c_mbps * goodput;
      v.rate_mbps = sources_[u].target_rate();
      v.r_avg_mbps = sched_[u].r_avg;
      auto& w = rtt_window_[u];
      while (!w.empty() && w.front().t_arrival <= now - cfg_.controller.t_win_rtt_ms) w.pop_front();
      if (!w.empty()) {
        double rs = 0.0, ps = 0.0;
        for (const auto& x : w) {
          rs += x.rtt_ms;
          ps += x.psnr_db;
        }
        v.avg_rtt_ms = rs / static_cast<double>(w.size());
        v.avg_psnr_db = ps / static_cast<double>(w.size());
      }
    }
    // a zero-capacity window cannot be priced; hold everything for this tick
    bool degenerate = false;
    for (const auto& v : view.ues) degenerate |= !(v.capacity_mbps > 0.0);
    if (degenerate && controller_->allocates_shares()) return;

    ControllerDecision d = controller_->tick(view);
    for (std::size_t u = 0; u < n; ++u) sources_[u].set_target_rate(d.rates_mbps[u]);
    if (!d.satisfaction.empty()) {
      pending_s_ = d.satisfaction;
      have_pending_s_ = true;
    }
    if (d.diag.lambda) res_.lambda_trace.push_back(*d.diag.lambda);
    if (controller_->allocates_shares() && now >= cfg_.warmup_s * 1000.0) {
      double load = 0.0;
      for (std::size_t u = 0; u < n; ++u) load += d.rates_mbps[u] / view.ues[u].capacity_mbps;
      res_.control_loads.push_back(load);
    }
    if (log_) {
      nlohmann::ordered_json p;
      p["rates_mbps"] = d.rates_mbps;
      if (d.diag.lambda) p["lambda"] = *d.diag.lambda;
      if (d.diag.q_common_db) p["q_common_db"] = *d.diag.q_common_db;
      if (!d.diag.regions.empty()) {
        std::vector<std::string> regions(d.diag.regions.begin(), d.diag.regions.end());
        p["regions"] = regions;
      }
      if (!d.satisfaction.empty()) p["satisfaction"] = d.satisfaction;
      log("control", now, -1, std::move(p));
    }
  }

  void log(const char* event, double t, int ue, nlohmann::ordered_json payload) {
    if (!log_) return;
    nlohmann::ordered_json j;
    j["time"] = t;
    j["ue"] = ue;
    j["event"] = event;
    j["payload"] = std::move(payload);
    *log_ << j.dump() << '\n';
  }

  RunResult finish() {
    const auto n = static_cast<std::size_t>(cfg_.n_ue);
    const double t0 = cfg_.warmup_s * 1000.0, t1 = cfg_.horizon_ms();
    double rate_total = 0.0;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < n; ++u) {
      const double mean_rate = rate_count_[u] ? rate_sum_[u] / static_cast<double>(rate_count_[u]) : 0.0;
      res_.ues.push_back(ue_outcome(static_cast<int>(u), displays_[u], t0, t1, cfg_.fps, cfg_.satisfaction, mean_rate));
      worst = std::min(worst, res_.ues.back().psnr_p5_db);
      rate_total += mean_rate;
    }
    res_.counters = counters_;
    auto& r = res_.report;
    r.scheme = std::string(to_string(cfg_.scheme));
    r.n_ue = cfg_.n_ue;
    r.seed = cfg_.seed;
    r.satisfaction_ratio = satisfaction_ratio(res_.ues);
    r.min_psnr_p5 = worst;
    r.utilization = res_.available_rbgs
                        ? static_cast<double>(res_.occupied_rbgs) / static_cast<double>(res_.available_rbgs)
                        : 0.0;
    r.mean_rate = rate_total / static_cast<double>(n);
    if (cfg_.keep_frames)
      for (const auto& f : frames_) res_.frames.push_back(f.rec);
    return std::move(res_);
  }

  SimConfig cfg_;
  SimInputs in_;
  std::ostream* log_;

  std::vector<CapacityTrace> traces_;
  std::vector<VideoSource> sources_;
  std::vector<SchedulerUeState> sched_;
  std::vector<std::deque<detail::QueueEntry>> queues_;
  std::vector<UeCounters> counters_;
  std::vector<std::deque<detail::RttSample>> rtt_window_;
  std::vector<std::int64_t> last_displayed_;
  std::vector<std::vector<DisplayedFrame>> displays_;
  std::vector<double> rate_sum_;
  std::vector<std::int64_t> rate_count_;
  std::vector<double> pending_s_;
  bool have_pending_s_ = false;
  std::int64_t period_occupied_ = 0;
  std::int64_t period_available_ = 0;
  std::vector<detail::FrameState> frames_;
  std::unique_ptr<RateController> controller_;
  SchedulerPolicy policy_ = SchedulerPolicy::pf;
  std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  std::uint64_t bler_seed_ = 0, ecn_seed_ = 0;
  RunResult res_;
};

inline RunResult simulate(const SimConfig& cfg, const SimInputs& inputs = {}, std::ostream* event_log = nullptr) {
  return CellSimulator(cfg, inputs, event_log).run();
}

}  // namespace uxrc
