#include <catch_amalgamated.hpp>

#include <vector>

#include "uxrc/radio.hpp"

using namespace uxrc;
using Catch::Approx;

namespace {

SchedulerUeState st(double r_inst, double r_avg, double s = 0.0) { return {r_inst, r_avg, s}; }

// random cell for scheduler properties
struct CellDraw {
  std::vector<double> backlog, rbg_bits;
  std::vector<SchedulerUeState> states;
};

CellDraw random_cell(Rng& rng) {
  CellDraw c;
  const int n = 1 + static_cast<int>(rng.uniform() * 8);
  for (int i = 0; i < n; ++i) {
    c.backlog.push_back(rng.bernoulli(0.3) ? 0.0 : std::floor(rng.uniform(1.0, 40000.0)));
    c.rbg_bits.push_back(std::floor(rng.uniform(0.0, 20000.0)));
    c.states.push_back(st(c.rbg_bits.back() * 4 / 0.5 / 1000.0, rng.uniform(0.0, 200.0), rng.uniform()));
  }
  return c;
}

// display times from first principles: a frame shows at delivery + decode if it
// made the budget and nothing newer is on screen yet
std::vector<double> oracle_displays(const std::vector<FrameRecord>& frames) {
  std::vector<std::pair<double, std::int64_t>> shown;
  for (const auto& f : frames) {
    if (!f.t_fully_delivered) continue;
    if (*f.t_fully_delivered - f.t_generated > 20.0) continue;
    shown.push_back({*f.t_fully_delivered + 1.0, f.frame_index});
  }
  std::sort(shown.begin(), shown.end());
  std::vector<double> out;
  std::int64_t newest = -1;
  for (auto [t, idx] : shown)
    if (idx > newest) {
      out.push_back(t);
      newest = idx;
    }
  return out;
}

// walk a 0.01 ms grid and measure each frozen run between new pictures
std::pair<std::size_t, double> oracle_stalls(const std::vector<double>& shows, double period) {
  if (shows.size() < 2) return {0, 0.0};
  const double step = 0.01;
  std::size_t next = 1, count = 0;
  long frozen_steps = 0;
  double msd = 0.0;
  for (long k = 1; next < shows.size(); ++k) {
    const double t = shows[0] + static_cast<double>(k) * step;
    ++frozen_steps;
    bool fresh = false;
    while (next < shows.size() && shows[next] <= t) {
      ++next;
      fresh = true;
    }
    if (!fresh) continue;
    const double frozen = static_cast<double>(frozen_steps) * step;
    if (frozen > period + 1.0) {
      ++count;
      msd = std::max(msd, frozen - period);
    }
    frozen_steps = 0;
  }
  return {count, msd};
}

}  // namespace

TEST_CASE("PF and UX-PF metrics") {
  CHECK(pf_metric(st(40, 10)) == 4.0);
  CHECK(pf_metric(st(0, 10)) == 0.0);
  CHECK(pf_metric(st(40, 10)) == pf_metric(st(40, 10)));
  CHECK(ux_pf_metric(st(40, 10, 1.0)) == 0.0);
  CHECK(ux_pf_metric(st(40, 10, 0.0)) == pf_metric(st(40, 10)));
  CHECK(ux_pf_metric(st(40, 10, 0.5)) == 2.0);
  CHECK(pf_metric(st(1, 0.0)) == Approx(100.0));  // floored average
}

TEST_CASE("single backlogged UE takes every RBG") {
  const std::vector<double> backlog{1e6, 0.0}, bits{1000.0, 1000.0};
  const std::vector<SchedulerUeState> s{st(8, 10), st(8, 1)};
  const auto a = schedule_slot(backlog, s, bits, SchedulerPolicy::pf);
  for (const auto& g : a.rbg) {
    CHECK(g.ue == 0);
    CHECK(g.bits == 1000.0);
  }
}

TEST_CASE("ties go to the lower UE id") {
  const std::vector<double> backlog{1e6, 1e6}, bits{1000.0, 1000.0};
  const std::vector<SchedulerUeState> s{st(8, 10), st(8, 10)};
  for (auto g : {MetricGranularity::per_rbg, MetricGranularity::per_slot}) {
    SchedulerParams p;
    p.granularity = g;
    CHECK(schedule_slot(backlog, s, bits, SchedulerPolicy::pf, p).rbg[0].ue == 0);
  }
  SchedulerParams per_slot;
  per_slot.granularity = MetricGranularity::per_slot;
  CHECK(schedule_slot(backlog, s, bits, SchedulerPolicy::pf, per_slot).occupied() == 4);
  for (const auto& g : schedule_slot(backlog, s, bits, SchedulerPolicy::pf, per_slot).rbg) CHECK(g.ue == 0);
}

TEST_CASE("per-RBG metric recomputation spreads close competitors") {
  const std::vector<double> backlog{1e6, 1e6}, bits{1000.0, 1000.0};
  const std::vector<SchedulerUeState> s{st(8, 10), st(8, 10)};
  const auto a = schedule_slot(backlog, s, bits, SchedulerPolicy::pf);
  CHECK(a.rbg[0].ue == 0);
  CHECK(a.rbg[1].ue == 1);
  CHECK(a.rbg[2].ue == 0);
  CHECK(a.rbg[3].ue == 1);
}

TEST_CASE("fully satisfied UE yields to an unsatisfied one under UX-PF") {
  const std::vector<double> backlog{1e6, 1e6}, bits{5000.0, 100.0};
  const std::vector<SchedulerUeState> s{st(40, 1, 1.0), st(0.8, 100, 0.0)};
  const auto ux = schedule_slot(backlog, s, bits, SchedulerPolicy::ux_pf);
  for (const auto& g : ux.rbg) CHECK(g.ue == 1);
  const auto pf = schedule_slot(backlog, s, bits, SchedulerPolicy::pf);
  for (const auto& g : pf.rbg) CHECK(g.ue == 0);
}

TEST_CASE("empty queues leave every RBG idle") {
  const std::vector<double> backlog{0.0, 0.0}, bits{1000.0, 1000.0};
  const std::vector<SchedulerUeState> s{st(8, 10), st(8, 10)};
  CHECK(schedule_slot(backlog, s, bits, SchedulerPolicy::pf).occupied() == 0);
}

TEST_CASE("grants never exceed the queue and the queue tail is short") {
  const std::vector<double> backlog{2500.0}, bits{1000.0};
  const std::vector<SchedulerUeState> s{st(8, 10)};
  const auto a = schedule_slot(backlog, s, bits, SchedulerPolicy::pf);
  CHECK(a.rbg[0].bits == 1000.0);
  CHECK(a.rbg[1].bits == 1000.0);
  CHECK(a.rbg[2].bits == 500.0);
  CHECK(a.rbg[3].ue == -1);
}

TEST_CASE("property: scheduler is work conserving and bounded by backlog") {
  Rng rng(314);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto c = random_cell(rng);
    for (auto policy : {SchedulerPolicy::pf, SchedulerPolicy::ux_pf}) {
      const auto a = schedule_slot(c.backlog, c.states, c.rbg_bits, policy);
      std::vector<double> granted(c.backlog.size(), 0.0);
      bool idle_seen = false;
      for (const auto& g : a.rbg) {
        if (g.ue < 0) {
          idle_seen = true;
          continue;
        }
        REQUIRE_FALSE(idle_seen);  // idle RBGs only at the tail
        granted[static_cast<std::size_t>(g.ue)] += g.bits;
        REQUIRE(g.bits <= c.rbg_bits[static_cast<std::size_t>(g.ue)]);
      }
      for (std::size_t u = 0; u < granted.size(); ++u) REQUIRE(granted[u] <= c.backlog[u]);
      if (idle_seen)
        for (std::size_t u = 0; u < granted.size(); ++u) REQUIRE(granted[u] == c.backlog[u]);
      REQUIRE(a.occupied() >= 0);
      REQUIRE(a.occupied() <= 4);
    }
  }
}

TEST_CASE("property: UX-PF with zero satisfaction reproduces PF") {
  Rng rng(2718);
  for (int trial = 0; trial < 2000; ++trial) {
    auto c = random_cell(rng);
    for (auto& s : c.states) s.s_factor = 0.0;
    const auto a = schedule_slot(c.backlog, c.states, c.rbg_bits, SchedulerPolicy::pf);
    const auto b = schedule_slot(c.backlog, c.states, c.rbg_bits, SchedulerPolicy::ux_pf);
    for (std::size_t r = 0; r < 4; ++r) {
      REQUIRE(a.rbg[r].ue == b.rbg[r].ue);
      REQUIRE(a.rbg[r].bits == b.rbg[r].bits);
    }
  }
}

TEST_CASE("throughput average follows the EWMA") {
  SchedulerUeState s = st(0, 10);
  SchedulerParams p;
  update_average(s, 10000.0, p);  // 20 Mbps this slot
  CHECK(s.r_avg == Approx(10.0 * (1 - 0.005) + 20.0 * 0.005).epsilon(1e-14));
}

TEST_CASE("BLER draws: forced outcomes and long-run rate") {
  CHECK(apply_bler(100, 0.5).delivered);
  CHECK(apply_bler(100, 0.5).slot == 100);
  CHECK_FALSE(apply_bler(100, 0.05).delivered);
  CHECK(apply_bler(100, 0.05).slot == 104);

  const auto seed = derive_seed(9, Stream::bler);
  long fails = 0;
  const long n = 1'000'000;
  for (long i = 0; i < n; ++i) fails += harq_failure(seed, i / 4, static_cast<int>(i % 4), 0.10);
  CHECK(static_cast<double>(fails) / n == Approx(0.10).margin(0.003));
  CHECK(harq_failure(seed, 123, 2, 0.1) == harq_failure(seed, 123, 2, 0.1));
}

TEST_CASE("ECN marking probability ramps between the thresholds") {
  CHECK(ecn_mark_probability(4.0) == 0.0);
  CHECK(ecn_mark_probability(10.5) == 0.5);
  CHECK(ecn_mark_probability(17.0) == 1.0);
  CHECK(ecn_mark_probability(0.0) == 0.0);
  CHECK(ecn_mark_probability(40.0) == 1.0);
  CHECK_FALSE(mark_ecn(4.0, 0.0));
  CHECK(mark_ecn(17.0, 0.999999));
  Rng rng(5);
  int marks = 0;
  for (int i = 0; i < 100000; ++i) marks += mark_ecn(10.5, rng.uniform());
  CHECK(marks / 100000.0 == Approx(0.5).margin(0.01));
}

TEST_CASE("RTT is downlink latency plus uplink wait plus backhaul") {
  FrameRecord f;
  f.t_generated = 2.0;
  CHECK_FALSE(measure_rtt(f).has_value());
  f.t_fully_delivered = 4.0;  // encode + backhaul only; slot 8 is S, U starts at 4.5
  CHECK(*measure_rtt(f) == Approx(2.0 + 0.5 + 1.0).margin(1e-12));
  CHECK(*feedback_arrival(f) == Approx(5.5).margin(1e-12));
  f.t_fully_delivered = 24.0;  // 20 ms more queueing, same slot phase
  CHECK(*measure_rtt(f) == Approx(23.5).margin(1e-12));
}

TEST_CASE("property: RTT never undercuts the pipeline floor") {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    FrameRecord f;
    f.t_generated = std::floor(rng.uniform(0.0, 1e5)) / 60.0;
    // enqueued after encode + backhaul; delivery at a slot end no earlier
    const double arrive = f.t_generated + 2.0;
    f.t_fully_delivered = SlotClock::start_ms(SlotClock::slot_at(arrive) + 1 + static_cast<int>(rng.uniform() * 50));
    REQUIRE(*measure_rtt(f) >= 3.0);
    REQUIRE(*measure_rtt(f) >= *f.t_fully_delivered - f.t_generated);
  }
}

TEST_CASE("display rule: budget from generation, then decode") {
  FrameRecord f;
  f.t_generated = 100.0;
  CHECK_FALSE(display_time(f).has_value());
  f.t_fully_delivered = 110.0;
  CHECK(*display_time(f) == 111.0);
  f.t_fully_delivered = 120.0;
  CHECK(*display_time(f) == 121.0);
  f.t_fully_delivered = 120.5;
  CHECK_FALSE(display_time(f).has_value());
}

TEST_CASE("stall detection examples") {
  const double p = 1000.0 / 60.0;
  std::vector<double> on_time;
  for (int i = 0; i < 50; ++i) on_time.push_back(i * p);
  CHECK(detect_stalls(on_time, 60.0).stalls.empty());

  auto late = on_time;
  for (std::size_t i = 10; i < late.size(); ++i) late[i] += p;  // frame 10 one period late
  auto r = detect_stalls(late, 60.0);
  REQUIRE(r.stalls.size() == 1);
  CHECK(r.msd_ms == Approx(p).margin(1e-9));

  std::vector<double> dropped;
  for (int i = 0; i < 50; ++i)
    if (i < 20 || i > 22) dropped.push_back(i * p);
  r = detect_stalls(dropped, 60.0);
  REQUIRE(r.stalls.size() == 1);
  CHECK(r.msd_ms == Approx(50.0).margin(1e-9));
  CHECK(r.stalls[0].start_ms == Approx(20 * p).margin(1e-9));

  // tail after the last picture counts when a horizon is given
  r = detect_stalls(on_time, 60.0, 1.0, on_time.back() + 200.0);
  CHECK(r.msd_ms == Approx(200.0 - p).margin(1e-9));
}

TEST_CASE("property: stall detector agrees with a grid-walk oracle") {
  Rng rng(4242);
  const double p = 1000.0 / 60.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<FrameRecord> frames;
    const int n = 20 + static_cast<int>(rng.uniform() * 100);
    const double late_prob = rng.uniform(0.0, 0.4);
    for (int i = 0; i < n; ++i) {
      FrameRecord f;
      f.frame_index = i;
      f.t_generated = i * p;
      if (!rng.bernoulli(0.05)) {
        const double lat = rng.bernoulli(late_prob) ? rng.uniform(3.0, 60.0) : rng.uniform(3.0, 12.0);
        f.t_fully_delivered = SlotClock::start_ms(SlotClock::slot_at(f.t_generated + lat));
      }
      frames.push_back(f);
    }
    // implementation path: display_time per frame, newest-frame filter, stall scan
    std::vector<std::pair<double, std::int64_t>> events;
    for (const auto& f : frames)
      if (auto d = display_time(f)) events.push_back({*d, f.frame_index});
    std::sort(events.begin(), events.end());
    std::vector<double> shows;
    std::int64_t last = -1;
    for (auto [t, i] : events)
      if (i > last) {
        shows.push_back(t);
        last = i;
      }
    const auto expected_shows = oracle_displays(frames);
    REQUIRE(shows == expected_shows);
    const auto got = detect_stalls(shows, 60.0);
    const auto [count, msd] = oracle_stalls(expected_shows, p);
    REQUIRE(got.stalls.size() == count);
    REQUIRE(got.msd_ms == Approx(msd).margin(0.02));
  }
}
