#include <catch_amalgamated.hpp>

#include <sstream>

#include <json.hpp>

#include "uxrc/simulator.hpp"

using namespace uxrc;
using Catch::Approx;

namespace {

SimConfig short_run(Scheme s, int n, std::uint64_t seed = 3) {
  SimConfig c;
  c.scheme = s;
  c.n_ue = n;
  c.seed = seed;
  c.duration_s = 6.0;
  c.warmup_s = 1.0;
  return c;
}

}  // namespace

TEST_CASE("same config and seed give identical runs") {
  const auto c = short_run(Scheme::maxcap_central, 4);
  const auto a = simulate(c), b = simulate(c);
  CHECK(a.report == b.report);
  CHECK(a.allocation_hash == b.allocation_hash);
  CHECK(a.grants == b.grants);
}

TEST_CASE("every scheme conserves bits and never idles with backlog") {
  for (auto s : kAllSchemes) {
    CAPTURE(to_string(s));
    const auto r = simulate(short_run(s, 5));
    CHECK(r.bits_conserved());
    CHECK(r.idle_rbgs_with_backlog == 0);
    CHECK(r.report.utilization >= 0.0);
    CHECK(r.report.utilization <= 1.0);
    CHECK(r.report.utilization ==
          static_cast<double>(r.occupied_rbgs) / static_cast<double>(r.available_rbgs));
    CHECK(r.report.satisfaction_ratio >= 0.0);
    CHECK(r.report.satisfaction_ratio <= 1.0);
    std::int64_t displayed = 0;
    for (const auto& c : r.counters) displayed += c.frames_displayed;
    CHECK(displayed > 0);
  }
}

TEST_CASE("available RBGs count every downlink slot of the window") {
  const auto r = simulate(short_run(Scheme::prague, 2));
  // 5 s measured = 10000 slots, 3 of every 5 downlink, 4 RBGs each
  CHECK(r.available_rbgs == 10000 / 5 * 3 * 4);
}

TEST_CASE("UX-PF with zero satisfaction reports is plain PF") {
  auto ux = short_run(Scheme::ux_pf, 6);
  ux.force_zero_satisfaction = true;
  const auto a = simulate(ux);
  const auto b = simulate(short_run(Scheme::prague, 6));
  CHECK(a.allocation_hash == b.allocation_hash);
  CHECK(a.grants == b.grants);
  CHECK(a.report.satisfaction_ratio == b.report.satisfaction_ratio);
  CHECK(a.report.min_psnr_p5 == b.report.min_psnr_p5);
  CHECK(a.report.utilization == b.report.utilization);

  // and the reports do change the allocation when they are live
  const auto live = simulate(short_run(Scheme::ux_pf, 6));
  CHECK(live.allocation_hash != b.allocation_hash);
}

TEST_CASE("every delivered frame respects the pipeline floor") {
  for (auto s : {Scheme::maxmin_central, Scheme::rtt_baseline}) {
    auto c = short_run(s, 4);
    c.keep_frames = true;
    const auto r = simulate(c);
    std::size_t delivered = 0;
    for (const auto& f : r.frames) {
      REQUIRE(f.t_encoded == f.t_generated + 1.0);
      if (f.t_enqueued_at_ran) REQUIRE(*f.t_enqueued_at_ran == Approx(f.t_generated + 2.0).margin(1e-9));
      if (!f.t_fully_delivered) continue;
      ++delivered;
      REQUIRE(*f.t_fully_delivered >= *f.t_enqueued_at_ran);
      REQUIRE(*measure_rtt(f) >= 3.0);
      if (f.t_displayed) REQUIRE(*f.t_displayed - f.t_generated >= 3.0);
    }
    CHECK(delivered > 0);
  }
}

TEST_CASE("schemes on the same seed share the environment") {
  const auto a = make_environment(short_run(Scheme::maxcap_central, 4, 11), {});
  const auto b = make_environment(short_run(Scheme::prague, 4, 11), {});
  REQUIRE(a.traces.size() == 4);
  for (std::size_t u = 0; u < 4; ++u) {
    CHECK(a.traces[u].bits_per_rbg == b.traces[u].bits_per_rbg);
    CHECK(a.phases_ms[u] == b.phases_ms[u]);
    const auto ea = a.schedules[u].entries(), eb = b.schedules[u].entries();
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
      CHECK(ea[i].start_ms == eb[i].start_ms);
      CHECK(ea[i].scene_id == eb[i].scene_id);
    }
  }
  // a different seed moves everything
  const auto c = make_environment(short_run(Scheme::maxcap_central, 4, 12), {});
  CHECK(a.traces[0].bits_per_rbg != c.traces[0].bits_per_rbg);

  // frames stamped with the same scenes at the same times in two schemes' runs
  auto ca = short_run(Scheme::maxcap_central, 3, 11), cb = short_run(Scheme::ott_ux, 3, 11);
  ca.keep_frames = cb.keep_frames = true;
  const auto ra = simulate(ca), rb = simulate(cb);
  std::map<std::pair<int, std::int64_t>, std::pair<double, int>> seen;
  for (const auto& f : ra.frames) seen[{f.ue_id, f.frame_index}] = {f.t_generated, f.scene_id};
  int matched = 0;
  for (const auto& f : rb.frames) {
    auto it = seen.find({f.ue_id, f.frame_index});
    if (it == seen.end()) continue;
    ++matched;
    REQUIRE(it->second.first == f.t_generated);
    REQUIRE(it->second.second == f.scene_id);
  }
  CHECK(matched > 500);
}

TEST_CASE("a lone UE with plenty of capacity is satisfied under content-aware control") {
  for (auto s : {Scheme::maxcap_central, Scheme::maxmin_central, Scheme::maxcap_assisted, Scheme::maxmin_assisted,
                 Scheme::ux_pf}) {
    CAPTURE(to_string(s));
    auto c = short_run(s, 1, 5);
    c.duration_s = 20.0;
    c.channel.mean_mbps_lo = c.channel.mean_mbps_hi = 600.0;
    const auto r = simulate(c);
    CHECK(r.report.satisfaction_ratio == 1.0);
  }
}

TEST_CASE("central schemes keep the priced load at mu") {
  for (auto s : {Scheme::maxcap_central, Scheme::maxmin_central}) {
    const auto r = simulate(short_run(s, 6));
    REQUIRE_FALSE(r.control_loads.empty());
    for (double l : r.control_loads) REQUIRE(l <= 0.9 + 1e-9);
  }
}

TEST_CASE("link-price runs record the price trajectory") {
  const auto r = simulate(short_run(Scheme::maxmin_assisted, 4));
  CHECK(r.lambda_trace.size() == static_cast<std::size_t>(std::floor(6000.0 / 33.0)));
  for (double l : r.lambda_trace) REQUIRE(l >= 0.0);
}

TEST_CASE("trace-driven runs use the supplied capacity") {
  auto traces = std::make_shared<std::vector<CapacityTrace>>();
  CapacityTrace t;
  t.bits_per_rbg.assign(12000, 20000.0);  // 160 Mbps per D slot
  traces->push_back(t);
  auto c = short_run(Scheme::maxcap_central, 2);
  SimInputs in;
  in.traces = traces;
  const auto r = simulate(c, in);
  CHECK(r.bits_conserved());
  CHECK(r.report.satisfaction_ratio == 1.0);

  c.duration_s = 7.0;
  CHECK_THROWS_AS(simulate(c, in), std::invalid_argument);
}

TEST_CASE("event log is NDJSON with a stable field order") {
  std::ostringstream log;
  simulate(short_run(Scheme::ott_ux, 2), {}, &log);
  std::istringstream in(log.str());
  std::string line;
  std::set<std::string> kinds;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    const auto j = nlohmann::ordered_json::parse(line);
    auto it = j.begin();
    REQUIRE(it.key() == "time");
    REQUIRE((++it).key() == "ue");
    REQUIRE((++it).key() == "event");
    REQUIRE((++it).key() == "payload");
    kinds.insert(j["event"].get<std::string>());
  }
  CHECK(lines > 100);
  CHECK(kinds.count("frame_generated"));
  CHECK(kinds.count("frame_delivered"));
  CHECK(kinds.count("control"));
}

TEST_CASE("bad simulator inputs are rejected up front") {
  auto c = short_run(Scheme::prague, 0);
  CHECK_THROWS_AS(CellSimulator(c, {}), std::invalid_argument);
  c = short_run(Scheme::prague, 2);
  c.warmup_s = 7.0;
  CHECK_THROWS_AS(CellSimulator(c, {}), std::invalid_argument);
  c = short_run(Scheme::prague, 2);
  c.controller.mu_target = 0.0;
  CHECK_THROWS_AS(CellSimulator(c, {}), std::invalid_argument);
}

TEST_CASE("per-period utilization covers the measured window") {
  const auto r = simulate(short_run(Scheme::maxcap_central, 3));
  // ticks at 33k ms, k = 1..181; the period ending at tick k starts at or after
  // 1000 ms for k >= 32
  CHECK(r.period_utilization.size() == 181 - 31);
  for (double u : r.period_utilization) {
    REQUIRE(u >= 0.0);
    REQUIRE(u <= 1.0);
  }
}
