#include <catch_amalgamated.hpp>

#include <vector>

#include "uxrc/metrics.hpp"

using namespace uxrc;
using Catch::Approx;

namespace {

std::vector<DisplayedFrame> steady(double t0, double t1, double db, double fps = 60.0) {
  std::vector<DisplayedFrame> v;
  for (double t = t0; t < t1; t += 1000.0 / fps) v.push_back({t, db});
  return v;
}

// explicit integration of the step function on a fine grid
double grid_fraction(const std::vector<DisplayedFrame>& d, double gamma, double t0, double t1, double step) {
  double above = 0.0;
  std::size_t k = 0;
  double value = 0.0;
  for (double t = t0 + step / 2; t < t1; t += step) {
    while (k < d.size() && d[k].t_ms <= t) value = d[k++].psnr_db;
    if (value >= gamma) above += step;
  }
  return above / (t1 - t0);
}

}  // namespace

TEST_CASE("steady picture above target is satisfied") {
  const auto d = steady(0.0, 10000.0, 36.0);
  const auto o = ue_outcome(0, d, 0.0, 10000.0, 60.0, {});
  CHECK(o.satisfied);
  CHECK(o.above_fraction == Approx(1.0));
  CHECK(o.msd_ms == 0.0);
  CHECK(o.psnr_p5_db == 36.0);
}

TEST_CASE("94% of time above target is not enough") {
  // 6% of the window at 34 dB; frames every 10 ms so boundaries land on frames
  std::vector<DisplayedFrame> d;
  for (int i = 0; i < 1000; ++i) d.push_back({i * 10.0, i < 60 ? 34.0 : 36.0});
  const auto o = ue_outcome(0, d, 0.0, 10000.0, 100.0, {});
  CHECK(o.above_fraction == Approx(0.94).margin(1e-12));
  CHECK(o.msd_ms == 0.0);
  CHECK_FALSE(o.satisfied);
  CHECK(o.psnr_p5_db == 34.0);

  for (int i = 50; i < 60; ++i) d[static_cast<std::size_t>(i)].psnr_db = 36.0;  // 95%
  CHECK(ue_outcome(0, d, 0.0, 10000.0, 100.0, {}).satisfied);
}

TEST_CASE("one long stall is enough to fail") {
  auto d = steady(0.0, 10000.0, 40.0);
  std::vector<DisplayedFrame> gap;
  const double p = 1000.0 / 60.0;
  for (const auto& f : d)
    if (f.t_ms < 5000.0 || f.t_ms > 5000.0 + 120.0 + p) gap.push_back(f);
  const auto o = ue_outcome(0, gap, 0.0, 10000.0, 60.0, {});
  CHECK(o.msd_ms > 100.0);
  CHECK(o.above_fraction == 1.0);
  CHECK_FALSE(o.satisfied);
}

TEST_CASE("no displayed frames: unsatisfied with msd = window") {
  const std::vector<DisplayedFrame> none;
  const auto o = ue_outcome(3, none, 1000.0, 21000.0, 60.0, {});
  CHECK_FALSE(o.satisfied);
  CHECK(o.msd_ms == 20000.0);
  CHECK(o.ue_id == 3);
}

TEST_CASE("frames before the window carry into it") {
  std::vector<DisplayedFrame> d{{500.0, 38.0}};
  for (auto f : steady(1010.0, 5000.0, 36.0)) d.push_back(f);
  const auto o = ue_outcome(0, d, 1000.0, 5000.0, 60.0, {});
  CHECK(o.above_fraction == 1.0);
  CHECK(o.displayed == d.size() - 1);
  CHECK(o.msd_ms == Approx(510.0 - 1000.0 / 60.0).margin(1e-9));
}

TEST_CASE("property: time-above fraction matches grid integration") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<DisplayedFrame> d;
    double t = rng.uniform(0.0, 200.0);
    while (t < 3000.0) {
      d.push_back({t, rng.uniform(30.0, 40.0)});
      t += rng.bernoulli(0.1) ? rng.uniform(20.0, 300.0) : rng.uniform(5.0, 25.0);
    }
    const double gamma = rng.uniform(31.0, 39.0);
    const auto o = ue_outcome(0, d, 0.0, 3000.0, 60.0, {gamma, 100.0, 0.95, 0.05});
    // grid error is at most one step per display point
    const double tol = 0.1 * static_cast<double>(d.size() + 1) / 3000.0;
    REQUIRE(o.above_fraction == Approx(grid_fraction(d, gamma, 0.0, 3000.0, 0.1)).margin(tol));
  }
}

TEST_CASE("property: raising every frame by 1 dB never loses satisfaction") {
  Rng rng(4321);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<DisplayedFrame> d;
    for (double t = 0.0; t < 5000.0; t += rng.uniform(10.0, 40.0)) d.push_back({t, rng.uniform(33.0, 38.0)});
    auto up = d;
    for (auto& f : up) f.psnr_db += 1.0;
    const auto a = ue_outcome(0, d, 0.0, 5000.0, 60.0, {});
    const auto b = ue_outcome(0, up, 0.0, 5000.0, 60.0, {});
    REQUIRE(b.above_fraction >= a.above_fraction);
    if (a.satisfied) REQUIRE(b.satisfied);
  }
}

TEST_CASE("time quantile of a step function") {
  const PsnrTimeline tl({{0.0, 30.0}, {10.0, 40.0}});
  CHECK(tl.time_quantile(0.05, 0.0, 100.0) == 30.0);
  CHECK(tl.time_quantile(0.5, 0.0, 100.0) == 40.0);
  CHECK(tl.value_at(-1.0) == 0.0);
  CHECK(tl.value_at(10.0) == 40.0);
  CHECK_THROWS_AS(PsnrTimeline({{5.0, 1.0}, {4.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("cell satisfaction ratio") {
  std::vector<UeOutcome> u(4);
  u[0].satisfied = u[2].satisfied = u[3].satisfied = true;
  CHECK(satisfaction_ratio(u) == 0.75);
  CHECK(satisfaction_ratio(std::vector<UeOutcome>{}) == 0.0);
}

TEST_CASE("UX capacity is the largest qualifying load") {
  CHECK(ux_capacity(std::vector<double>{1.0, 1.0, 0.95, 0.88, 0.7}) == 3);
  CHECK(ux_capacity(std::vector<double>{0.5, 0.8, 0.89}) == 0);
  CHECK(ux_capacity(std::vector<double>{0.95, 0.85, 0.92}) == 3);
  CHECK(ux_capacity(std::vector<double>{0.9}) == 1);
}

TEST_CASE("bootstrap intervals") {
  const std::vector<double> one{0.7};
  auto ci = bootstrap_mean_ci(one, 1);
  CHECK(ci.mean == 0.7);
  CHECK(ci.lo == 0.7);
  CHECK(ci.hi == 0.7);

  const std::vector<double> same{0.4, 0.4};
  ci = bootstrap_mean_ci(same, 9);
  CHECK(ci.lo == ci.hi);

  Rng rng(8);
  std::vector<double> xs;
  for (int i = 0; i < 100; ++i) xs.push_back(rng.uniform());
  const auto a = bootstrap_mean_ci(xs, 42), b = bootstrap_mean_ci(xs, 42);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo < a.mean);
  CHECK(a.mean < a.hi);
  // normal approximation: half width ~ 1.96 * 0.29 / 10
  CHECK(a.hi - a.lo == Approx(2 * 1.96 * std::sqrt(1.0 / 12.0) / 10.0).epsilon(0.25));
}

TEST_CASE("aggregation groups by scheme and load and flags holes") {
  std::vector<CellReport> rs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    rs.push_back({"a", 1, seed, 1.0, 36.0, 0.5, 10.0});
    rs.push_back({"a", 2, seed, seed == 1 ? 0.5 : 1.0, 34.0, 0.7, 9.0});
    rs.push_back({"b", 1, seed, 0.0, 20.0, 0.9, 5.0});
  }
  const std::vector<int> loads{1, 2, 3};
  const auto curves = aggregate(rs, loads, 7, 500);
  REQUIRE(curves.size() == 2);
  const auto& a = curves[0];
  CHECK(a.scheme == "a");
  REQUIRE(a.points.size() == 2);
  CHECK(a.points[1].ratio.mean == Approx(2.5 / 3.0));
  CHECK(a.points[0].cells == 3);
  CHECK(a.holes == std::vector<int>{3});
  CHECK(a.ux_capacity == 1);
  CHECK(curves[1].ux_capacity == 0);
  CHECK(curves[1].holes == std::vector<int>{2, 3});

  const auto again = aggregate(rs, loads, 7, 500);
  CHECK(again[0].points[1].ratio.lo == a.points[1].ratio.lo);
  CHECK(again[0].points[1].ratio.hi == a.points[1].ratio.hi);
}
