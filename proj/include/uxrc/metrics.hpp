// uxrc/metrics.hpp
//
// KPIs over completed runs: per-UE satisfaction from the displayed-PSNR step
// function and stall report, cell satisfaction ratio, UX capacity, minimum
// PSNR statistic, and bootstrap aggregation across seeds.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "uxrc/radio.hpp"
#include "uxrc/rng.hpp"

namespace uxrc {

struct PsnrPoint {
  double t_ms;
  double db;
};

/// Right-continuous step function: value db from t_ms until the next point.
/// Before the first point the value is `initial_db` (nothing on screen yet).
class PsnrTimeline {
 public:
  PsnrTimeline() = default;
  explicit PsnrTimeline(std::vector<PsnrPoint> points, double initial_db = 0.0)
      : points_(std::move(points)), initial_(initial_db) {
    for (std::size_t i = 1; i < points_.size(); ++i)
      if (points_[i].t_ms < points_[i - 1].t_ms)
        throw std::invalid_argument("PSNR timeline must be time-ordered");
  }

  std::span<const PsnrPoint> points() const noexcept { return points_; }

  double value_at(double t) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double x, const PsnrPoint& p) { return x < p.t_ms; });
    return it == points_.begin() ? initial_ : (it - 1)->db;
  }

  /// Constant pieces (duration, value) covering [t0, t1).
  std::vector<std::pair<double, double>> pieces(double t0, double t1) const {
    std::vector<std::pair<double, double>> out;
    if (!(t1 > t0)) return out;
    double cur_t = t0;
    double cur_v = value_at(t0);
    auto it = std::upper_bound(points_.begin(), points_.end(), t0,
                               [](double x, const PsnrPoint& p) { return x < p.t_ms; });
    for (; it != points_.end() && it->t_ms < t1; ++it) {
      out.emplace_back(it->t_ms - cur_t, cur_v);
      cur_t = it->t_ms;
      cur_v = it->db;
    }
    out.emplace_back(t1 - cur_t, cur_v);
    return out;
  }

  /// Fraction of [t0, t1) with value >= threshold.
  double fraction_at_or_above(double threshold_db, double t0, double t1) const {
    if (!(t1 > t0)) return 0.0;
    double above = 0.0;
    for (auto [d, v] : pieces(t0, t1))
      if (v >= threshold_db - 1e-9) above += d;
    return above / (t1 - t0);
  }

  /// Time-weighted p-quantile over [t0, t1): smallest v with time(value <= v) >= p * span.
  double time_quantile(double p, double t0, double t1) const {
    auto pcs = pieces(t0, t1);
    if (pcs.empty()) return initial_;
    std::sort(pcs.begin(), pcs.end(), [](auto& a, auto& b) { return a.second < b.second; });
    const double need = std::clamp(p, 0.0, 1.0) * (t1 - t0);
    double acc = 0.0;
    for (auto [d, v] : pcs) {
      acc += d;
      if (acc >= need && d > 0.0) return v;
    }
    return pcs.back().second;
  }

 private:
  std::vector<PsnrPoint> points_;
  double initial_ = 0.0;
};

struct SatisfactionParams {
  double gamma_db = 35.0;
  double d_stall_ms = 100.0;
  double time_fraction = 0.95;
  double psnr_percentile = 0.05;
};

struct UeOutcome {
  int ue_id = 0;
  PsnrTimeline psnr_timeline;
  double above_fraction = 0.0;
  double msd_ms = 0.0;
  bool satisfied = false;
  double mean_rate_mbps = 0.0;
  double psnr_p5_db = 0.0;
  std::size_t displayed = 0;
};

struct DisplayedFrame {
  double t_ms;
  double psnr_db;
};

/// Evaluate one UE over the measurement window [t0, t1). `displays` must be
/// time-ordered and may start before t0; the last display before t0 carries its
/// PSNR into the window and anchors the first stall gap.
inline UeOutcome ue_outcome(int ue_id, std::span<const DisplayedFrame> displays, double t0, double t1,
                            double fps, const SatisfactionParams& p, double mean_rate_mbps = 0.0) {
  if (!(t1 > t0)) throw std::invalid_argument("ue_outcome: empty window");
  UeOutcome o;
  o.ue_id = ue_id;
  o.mean_rate_mbps = mean_rate_mbps;

  std::vector<PsnrPoint> pts;
  std::vector<double> times;
  pts.reserve(displays.size());
  std::size_t first = 0;
  while (first < displays.size() && displays[first].t_ms < t0) ++first;
  if (first > 0) {
    pts.push_back({displays[first - 1].t_ms, displays[first - 1].psnr_db});
    times.push_back(displays[first - 1].t_ms);
  }
  for (std::size_t i = first; i < displays.size() && displays[i].t_ms < t1; ++i) {
    pts.push_back({displays[i].t_ms, displays[i].psnr_db});
    times.push_back(displays[i].t_ms);
    ++o.displayed;
  }
  o.psnr_timeline = PsnrTimeline(std::move(pts));
  o.above_fraction = o.psnr_timeline.fraction_at_or_above(p.gamma_db, t0, t1);
  o.psnr_p5_db = o.psnr_timeline.time_quantile(p.psnr_percentile, t0, t1);

  if (times.empty()) {
    o.msd_ms = t1 - t0;
  } else {
    o.msd_ms = detect_stalls(times, fps, 1.0, t1).msd_ms;
    // nothing on screen at the start of the window
    if (times.front() >= t0) o.msd_ms = std::max(o.msd_ms, times.front() - t0);
  }
  o.satisfied = o.displayed > 0 && o.above_fraction >= p.time_fraction - 1e-12 && o.msd_ms < p.d_stall_ms;
  return o;
}

inline double satisfaction_ratio(std::span<const UeOutcome> ues) {
  if (ues.empty()) return 0.0;
  const auto n = std::count_if(ues.begin(), ues.end(), [](const UeOutcome& u) { return u.satisfied; });
  return static_cast<double>(n) / static_cast<double>(ues.size());
}

/// Largest N (1-based index into `ratios`) whose ratio reaches the threshold; 0 if none.
inline int ux_capacity(std::span<const double> ratios, double threshold = 0.90) {
  int cap = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i)
    if (ratios[i] >= threshold - 1e-12) cap = static_cast<int>(i) + 1;
  return cap;
}

struct CellReport {
  std::string scheme;
  int n_ue = 0;
  std::uint64_t seed = 0;
  double satisfaction_ratio = 0.0;
  double min_psnr_p5 = 0.0;
  double utilization = 0.0;
  double mean_rate = 0.0;
  friend bool operator==(const CellReport&, const CellReport&) = default;
};

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean with a percentile-bootstrap confidence interval; deterministic in `seed`.
inline MeanCi bootstrap_mean_ci(std::span<const double> xs, std::uint64_t seed, int resamples = 2000,
                                double level = 0.95) {
  if (xs.empty()) throw std::invalid_argument("bootstrap of empty sample");
  MeanCi r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) {
    r.lo = r.hi = r.mean;
    return r;
  }
  Rng rng(derive_seed(seed, Stream::bootstrap));
  std::vector<double> means(static_cast<std::size_t>(resamples));
  const auto n = xs.size();
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[static_cast<std::size_t>(rng.uniform() * n) % n];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double a = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1) + 0.5));
    return means[std::min(k, means.size() - 1)];
  };
  r.lo = std::min(at(a), r.mean);
  r.hi = std::max(at(1.0 - a), r.mean);
  return r;
}

struct CapacityPoint {
  std::string scheme;
  int n_ue = 0;
  std::size_t cells = 0;
  MeanCi ratio;
  MeanCi min_psnr;
  MeanCi utilization;
};

struct CapacityCurve {
  std::string scheme;
  std::vector<CapacityPoint> points;  ///< ordered by n_ue
  std::vector<int> holes;             ///< expected loads with no report
  int ux_capacity = 0;
};

/// Group reports by scheme and load. `expected_loads`, when given, flags holes
/// and fixes the load axis used for the capacity scan.
inline std::vector<CapacityCurve> aggregate(std::span<const CellReport> reports,
                                            std::span<const int> expected_loads = {},
                                            std::uint64_t bootstrap_seed = 1, int resamples = 2000) {
  std::map<std::string, std::map<int, std::vector<const CellReport*>>> grid;
  for (const auto& r : reports) grid[r.scheme][r.n_ue].push_back(&r);

  std::vector<CapacityCurve> out;
  for (auto& [scheme, loads] : grid) {
    CapacityCurve c;
    c.scheme = scheme;
    for (int n : expected_loads)
      if (!loads.count(n)) c.holes.push_back(n);
    for (auto& [n, cells] : loads) {
      std::sort(cells.begin(), cells.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
      std::vector<double> ratio, psnr, util;
      for (auto* r : cells) {
        ratio.push_back(r->satisfaction_ratio);
        psnr.push_back(r->min_psnr_p5);
        util.push_back(r->utilization);
      }
      const std::uint64_t s = bootstrap_seed ^ (static_cast<std::uint64_t>(n) << 32);
      c.points.push_back({scheme, n, cells.size(), bootstrap_mean_ci(ratio, s, resamples),
                          bootstrap_mean_ci(psnr, s + 1, resamples), bootstrap_mean_ci(util, s + 2, resamples)});
    }
    // capacity scan over loads 1..max; a missing load counts as ratio 0
    const int max_n = c.points.empty() ? 0 : c.points.back().n_ue;
    std::vector<double> ratios(static_cast<std::size_t>(std::max(0, max_n)), 0.0);
    for (const auto& p : c.points)
      if (p.n_ue >= 1) ratios[static_cast<std::size_t>(p.n_ue - 1)] = p.ratio.mean;
    c.ux_capacity = ux_capacity(ratios);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace uxrc
