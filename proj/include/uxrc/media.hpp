// uxrc/media.hpp
//
// Content model: quality-bitrate (QB) curves per scene, randomized per-UE scene
// schedules, and the periodic frame source feeding the radio simulator.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uxrc/rng.hpp"

namespace uxrc {

/// Allowable source bitrates.
inline constexpr double kMinSourceRateMbps = 1.0;
inline constexpr double kMaxSourceRateMbps = 50.0;

inline double clamp_source_rate(double mbps) {
  return std::clamp(mbps, kMinSourceRateMbps, kMaxSourceRateMbps);
}

/// Anything that maps bitrate (Mbps) to quality (dB) and back, monotonically.
/// The allocation algorithms are written against this, not a concrete curve.
template <typename C>
concept QualityCurve = requires(const C& c, double x) {
  { c.quality(x) } -> std::convertible_to<double>;
  { c.rate_for(x) } -> std::convertible_to<double>;
  { c.min_rate() } -> std::convertible_to<double>;
  { c.max_rate() } -> std::convertible_to<double>;
};

struct Knot {
  double mbps;
  double db;
  friend bool operator==(const Knot&, const Knot&) = default;
};

/// Piecewise-linear in (log bitrate, quality); clamped outside the knot range.
class QbCurve {
 public:
  QbCurve() = default;

  explicit QbCurve(std::vector<Knot> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw std::invalid_argument("QB curve needs at least 2 knots");
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      const auto& k = knots_[i];
      if (!std::isfinite(k.mbps) || !std::isfinite(k.db))
        throw std::invalid_argument("QB curve knot " + std::to_string(i) + " is not finite");
      if (k.mbps < kMinSourceRateMbps || k.mbps > kMaxSourceRateMbps)
        throw std::invalid_argument("QB curve knot " + std::to_string(i) +
                                    ": bitrate outside [1, 50] Mbps");
      if (i > 0 && !(k.mbps > knots_[i - 1].mbps))
        throw std::invalid_argument("QB curve knot " + std::to_string(i) +
                                    ": bitrates must be strictly increasing");
      if (i > 0 && !(k.db > knots_[i - 1].db))
        throw std::invalid_argument("QB curve knot " + std::to_string(i) +
                                    ": qualities must be strictly increasing");
    }
  }

  std::span<const Knot> knots() const noexcept { return knots_; }
  double min_rate() const noexcept { return knots_.front().mbps; }
  double max_rate() const noexcept { return knots_.back().mbps; }
  double min_quality() const noexcept { return knots_.front().db; }
  double max_quality() const noexcept { return knots_.back().db; }

  double quality(double mbps) const {
    if (mbps <= knots_.front().mbps) return knots_.front().db;
    if (mbps >= knots_.back().mbps) return knots_.back().db;
    // first knot with rate > mbps; segment is [it-1, it)
    auto it = std::upper_bound(knots_.begin(), knots_.end(), mbps,
                               [](double r, const Knot& k) { return r < k.mbps; });
    const Knot& a = *(it - 1);
    const Knot& b = *it;
    const double frac = std::log(mbps / a.mbps) / std::log(b.mbps / a.mbps);
    return a.db + frac * (b.db - a.db);
  }

  double rate_for(double db) const {
    if (db <= knots_.front().db) return knots_.front().mbps;
    if (db >= knots_.back().db) return knots_.back().mbps;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), db,
                               [](double q, const Knot& k) { return q < k.db; });
    const Knot& a = *(it - 1);
    const Knot& b = *it;
    const double frac = (db - a.db) / (b.db - a.db);
    return a.mbps * std::exp(frac * std::log(b.mbps / a.mbps));
  }

  friend bool operator==(const QbCurve&, const QbCurve&) = default;

 private:
  std::vector<Knot> knots_;
};

/// Affine curve q = intercept + slope * R on [lo, hi] Mbps, clamped outside.
/// Used for analytic instances; not bound to the source rate range.
class AffineCurve {
 public:
  AffineCurve(double intercept_db, double slope_db_per_mbps, double lo_mbps, double hi_mbps)
      : intercept_(intercept_db), slope_(slope_db_per_mbps), lo_(lo_mbps), hi_(hi_mbps) {
    if (!(slope_ > 0.0)) throw std::invalid_argument("affine curve slope must be positive");
    if (!(hi_ > lo_) || lo_ < 0.0) throw std::invalid_argument("affine curve range invalid");
  }

  double min_rate() const noexcept { return lo_; }
  double max_rate() const noexcept { return hi_; }
  double quality(double mbps) const noexcept {
    return intercept_ + slope_ * std::clamp(mbps, lo_, hi_);
  }
  double rate_for(double db) const noexcept {
    return std::clamp((db - intercept_) / slope_, lo_, hi_);
  }

 private:
  double intercept_, slope_, lo_, hi_;
};

/// Quality (dB) of `curve` at `mbps`.
template <QualityCurve C>
double eval_quality(const C& curve, double mbps) {
  return curve.quality(mbps);
}

/// Bitrate (Mbps) at which `curve` reaches `target_db`; clamps to the curve's rate range.
template <QualityCurve C>
double invert_quality(const C& curve, double target_db) {
  return curve.rate_for(target_db);
}

// ---------------------------------------------------------------------------
// Scenes

struct Scene {
  int id = 0;
  QbCurve curve;
  std::string label;
};

class SceneLibrary {
 public:
  SceneLibrary() = default;
  explicit SceneLibrary(std::vector<Scene> scenes) : scenes_(std::move(scenes)) {
    if (scenes_.empty()) throw std::invalid_argument("scene library is empty");
    for (std::size_t i = 0; i < scenes_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (scenes_[i].id == scenes_[j].id)
          throw std::invalid_argument("duplicate scene id " + std::to_string(scenes_[i].id));
  }

  std::span<const Scene> scenes() const noexcept { return scenes_; }
  std::size_t size() const noexcept { return scenes_.size(); }
  const Scene& at(std::size_t index) const { return scenes_.at(index); }

  const Scene& by_id(int id) const {
    for (const auto& s : scenes_)
      if (s.id == id) return s;
    throw std::out_of_range("unknown scene id " + std::to_string(id));
  }

  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < scenes_.size(); ++i)
      if (scenes_[i].id == id) return i;
    throw std::out_of_range("unknown scene id " + std::to_string(id));
  }

 private:
  std::vector<Scene> scenes_;
};

/// Two synthetic scenes pinned to the reference operating points: the complex
/// scene needs 19 Mbps for 35 dB, the simple one 3 Mbps. Library span [28, 44] dB.
inline SceneLibrary default_scene_library() {
  return SceneLibrary({
      Scene{1,
            QbCurve({{1.0, 28.0}, {4.0, 31.0}, {10.0, 33.5}, {19.0, 35.0}, {30.0, 37.0},
                     {50.0, 39.5}}),
            "complex"},
      Scene{2,
            QbCurve({{1.0, 28.0}, {2.0, 32.0}, {3.0, 35.0}, {6.0, 38.5}, {12.0, 41.0},
                     {25.0, 43.0}, {50.0, 44.0}}),
            "simple"},
  });
}

struct SceneEntry {
  int scene_id;
  double start_ms;
};

/// Per-UE ordered list of scene changes. The first entry starts at t = 0.
class SceneSchedule {
 public:
  SceneSchedule() = default;
  explicit SceneSchedule(std::vector<SceneEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty() || entries_.front().start_ms != 0.0)
      throw std::invalid_argument("scene schedule must start at t=0");
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (!(entries_[i].start_ms > entries_[i - 1].start_ms))
        throw std::invalid_argument("scene schedule start times must be strictly increasing");
  }

  std::span<const SceneEntry> entries() const noexcept { return entries_; }

  int scene_at(double t_ms) const {
    auto it = std::upper_bound(entries_.begin(), entries_.end(), t_ms,
                               [](double t, const SceneEntry& e) { return t < e.start_ms; });
    return (it == entries_.begin() ? *it : *(it - 1)).scene_id;
  }

 private:
  std::vector<SceneEntry> entries_;
};

struct SceneScheduleParams {
  double mean_duration_ms = 3500.0;
  double min_duration_ms = 500.0;
};

/// Scene durations are min_duration + Exp(mean - min): an exponential truncated
/// below at min_duration with the configured overall mean. Each switch moves to a
/// scene different from the current one, drawn uniformly.
inline SceneSchedule make_scene_schedule(const SceneLibrary& lib, double horizon_ms, Rng& rng,
                                         const SceneScheduleParams& p = {}) {
  if (!(p.mean_duration_ms > p.min_duration_ms) || p.min_duration_ms < 0.0)
    throw std::invalid_argument("scene duration parameters invalid");
  const auto n = lib.size();
  auto pick = [&](std::optional<std::size_t> current) {
    if (!current || n == 1) return static_cast<std::size_t>(rng.uniform() * n) % n;
    auto k = static_cast<std::size_t>(rng.uniform() * (n - 1)) % (n - 1);
    return k >= *current ? k + 1 : k;
  };
  std::vector<SceneEntry> out;
  std::size_t cur = pick(std::nullopt);
  double t = 0.0;
  out.push_back({lib.at(cur).id, 0.0});
  while (true) {
    t += p.min_duration_ms + rng.exponential(p.mean_duration_ms - p.min_duration_ms);
    if (t >= horizon_ms) break;
    cur = pick(cur);
    out.push_back({lib.at(cur).id, t});
  }
  return SceneSchedule(std::move(out));
}

// ---------------------------------------------------------------------------
// Frames

struct FrameRecord {
  int ue_id = 0;
  std::int64_t frame_index = 0;
  std::int64_t size_bits = 0;
  double target_mbps = 0.0;
  int scene_id = 0;
  double encode_psnr = 0.0;
  double t_generated = 0.0;
  double t_encoded = 0.0;
  std::optional<double> t_enqueued_at_ran;
  std::optional<double> t_fully_delivered;
  std::optional<double> t_displayed;
};

/// round(rate / fps), in bits.
inline std::int64_t frame_size_bits(double rate_mbps, double fps) {
  return static_cast<std::int64_t>(std::llround(rate_mbps * 1e6 / fps));
}

struct SourceParams {
  double fps = 60.0;
  double encode_delay_ms = 1.0;
  double phase_ms = 0.0;  ///< generation time of frame 0
};

/// Periodic frame generator. The target bitrate is the only mutable input and is
/// owned by whoever runs the event loop.
class VideoSource {
 public:
  VideoSource(int ue_id, const SceneLibrary& lib, SceneSchedule schedule, SourceParams params,
              double initial_rate_mbps)
      : ue_id_(ue_id), lib_(&lib), schedule_(std::move(schedule)), params_(params),
        rate_mbps_(initial_rate_mbps) {
    if (!(params_.fps > 0.0)) throw std::invalid_argument("fps must be positive");
  }

  double period_ms() const noexcept { return 1000.0 / params_.fps; }
  double fps() const noexcept { return params_.fps; }
  double target_rate() const noexcept { return rate_mbps_; }
  void set_target_rate(double mbps) noexcept { rate_mbps_ = mbps; }
  const SceneSchedule& schedule() const noexcept { return schedule_; }
  const Scene& active_scene(double t_ms) const { return lib_->by_id(schedule_.scene_at(t_ms)); }

  double next_generation_time() const noexcept {
    return params_.phase_ms + static_cast<double>(next_index_) * period_ms();
  }

  /// Emit the next frame, stamped with the target rate in force now.
  FrameRecord generate() {
    FrameRecord f;
    f.ue_id = ue_id_;
    f.frame_index = next_index_;
    f.t_generated = next_generation_time();
    f.t_encoded = f.t_generated + params_.encode_delay_ms;
    f.target_mbps = rate_mbps_;
    f.size_bits = frame_size_bits(rate_mbps_, params_.fps);
    const Scene& s = active_scene(f.t_generated);
    f.scene_id = s.id;
    f.encode_psnr = rate_mbps_ > 0.0 ? s.curve.quality(rate_mbps_) : 0.0;
    ++next_index_;
    return f;
  }

 private:
  int ue_id_;
  const SceneLibrary* lib_;
  SceneSchedule schedule_;
  SourceParams params_;
  double rate_mbps_;
  std::int64_t next_index_ = 0;
};

}  // namespace uxrc
