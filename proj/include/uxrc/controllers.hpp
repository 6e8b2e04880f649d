// uxrc/controllers.hpp
//
// Rate control: the content-aware allocators (MaxCap, MaxMin, their link-price
// device updates, UX satisfaction reports, OTT UX-aware control) and the
// content-unaware baselines (RTT-based control, Prague), plus the stateful
// controller objects the simulator drives at each control tick.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "uxrc/media.hpp"
#include "uxrc/radio.hpp"

namespace uxrc {

enum class UnadmittedPolicy { share, strict };

struct ControllerConfig {
  // content-aware allocation
  double mu_target = 0.9;
  double gamma_db = 35.0;
  double maxmin_q_min_db = 30.0;
  double maxmin_q_max_db = 40.0;
  double maxmin_tolerance_db = 0.5;
  double price_step = 0.01;
  double price_initial = 1.0;
  double price_quality_scale_db = 40.0;  ///< MaxMin device target is scale / lambda
  double t_period_qoe_ms = 33.0;
  double d_stall_ms = 100.0;
  UnadmittedPolicy maxcap_unadmitted = UnadmittedPolicy::share;
  // UX-aware PF
  double sigma = 0.5;
  // RTT-based and OTT UX-aware control
  double rtt_low_ms = 8.0;
  double rtt_high_ms = 10.0;
  double alpha_up = 1.1;
  double alpha_down = 0.9;
  double rtt_max_ms = 17.0;
  double ott_q_min_db = 30.0;
  double ott_q_max_db = 40.0;
  double q_upper = 1.1;
  double q_lower = 0.9;
  double t_period_rtt_ms = 50.0;
  double t_win_rtt_ms = 100.0;
  // source limits
  double rate_floor_mbps = kMinSourceRateMbps;
  double rate_cap_mbps = kMaxSourceRateMbps;
  double initial_rate_mbps = 10.0;
  double packet_bits = 12000.0;

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("controller config: ") + what);
    };
    require(mu_target > 0.0 && mu_target <= 1.0, "mu_target must be in (0, 1]");
    require(maxmin_q_min_db < maxmin_q_max_db, "maxmin q_min must be below q_max");
    require(ott_q_min_db < ott_q_max_db, "ott q_min must be below q_max");
    require(maxmin_tolerance_db > 0.0, "maxmin tolerance must be positive");
    require(price_step > 0.0, "price step must be positive");
    require(price_initial >= 0.0, "initial price must be nonnegative");
    require(price_quality_scale_db > 0.0, "price quality scale must be positive");
    require(sigma > 0.0, "sigma must be positive");
    require(alpha_down < 1.0 && 1.0 < alpha_up && alpha_down > 0.0, "need 0 < alpha_down < 1 < alpha_up");
    require(rtt_low_ms < rtt_high_ms, "need rtt_low < rtt_high");
    require(rtt_max_ms > 0.0, "rtt_max must be positive");
    require(q_lower < q_upper, "need q_lower < q_upper");
    require(t_period_qoe_ms > 0.0 && t_period_rtt_ms > 0.0 && t_win_rtt_ms > 0.0,
            "control periods must be positive");
    require(d_stall_ms > 0.0, "d_stall must be positive");
    require(0.0 <= rate_floor_mbps && rate_floor_mbps < rate_cap_mbps, "rate bounds invalid");
    require(initial_rate_mbps >= rate_floor_mbps && initial_rate_mbps <= rate_cap_mbps,
            "initial rate outside bounds");
    require(packet_bits > 0.0, "packet size must be positive");
  }
};

struct ControllerDiagnostics {
  std::optional<double> lambda;
  std::optional<double> q_common_db;
  int iterations = 0;
  bool infeasible = false;
  std::vector<std::string_view> regions;
};

struct ControllerDecision {
  std::vector<double> rates_mbps;
  std::vector<bool> admitted;          ///< MaxCap variants only
  std::vector<double> satisfaction;    ///< UX-aware PF only
  ControllerDiagnostics diag;
};

namespace detail {
template <typename T>
const auto& deref(const T& x) {
  if constexpr (std::is_pointer_v<T>)
    return *x;
  else
    return x;
}
inline constexpr double kSlack = 1e-9;
}  // namespace detail

// ---------------------------------------------------------------------------
// Network-centered MaxCap

struct MaxCapOptions {
  double mu_target = 0.9;
  UnadmittedPolicy unadmitted = UnadmittedPolicy::share;
  double rate_floor_mbps = kMinSourceRateMbps;
  double rate_cap_mbps = kMaxSourceRateMbps;
};

/// Admit UEs in ascending order of required resource share g_n = Q_n^-1(gamma_n)/C_n.
///
/// If everyone fits, the residual share is split evenly. Otherwise the largest
/// prefix that fits is admitted at exactly its requirement and the leftover share
/// is split evenly among the rest. In share mode the source-rate floor of every
/// unadmitted UE is reserved before admitting, so clamping to the floor cannot push
/// the total share above mu_target; strict mode sends unadmitted UEs 0 Mbps.
template <typename Curves>
ControllerDecision maxcap_allocate(const Curves& curves, std::span<const double> gammas_db,
                                   std::span<const double> capacities_mbps,
                                   const MaxCapOptions& opt = {}) {
  const std::size_t n = capacities_mbps.size();
  if (std::size(curves) != n || gammas_db.size() != n)
    throw std::invalid_argument("maxcap_allocate: input sizes differ");
  ControllerDecision d;
  if (n == 0) return d;
  d.rates_mbps.assign(n, 0.0);
  d.admitted.assign(n, false);

  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = invert_quality(detail::deref(curves[i]), gammas_db[i]) / capacities_mbps[i];
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  const double mu = opt.mu_target;
  const bool share = opt.unadmitted == UnadmittedPolicy::share;

  if (total <= mu + detail::kSlack) {
    const double extra = (mu - total) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      d.admitted[i] = true;
      d.rates_mbps[i] = std::clamp((g[i] + extra) * capacities_mbps[i], opt.rate_floor_mbps,
                                   opt.rate_cap_mbps);
    }
    return d;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return g[a] < g[b]; });

  auto floor_share = [&](std::size_t i) {
    return share ? opt.rate_floor_mbps / capacities_mbps[i] : 0.0;
  };
  // suffix_floor[m]: floor shares of order[m..n)
  std::vector<double> suffix_floor(n + 1, 0.0);
  for (std::size_t m = n; m-- > 0;) suffix_floor[m] = suffix_floor[m + 1] + floor_share(order[m]);

  std::size_t admitted = 0;
  double used = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    if (used + g[order[m]] + suffix_floor[m + 1] > mu + detail::kSlack) break;
    used += g[order[m]];
    admitted = m + 1;
  }
  for (std::size_t m = 0; m < admitted; ++m) {
    const auto i = order[m];
    d.admitted[i] = true;
    d.rates_mbps[i] = std::clamp(g[i] * capacities_mbps[i], opt.rate_floor_mbps, opt.rate_cap_mbps);
  }
  if (!share) return d;  // unadmitted stay at 0 Mbps

  // Even split of the leftover share; UEs whose even share falls below the
  // floor are pinned there and the rest re-split.
  std::vector<std::size_t> open(order.begin() + static_cast<std::ptrdiff_t>(admitted), order.end());
  double remaining = std::max(0.0, mu - used);
  bool changed = true;
  while (changed && !open.empty()) {
    changed = false;
    const double each = remaining / static_cast<double>(open.size());
    for (auto it = open.begin(); it != open.end();) {
      if (each * capacities_mbps[*it] < opt.rate_floor_mbps) {
        d.rates_mbps[*it] = opt.rate_floor_mbps;
        remaining = std::max(0.0, remaining - floor_share(*it));
        it = open.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  if (!open.empty()) {
    const double each = remaining / static_cast<double>(open.size());
    for (auto i : open)
      d.rates_mbps[i] = std::clamp(each * capacities_mbps[i], opt.rate_floor_mbps, opt.rate_cap_mbps);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Network-centered MaxMin

struct MaxMinOptions {
  double mu_target = 0.9;
  double q_min_db = 30.0;
  double q_max_db = 40.0;
  double tolerance_db = 0.5;
  double rate_floor_mbps = kMinSourceRateMbps;
  double rate_cap_mbps = kMaxSourceRateMbps;
};

/// Bisection on a common quality level. The bracket [lo, hi] keeps lo feasible
/// and hi infeasible; once it is no wider than the tolerance, rates are placed on
/// the chord between the two endpoint allocations so that the share budget is
/// used exactly (every UE's quality then lies inside the final bracket).
template <typename Curves>
ControllerDecision maxmin_allocate(const Curves& curves, std::span<const double> capacities_mbps,
                                   const MaxMinOptions& opt = {}) {
  const std::size_t n = capacities_mbps.size();
  if (std::size(curves) != n) throw std::invalid_argument("maxmin_allocate: input sizes differ");
  if (!(opt.q_min_db < opt.q_max_db)) throw std::invalid_argument("maxmin_allocate: q_min >= q_max");
  ControllerDecision d;
  if (n == 0) return d;

  auto rates_at = [&](double q) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = invert_quality(detail::deref(curves[i]), q);
    return r;
  };
  auto share_of = [&](const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += r[i] / capacities_mbps[i];
    return s;
  };
  auto finish = [&](std::vector<double> r, double q) {
    for (auto& x : r) x = std::clamp(x, opt.rate_floor_mbps, opt.rate_cap_mbps);
    d.rates_mbps = std::move(r);
    d.diag.q_common_db = q;
    return d;
  };

  const double mu = opt.mu_target;
  auto r_hi = rates_at(opt.q_max_db);
  if (share_of(r_hi) <= mu + detail::kSlack) return finish(std::move(r_hi), opt.q_max_db);
  auto r_lo = rates_at(opt.q_min_db);
  if (share_of(r_lo) > mu + detail::kSlack) {
    d.diag.infeasible = true;
    return finish(std::move(r_lo), opt.q_min_db);
  }

  double lo = opt.q_min_db, hi = opt.q_max_db;
  while (hi - lo > opt.tolerance_db) {
    const double mid = 0.5 * (lo + hi);
    ++d.diag.iterations;
    auto r_mid = rates_at(mid);
    const double s = share_of(r_mid);
    if (s > mu) {
      hi = mid;
      r_hi = std::move(r_mid);
    } else if (s < mu) {
      lo = mid;
      r_lo = std::move(r_mid);
    } else {
      return finish(std::move(r_mid), mid);
    }
  }

  const double s_lo = share_of(r_lo), s_hi = share_of(r_hi);
  const double theta = s_hi > s_lo ? std::clamp((mu - s_lo) / (s_hi - s_lo), 0.0, 1.0) : 0.0;
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = r_lo[i] + theta * (r_hi[i] - r_lo[i]);
  return finish(std::move(r), lo + theta * (hi - lo));
}

// ---------------------------------------------------------------------------
// Network-assisted (link price)

struct LinkPriceState {
  double lambda = 1.0;
};

inline LinkPriceState link_price_update(LinkPriceState state, std::span<const double> rates_mbps,
                                        std::span<const double> capacities_mbps, double mu_target,
                                        double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("link price step must be positive");
  double load = 0.0;
  for (std::size_t i = 0; i < rates_mbps.size(); ++i) load += rates_mbps[i] / capacities_mbps[i];
  state.lambda = std::max(0.0, state.lambda + delta * (load - mu_target));
  return state;
}

/// Device-side MaxCap response to the price: full requirement or nothing.
template <QualityCurve C>
double maxcap_device_update(double lambda, const C& curve, double gamma_db, double capacity_mbps) {
  const double need = invert_quality(curve, gamma_db);
  return lambda * need / capacity_mbps < 1.0 ? need : 0.0;
}

struct MaxMinDeviceOptions {
  double quality_scale_db = 1.0;  ///< target quality is scale / lambda
  double q_min_db = -std::numeric_limits<double>::infinity();
  double q_max_db = std::numeric_limits<double>::infinity();
  double rate_floor_mbps = kMinSourceRateMbps;
  double rate_cap_mbps = kMaxSourceRateMbps;
};

/// Device-side MaxMin response: operate at the common quality target implied by
/// the price. A zero price means an unconstrained network.
template <QualityCurve C>
double maxmin_device_update(double lambda, const C& curve, const MaxMinDeviceOptions& opt = {}) {
  if (!(lambda > 0.0)) return opt.rate_cap_mbps;
  const double target = std::clamp(opt.quality_scale_db / lambda, opt.q_min_db, opt.q_max_db);
  return std::clamp(invert_quality(curve, target), opt.rate_floor_mbps, opt.rate_cap_mbps);
}

// ---------------------------------------------------------------------------
// UX-aware PF satisfaction report

template <QualityCurve C>
double satisfaction_factor(double r_avg_mbps, const C& curve, double gamma_db, double sigma) {
  return 1.0 / (1.0 + std::exp(-sigma * (r_avg_mbps - invert_quality(curve, gamma_db))));
}

// ---------------------------------------------------------------------------
// OTT steps

inline double rtt_baseline_step(std::optional<double> avg_rtt_ms, double rate_mbps,
                                const ControllerConfig& cfg) {
  if (!avg_rtt_ms) return rate_mbps;
  double r = rate_mbps;
  if (*avg_rtt_ms < cfg.rtt_low_ms)
    r *= cfg.alpha_up;
  else if (*avg_rtt_ms > cfg.rtt_high_ms)
    r *= cfg.alpha_down;
  return std::clamp(r, cfg.rate_floor_mbps, cfg.rate_cap_mbps);
}

struct OttStep {
  double rate_mbps;
  std::string_view region;  ///< "increase", "decrease" or "hold"
};

/// Joint RTT/PSNR score: rtt / rtt_max + (psnr - q_min) / (q_max - q_min).
inline double ott_ux_score(double avg_rtt_ms, double psnr_db, const ControllerConfig& cfg) {
  return avg_rtt_ms / cfg.rtt_max_ms + (psnr_db - cfg.ott_q_min_db) / (cfg.ott_q_max_db - cfg.ott_q_min_db);
}

inline OttStep ott_ux_step(std::optional<double> avg_rtt_ms, std::optional<double> psnr_db,
                           double rate_mbps, const ControllerConfig& cfg) {
  if (!avg_rtt_ms || !psnr_db) return {rate_mbps, "hold"};
  const double s = ott_ux_score(*avg_rtt_ms, *psnr_db, cfg);
  if (s < cfg.q_lower)
    return {std::clamp(rate_mbps * cfg.alpha_up, cfg.rate_floor_mbps, cfg.rate_cap_mbps), "increase"};
  if (s > cfg.q_upper)
    return {std::clamp(rate_mbps * cfg.alpha_down, cfg.rate_floor_mbps, cfg.rate_cap_mbps), "decrease"};
  return {std::clamp(rate_mbps, cfg.rate_floor_mbps, cfg.rate_cap_mbps), "hold"};
}

struct PragueFeedback {
  long unmarked = 0;   ///< unmarked packets acknowledged in this batch
  double m_ecn = 0.0;  ///< marked fraction; nonzero only when a once-per-RTT reduction is due
  bool loss = false;
};

/// One Prague update. Additive increase of packet/RTT per RTT, spread over the
/// acks of a window (increment per ack = pkt^2 / (rate * rtt^2)); multiplicative
/// decrease by (1 - m_ecn/2) on marks and by 1/2 on loss.
inline double prague_step(const PragueFeedback& fb, double rate_mbps, double rtt_ms,
                          double packet_bits = 12000.0, double floor_mbps = kMinSourceRateMbps,
                          double cap_mbps = kMaxSourceRateMbps) {
  double r = std::max(rate_mbps, 1e-9);
  const double rtt_s = std::max(rtt_ms, 1e-3) / 1000.0;
  const double pkt_mb = packet_bits / 1e6;
  for (long i = 0; i < fb.unmarked; ++i) r += pkt_mb * pkt_mb / (r * rtt_s * rtt_s);
  if (fb.m_ecn > 0.0) r *= 1.0 - std::clamp(fb.m_ecn, 0.0, 1.0) / 2.0;
  if (fb.loss) r *= 0.5;
  return std::clamp(r, floor_mbps, cap_mbps);
}

// ---------------------------------------------------------------------------
// Controller objects driven by the simulator

enum class Scheme {
  maxcap_central,
  maxmin_central,
  maxcap_assisted,
  maxmin_assisted,
  ux_pf,
  ott_ux,
  rtt_baseline,
  prague,
};

inline constexpr std::array<Scheme, 8> kAllSchemes = {
    Scheme::maxcap_central, Scheme::maxmin_central, Scheme::maxcap_assisted, Scheme::maxmin_assisted,
    Scheme::ux_pf,          Scheme::ott_ux,         Scheme::rtt_baseline,    Scheme::prague};

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::maxcap_central: return "maxcap-central";
    case Scheme::maxmin_central: return "maxmin-central";
    case Scheme::maxcap_assisted: return "maxcap-assisted";
    case Scheme::maxmin_assisted: return "maxmin-assisted";
    case Scheme::ux_pf: return "ux-pf";
    case Scheme::ott_ux: return "ott-ux";
    case Scheme::rtt_baseline: return "rtt-baseline";
    case Scheme::prague: return "prague";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (auto s : kAllSchemes)
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

/// What a controller may observe about one UE at a tick.
struct UeView {
  const QbCurve* curve = nullptr;  ///< active scene curve
  double capacity_mbps = 0.0;      ///< network estimate C_n
  double rate_mbps = 0.0;          ///< source rate in force
  double r_avg_mbps = 0.0;         ///< scheduler's averaged throughput
  std::optional<double> avg_rtt_ms;
  std::optional<double> avg_psnr_db;
};

struct CellView {
  double now_ms = 0.0;
  std::vector<UeView> ues;
};

/// Pure state machine: tick(observations) -> decision.
class RateController {
 public:
  virtual ~RateController() = default;
  virtual Scheme scheme() const = 0;
  /// Tick cadence; every controller ticks at least on this period.
  virtual double period_ms() const = 0;
  virtual ControllerDecision tick(const CellView& view) = 0;
  virtual SchedulerPolicy scheduler() const { return SchedulerPolicy::pf; }
  /// Prague-style ack processing; returns the new rate if the controller reacts to acks.
  virtual std::optional<double> on_acks(int /*ue*/, double /*now_ms*/, long /*unmarked*/,
                                        long /*marked*/, double /*rtt_sample_ms*/,
                                        double /*rate_mbps*/) {
    return std::nullopt;
  }
  /// Whether the controller changes the resource-share load the network must carry
  /// (used for constraint-load bookkeeping of the optimal schemes).
  virtual bool allocates_shares() const { return false; }
};

namespace detail {
inline std::vector<const QbCurve*> curves_of(const CellView& v) {
  std::vector<const QbCurve*> c;
  c.reserve(v.ues.size());
  for (const auto& u : v.ues) c.push_back(u.curve);
  return c;
}
inline std::vector<double> capacities_of(const CellView& v) {
  std::vector<double> c;
  c.reserve(v.ues.size());
  for (const auto& u : v.ues) c.push_back(u.capacity_mbps);
  return c;
}
inline std::vector<double> rates_of(const CellView& v) {
  std::vector<double> c;
  c.reserve(v.ues.size());
  for (const auto& u : v.ues) c.push_back(u.rate_mbps);
  return c;
}
}  // namespace detail

class MaxCapCentral final : public RateController {
 public:
  explicit MaxCapCentral(ControllerConfig cfg) : cfg_(cfg) {}
  Scheme scheme() const override { return Scheme::maxcap_central; }
  double period_ms() const override { return cfg_.t_period_qoe_ms; }
  bool allocates_shares() const override { return true; }
  ControllerDecision tick(const CellView& v) override {
    const auto curves = detail::curves_of(v);
    const auto caps = detail::capacities_of(v);
    const std::vector<double> gammas(v.ues.size(), cfg_.gamma_db);
    return maxcap_allocate(curves, gammas, caps,
                           {cfg_.mu_target, cfg_.maxcap_unadmitted, cfg_.rate_floor_mbps, cfg_.rate_cap_mbps});
  }

 private:
  ControllerConfig cfg_;
};

class MaxMinCentral final : public RateController {
 public:
  explicit MaxMinCentral(ControllerConfig cfg) : cfg_(cfg) {}
  Scheme scheme() const override { return Scheme::maxmin_central; }
  double period_ms() const override { return cfg_.t_period_qoe_ms; }
  bool allocates_shares() const override { return true; }
  ControllerDecision tick(const CellView& v) override {
    const auto curves = detail::curves_of(v);
    const auto caps = detail::capacities_of(v);
    return maxmin_allocate(curves, caps,
                           {cfg_.mu_target, cfg_.maxmin_q_min_db, cfg_.maxmin_q_max_db,
                            cfg_.maxmin_tolerance_db, cfg_.rate_floor_mbps, cfg_.rate_cap_mbps});
  }

 private:
  ControllerConfig cfg_;
};

/// Network broadcasts a link price; each device answers with its local optimum.
/// At tick k devices apply the price broadcast at tick k-1, then the network
/// prices the resulting load and broadcasts again.
class LinkPriceController : public RateController {
 public:
  explicit LinkPriceController(ControllerConfig cfg) : cfg_(cfg), price_{cfg.price_initial} {}
  double period_ms() const override { return cfg_.t_period_qoe_ms; }
  bool allocates_shares() const override { return true; }
  double lambda() const noexcept { return price_.lambda; }

  ControllerDecision tick(const CellView& v) override {
    ControllerDecision d;
    const auto n = v.ues.size();
    d.rates_mbps.resize(n);
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] = device_rate(price_.lambda, v.ues[i]);
      d.rates_mbps[i] = raw[i];
    }
    fill_admission(d, raw);
    for (auto& r : d.rates_mbps) {
      if (r == 0.0 && cfg_.maxcap_unadmitted == UnadmittedPolicy::strict) continue;
      r = std::clamp(r, cfg_.rate_floor_mbps, cfg_.rate_cap_mbps);
    }
    const auto caps = detail::capacities_of(v);
    price_ = link_price_update(price_, d.rates_mbps, caps, cfg_.mu_target, cfg_.price_step);
    price_.lambda = std::max(price_.lambda, price_floor());
    d.diag.lambda = price_.lambda;
    return d;
  }

 protected:
  virtual double device_rate(double lambda, const UeView& ue) const = 0;
  virtual void fill_admission(ControllerDecision&, const std::vector<double>&) const {}
  virtual double price_floor() const { return 0.0; }
  ControllerConfig cfg_;

 private:
  LinkPriceState price_;
};

class MaxCapAssisted final : public LinkPriceController {
 public:
  using LinkPriceController::LinkPriceController;
  Scheme scheme() const override { return Scheme::maxcap_assisted; }

 protected:
  double device_rate(double lambda, const UeView& ue) const override {
    return maxcap_device_update(lambda, *ue.curve, cfg_.gamma_db, ue.capacity_mbps);
  }
  void fill_admission(ControllerDecision& d, const std::vector<double>& raw) const override {
    d.admitted.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) d.admitted[i] = raw[i] > 0.0;
  }
};

class MaxMinAssisted final : public LinkPriceController {
 public:
  using LinkPriceController::LinkPriceController;
  Scheme scheme() const override { return Scheme::maxmin_assisted; }

 protected:
  double device_rate(double lambda, const UeView& ue) const override {
    return maxmin_device_update(lambda, *ue.curve,
                                {cfg_.price_quality_scale_db, cfg_.maxmin_q_min_db, cfg_.maxmin_q_max_db,
                                 cfg_.rate_floor_mbps, cfg_.rate_cap_mbps});
  }
  // below scale / q_max every UE already sits at q_max
  double price_floor() const override { return cfg_.price_quality_scale_db / cfg_.maxmin_q_max_db; }
};

/// RTT baseline: multiplicative up/down on the windowed average RTT.
class RttBaseline final : public RateController {
 public:
  explicit RttBaseline(ControllerConfig cfg) : cfg_(cfg) {}
  Scheme scheme() const override { return Scheme::rtt_baseline; }
  double period_ms() const override { return cfg_.t_period_rtt_ms; }
  ControllerDecision tick(const CellView& v) override {
    ControllerDecision d;
    for (const auto& u : v.ues) d.rates_mbps.push_back(rtt_baseline_step(u.avg_rtt_ms, u.rate_mbps, cfg_));
    return d;
  }

 private:
  ControllerConfig cfg_;
};

/// OTT UX-aware control on the (RTT, PSNR) plane.
class OttUx final : public RateController {
 public:
  explicit OttUx(ControllerConfig cfg) : cfg_(cfg) {}
  Scheme scheme() const override { return Scheme::ott_ux; }
  double period_ms() const override { return cfg_.t_period_rtt_ms; }
  ControllerDecision tick(const CellView& v) override {
    ControllerDecision d;
    for (const auto& u : v.ues) {
      const auto step = ott_ux_step(u.avg_rtt_ms, u.avg_psnr_db, u.rate_mbps, cfg_);
      d.rates_mbps.push_back(step.rate_mbps);
      d.diag.regions.push_back(step.region);
    }
    return d;
  }

 private:
  ControllerConfig cfg_;
};

/// Prague congestion control over L4S marking; optionally paired with UX-aware
/// PF scheduling, in which case every tick also produces satisfaction reports.
class PragueController final : public RateController {
 public:
  PragueController(ControllerConfig cfg, bool ux_aware, bool force_zero_satisfaction = false)
      : cfg_(cfg), ux_aware_(ux_aware), force_zero_(force_zero_satisfaction) {}
  Scheme scheme() const override { return ux_aware_ ? Scheme::ux_pf : Scheme::prague; }
  double period_ms() const override { return cfg_.t_period_qoe_ms; }
  SchedulerPolicy scheduler() const override {
    return ux_aware_ ? SchedulerPolicy::ux_pf : SchedulerPolicy::pf;
  }

  ControllerDecision tick(const CellView& v) override {
    ControllerDecision d;
    d.rates_mbps = detail::rates_of(v);
    if (ux_aware_) {
      for (const auto& u : v.ues)
        d.satisfaction.push_back(force_zero_ ? 0.0 : satisfaction_factor(u.r_avg_mbps, *u.curve, cfg_.gamma_db, cfg_.sigma));
    }
    return d;
  }

  std::optional<double> on_acks(int ue, double now_ms, long unmarked, long marked, double rtt_sample_ms,
                                double rate_mbps) override {
    auto& s = state_for(ue, now_ms);
    s.srtt_ms = s.srtt_ms > 0.0 ? 0.875 * s.srtt_ms + 0.125 * rtt_sample_ms : rtt_sample_ms;
    s.unmarked += unmarked;
    s.marked += marked;
    PragueFeedback fb{unmarked, 0.0, false};
    const bool window_done = now_ms - s.window_start_ms >= s.srtt_ms;
    if (window_done) {
      if (s.marked > 0) fb.m_ecn = static_cast<double>(s.marked) / static_cast<double>(s.marked + s.unmarked);
      s.window_start_ms = now_ms;
      s.marked = s.unmarked = 0;
    }
    return prague_step(fb, rate_mbps, s.srtt_ms, cfg_.packet_bits, cfg_.rate_floor_mbps, cfg_.rate_cap_mbps);
  }

 private:
  struct UeState {
    double srtt_ms = 0.0;
    double window_start_ms = 0.0;
    long marked = 0;
    long unmarked = 0;
  };
  UeState& state_for(int ue, double now_ms) {
    if (static_cast<std::size_t>(ue) >= state_.size()) state_.resize(static_cast<std::size_t>(ue) + 1);
    auto& s = state_[static_cast<std::size_t>(ue)];
    if (s.srtt_ms == 0.0) s.window_start_ms = now_ms;
    return s;
  }
  ControllerConfig cfg_;
  bool ux_aware_;
  bool force_zero_;
  std::vector<UeState> state_;
};

inline std::unique_ptr<RateController> make_controller(Scheme s, const ControllerConfig& cfg,
                                                       bool force_zero_satisfaction = false) {
  switch (s) {
    case Scheme::maxcap_central: return std::make_unique<MaxCapCentral>(cfg);
    case Scheme::maxmin_central: return std::make_unique<MaxMinCentral>(cfg);
    case Scheme::maxcap_assisted: return std::make_unique<MaxCapAssisted>(cfg);
    case Scheme::maxmin_assisted: return std::make_unique<MaxMinAssisted>(cfg);
    case Scheme::ux_pf: return std::make_unique<PragueController>(cfg, true, force_zero_satisfaction);
    case Scheme::ott_ux: return std::make_unique<OttUx>(cfg);
    case Scheme::rtt_baseline: return std::make_unique<RttBaseline>(cfg);
    case Scheme::prague: return std::make_unique<PragueController>(cfg, false);
  }
  throw std::invalid_argument("unknown scheme");
}

}  // namespace uxrc
