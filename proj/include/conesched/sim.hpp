#pragma once

// Event-driven simulation of the workload X(t) under a cone schedule, plus a
// forward-Euler integrator used as an independent cross-check.
//
// Between events X moves linearly with slope (arrival rate - applied service).
// Events: environment switches, arrival jumps/windows, a queue emptying, a
// score crossing (another vector catching up with the selected one), lag
// breakpoints, and sampling instants. On a shared cone boundary or an orthant
// face the applied rate is the time-share resolved in detail/regime.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conesched/detail/regime.hpp"
#include "conesched/model.hpp"
#include "conesched/scheduler.hpp"
#include "conesched/traces.hpp"

namespace conesched {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  /// Sampling period; 0 means horizon / 1000.
  double sample_stride = 0.0;
  /// Also sample whenever the applied service rate changes.
  bool record_switches = true;
  std::uint64_t event_cap = 100'000'000;
  /// Selection uses X(max(0, t - info_lag)).
  double info_lag = 0.0;
  /// Relative perturbation of selection scores, redrawn at every environment switch.
  double selection_noise = 0.0;
  std::uint64_t noise_seed = 1;
  /// Empty means X(0) = 0.
  Vector initial_workload;
  /// Use service sets as given and rely on zeroing instead of requiring closure.
  bool implicit_closure = false;
};

struct Sample {
  double time = 0.0;
  Vector workload;
  std::size_t env = 0;
  Vector service;
  Vector arrived;
  Vector served;
};

struct EventCounts {
  std::uint64_t env_switch = 0;
  std::uint64_t rate_change = 0;
  std::uint64_t job_jump = 0;
  std::uint64_t queue_empty = 0;
  std::uint64_t cone_crossing = 0;
  std::uint64_t lag_update = 0;
  std::uint64_t total = 0;
};

struct UsageEntry {
  ServiceVector vector;
  double time = 0.0;
};

struct Trajectory {
  std::size_t queues = 0;
  double horizon = 0.0;
  Vector initial_workload;
  std::vector<Sample> samples;
  /// Cumulative integrals of A and S over [0, horizon].
  Vector arrived;
  Vector served;
  Vector final_workload;
  EventCounts events;
  /// Time spent in each environment.
  Vector occupancy;
  /// Per environment: time each effective service vector was applied
  /// (time-shared segments split by weight).
  std::vector<std::vector<UsageEntry>> usage;
  double sliding_time = 0.0;
  std::uint64_t sliding_regimes = 0;
  std::uint64_t unresolved_regimes = 0;
  std::uint64_t guard_activations = 0;
  std::uint64_t clamp_count = 0;
  double max_clamp = 0.0;
  bool fixed_step = false;
  double dt = 0.0;
};

/// Time applied to `s` in environment `env` (0 if never used).
inline double usage_time(const Trajectory& traj, std::size_t env, const ServiceVector& s) {
  if (env >= traj.usage.size()) return 0.0;
  for (const auto& u : traj.usage[env]) {
    if (u.vector == s) return u.time;
  }
  return 0.0;
}

/// Workload at time t, linear between samples.
inline Vector workload_at(const Trajectory& traj, double t) {
  if (traj.samples.empty()) throw std::invalid_argument("workload_at: empty trajectory");
  const auto& s = traj.samples;
  if (t <= s.front().time) return s.front().workload;
  if (t >= s.back().time) return s.back().workload;
  auto it = std::upper_bound(s.begin(), s.end(), t, [](double v, const Sample& a) { return v < a.time; });
  const Sample& hi = *it;
  const Sample& lo = *(it - 1);
  const double span = hi.time - lo.time;
  const double w = span > 0.0 ? (t - lo.time) / span : 1.0;
  Vector x(lo.workload.size());
  for (std::size_t q = 0; q < x.size(); ++q) x[q] = lo.workload[q] + w * (hi.workload[q] - lo.workload[q]);
  return x;
}

namespace detail {

/// Piecewise-linear record of X used to evaluate the lagged state.
class History {
 public:
  struct Segment {
    double t0;
    Vector x0;
    Vector drift;
  };

  void record(double t, const Vector& x, const Vector& drift, bool jumped) {
    if (!segs_.empty() && segs_.back().t0 == t) {
      segs_.back().x0 = x;
      segs_.back().drift = drift;
      return;
    }
    if (segs_.empty() || jumped || segs_.back().drift != drift) segs_.push_back({t, x, drift});
  }

  /// State and slope at time tau >= first recorded time (right-continuous).
  void observe(double tau, Vector& x, Vector& drift) const {
    auto it = std::upper_bound(segs_.begin(), segs_.end(), tau, [](double v, const Segment& s) { return v < s.t0; });
    const Segment& seg = *(it == segs_.begin() ? it : it - 1);
    drift = seg.drift;
    x.resize(seg.x0.size());
    const double h = tau - seg.t0;
    for (std::size_t q = 0; q < x.size(); ++q) x[q] = std::max(0.0, seg.x0[q] + h * seg.drift[q]);
  }

  double next_breakpoint_after(double tau) const {
    auto it = std::upper_bound(segs_.begin(), segs_.end(), tau, [](double v, const Segment& s) { return v < s.t0; });
    return it == segs_.end() ? kNever : it->t0;
  }

  void prune(double tau) {
    while (segs_.size() > 1 && segs_[1].t0 <= tau) segs_.pop_front();
  }

 private:
  std::deque<Segment> segs_;
};

class UsageBook {
 public:
  explicit UsageBook(std::size_t envs) : slots_(envs), entries_(envs) {}

  std::size_t slot(std::size_t env, const Vector& v) {
    ServiceVector key(v);
    auto [it, inserted] = slots_[env].try_emplace(key, entries_[env].size());
    if (inserted) entries_[env].push_back({key, 0.0});
    return it->second;
  }

  void add(std::size_t env, std::size_t slot, double t) { entries_[env][slot].time += t; }

  std::vector<std::vector<UsageEntry>> take() { return std::move(entries_); }

 private:
  std::vector<std::map<ServiceVector, std::size_t>> slots_;
  std::vector<std::vector<UsageEntry>> entries_;
};

struct SimSetup {
  SystemSpec spec;
  std::vector<std::vector<Vector>> base_scores;
  Vector x0;
  double stride = 0.0;
};

inline SimSetup prepare(const SystemSpec& input, const ScheduleMatrix& b, const TrafficTrace& traffic,
                        const EnvironmentTrace& env, double horizon, const SimOptions& opts) {
  const auto report = validate_system(input);
  if (!report.ok()) throw std::invalid_argument("simulate: invalid system: " + report.violations.front());
  if (b.dim() != input.queues) throw std::invalid_argument("simulate: matrix dimension differs from queue count");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("simulate: horizon must be positive");
  if (traffic.load.size() != input.queues) throw std::invalid_argument("simulate: traffic dimension mismatch");
  if (env.pi.size() != input.environments.size()) {
    throw std::invalid_argument("simulate: environment trace does not match the system");
  }
  if (!(opts.info_lag >= 0.0) || !std::isfinite(opts.info_lag)) throw std::invalid_argument("simulate: info_lag must be >= 0");
  if (!(opts.selection_noise >= 0.0) || opts.selection_noise >= 1.0) {
    throw std::invalid_argument("simulate: selection_noise must be in [0, 1)");
  }
  if (input.queues > 60) throw std::invalid_argument("simulate: at most 60 queues are supported");
  SimSetup s;
  s.spec = input;
  for (auto& e : s.spec.environments) {
    if (!e.completed && !opts.implicit_closure) e = make_environment(e.services, true);
  }
  for (const auto& e : s.spec.environments) s.base_scores.push_back(rates_of(e.services));
  s.x0 = opts.initial_workload.empty() ? Vector(input.queues, 0.0) : opts.initial_workload;
  if (s.x0.size() != input.queues) throw std::invalid_argument("simulate: initial workload dimension mismatch");
  for (double v : s.x0) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("simulate: initial workload must be finite and >= 0");
  }
  s.stride = opts.sample_stride > 0.0 ? opts.sample_stride : horizon / 1000.0;
  return s;
}

/// Draws perturbed score vectors w_S = S (1 + xi_S), xi_S ~ U[-eta, eta].
inline void perturb_scores(const std::vector<Vector>& base, double eta, std::mt19937_64& rng, std::vector<Vector>& out) {
  out = base;
  if (eta <= 0.0) return;
  for (auto& w : out) {
    const double xi = eta * (2.0 * uniform01(rng) - 1.0);
    for (double& v : w) v *= 1.0 + xi;
  }
}

class EventSimulator {
 public:
  EventSimulator(const SystemSpec& spec, const ScheduleMatrix& b, const TrafficTrace& traffic,
                 const EnvironmentTrace& env, double horizon, const SimOptions& opts)
      : setup_(prepare(spec, b, traffic, env, horizon, opts)),
        b_(b),
        opts_(opts),
        horizon_(horizon),
        n_(spec.queues),
        envp_(env),
        arrivals_(traffic, setup_.spec, b),
        noise_rng_(mix_seed(opts.noise_seed, 0x5E1)),
        usage_(spec.environments.size()) {
    scores_ = setup_.base_scores;
    x_ = setup_.x0;
    traj_.queues = n_;
    traj_.horizon = horizon;
    traj_.initial_workload = x_;
    traj_.arrived.assign(n_, 0.0);
    traj_.served.assign(n_, 0.0);
    traj_.occupancy.assign(spec.environments.size(), 0.0);
    lagged_ = opts.info_lag > 0.0;
  }

  Trajectory run() {
    redraw_noise();
    bool jumped = fire_arrivals(0.0);
    resolve(jumped);
    push_sample();
    next_sample_ = 1;
    bool last_was_crossing = false;
    double last_h = kNever;
    while (true) {
      const double t_sample = static_cast<double>(next_sample_) * setup_.stride;
      const double t_env = envp_.next_switch();
      const double t_arr = arrivals_.next_event();
      const double t_int = t_ + internal_.tau;
      double t_next = std::min({horizon_, t_sample, t_env, t_arr, t_int});
      const double h = t_next - t_;
      integrate(h);
      stalled_ = h > 0.0 ? 0 : stalled_ + 1;
      if (stalled_ > 100000) throw SimulationError("simulate: no time progress at t=" + std::to_string(t_));
      t_ = t_next;
      if (t_ >= horizon_) break;
      if (++traj_.events.total > opts_.event_cap) {
        throw SimulationError("simulate: event cap exceeded (possible livelock or chattering)");
      }

      bool env_changed = false;
      while (envp_.next_switch() <= t_) {
        envp_.advance();
        env_changed = true;
      }
      if (env_changed) {
        ++traj_.events.env_switch;
        redraw_noise();
      }
      jumped = arrivals_.next_event() <= t_ ? fire_arrivals(t_) : false;
      const bool internal_hit = t_int <= t_next;
      if (internal_hit) {
        switch (internal_.kind) {
          case Internal::kEmpty: ++traj_.events.queue_empty; break;
          case Internal::kCrossing: ++traj_.events.cone_crossing; break;
          case Internal::kLag: ++traj_.events.lag_update; break;
          case Internal::kGuardEnd: break;
          case Internal::kNone: break;
        }
      }
      // Chattering guard: back-to-back crossings closer than 1e-12 suspend
      // crossing detection for a 1e-9 micro-step.
      const bool crossing = internal_hit && internal_.kind == Internal::kCrossing;
      if (crossing && last_was_crossing && h < 1e-12 && last_h < 1e-12 && t_ >= guard_until_) {
        guard_until_ = t_ + 1e-9;
        ++traj_.guard_activations;
      }
      last_was_crossing = crossing;
      last_h = h;

      snap();
      const Vector old_service = service_;
      resolve(jumped || env_changed);
      bool due = false;
      while (static_cast<double>(next_sample_) * setup_.stride <= t_) {
        ++next_sample_;
        due = true;
      }
      if (due || (opts_.record_switches && (jumped || service_ != old_service))) push_sample();
    }
    push_sample();
    traj_.final_workload = x_;
    traj_.usage = usage_.take();
    return std::move(traj_);
  }

 private:
  struct Internal {
    enum Kind { kNone, kEmpty, kCrossing, kLag, kGuardEnd };
    double tau = kNever;
    Kind kind = kNone;

    void offer(double t, Kind k) {
      if (t < tau) {
        tau = t;
        kind = k;
      }
    }
  };

  struct CacheKey {
    std::size_t env;
    std::uint64_t empty;
    std::vector<std::size_t> maximizers;
    Vector arrival;
    auto operator<=>(const CacheKey&) const = default;
  };

  struct CachedRegime {
    Regime regime;
    std::vector<std::size_t> slots;
  };

  void redraw_noise() {
    if (opts_.selection_noise <= 0.0) return;
    const std::size_t e = envp_.current();
    perturb_scores(setup_.base_scores[e], opts_.selection_noise, noise_rng_, scores_[e]);
    cache_.clear();
  }

  bool fire_arrivals(double t) {
    Vector observed = x_;
    if (lagged_) {
      Vector d;
      if (t - opts_.info_lag < 0.0) observed = setup_.x0;
      else history_.observe(t - opts_.info_lag, observed, d);
    }
    const Vector jump = arrivals_.fire(t, observed, envp_.current());
    bool any = false;
    for (std::size_t q = 0; q < n_; ++q) {
      if (jump[q] <= 0.0) continue;
      x_[q] += jump[q];
      traj_.arrived[q] += jump[q];
      any = true;
    }
    if (any) ++traj_.events.job_jump;
    return any;
  }

  void resolve(bool jumped) {
    const Vector& a = arrivals_.rate();
    if (a != last_rate_) {
      if (!last_rate_.empty()) ++traj_.events.rate_change;
      last_rate_ = a;
    }
    internal_ = Internal{};
    if (lagged_) resolve_lagged();
    else resolve_exact();
    drift_.resize(n_);
    for (std::size_t q = 0; q < n_; ++q) drift_[q] = a[q] - service_[q];
    for (std::size_t q = 0; q < n_; ++q) {
      if (x_[q] > 0.0 && drift_[q] < 0.0) internal_.offer(x_[q] / -drift_[q], Internal::kEmpty);
    }
    if (t_ < guard_until_) internal_.offer(guard_until_ - t_, Internal::kGuardEnd);
    if (lagged_) {
      history_.record(t_, x_, drift_, jumped);
      history_.prune(t_ - opts_.info_lag);
    }
  }

  void resolve_exact() {
    const std::size_t e = envp_.current();
    const auto& services = setup_.spec.environments[e].services;
    const auto& scores = scores_[e];
    const Vector& a = arrivals_.rate();
    const Vector bx = b_.apply(x_);
    values_.resize(services.size());
    double best = -kNever;
    for (std::size_t i = 0; i < services.size(); ++i) {
      values_[i] = dot(scores[i], bx);
      best = std::max(best, values_[i]);
    }
    maximizers_.clear();
    for (std::size_t i = 0; i < services.size(); ++i) {
      if (within_tie(values_[i], best, kTieTolerance)) maximizers_.push_back(i);
    }
    std::uint64_t empty = 0;
    for (std::size_t q = 0; q < n_; ++q) {
      if (x_[q] == 0.0) empty |= std::uint64_t{1} << q;
    }
    const std::size_t pick = maximizers_.front();
    Vector pure = services[pick].rates;
    for (std::size_t q = 0; q < n_; ++q) {
      if (x_[q] == 0.0 && pure[q] > 0.0) pure[q] = 0.0;
    }

    const CachedRegime* reg = nullptr;
    CachedRegime fast;
    if (maximizers_.size() == 1 && empty == 0) {
      fast.regime.support.push_back({pick, 0, pure});
      fast.regime.weights = {1.0};
      fast.regime.service = pure;
      fast.slots = {usage_.slot(e, pure)};
      reg = &fast;
    } else {
      CacheKey key{e, empty, maximizers_, a};
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        RegimeQuery qy;
        qy.scores = scores;
        qy.services = services;
        qy.maximizers = maximizers_;
        qy.empty_mask = empty;
        qy.arrival = a;
        qy.preferred = pure;
        CachedRegime c;
        c.regime = resolve_regime(b_, qy);
        if (!c.regime.resolved) {
          // No consistent time-share: apply the plain selection and pin
          // empty queues at their inflow.
          c.regime.support = {{pick, empty, pure}};
          c.regime.weights = {1.0};
          c.regime.service = pure;
          for (std::size_t q = 0; q < n_; ++q) {
            if (x_[q] == 0.0 && c.regime.service[q] > a[q]) c.regime.service[q] = a[q];
          }
        }
        for (const auto& m : c.regime.support) c.slots.push_back(usage_.slot(e, m.effective));
        it = cache_.emplace(std::move(key), std::move(c)).first;
      }
      reg = &it->second;
    }
    if (!reg->regime.resolved) ++traj_.unresolved_regimes;
    if (reg->regime.sliding()) ++traj_.sliding_regimes;
    service_ = reg->regime.service;
    weights_ = reg->regime.weights;
    slots_ = reg->slots;
    sliding_ = reg->regime.sliding();

    if (t_ < guard_until_) return;
    // Crossings: a vector outside the maximizer set catches up with the
    // maximizers along the current drift.
    Vector d(n_);
    for (std::size_t q = 0; q < n_; ++q) d[q] = a[q] - service_[q];
    const Vector bd = b_.apply(d);
    const double r_star = dot(scores[reg->regime.support.front().base], bd);
    const double bar = kTieTolerance * std::max(1.0, std::abs(best));
    for (std::size_t i = 0; i < services.size(); ++i) {
      const double gap = best - values_[i];
      if (gap <= bar) continue;
      const double r = dot(scores[i], bd);
      if (r - r_star <= 1e-12 * (1.0 + std::abs(r_star))) continue;
      internal_.offer(gap / (r - r_star), Internal::kCrossing);
    }
  }

  void resolve_lagged() {
    const std::size_t e = envp_.current();
    const auto& services = setup_.spec.environments[e].services;
    const auto& scores = scores_[e];
    const Vector& a = arrivals_.rate();
    const double tau = t_ - opts_.info_lag;
    Vector xo, dir;
    if (tau < 0.0) {
      xo = setup_.x0;
      dir.assign(n_, 0.0);
      internal_.offer(-tau, Internal::kLag);
    } else {
      // Breakpoints reached up to rounding count as passed.
      const double eps = 1e-12 * std::max(1.0, t_);
      double bp = history_.next_breakpoint_after(tau);
      double at = tau;
      while (bp - tau <= eps) {
        at = bp;
        bp = history_.next_breakpoint_after(bp);
      }
      history_.observe(at, xo, dir);
      for (std::size_t q = 0; q < n_; ++q) {
        if (dir[q] < 0.0 && xo[q] <= eps * (1.0 + max_abs(xo))) xo[q] = 0.0;
      }
      if (bp < kNever) internal_.offer(bp - tau, Internal::kLag);
    }
    const auto sel = select_scored(scores, services, b_, xo, dir, kTieTolerance);
    service_ = sel.chosen.rates;
    for (std::size_t q = 0; q < n_; ++q) {
      if (x_[q] == 0.0 && service_[q] > a[q]) service_[q] = a[q];
    }
    weights_ = {1.0};
    slots_ = {usage_.slot(e, sel.chosen.rates)};
    sliding_ = false;

    // Events of the lagged path: crossings and lagged empties change the
    // selection exactly `info_lag` after they happen to X.
    for (std::size_t q = 0; q < n_; ++q) {
      if (xo[q] > 0.0 && dir[q] < 0.0 && sel.chosen[q] > 0.0) internal_.offer(xo[q] / -dir[q], Internal::kLag);
    }
    if (t_ < guard_until_) return;
    const Vector bx = b_.apply(xo);
    const Vector bd = b_.apply(dir);
    const double best = dot(scores[sel.chosen_index], bx);
    const double r_star = dot(scores[sel.chosen_index], bd);
    const double bar = kTieTolerance * std::max(1.0, std::abs(best));
    for (std::size_t i = 0; i < services.size(); ++i) {
      const double gap = best - dot(scores[i], bx);
      if (gap <= bar) continue;
      const double r = dot(scores[i], bd);
      if (r - r_star <= 1e-12 * (1.0 + std::abs(r_star))) continue;
      internal_.offer(gap / (r - r_star), Internal::kCrossing);
    }
  }

  void integrate(double h) {
    if (h <= 0.0) return;
    const Vector& a = arrivals_.rate();
    const std::size_t e = envp_.current();
    for (std::size_t q = 0; q < n_; ++q) {
      x_[q] += h * (a[q] - service_[q]);
      traj_.arrived[q] += h * a[q];
      traj_.served[q] += h * service_[q];
    }
    traj_.occupancy[e] += h;
    for (std::size_t k = 0; k < slots_.size(); ++k) usage_.add(e, slots_[k], weights_[k] * h);
    if (sliding_) traj_.sliding_time += h;
  }

  /// Removes rounding residue at queues that reached zero. The residue is
  /// booked as served work so that flow balance stays exact.
  void snap() {
    const double scale = 1.0 + max_abs(x_);
    // Emptying times below the resolution of t cannot be stepped to.
    const double t_res = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, t_);
    for (std::size_t q = 0; q < n_; ++q) {
      if (x_[q] < -1e-9) {
        throw SimulationError("simulate: negative workload excursion at t=" + std::to_string(t_));
      }
      const bool draining = drift_[q] < 0.0 && (x_[q] <= 1e-12 * scale || x_[q] <= -drift_[q] * t_res);
      const bool residue = x_[q] < 0.0 || draining;
      if (!residue || x_[q] == 0.0) continue;
      const double r = x_[q];
      x_[q] = 0.0;
      traj_.served[q] += r;
      ++traj_.clamp_count;
      traj_.max_clamp = std::max(traj_.max_clamp, std::abs(r));
    }
  }

  void push_sample() {
    if (!traj_.samples.empty() && traj_.samples.back().time == t_) traj_.samples.pop_back();
    traj_.samples.push_back({t_, x_, envp_.current(), service_, traj_.arrived, traj_.served});
  }

  SimSetup setup_;
  const ScheduleMatrix& b_;
  SimOptions opts_;
  double horizon_;
  std::size_t n_;
  EnvironmentProcess envp_;
  ArrivalProcess arrivals_;
  std::mt19937_64 noise_rng_;
  UsageBook usage_;
  std::vector<std::vector<Vector>> scores_;
  bool lagged_ = false;
  History history_;
  std::map<CacheKey, CachedRegime> cache_;

  double t_ = 0.0;
  Vector x_;
  Vector service_;
  Vector drift_;
  Vector weights_;
  std::vector<std::size_t> slots_;
  bool sliding_ = false;
  Vector values_;
  std::vector<std::size_t> maximizers_;
  Vector last_rate_;
  Internal internal_;
  double guard_until_ = -kNever;
  std::uint64_t next_sample_ = 1;
  std::uint64_t stalled_ = 0;
  Trajectory traj_;
};

}  // namespace detail

inline Trajectory simulate(const SystemSpec& spec, const ScheduleMatrix& b, const TrafficTrace& traffic,
                           const EnvironmentTrace& env, double horizon, const SimOptions& opts = {}) {
  detail::EventSimulator sim(spec, b, traffic, env, horizon, opts);
  return sim.run();
}

/// Forward-Euler counterpart: re-selects at t = k·dt and holds the choice for
/// the step; arrivals inside a step are integrated exactly and X is clamped
/// at zero by reducing the applied service.
inline Trajectory simulate_fixed_step(const SystemSpec& spec, const ScheduleMatrix& b, const TrafficTrace& traffic,
                                      const EnvironmentTrace& env, double horizon, double dt,
                                      const SimOptions& opts = {}) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("simulate_fixed_step: dt must be positive");
  const auto setup = detail::prepare(spec, b, traffic, env, horizon, opts);
  const std::size_t n = spec.queues;
  EnvironmentProcess envp(env);
  ArrivalProcess arrivals(traffic, setup.spec, b);
  std::mt19937_64 noise_rng(detail::mix_seed(opts.noise_seed, 0x5E1));
  auto scores = setup.base_scores;
  auto redraw = [&] {
    if (opts.selection_noise > 0.0) {
      const std::size_t e = envp.current();
      detail::perturb_scores(setup.base_scores[e], opts.selection_noise, noise_rng, scores[e]);
    }
  };
  detail::UsageBook usage(spec.environments.size());

  Trajectory traj;
  traj.queues = n;
  traj.horizon = horizon;
  traj.initial_workload = setup.x0;
  traj.arrived.assign(n, 0.0);
  traj.served.assign(n, 0.0);
  traj.occupancy.assign(spec.environments.size(), 0.0);
  traj.fixed_step = true;
  traj.dt = dt;

  const auto steps = static_cast<std::uint64_t>(std::max(1.0, std::ceil(horizon / dt - 1e-9)));
  const auto stride_steps = static_cast<std::uint64_t>(std::max<long long>(1, std::llround(setup.stride / dt)));
  const auto lag_steps = static_cast<std::uint64_t>(std::floor(opts.info_lag / dt + 1e-9));
  std::deque<Vector> history;  // X at the last lag_steps + 1 grid points

  Vector x = setup.x0;
  Vector last_service;
  redraw();
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double t1 = k + 1 == steps ? horizon : std::min(horizon, static_cast<double>(k + 1) * dt);
    const double h = t1 - t;
    bool switched = false;
    while (envp.next_switch() <= t) {
      envp.advance();
      switched = true;
    }
    if (switched) {
      ++traj.events.env_switch;
      redraw();
    }
    const std::size_t e = envp.current();
    if (opts.info_lag > 0.0) {
      history.push_back(x);
      if (history.size() > lag_steps + 1) history.pop_front();
    }
    const Vector& observed = opts.info_lag > 0.0 ? (k >= lag_steps ? history.front() : setup.x0) : x;
    const auto sel = detail::select_scored(scores[e], setup.spec.environments[e].services, b, observed, {},
                                           kTieTolerance);
    const Vector& v = sel.chosen.rates;

    if (k % stride_steps == 0 || (opts.record_switches && v != last_service)) {
      traj.samples.push_back({t, x, e, v, traj.arrived, traj.served});
    }
    last_service = v;

    Vector inflow(n, 0.0);
    double tau = t;
    while (arrivals.next_event() <= t1 && arrivals.next_event() < kNever) {
      const double te = std::max(t, arrivals.next_event());
      for (std::size_t q = 0; q < n; ++q) inflow[q] += arrivals.rate()[q] * (te - tau);
      const Vector jump = arrivals.fire(te, observed, e);
      bool any = false;
      for (std::size_t q = 0; q < n; ++q) {
        inflow[q] += jump[q];
        any = any || jump[q] > 0.0;
      }
      if (any) ++traj.events.job_jump;
      tau = te;
    }
    for (std::size_t q = 0; q < n; ++q) inflow[q] += arrivals.rate()[q] * (t1 - tau);

    for (std::size_t q = 0; q < n; ++q) {
      double out = v[q] * h;
      double next = x[q] + inflow[q] - out;
      if (next < 0.0) {
        out += next;
        next = 0.0;
        ++traj.clamp_count;
      }
      x[q] = next;
      traj.arrived[q] += inflow[q];
      traj.served[q] += out;
    }
    traj.occupancy[e] += h;
    usage.add(e, usage.slot(e, v), h);
    ++traj.events.total;
  }
  traj.samples.push_back({horizon, x, envp.current(), last_service, traj.arrived, traj.served});
  traj.final_workload = x;
  traj.usage = usage.take();
  return traj;
}

}  // namespace conesched
