#pragma once

// Environment and traffic traces: validated descriptions (make_*) and the
// runtime processes the simulators step through. Every traffic kind keeps the
// released work of queue q inside [rho_q t - burst, rho_q t + burst] (jobs and
// fluid satisfy this by construction), so the long-run load is exactly rho.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "conesched/model.hpp"

namespace conesched {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

class TraceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void check_pi(std::span<const double> pi) {
  if (pi.empty()) throw TraceError("environment proportions are empty");
  double total = 0.0;
  for (double p : pi) {
    if (!std::isfinite(p) || p <= 0.0) throw TraceError("environment proportions must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw TraceError("environment proportions must sum to 1");
}

/// Uniform double in [0, 1) from the top 53 bits of the engine output.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double exponential(std::mt19937_64& rng, double mean) { return -mean * std::log(1.0 - uniform01(rng)); }

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline EnvironmentTrace make_env_trace(EnvTraceKind kind, Vector pi, double cycle, std::uint64_t seed = 1) {
  detail::check_pi(pi);
  if (!std::isfinite(cycle) || cycle <= 0.0) throw TraceError("environment cycle length must be positive");
  return EnvironmentTrace{kind, std::move(pi), cycle, seed};
}

inline TrafficTrace make_traffic(TrafficKind kind, Vector rho, TrafficParams params = {}) {
  if (rho.empty()) throw TraceError("traffic load is empty");
  for (double r : rho) {
    if (!std::isfinite(r) || r < 0.0) throw TraceError("traffic load entries must be finite and nonnegative");
  }
  if (params.job_size.empty()) params.job_size.assign(rho.size(), 1.0);
  if (params.job_size.size() == 1 && rho.size() > 1) params.job_size.assign(rho.size(), params.job_size.front());
  if (params.job_size.size() != rho.size()) throw TraceError("job size dimension mismatch");
  for (double s : params.job_size) {
    if (!std::isfinite(s) || s <= 0.0) throw TraceError("job sizes must be positive");
  }
  const bool adversarial = kind == TrafficKind::kAdversarialEnv || kind == TrafficKind::kAdversarialSchedule;
  if (adversarial && !(params.window > 0.0 && params.burst > 0.0)) {
    throw TraceError("adversarial traffic requires positive window and burst parameters");
  }
  if (kind == TrafficKind::kStochastic && params.burst <= 0.0) {
    params.burst = 10.0 * *std::max_element(params.job_size.begin(), params.job_size.end());
  }
  return TrafficTrace{kind, std::move(rho), std::move(params)};
}

/// Walks an environment trace forward in time.
class EnvironmentProcess {
 public:
  explicit EnvironmentProcess(const EnvironmentTrace& trace)
      : trace_(trace), rng_(detail::mix_seed(trace.seed, 0xE17)) {
    detail::check_pi(trace_.pi);
    double acc = 0.0;
    for (double p : trace_.pi) {
      offsets_.push_back(acc * trace_.cycle);
      acc += p;
    }
    if (trace_.kind == EnvTraceKind::kRandomHolding) hold_end_ = draw_hold(0);
  }

  std::size_t current() const noexcept { return env_; }
  std::size_t num_environments() const noexcept { return trace_.pi.size(); }

  double next_switch() const noexcept {
    const std::size_t n = trace_.pi.size();
    if (n == 1) return kNever;
    if (trace_.kind == EnvTraceKind::kRandomHolding) return hold_end_;
    const double base = static_cast<double>(cycle_index_) * trace_.cycle;
    return env_ + 1 < n ? base + offsets_[env_ + 1] : static_cast<double>(cycle_index_ + 1) * trace_.cycle;
  }

  void advance() {
    const std::size_t n = trace_.pi.size();
    if (n == 1) return;
    if (trace_.kind == EnvTraceKind::kRandomHolding) {
      const double start = hold_end_;
      env_ = (env_ + 1) % n;
      hold_end_ = start + draw_hold(env_);
      return;
    }
    if (++env_ == n) {
      env_ = 0;
      ++cycle_index_;
    }
  }

 private:
  double draw_hold(std::size_t e) {
    double h = 0.0;
    while (h <= 0.0) h = detail::exponential(rng_, trace_.pi[e] * trace_.cycle);
    return h;
  }

  EnvironmentTrace trace_;
  std::mt19937_64 rng_;
  Vector offsets_;
  std::size_t env_ = 0;
  std::uint64_t cycle_index_ = 0;
  double hold_end_ = kNever;
};

/// Picks, per queue, the environment where its best available rate is
/// lowest (ties: lowest total capacity, then lowest index).
inline std::vector<std::size_t> least_favourable_env(const SystemSpec& spec) {
  std::vector<std::size_t> out(spec.queues, 0);
  for (std::size_t q = 0; q < spec.queues; ++q) {
    double best_rate = kNever, best_total = kNever;
    for (std::size_t e = 0; e < spec.environments.size(); ++e) {
      double rate = -kNever, total = -kNever;
      for (const auto& s : spec.environments[e].services) {
        rate = std::max(rate, s[q]);
        double sum = 0.0;
        for (double v : s.rates) sum += v;
        total = std::max(total, sum);
      }
      if (rate < best_rate || (rate == best_rate && total < best_total)) {
        best_rate = rate;
        best_total = total;
        out[q] = e;
      }
    }
  }
  return out;
}

/// Runtime arrival generator. Between events the arrival rate is constant;
/// at an event time `fire` returns the delta-jump (work per queue) released
/// at that instant.
class ArrivalProcess {
 public:
  ArrivalProcess(const TrafficTrace& trace, const SystemSpec& spec, const ScheduleMatrix& b)
      : trace_(trace), b_(b), q_(trace.load.size()), rate_(q_, 0.0), released_(q_, 0.0) {
    if (q_ != spec.queues) throw TraceError("traffic load dimension differs from queue count");
    const auto& p = trace_.params;
    switch (trace_.kind) {
      case TrafficKind::kFluid:
        rate_ = trace_.load;
        break;
      case TrafficKind::kJobs:
        count_.assign(q_, 0);
        next_.assign(q_, kNever);
        for (std::size_t q = 0; q < q_; ++q) {
          if (trace_.load[q] > 0.0) next_[q] = p.job_size[q] / trace_.load[q];
        }
        break;
      case TrafficKind::kStochastic:
        next_.assign(q_, kNever);
        size_.assign(q_, 0.0);
        for (std::size_t q = 0; q < q_; ++q) rngs_.emplace_back(detail::mix_seed(p.seed, q));
        for (std::size_t q = 0; q < q_; ++q) {
          if (trace_.load[q] <= 0.0) continue;
          next_[q] = detail::exponential(rngs_[q], p.job_size[q] / trace_.load[q]);
          size_[q] = detail::exponential(rngs_[q], p.job_size[q]);
        }
        break;
      case TrafficKind::kAdversarialEnv:
        designated_ = p.designated_env.empty() ? least_favourable_env(spec) : p.designated_env;
        if (designated_.size() != q_) throw TraceError("designated_env needs one entry per queue");
        for (std::size_t e : designated_) {
          if (e >= spec.environments.size()) throw TraceError("designated_env index out of range");
        }
        window_next_ = p.window;
        break;
      case TrafficKind::kAdversarialSchedule:
        if (b_.dim() != q_) throw TraceError("schedule matrix dimension differs from queue count");
        window_next_ = p.window;
        break;
    }
  }

  const Vector& rate() const noexcept { return rate_; }
  /// Cumulative work released as delta-jumps.
  const Vector& released() const noexcept { return released_; }

  double next_event() const noexcept {
    switch (trace_.kind) {
      case TrafficKind::kFluid: return kNever;
      case TrafficKind::kJobs:
      case TrafficKind::kStochastic: return *std::min_element(next_.begin(), next_.end());
      default: return window_next_;
    }
  }

  /// Processes every arrival decision due at time t. `observed` is the
  /// workload visible to an adaptive adversary, `env` the current state.
  Vector fire(double t, std::span<const double> observed, std::size_t env) {
    Vector jump(q_, 0.0);
    const auto& p = trace_.params;
    switch (trace_.kind) {
      case TrafficKind::kFluid:
        break;
      case TrafficKind::kJobs:
        for (std::size_t q = 0; q < q_; ++q) {
          if (next_[q] > t) continue;
          jump[q] = p.job_size[q];
          ++count_[q];
          next_[q] = static_cast<double>(count_[q] + 1) * p.job_size[q] / trace_.load[q];
        }
        break;
      case TrafficKind::kStochastic:
        for (std::size_t q = 0; q < q_; ++q) {
          if (next_[q] > t) continue;
          jump[q] = clamp_to_budget(q, t, size_[q]);
          next_[q] = t + detail::exponential(rngs_[q], p.job_size[q] / trace_.load[q]);
          size_[q] = detail::exponential(rngs_[q], p.job_size[q]);
        }
        break;
      case TrafficKind::kAdversarialEnv:
        if (window_next_ > t) break;
        for (std::size_t q = 0; q < q_; ++q) {
          jump[q] = env == designated_[q] ? to_cap(q, t) : to_floor(q, t);
        }
        advance_window();
        break;
      case TrafficKind::kAdversarialSchedule: {
        if (window_next_ > t) break;
        const Vector bx = b_.apply(observed);
        std::size_t target = q_;
        for (std::size_t q = 0; q < q_; ++q) {
          if (trace_.load[q] <= 0.0) continue;
          if (target == q_ || bx[q] > bx[target]) target = q;
        }
        for (std::size_t q = 0; q < q_; ++q) jump[q] = q == target ? to_cap(q, t) : to_floor(q, t);
        advance_window();
        break;
      }
    }
    for (std::size_t q = 0; q < q_; ++q) released_[q] += jump[q];
    return jump;
  }

 private:
  double cap(std::size_t q, double t) const { return trace_.load[q] * t + trace_.params.burst; }
  double floor_of(std::size_t q, double t) const { return trace_.load[q] * t - trace_.params.burst; }
  double to_cap(std::size_t q, double t) const {
    if (trace_.load[q] <= 0.0) return 0.0;
    return std::max(0.0, cap(q, t) - released_[q]);
  }
  double to_floor(std::size_t q, double t) const { return std::max(0.0, floor_of(q, t) - released_[q]); }

  double clamp_to_budget(std::size_t q, double t, double size) const {
    double amount = std::min(size, to_cap(q, t));
    return std::max(amount, to_floor(q, t));
  }

  void advance_window() {
    ++window_index_;
    window_next_ = static_cast<double>(window_index_ + 1) * trace_.params.window;
  }

  TrafficTrace trace_;
  ScheduleMatrix b_;
  std::size_t q_;
  Vector rate_;
  Vector released_;
  std::vector<std::uint64_t> count_;
  Vector next_;
  Vector size_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<std::size_t> designated_;
  double window_next_ = kNever;
  std::uint64_t window_index_ = 0;
};

}  // namespace conesched
