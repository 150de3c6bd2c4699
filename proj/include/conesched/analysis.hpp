#pragma once

// Post-processing of trajectories: rate-stability verdicts, effective service
// rates, the quadratic Lyapunov series and the flow-balance residual.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "conesched/model.hpp"
#include "conesched/sim.hpp"

namespace conesched {

enum class Verdict { kStable, kUnstable, kInconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kStable: return "stable";
    case Verdict::kUnstable: return "unstable";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

struct VerdictThresholds {
  /// stable when both slope estimates are <= stable_relative * max(1, max_q rho_q)
  double stable_relative = 0.01;
  /// unstable when the tail slope is >= unstable_fraction * deficit
  double unstable_fraction = 0.5;
};

struct StabilityVerdict {
  /// X_q(T) / T
  Vector slope;
  /// least-squares slope of X_q over the tail window
  Vector tail_slope;
  Verdict verdict = Verdict::kInconclusive;
  double tail_window = 0.5;
  double deficit_predicted = 0.0;
  double stable_threshold = 0.0;
  double unstable_threshold = 0.0;
  /// measured arrival rate, integral of A over T
  Vector measured_load;

  double max_slope() const { return slope.empty() ? 0.0 : *std::max_element(slope.begin(), slope.end()); }
  double max_tail_slope() const {
    return tail_slope.empty() ? 0.0 : *std::max_element(tail_slope.begin(), tail_slope.end());
  }
};

namespace detail {

inline double ls_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

inline StabilityVerdict rate_stability_metric(const Trajectory& traj, double tail_fraction = 0.5,
                                              double deficit_predicted = 0.0, const VerdictThresholds& thr = {}) {
  if (traj.samples.empty()) throw std::invalid_argument("rate_stability_metric: empty trajectory");
  if (!(traj.horizon > 0.0)) throw std::invalid_argument("rate_stability_metric: horizon must be positive");
  if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) {
    throw std::invalid_argument("rate_stability_metric: tail_fraction must be in (0, 1)");
  }
  const double T = traj.horizon;
  const std::size_t n = traj.queues;
  StabilityVerdict v;
  v.tail_window = tail_fraction;
  v.deficit_predicted = deficit_predicted;
  v.slope.resize(n);
  v.tail_slope.resize(n);
  v.measured_load.resize(n);
  const auto& last = traj.samples.back();
  for (std::size_t q = 0; q < n; ++q) {
    v.slope[q] = last.workload[q] / T;
    v.measured_load[q] = traj.arrived[q] / T;
  }

  const double start = (1.0 - tail_fraction) * T;
  std::vector<const Sample*> tail;
  for (const auto& s : traj.samples) {
    if (s.time >= start) tail.push_back(&s);
  }
  if (tail.size() < 2) tail = {&traj.samples.front(), &last};
  std::vector<double> ts, ys;
  for (const Sample* s : tail) ts.push_back(s->time);
  for (std::size_t q = 0; q < n; ++q) {
    ys.clear();
    for (const Sample* s : tail) ys.push_back(s->workload[q]);
    v.tail_slope[q] = detail::ls_slope(ts, ys);
  }

  const double max_load = n ? *std::max_element(v.measured_load.begin(), v.measured_load.end()) : 0.0;
  v.stable_threshold = thr.stable_relative * std::max(1.0, max_load);
  v.unstable_threshold = thr.unstable_fraction * deficit_predicted;
  if (v.max_slope() <= v.stable_threshold && v.max_tail_slope() <= v.stable_threshold) {
    v.verdict = Verdict::kStable;
  } else if (v.unstable_threshold > 0.0 && v.max_tail_slope() >= v.unstable_threshold) {
    v.verdict = Verdict::kUnstable;
  }
  return v;
}

inline Vector effective_service_rates(const Trajectory& traj) {
  if (!(traj.horizon > 0.0)) throw std::invalid_argument("effective_service_rates: horizon must be positive");
  Vector r(traj.served);
  for (double& v : r) v /= traj.horizon;
  return r;
}

struct LyapunovSeries {
  std::vector<double> time;
  std::vector<double> value;
  /// Fraction of consecutive sample pairs along which the value did not increase.
  double decrease_fraction = 0.0;
};

inline LyapunovSeries lyapunov_series(const Trajectory& traj, const ScheduleMatrix& b) {
  if (b.dim() != traj.queues) throw std::invalid_argument("lyapunov_series: dimension mismatch");
  LyapunovSeries out;
  std::size_t down = 0;
  for (const auto& s : traj.samples) {
    out.time.push_back(s.time);
    out.value.push_back(b.quadratic(s.workload));
    if (out.value.size() > 1 && out.value.back() <= out.value[out.value.size() - 2]) ++down;
  }
  if (out.value.size() > 1) out.decrease_fraction = static_cast<double>(down) / static_cast<double>(out.value.size() - 1);
  return out;
}

/// Exponent k of a power-law fit V ~ c t^k over the tail of the series
/// (positive times and values only).
inline double growth_exponent(const LyapunovSeries& series, double tail_fraction = 0.5) {
  if (series.time.empty()) throw std::invalid_argument("growth_exponent: empty series");
  const double start = (1.0 - tail_fraction) * series.time.back();
  std::vector<double> lt, lv;
  for (std::size_t i = 0; i < series.time.size(); ++i) {
    if (series.time[i] < start || series.time[i] <= 0.0 || series.value[i] <= 0.0) continue;
    lt.push_back(std::log(series.time[i]));
    lv.push_back(std::log(series.value[i]));
  }
  if (lt.size() < 2) throw std::invalid_argument("growth_exponent: not enough positive samples in the tail");
  return detail::ls_slope(lt, lv);
}

/// max over samples and queues of |X - X(0) - int A + int S| / (1 + |int A|).
inline double flow_balance_check(const Trajectory& traj) {
  double worst = 0.0;
  for (const auto& s : traj.samples) {
    for (std::size_t q = 0; q < traj.queues; ++q) {
      const double r = s.workload[q] - traj.initial_workload[q] - s.arrived[q] + s.served[q];
      worst = std::max(worst, std::abs(r) / (1.0 + std::abs(s.arrived[q])));
    }
  }
  return worst;
}

}  // namespace conesched
