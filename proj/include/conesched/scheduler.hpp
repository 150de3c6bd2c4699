#pragma once

// Cone-schedule selection: pick the available service vector with the largest
// projection <S, B X>, break ties in canonical order, then withdraw positive
// service from empty queues.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "conesched/model.hpp"

namespace conesched {

inline constexpr double kTieTolerance = 1e-9;

struct SelectionResult {
  ServiceVector chosen;
  /// Canonical index of the tie-broken maximizer before zeroing.
  std::size_t chosen_index = 0;
  std::vector<std::size_t> maximizer_indices;
  std::vector<ServiceVector> maximizers;
  /// max <S, B X> over the set (before zeroing).
  double value = 0.0;
  bool zeroed = false;
};

struct SelectOptions {
  /// Scan the set as given (possibly uncompleted) and rely on zeroing.
  bool implicit_closure = false;
  double tie_tolerance = kTieTolerance;
};

inline bool within_tie(double v, double best, double tol) {
  return std::abs(v - best) <= tol * std::max(1.0, std::abs(best));
}

namespace detail {

/// Selection with explicit score vectors: services[i] is scored by
/// <scores[i], B x>. When `direction` is non-empty, ties at x are resolved in
/// favour of the vectors that stay maximal along x + h·direction, and a queue
/// that is empty at x but filling along the direction is not zeroed.
inline SelectionResult select_scored(std::span<const Vector> scores, std::span<const ServiceVector> services,
                                     const ScheduleMatrix& b, std::span<const double> x,
                                     std::span<const double> direction, double tie_tol) {
  const Vector bx = b.apply(x);
  double best = -std::numeric_limits<double>::infinity();
  Vector values(services.size());
  for (std::size_t i = 0; i < services.size(); ++i) {
    values[i] = dot(scores[i], bx);
    best = std::max(best, values[i]);
  }
  SelectionResult res;
  res.value = best;
  for (std::size_t i = 0; i < services.size(); ++i) {
    if (within_tie(values[i], best, tie_tol)) {
      res.maximizer_indices.push_back(i);
      res.maximizers.push_back(services[i]);
    }
  }
  std::size_t pick = res.maximizer_indices.front();
  if (!direction.empty() && res.maximizer_indices.size() > 1) {
    const Vector bd = b.apply(direction);
    double best_rate = -std::numeric_limits<double>::infinity();
    for (std::size_t i : res.maximizer_indices) best_rate = std::max(best_rate, dot(scores[i], bd));
    for (std::size_t i : res.maximizer_indices) {
      if (within_tie(dot(scores[i], bd), best_rate, tie_tol)) {
        pick = i;
        break;
      }
    }
  }
  res.chosen_index = pick;
  res.chosen = services[pick];
  for (std::size_t q = 0; q < x.size(); ++q) {
    const bool filling = !direction.empty() && direction[q] > 0.0;
    if (x[q] == 0.0 && !filling && res.chosen[q] > 0.0) {
      res.chosen[q] = 0.0;
      res.zeroed = true;
    }
  }
  return res;
}

inline std::vector<Vector> rates_of(std::span<const ServiceVector> services) {
  std::vector<Vector> out;
  out.reserve(services.size());
  for (const auto& s : services) out.push_back(s.rates);
  return out;
}

inline void check_workload(std::span<const double> x, const ScheduleMatrix& b, const SystemSpec& spec,
                           const char* op) {
  if (x.size() != spec.queues || b.dim() != spec.queues) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite workload");
    if (v < 0.0) throw std::invalid_argument(std::string(op) + ": negative workload entry");
  }
}

}  // namespace detail

inline SelectionResult select(std::size_t env, std::span<const double> x, const ScheduleMatrix& b,
                              const SystemSpec& spec, const SelectOptions& opt = {}) {
  detail::check_workload(x, b, spec, "select");
  if (env >= spec.environments.size()) throw std::out_of_range("select: environment index out of range");
  const auto& environment = spec.environments[env];
  if (!environment.completed && !opt.implicit_closure) {
    throw std::invalid_argument("select: service set is not completed and implicit closure is off");
  }
  const auto scores = detail::rates_of(environment.services);
  return detail::select_scored(scores, environment.services, b, x, {}, opt.tie_tolerance);
}

/// True iff Y lies in the cone C(X): in every environment the maximizer sets
/// of X and Y intersect.
inline bool shares_maximizer(std::span<const double> x, std::span<const double> y, const ScheduleMatrix& b,
                             const SystemSpec& spec, const SelectOptions& opt = {}) {
  detail::check_workload(x, b, spec, "shares_maximizer");
  detail::check_workload(y, b, spec, "shares_maximizer");
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    const auto mx = select(e, x, b, spec, opt).maximizer_indices;
    const auto my = select(e, y, b, spec, opt).maximizer_indices;
    bool meet = false;
    for (std::size_t i : mx) meet = meet || std::find(my.begin(), my.end(), i) != my.end();
    if (!meet) return false;
  }
  return true;
}

/// First time in (0, t_max] at which some S' that currently scores below the
/// chosen vector catches up with it along X0 + t·drift.
inline std::optional<double> next_boundary_crossing(std::span<const double> x0, std::span<const double> drift,
                                                    std::size_t env, const ScheduleMatrix& b,
                                                    const SelectionResult& current, double t_max,
                                                    const SystemSpec& spec) {
  if (x0.size() != spec.queues || drift.size() != spec.queues || b.dim() != spec.queues) {
    throw std::invalid_argument("next_boundary_crossing: dimension mismatch");
  }
  const Vector bx = b.apply(x0);
  const Vector bd = b.apply(drift);
  const double tol = kTieTolerance * std::max(1.0, std::abs(dot(current.chosen.rates, bx)));
  std::optional<double> first;
  for (const auto& s : spec.environments.at(env).services) {
    Vector diff(s.rates);
    for (std::size_t q = 0; q < diff.size(); ++q) diff[q] -= current.chosen[q];
    const double gap = dot(diff, bx);
    const double rate = dot(diff, bd);
    if (gap >= -tol || rate <= 0.0) continue;
    const double t = -gap / rate;
    if (t > 0.0 && t <= t_max && (!first || t < *first)) first = t;
  }
  return first;
}

}  // namespace conesched
