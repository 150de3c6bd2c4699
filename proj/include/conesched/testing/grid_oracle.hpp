#pragma once

// Brute-force membership test for the stability region: every environment's
// weight vector phi is restricted to the simplex lattice with step 1/steps,
// and rho is declared coverable when some lattice combination dominates it.
// Independent of the LP code; used to cross-check it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "conesched/model.hpp"

namespace conesched::testing {

/// Served vectors sum_S phi_S S over the lattice, in units of 1/steps.
inline std::vector<std::vector<long>> lattice_points(const std::vector<ServiceVector>& services, int steps) {
  const std::size_t k = services.size();
  const std::size_t q_count = services.front().size();
  std::vector<std::vector<long>> rates(k, std::vector<long>(q_count));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t q = 0; q < q_count; ++q) {
      const double r = services[i][q];
      if (r != std::round(r)) throw std::invalid_argument("lattice_points: integer service rates required");
      rates[i][q] = static_cast<long>(r);
    }
  }
  std::set<std::vector<long>> out;
  std::vector<int> w(k, 0);
  // Enumerate compositions of `steps` into k nonnegative parts.
  auto rec = [&](auto&& self, std::size_t i, int left) -> void {
    if (i + 1 == k) {
      w[i] = left;
      std::vector<long> served(q_count, 0);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t q = 0; q < q_count; ++q) served[q] += w[j] * rates[j][q];
      out.insert(std::move(served));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      w[i] = v;
      self(self, i + 1, left - v);
    }
  };
  rec(rec, 0, steps);
  return {out.begin(), out.end()};
}

/// Keeps points not dominated by another point. Input must be deduplicated.
inline std::vector<std::vector<long>> pareto_front(std::vector<std::vector<long>> pts) {
  // A dominating point is lexicographically larger, so a descending sweep
  // only needs to compare against the front built so far.
  std::sort(pts.begin(), pts.end(), std::greater<>());
  std::vector<std::vector<long>> front;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& r : front) {
      bool ge = true;
      for (std::size_t q = 0; q < p.size() && ge; ++q) ge = r[q] >= p[q];
      if (ge) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  return front;
}

/// Whether sum_e pi^e served^e >= rho for some lattice choice per
/// environment. Supports one or two environments with integer rates.
inline bool grid_member(const SystemSpec& spec, std::span<const double> rho, int steps = 50) {
  const std::size_t E = spec.environments.size();
  if (E == 0 || E > 2) throw std::invalid_argument("grid_member: one or two environments supported");
  std::vector<std::vector<std::vector<long>>> fronts;
  for (const auto& env : spec.environments) fronts.push_back(pareto_front(lattice_points(env.services, steps)));
  const double unit = 1.0 / steps;
  const double tol = 1e-12;
  auto covers = [&](const std::vector<double>& served) {
    for (std::size_t q = 0; q < rho.size(); ++q) {
      if (served[q] < rho[q] - tol) return false;
    }
    return true;
  };
  std::vector<double> served(spec.queues);
  if (E == 1) {
    for (const auto& p : fronts[0]) {
      for (std::size_t q = 0; q < spec.queues; ++q) served[q] = spec.pi[0] * p[q] * unit;
      if (covers(served)) return true;
    }
    return false;
  }
  for (const auto& p1 : fronts[0]) {
    for (const auto& p2 : fronts[1]) {
      for (std::size_t q = 0; q < spec.queues; ++q) served[q] = (spec.pi[0] * p1[q] + spec.pi[1] * p2[q]) * unit;
      if (covers(served)) return true;
    }
  }
  return false;
}

}  // namespace conesched::testing
