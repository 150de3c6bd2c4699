#pragma once

// Resolution of the applied service rate at a workload where the pure
// selection is not locally constant: on a shared cone boundary, or on a face
// of the orthant where zeroing switches a component on and off. The applied
// rate is the time-share (convex combination) of locally selectable vectors
// that keeps the state on the boundary it sits on.
//
// A "mode" is a base vector S of the maximizer set M together with a face F of
// the currently empty queues Z: its effective rate is S with the entries on F
// zeroed. Mode (S, F) is selectable when some direction u (u_F = 0,
// u_{Z\F} > 0) makes S the tie-broken maximizer at X + eps·u.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "conesched/lp.hpp"
#include "conesched/model.hpp"

namespace conesched::detail {

struct RegimeMode {
  std::size_t base = 0;
  std::uint64_t face = 0;
  Vector effective;
};

struct Regime {
  std::vector<RegimeMode> support;
  Vector weights;
  /// Applied service rate (sum of weights times effective rates).
  Vector service;
  bool resolved = true;

  bool sliding() const noexcept { return support.size() > 1; }
};

struct RegimeQuery {
  std::span<const Vector> scores;
  std::span<const ServiceVector> services;
  std::span<const std::size_t> maximizers;
  std::uint64_t empty_mask = 0;
  std::span<const double> arrival;
  /// Effective rate of the plain selection; modes reproducing it are tried first.
  std::span<const double> preferred;
};

inline constexpr std::size_t kMaxRegimeEmpty = 12;
inline constexpr std::size_t kMaxRegimeLps = 20000;

namespace regime_impl {

inline bool in_mask(std::uint64_t mask, std::size_t q) { return (mask >> q) & 1U; }

/// B^T (w_i - w_j): <c, X> is the score gap between vectors i and j at X.
inline Vector score_gap(const ScheduleMatrix& b, const Vector& wi, const Vector& wj) {
  Vector diff(wi.size());
  for (std::size_t q = 0; q < diff.size(); ++q) diff[q] = wi[q] - wj[q];
  return b.apply_transpose(diff);
}

/// True when the gap vanishes on every coordinate that can move on face F.
inline bool permanent_tie(const Vector& c, std::uint64_t face) {
  double free_norm = 0.0;
  for (std::size_t q = 0; q < c.size(); ++q) {
    if (!in_mask(face, q)) free_norm = std::max(free_norm, std::abs(c[q]));
  }
  return free_norm <= 1e-12 * (1.0 + max_abs(c));
}

inline bool selectable(const ScheduleMatrix& b, const RegimeQuery& qy, std::size_t base, std::uint64_t face) {
  const std::size_t n = qy.arrival.size();
  // u_q = u+ - u- off Z, u_q = 1 + u' on Z\F, u_q = 0 on F.
  std::vector<std::size_t> pos(n), neg(n);
  std::size_t nv = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (in_mask(face, q)) continue;
    pos[q] = nv++;
    if (!in_mask(qy.empty_mask, q)) neg[q] = nv++;
  }
  lp::Problem p(std::max<std::size_t>(nv, 1));
  bool any = false;
  for (std::size_t j : qy.maximizers) {
    if (j == base) continue;
    const Vector c = score_gap(b, qy.scores[base], qy.scores[j]);
    if (permanent_tie(c, face)) {
      if (j < base) return false;
      continue;
    }
    Vector row(p.num_vars(), 0.0);
    double rhs = 1.0;
    for (std::size_t q = 0; q < n; ++q) {
      if (in_mask(face, q)) continue;
      row[pos[q]] += c[q];
      if (in_mask(qy.empty_mask, q)) rhs -= c[q];
      else row[neg[q]] -= c[q];
    }
    p.add(std::move(row), lp::Relation::kGreaterEqual, rhs);
    any = true;
  }
  if (!any) return true;
  return p.solve().optimal();
}

inline void add_mode_rows(lp::Problem& p, const ScheduleMatrix& b, const RegimeQuery& qy,
                          const std::vector<const RegimeMode*>& support, const RegimeMode& mode) {
  const std::size_t n = qy.arrival.size();
  const std::size_t k = support.size();
  for (std::size_t q = 0; q < n; ++q) {
    if (!in_mask(qy.empty_mask, q)) continue;
    Vector row(k);
    for (std::size_t i = 0; i < k; ++i) row[i] = support[i]->effective[q];
    p.add(std::move(row), in_mask(mode.face, q) ? lp::Relation::kEqual : lp::Relation::kLessEqual, qy.arrival[q]);
  }
  for (std::size_t j : qy.maximizers) {
    if (j == mode.base) continue;
    const Vector c = score_gap(b, qy.scores[mode.base], qy.scores[j]);
    if (permanent_tie(c, mode.face)) continue;
    Vector row(k);
    for (std::size_t i = 0; i < k; ++i) row[i] = dot(c, support[i]->effective);
    p.add(std::move(row), lp::Relation::kLessEqual, dot(c, qy.arrival));
  }
}

inline bool try_support(const ScheduleMatrix& b, const RegimeQuery& qy, const std::vector<const RegimeMode*>& support,
                        Regime& out) {
  const std::size_t k = support.size();
  lp::Problem p(k);
  p.add(Vector(k, 1.0), lp::Relation::kEqual, 1.0);
  for (const RegimeMode* m : support) add_mode_rows(p, b, qy, support, *m);
  const auto sol = p.solve();
  if (!sol.optimal()) return false;
  out.support.clear();
  out.weights.clear();
  out.service.assign(qy.arrival.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += std::max(0.0, sol.x[i]);
  for (std::size_t i = 0; i < k; ++i) {
    const double w = std::max(0.0, sol.x[i]) / total;
    if (w <= 0.0) continue;
    out.support.push_back(*support[i]);
    out.weights.push_back(w);
    for (std::size_t q = 0; q < out.service.size(); ++q) out.service[q] += w * support[i]->effective[q];
  }
  // Faces carry zero drift exactly.
  std::uint64_t pinned = 0;
  for (const auto& m : out.support) pinned |= m.face;
  for (std::size_t q = 0; q < out.service.size(); ++q) {
    if (in_mask(pinned, q)) out.service[q] = qy.arrival[q];
    else if (in_mask(qy.empty_mask, q) && out.service[q] > qy.arrival[q]) out.service[q] = qy.arrival[q];
  }
  out.resolved = true;
  return true;
}

}  // namespace regime_impl

/// Returns the applied regime, or one with resolved == false when no
/// combination of selectable modes is consistent (caller falls back).
inline Regime resolve_regime(const ScheduleMatrix& b, const RegimeQuery& qy) {
  using namespace regime_impl;
  Regime none;
  none.resolved = false;
  const std::size_t n = qy.arrival.size();
  std::vector<std::size_t> empties;
  for (std::size_t q = 0; q < n; ++q) {
    if (in_mask(qy.empty_mask, q)) empties.push_back(q);
  }
  if (empties.size() > kMaxRegimeEmpty) return none;

  std::vector<RegimeMode> modes;
  for (std::size_t base : qy.maximizers) {
    for (std::uint64_t face = 0;; face = (face - qy.empty_mask) & qy.empty_mask) {
      if (selectable(b, qy, base, face)) {
        RegimeMode m{base, face, qy.services[base].rates};
        for (std::size_t q : empties) {
          if (in_mask(face, q) && m.effective[q] > 0.0) m.effective[q] = 0.0;
        }
        modes.push_back(std::move(m));
      }
      if (face == qy.empty_mask) break;
    }
  }
  if (modes.empty()) return none;
  std::stable_partition(modes.begin(), modes.end(), [&](const RegimeMode& m) {
    return std::equal(m.effective.begin(), m.effective.end(), qy.preferred.begin(), qy.preferred.end());
  });

  const std::size_t max_size = std::min(modes.size(), n + 1);
  std::size_t budget = kMaxRegimeLps;
  Regime out;
  for (std::size_t size = 1; size <= max_size; ++size) {
    // Lexicographic enumeration of index combinations of the given size.
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      if (budget-- == 0) return none;
      std::vector<const RegimeMode*> support;
      for (std::size_t i : idx) support.push_back(&modes[i]);
      if (try_support(b, qy, support, out)) return out;
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == modes.size() - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t i = pos; i < size; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  return none;
}

}  // namespace conesched::detail
