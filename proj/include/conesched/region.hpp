#pragma once

// Stability region queries. A load rho is in the region when some choice of
// per-environment convex weights over the service sets, averaged with the
// environment proportions, dominates rho componentwise.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "conesched/lp.hpp"
#include "conesched/model.hpp"

namespace conesched {

class RegionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RegionCertificate {
  bool member = false;
  /// phi[e][i] weights environment e's i-th (canonical) service vector.
  std::vector<Vector> phi;
  /// sum_e pi^e sum_S phi^e_S S - rho, filled when member.
  Vector slack;
};

namespace detail {

inline void check_load(std::span<const double> rho, const SystemSpec& spec, const char* op) {
  if (rho.size() != spec.queues) throw RegionError(std::string(op) + ": load dimension mismatch");
  for (double r : rho) {
    if (!std::isfinite(r)) throw RegionError(std::string(op) + ": non-finite load");
    if (r < 0.0) throw RegionError(std::string(op) + ": negative load entry");
  }
}

/// Variable layout shared by the region LPs: all phi weights first, in
/// environment order, followed by `extra` problem-specific variables.
struct PhiLayout {
  std::vector<std::size_t> offset;
  std::size_t count = 0;

  explicit PhiLayout(const SystemSpec& spec) {
    for (const auto& env : spec.environments) {
      offset.push_back(count);
      count += env.services.size();
    }
  }
};

/// Adds sum_S phi^e_S = 1 for each environment.
inline void add_simplex_rows(lp::Problem& p, const SystemSpec& spec, const PhiLayout& layout) {
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    Vector row(p.num_vars(), 0.0);
    for (std::size_t i = 0; i < spec.environments[e].services.size(); ++i) row[layout.offset[e] + i] = 1.0;
    p.add(std::move(row), lp::Relation::kEqual, 1.0);
  }
}

/// Coefficients of served_q = sum_e pi^e sum_S phi^e_S S_q.
inline Vector served_row(const SystemSpec& spec, const PhiLayout& layout, std::size_t q, std::size_t nvars) {
  Vector row(nvars, 0.0);
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    const auto& services = spec.environments[e].services;
    for (std::size_t i = 0; i < services.size(); ++i) row[layout.offset[e] + i] = spec.pi[e] * services[i][q];
  }
  return row;
}

inline std::vector<Vector> unpack_phi(const SystemSpec& spec, const PhiLayout& layout, const Vector& x) {
  std::vector<Vector> phi;
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    const auto n = spec.environments[e].services.size();
    phi.emplace_back(x.begin() + static_cast<std::ptrdiff_t>(layout.offset[e]),
                     x.begin() + static_cast<std::ptrdiff_t>(layout.offset[e] + n));
  }
  return phi;
}

inline void check_spec(const SystemSpec& spec, const char* op) {
  if (spec.environments.empty() || spec.pi.size() != spec.environments.size()) {
    throw RegionError(std::string(op) + ": malformed system spec");
  }
  for (const auto& env : spec.environments) {
    if (env.services.empty()) throw RegionError(std::string(op) + ": empty service set");
    for (const auto& s : env.services) {
      if (s.size() != spec.queues) throw RegionError(std::string(op) + ": service dimension mismatch");
    }
  }
}

}  // namespace detail

/// Served rate vector sum_e pi^e sum_S phi^e_S S for the given weights.
inline Vector served_rates(const SystemSpec& spec, const std::vector<Vector>& phi) {
  Vector served(spec.queues, 0.0);
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    const auto& services = spec.environments[e].services;
    for (std::size_t i = 0; i < services.size(); ++i)
      for (std::size_t q = 0; q < spec.queues; ++q) served[q] += spec.pi[e] * phi[e][i] * services[i][q];
  }
  return served;
}

inline RegionCertificate membership(std::span<const double> rho, const SystemSpec& spec) {
  detail::check_spec(spec, "membership");
  detail::check_load(rho, spec, "membership");
  const detail::PhiLayout layout(spec);
  lp::Problem p(layout.count);
  detail::add_simplex_rows(p, spec, layout);
  for (std::size_t q = 0; q < spec.queues; ++q) {
    p.add(detail::served_row(spec, layout, q, layout.count), lp::Relation::kGreaterEqual, rho[q]);
  }
  const auto sol = p.solve();
  RegionCertificate cert;
  if (!sol.optimal()) return cert;
  cert.member = true;
  cert.phi = detail::unpack_phi(spec, layout, sol.x);
  cert.slack = served_rates(spec, cert.phi);
  for (std::size_t q = 0; q < spec.queues; ++q) cert.slack[q] -= rho[q];
  return cert;
}

/// Largest t with rho + t·1 in the region (negative when rho is outside).
inline double membership_margin(std::span<const double> rho, const SystemSpec& spec) {
  detail::check_spec(spec, "membership_margin");
  if (rho.size() != spec.queues) throw RegionError("membership_margin: load dimension mismatch");
  const detail::PhiLayout layout(spec);
  // t = t_pos - t_neg
  const std::size_t nv = layout.count + 2;
  lp::Problem p(nv);
  detail::add_simplex_rows(p, spec, layout);
  for (std::size_t q = 0; q < spec.queues; ++q) {
    Vector row = detail::served_row(spec, layout, q, nv);
    row[layout.count] = -1.0;
    row[layout.count + 1] = 1.0;
    p.add(std::move(row), lp::Relation::kGreaterEqual, rho[q]);
  }
  Vector c(nv, 0.0);
  c[layout.count] = -1.0;
  c[layout.count + 1] = 1.0;
  p.set_objective(std::move(c));
  const auto sol = p.solve();
  if (!sol.optimal()) throw RegionError("membership_margin: LP failed");
  return sol.x[layout.count] - sol.x[layout.count + 1];
}

/// Largest theta with theta·direction in the region.
inline double boundary_scale(std::span<const double> direction, const SystemSpec& spec) {
  detail::check_spec(spec, "boundary_scale");
  detail::check_load(direction, spec, "boundary_scale");
  if (max_abs(direction) == 0.0) throw RegionError("boundary_scale: zero direction");
  const detail::PhiLayout layout(spec);
  const std::size_t nv = layout.count + 1;
  lp::Problem p(nv);
  detail::add_simplex_rows(p, spec, layout);
  for (std::size_t q = 0; q < spec.queues; ++q) {
    Vector row = detail::served_row(spec, layout, q, nv);
    for (double& v : row) v = -v;
    row[layout.count] = direction[q];
    p.add(std::move(row), lp::Relation::kLessEqual, 0.0);
  }
  Vector c(nv, 0.0);
  c[layout.count] = -1.0;
  p.set_objective(std::move(c));
  const auto sol = p.solve();
  if (sol.status == lp::Status::kInfeasible) {
    throw RegionError("boundary_scale: the zero load is not coverable by this system");
  }
  if (!sol.optimal()) throw RegionError("boundary_scale: LP failed");
  return sol.x[layout.count];
}

enum class DeficitNorm {
  kMax,  ///< min over weights of max_q (rho_q - served_q)^+
  kSum,  ///< min over weights of sum_q (rho_q - served_q)^+
};

/// Smallest achievable outflow deficit; zero exactly when rho is in the region.
inline double min_drain_deficit(std::span<const double> rho, const SystemSpec& spec,
                                DeficitNorm norm = DeficitNorm::kMax) {
  detail::check_spec(spec, "min_drain_deficit");
  detail::check_load(rho, spec, "min_drain_deficit");
  const detail::PhiLayout layout(spec);
  const std::size_t n_delta = norm == DeficitNorm::kMax ? 1 : spec.queues;
  const std::size_t nv = layout.count + n_delta;
  lp::Problem p(nv);
  detail::add_simplex_rows(p, spec, layout);
  for (std::size_t q = 0; q < spec.queues; ++q) {
    Vector row = detail::served_row(spec, layout, q, nv);
    row[layout.count + (norm == DeficitNorm::kMax ? 0 : q)] = 1.0;
    p.add(std::move(row), lp::Relation::kGreaterEqual, rho[q]);
  }
  Vector c(nv, 0.0);
  for (std::size_t k = 0; k < n_delta; ++k) c[layout.count + k] = 1.0;
  p.set_objective(std::move(c));
  const auto sol = p.solve();
  if (!sol.optimal()) throw RegionError("min_drain_deficit: LP failed");
  return std::max(0.0, sol.objective);
}

struct BoundaryPoint {
  double angle = 0.0;  ///< radians in [0, pi/2]
  double theta = 0.0;
  Vector rho;
};

/// Boundary of a two-queue region sampled along n_angles directions from the
/// rho_1 axis to the rho_2 axis.
inline std::vector<BoundaryPoint> region_polygon_2d(const SystemSpec& spec, std::size_t n_angles) {
  if (spec.queues != 2) throw RegionError("region_polygon_2d: requires exactly 2 queues");
  if (n_angles < 2) throw RegionError("region_polygon_2d: need at least 2 angles");
  std::vector<BoundaryPoint> out;
  for (std::size_t k = 0; k < n_angles; ++k) {
    const double angle = (std::numbers::pi / 2.0) * static_cast<double>(k) / static_cast<double>(n_angles - 1);
    Vector dir{std::cos(angle), std::sin(angle)};
    if (k == 0) dir = {1.0, 0.0};
    if (k == n_angles - 1) dir = {0.0, 1.0};
    if (2 * k == n_angles - 1) dir = {1.0, 1.0};
    const double theta = boundary_scale(dir, spec);
    out.push_back({angle, theta, {theta * dir[0], theta * dir[1]}});
  }
  return out;
}

}  // namespace conesched
