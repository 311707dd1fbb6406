#pragma once

#include <algorithm>
#include <functional>

#include "wmopt/optimizer.hpp"
#include "wmopt/random.hpp"
#include "wmopt/simulator.hpp"

namespace wmopt {

struct ScanConfig {
  double grid_radius = 50.0;  // covers near-orthogonal weak values
  std::size_t grid_points_per_axis = 400;
  std::size_t trials = 1000;
  std::uint64_t master_seed = 12345;
  double lambda_lo = -10.0;
  double lambda_hi = 10.0;
  std::size_t lambda_points = 10000;
  std::size_t max_doublings = 4;

  void validate() const {
    if (grid_points_per_axis < 3) throw Error("ScanConfig: grid_points_per_axis must be >= 3");
    if (trials < 1) throw Error("ScanConfig: trials must be >= 1");
  }
};

struct GoldenResult {
  double x = 0.0;
  double value = 0.0;
};

/// Golden-section maximization on [lo, hi]; assumes the bracketed maximum is
/// unimodal, which holds for the scan objectives on a bracketed cell.
template <typename F>
GoldenResult golden_section_max(F&& f, double lo, double hi, double x_tol = 1e-8,
                                int max_iter = 200) {
  static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && (b - a) > x_tol; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

struct ScanExtremum {
  double value = 0.0;
  WeakValuePoint point;
};

struct ScanOutcome {
  ScanExtremum best;   // maximum of the output
  ScanExtremum worst;  // minimum
  bool at_infinity_suspected = false;
  double radius_used = 0.0;
};

namespace detail {

/// Maximize sign * <do> over the boundary paraboloid z = r^2 in polar form.
/// Doubles the search radius (up to cfg.max_doublings) while the incumbent
/// sits on the box edge, then refines by alternating golden sections in r
/// and theta.
inline void boundary_scan_signed(const DetectorMoments& m, const ScanConfig& cfg, double sign,
                                 ScanExtremum& out, bool& at_edge, double& radius_used) {
  const double two_pi = 2.0 * 3.14159265358979323846;
  const auto value = [&](double r, double theta) {
    const double x = r * std::cos(theta);
    const double y = r * std::sin(theta);
    return sign * (m.c * x - m.a * y + m.s * r * r) / (1.0 + r * r);
  };

  double radius = cfg.grid_radius;
  const std::size_t n = cfg.grid_points_per_axis;
  double best_v = -std::numeric_limits<double>::infinity();
  double best_r = 0.0, best_th = 0.0;
  bool edge = false;
  for (std::size_t pass = 0; pass <= cfg.max_doublings; ++pass) {
    best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = radius * static_cast<double>(i) / static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        const double theta = two_pi * static_cast<double>(j) / static_cast<double>(n);
        const double v = value(r, theta);
        if (v > best_v) {
          best_v = v;
          best_r = r;
          best_th = theta;
          edge = (i + 1 == n);
        }
      }
    }
    if (!edge || pass == cfg.max_doublings) break;
    radius *= 2.0;
  }

  const double dr = radius / static_cast<double>(n - 1);
  const double dth = two_pi / static_cast<double>(n);
  double r = best_r, th = best_th;
  for (int round = 0; round < 3; ++round) {
    const auto gr = golden_section_max([&](double rr) { return value(rr, th); },
                                       std::max(0.0, r - dr), std::min(radius, r + dr));
    r = gr.x;
    const auto gt = golden_section_max([&](double tt) { return value(r, tt); }, th - dth, th + dth);
    th = gt.x;
  }
  const double v = value(r, th);
  out.value = sign * v;
  out.point = {r * std::cos(th), r * std::sin(th), r * r};
  at_edge = edge;
  radius_used = radius;
}

}  // namespace detail

/// Brute-force extrema of the standardized output over the boundary
/// paraboloid; the closed-form tangency is expected to land here.
inline ScanOutcome boundary_scan(const DetectorMoments& m, const ScanConfig& cfg = {}) {
  cfg.validate();
  ScanOutcome sc;
  bool edge_max = false, edge_min = false;
  double rad_max = 0.0, rad_min = 0.0;
  detail::boundary_scan_signed(m, cfg, +1.0, sc.best, edge_max, rad_max);
  detail::boundary_scan_signed(m, cfg, -1.0, sc.worst, edge_min, rad_min);
  sc.at_infinity_suspected = edge_max || edge_min;
  sc.radius_used = std::max(rad_max, rad_min);
  return sc;
}

/// 3-D sweep of the full region x^2 + y^2 <= z <= radius^2, confirming the
/// interior never beats the boundary.
inline ScanOutcome region_scan(const DetectorMoments& m, const ScanConfig& cfg = {}) {
  cfg.validate();
  const double two_pi = 2.0 * 3.14159265358979323846;
  const auto value = [&](double x, double y, double z) {
    return (m.c * x - m.a * y + m.s * z) / (1.0 + z);
  };

  // Coarser per-axis sampling: the grid is cubic in the point count.
  const std::size_t n = std::max<std::size_t>(3, cfg.grid_points_per_axis / 4);
  double radius = cfg.grid_radius;
  double best_v = -std::numeric_limits<double>::infinity();
  double worst_v = std::numeric_limits<double>::infinity();
  WeakValuePoint best_p, worst_p;
  bool edge = false;
  for (std::size_t pass = 0; pass <= cfg.max_doublings; ++pass) {
    best_v = -std::numeric_limits<double>::infinity();
    worst_v = std::numeric_limits<double>::infinity();
    edge = false;
    bool best_edge = false, worst_edge = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = radius * static_cast<double>(i) / static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        const double theta = two_pi * static_cast<double>(j) / static_cast<double>(n);
        const double x = r * std::cos(theta);
        const double y = r * std::sin(theta);
        for (std::size_t kz = 0; kz < n; ++kz) {
          const double z = r * r + (radius * radius - r * r) * static_cast<double>(kz) /
                                       static_cast<double>(n - 1);
          const double v = value(x, y, z);
          const bool on_edge = (i + 1 == n) || (kz + 1 == n);
          if (v > best_v) {
            best_v = v;
            best_p = {x, y, z};
            best_edge = on_edge;
          }
          if (v < worst_v) {
            worst_v = v;
            worst_p = {x, y, z};
            worst_edge = on_edge;
          }
        }
      }
    }
    edge = best_edge || worst_edge;
    if (!edge || pass == cfg.max_doublings) break;
    radius *= 2.0;
  }

  ScanOutcome sc;
  sc.best = {best_v, best_p};
  sc.worst = {worst_v, worst_p};
  sc.at_infinity_suspected = edge;
  sc.radius_used = radius;
  return sc;
}

struct CouplingScan {
  double argmax = 0.0;
  double max = 0.0;
  double argmin = 0.0;
  double min = 0.0;
  bool max_at_edge = false;
  bool min_at_edge = false;
};

/// Dense 1-D scan of the coupling response with golden-section refinement.
inline CouplingScan coupling_scan(const DetectorMoments& m, cplx a_w, double b_w,
                                  const ScanConfig& cfg = {}) {
  if (b_w < std::norm(a_w) - 1e-9) throw Error("coupling_scan: B_w < |A_w|^2");
  const auto f = [&](double lambda) { return coupling_response(m, a_w, b_w, lambda); };
  const std::size_t n = std::max<std::size_t>(cfg.lambda_points, 16);
  const double h = (cfg.lambda_hi - cfg.lambda_lo) / static_cast<double>(n - 1);
  CouplingScan sc;
  double best = -std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  std::size_t ib = 0, iw = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = cfg.lambda_lo + h * static_cast<double>(i);
    const double v = f(x);
    if (v > best) {
      best = v;
      ib = i;
    }
    if (v < worst) {
      worst = v;
      iw = i;
    }
  }
  sc.max_at_edge = (ib == 0 || ib + 1 == n);
  sc.min_at_edge = (iw == 0 || iw + 1 == n);
  const auto bracket = [&](std::size_t i) {
    const double lo = cfg.lambda_lo + h * static_cast<double>(i == 0 ? 0 : i - 1);
    const double hi = cfg.lambda_lo + h * static_cast<double>(std::min(n - 1, i + 1));
    return std::pair<double, double>(lo, hi);
  };
  const auto [blo, bhi] = bracket(ib);
  const auto gmax = golden_section_max(f, blo, bhi);
  sc.argmax = gmax.x;
  sc.max = gmax.value;
  const auto [wlo, whi] = bracket(iw);
  const auto gmin = golden_section_max([&](double x) { return -f(x); }, wlo, whi);
  sc.argmin = gmin.x;
  sc.min = -gmin.value;
  return sc;
}

struct SweepReport {
  std::size_t trials = 0;
  std::size_t interp_violations = 0;   // interp tier outside [min, max] + tol
  double closed_form_max = 0.0;
  double closed_form_min = 0.0;
  double best_interp_delta = -std::numeric_limits<double>::infinity();
  double best_exact_delta = -std::numeric_limits<double>::infinity();
  double gap_exact_to_max = 0.0;
  double worst_pure_boundary_residual = 0.0;  // max |x^2+y^2-z| / max(1,z), pure pairs
  double min_mixed_interior_margin = std::numeric_limits<double>::infinity();  // min z-(x^2+y^2)
  std::size_t skipped_orthogonal = 0;
};

/// Samples random preparation/postselection pairs for a fixed detector and
/// checks that no achievable output beats the closed-form extrema; pure pairs
/// must land on the boundary paraboloid, mixed pairs strictly inside.
inline SweepReport random_state_sweep(const Observable& a, const DensityMatrix& rho_det,
                                      const Observable& q, const Observable& o, double lambda,
                                      const ScanConfig& cfg = {}, bool mixed = false,
                                      const Tolerances& tol = {}) {
  cfg.validate();
  const std::size_t d_sys = a.dim();
  const ComplexMatrix u = joint_propagator(a, q, lambda, tol);
  const ComplexMatrix id_det = ComplexMatrix::identity(rho_det.dim());

  const StandardizeResult st = standardize(rho_det, q, o, lambda);
  const ExtremumResult ext = extremal_outputs(st.moments);

  SweepReport rep;
  rep.trials = cfg.trials;
  rep.closed_form_max = ext.max_value;
  rep.closed_form_min = ext.min_value;

  const double bound_tol = 1e-9 * std::max(1.0, std::abs(ext.max_value));
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    const std::uint64_t s1 = derive_seed(cfg.master_seed, 2 * i);
    const std::uint64_t s2 = derive_seed(cfg.master_seed, 2 * i + 1);
    DensityMatrix rho_i = mixed ? random_mixed_state(d_sys, s1, tol)
                                : random_pure_state(d_sys, s1, tol);
    PovmElement e_f = mixed ? random_povm_element(d_sys, s2, tol)
                            : PovmElement(projector(random_unit_vector(d_sys, s2)), tol);

    const WeakValueTriple t = weak_value_triple(e_f, rho_i, a, tol);
    const CanonicalWeakValues w = canonical_weak_values(t, e_f, rho_i, a, tol);
    if (w.orthogonal_flag) {
      ++rep.skipped_orthogonal;
      continue;
    }
    const WeakValuePoint p = rescaled_from_physical(w.A_w, w.B_w, st.lambda_sigma_q);
    const double boundary_residual = std::abs(p.x * p.x + p.y * p.y - p.z) / std::max(1.0, p.z);
    if (!mixed)
      rep.worst_pure_boundary_residual = std::max(rep.worst_pure_boundary_residual,
                                                  boundary_residual);
    else
      rep.min_mixed_interior_margin =
          std::min(rep.min_mixed_interior_margin, p.z - p.x * p.x - p.y * p.y);

    const ComplexMatrix rho0 = tensor_product(rho_i.matrix(), rho_det.matrix());
    const ComplexMatrix rho_plus = u * rho0 * u.adjoint();
    const ComplexMatrix ef_id = tensor_product(e_f.matrix(), id_det);
    const ComplexMatrix ef_o = tensor_product(e_f.matrix(), o.matrix());
    const double n_exact = trace_of_product(ef_id, rho_plus).real();
    const double m1 = detail::first_order_functional(t, o.matrix(), q.matrix(),
                                                     rho_det.matrix(), lambda);
    const double n1 = detail::first_order_functional(t, id_det, q.matrix(), rho_det.matrix(),
                                                     lambda);
    if (n1 < kPostselectionFloor || n_exact < kPostselectionFloor) {
      ++rep.skipped_orthogonal;
      continue;
    }
    const double interp_delta = m1 / n1 - st.moments.o_mean;
    const double exact_delta =
        trace_of_product(ef_o, rho_plus).real() / n_exact - st.moments.o_mean;
    if (interp_delta > ext.max_value + bound_tol || interp_delta < ext.min_value - bound_tol)
      ++rep.interp_violations;
    rep.best_interp_delta = std::max(rep.best_interp_delta, interp_delta);
    rep.best_exact_delta = std::max(rep.best_exact_delta, exact_delta);
  }
  rep.gap_exact_to_max = ext.max_value - rep.best_exact_delta;
  return rep;
}

}  // namespace wmopt
