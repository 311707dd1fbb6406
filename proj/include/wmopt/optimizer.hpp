#pragma once

#include <algorithm>
#include <array>
#include <optional>

#include "wmopt/simulator.hpp"
#include "wmopt/states.hpp"

namespace wmopt {

/// Initial-state averages of the detector operators that drive the output:
/// a = <{do, xi}>, c = <i[do, xi]>, s = <xi do xi>, with xi = (q - q_mean)/sigma_q
/// and do = o - o_mean. xi_mean = q_mean/sigma_q enters only the coupling
/// optimization, where the pointer offset can no longer be gauged away.
struct DetectorMoments {
  double a = 0.0;
  double c = 0.0;
  double s = 0.0;
  double o_mean = 0.0;
  double sigma_o = 0.0;
  double q_mean = 0.0;
  double sigma_q = 1.0;
  double xi_mean = 0.0;
};

struct StandardizeResult {
  DetectorMoments moments;
  double lambda_sigma_q = 0.0;  // maps physical weak values to the rescaled frame
};

/// Computes the standardized moments of the detector and the rescale factor
/// lambda * sigma_q. Fails when the pointer has no spread.
inline StandardizeResult standardize(const DensityMatrix& rho_det, const Observable& q_obs,
                                     const Observable& o_obs, double lambda) {
  const ComplexMatrix& q = q_obs.matrix();
  const ComplexMatrix& o = o_obs.matrix();
  const ComplexMatrix& rho = rho_det.matrix();
  const std::size_t d = rho_det.dim();

  DetectorMoments m;
  m.q_mean = trace_of_product(q, rho).real();
  const double q2 = trace_of_product(q * q, rho).real();
  const double var_q = q2 - m.q_mean * m.q_mean;
  if (!(var_q > 0.0))
    throw Error("standardize: sigma_q = 0, detector pointer has no spread");
  m.sigma_q = std::sqrt(var_q);
  m.xi_mean = m.q_mean / m.sigma_q;

  m.o_mean = trace_of_product(o, rho).real();
  const double o2 = trace_of_product(o * o, rho).real();
  m.sigma_o = std::sqrt(std::max(0.0, o2 - m.o_mean * m.o_mean));

  ComplexMatrix xi = q;
  for (std::size_t i = 0; i < d; ++i) xi(i, i) -= m.q_mean;
  xi *= cplx(1.0 / m.sigma_q, 0.0);
  ComplexMatrix dob = o;
  for (std::size_t i = 0; i < d; ++i) dob(i, i) -= m.o_mean;

  m.a = trace_of_product(anticommutator(dob, xi), rho).real();
  m.c = (cplx(0.0, 1.0) * trace_of_product(commutator(dob, xi), rho)).real();
  m.s = trace_of_product(xi * dob * xi, rho).real();
  return {m, lambda * m.sigma_q};
}

inline StandardizeResult standardize(const MeasurementSetup& setup) {
  return standardize(setup.rho_det, setup.q, setup.o, setup.lambda);
}

/// A point in the rescaled weak-value space: x = Re A_w, y = Im A_w,
/// z = B_w after absorbing lambda * sigma_q.
struct WeakValuePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline WeakValuePoint rescaled_from_physical(cplx a_w, double b_w, double lambda_sigma_q) {
  return {lambda_sigma_q * a_w.real(), lambda_sigma_q * a_w.imag(),
          lambda_sigma_q * lambda_sigma_q * b_w};
}

struct PhysicalWeakValues {
  cplx A_w;
  double B_w;
};

inline PhysicalWeakValues physical_from_rescaled(const WeakValuePoint& p, double lambda_sigma_q) {
  if (lambda_sigma_q == 0.0)
    throw Error("physical_from_rescaled: lambda * sigma_q is zero");
  return {cplx(p.x / lambda_sigma_q, p.y / lambda_sigma_q),
          p.z / (lambda_sigma_q * lambda_sigma_q)};
}

/// <do> = (c x - a y + s z) / (1 + z): the standardized conditional output as
/// a function of the rescaled weak values.
inline double standardized_output(const DetectorMoments& m, const WeakValuePoint& p) {
  return (m.c * p.x - m.a * p.y + m.s * p.z) / (1.0 + p.z);
}

/// Closed-form extrema of the standardized output over the allowed region
/// z >= x^2 + y^2, together with the tangency points on the boundary
/// paraboloid. When a = c = 0, the finite extremum is 0 at the origin and the
/// other extremum equals s, approached only as B_w -> infinity (orthogonal
/// preparation and postselection); then attained_at_infinity is set and the
/// corresponding point holds NaNs — callers must branch on the flag, not
/// compare coordinates.
struct ExtremumResult {
  double max_value = 0.0;
  double min_value = 0.0;
  WeakValuePoint max_point;
  WeakValuePoint min_point;
  bool degenerate = false;
  bool attained_at_infinity = false;
};

inline ExtremumResult extremal_outputs(const DetectorMoments& m, double moment_eps = 1e-14) {
  const double scale = std::max({1.0, std::abs(m.a), std::abs(m.c), std::abs(m.s)});
  const double eps = moment_eps * scale;
  if (std::abs(m.a) <= eps && std::abs(m.c) <= eps && std::abs(m.s) <= eps)
    throw Error("extremal_outputs: a, c, s all vanish — output identically zero at this order");

  ExtremumResult res;
  const double ca2 = m.c * m.c + m.a * m.a;
  if (std::sqrt(ca2) <= eps) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.degenerate = true;
    res.attained_at_infinity = true;
    if (m.s > 0.0) {
      res.max_value = m.s;
      res.min_value = 0.0;
      res.max_point = {nan, nan, nan};
      res.min_point = {0.0, 0.0, 0.0};
    } else {
      res.max_value = 0.0;
      res.min_value = m.s;
      res.max_point = {0.0, 0.0, 0.0};
      res.min_point = {nan, nan, nan};
    }
    return res;
  }

  const double root = std::sqrt(ca2 + m.s * m.s);
  res.max_value = 0.5 * (m.s + root);
  res.min_value = 0.5 * (m.s - root);
  const auto point_for = [&](double value) {
    WeakValuePoint p;
    p.x = m.c * 2.0 * value / ca2;
    p.y = -m.a * 2.0 * value / ca2;
    p.z = p.x * p.x + p.y * p.y;
    return p;
  };
  res.max_point = point_for(res.max_value);
  res.min_point = point_for(res.min_value);
  return res;
}

struct TradeoffBound {
  double bound = 0.0;
  bool saturates_sr = false;
};

/// |<do>| <= |s/2| + sqrt(sigma_o^2 + s^2/4), from the Schroedinger-Robertson
/// relation c^2 + a^2 <= 4 sigma_o^2. For s = 0 the shift cannot exceed the
/// initial spread sigma_o.
inline TradeoffBound tradeoff_bound(const DetectorMoments& m) {
  TradeoffBound b;
  b.bound = std::abs(0.5 * m.s) + std::sqrt(m.sigma_o * m.sigma_o + 0.25 * m.s * m.s);
  const double slack = 4.0 * m.sigma_o * m.sigma_o - (m.c * m.c + m.a * m.a);
  b.saturates_sr = slack < 1e-9 * std::max(1.0, 4.0 * m.sigma_o * m.sigma_o);
  return b;
}

/// Outcome of the four-step detector-design strategy: a detector state with
/// Tr[o rho_det] = 0 whose sandwich average s = Tr[o xi rho_det xi] equals
/// Tr[o rho_tilde], letting the output exceed the sigma_o cap.
struct AmplificationPlan {
  std::optional<DensityMatrix> rho_det;
  double achieved_s = 0.0;
  double target_s = 0.0;
  std::size_t kernel_dim = 0;
  bool feasible = false;
  std::string infeasibility_reason;
};

namespace detail {

struct XiSplit {
  EigResult eig;
  std::vector<std::size_t> kernel;      // indices with |eigenvalue| <= cutoff
  std::vector<std::size_t> complement;  // the rest
};

inline XiSplit split_kernel(const Observable& xi, const Tolerances& tol) {
  XiSplit sp;
  sp.eig = hermitian_eig(xi.matrix(), tol);
  double norm = 0.0;
  for (double e : sp.eig.eigenvalues) norm = std::max(norm, std::abs(e));
  const double cutoff = 1e-10 * std::max(1.0, norm);
  for (std::size_t i = 0; i < sp.eig.eigenvalues.size(); ++i) {
    if (std::abs(sp.eig.eigenvalues[i]) <= cutoff)
      sp.kernel.push_back(i);
    else
      sp.complement.push_back(i);
  }
  return sp;
}

inline ComplexMatrix to_basis(const ComplexMatrix& v, const ComplexMatrix& x) {
  return v.adjoint() * x * v;
}

inline ComplexMatrix from_basis(const ComplexMatrix& v, const ComplexMatrix& x) {
  return v * x * v.adjoint();
}

}  // namespace detail

/// Implements steps (i)-(iv): rho_det = xi^-1 rho_tilde xi^-1 on the
/// complement of ker xi, plus a positive block on the kernel chosen to reach
/// unit trace and zero readout average. rho_tilde must be positive
/// semi-definite and supported on the complement (hard error otherwise);
/// budget or kernel-absorption failures come back as feasible = false.
inline AmplificationPlan amplifying_detector_state(const Observable& xi, const Observable& o,
                                                   const ComplexMatrix& rho_tilde,
                                                   double target_s, const Tolerances& tol = {}) {
  const std::size_t d = xi.dim();
  if (o.dim() != d || rho_tilde.rows() != d || rho_tilde.cols() != d)
    throw Error("amplifying_detector_state: dimension mismatch");
  if (!rho_tilde.is_hermitian(tol.hermiticity))
    throw Error("amplifying_detector_state: rho_tilde is not Hermitian");
  const double rt_scale = std::max(1.0, rho_tilde.max_abs());
  if (min_eigenvalue(rho_tilde, tol) < tol.psd_eigen_floor * rt_scale)
    throw Error("amplifying_detector_state: rho_tilde is not positive semi-definite");

  const detail::XiSplit sp = detail::split_kernel(xi, tol);
  const ComplexMatrix& v = sp.eig.eigenvectors;
  const ComplexMatrix rt = detail::to_basis(v, rho_tilde);
  for (std::size_t ki : sp.kernel)
    for (std::size_t j = 0; j < d; ++j)
      if (std::abs(rt(ki, j)) > 1e3 * tol.general_rel * rt_scale)
        throw Error("amplifying_detector_state: rho_tilde has support on ker(xi)");

  AmplificationPlan plan;
  plan.target_s = target_s;
  plan.kernel_dim = sp.kernel.size();

  const ComplexMatrix ob = detail::to_basis(v, o.matrix());
  ComplexMatrix body(d, d);  // xi^-1 rho_tilde xi^-1 embedded in the full space
  for (std::size_t i : sp.complement)
    for (std::size_t j : sp.complement)
      body(i, j) = rt(i, j) / (sp.eig.eigenvalues[i] * sp.eig.eigenvalues[j]);
  double tau = 0.0;
  for (std::size_t i : sp.complement) tau += body(i, i).real();
  cplx mu_c = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) mu_c += ob(i, j) * body(j, i);
  const double mu = mu_c.real();

  const double slack = 1e-9 * std::max(1.0, std::abs(mu) + ob.max_abs());
  if (tau > 1.0 + 1e-9) {
    plan.infeasibility_reason = "trace budget exceeded: Tr[xi^-1 rho_tilde xi^-1] = " +
                                std::to_string(tau) + " > 1";
    return plan;
  }
  const double t_k = std::max(0.0, 1.0 - tau);

  if (sp.kernel.empty()) {
    if (std::abs(1.0 - tau) > 1e-9 || std::abs(mu) > slack) {
      plan.infeasibility_reason =
          "ker(xi) is trivial: cannot reach unit trace with zero readout average";
      return plan;
    }
  } else if (t_k <= 1e-12) {
    if (std::abs(mu) > slack) {
      plan.infeasibility_reason = "no trace budget left for the kernel block to cancel the "
                                  "readout average";
      return plan;
    }
  } else {
    // Kernel block of o, restricted and diagonalized.
    const std::size_t k = sp.kernel.size();
    ComplexMatrix ok(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) ok(i, j) = ob(sp.kernel[i], sp.kernel[j]);
    const EigResult ok_eig = hermitian_eig(ok, tol);
    const double kmin = ok_eig.eigenvalues.front();
    const double kmax = ok_eig.eigenvalues.back();
    const double want = -mu / t_k;
    if (want < kmin - slack || want > kmax + slack) {
      plan.infeasibility_reason =
          "kernel block cannot absorb the readout average: need per-unit-trace average " +
          std::to_string(want) + ", reachable range [" + std::to_string(kmin) + ", " +
          std::to_string(kmax) + "]";
      return plan;
    }
    double theta = 0.0;
    if (kmax - kmin > 1e-14 * std::max(1.0, std::abs(kmax)))
      theta = std::clamp((want - kmin) / (kmax - kmin), 0.0, 1.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const cplx pmin = ok_eig.eigenvectors(i, 0) * std::conj(ok_eig.eigenvectors(j, 0));
        const cplx pmax = ok_eig.eigenvectors(i, k - 1) * std::conj(ok_eig.eigenvectors(j, k - 1));
        body(sp.kernel[i], sp.kernel[j]) = t_k * (theta * pmax + (1.0 - theta) * pmin);
      }
  }

  ComplexMatrix rho = detail::from_basis(v, body);
  ComplexMatrix herm = rho;
  herm += rho.adjoint();
  herm *= cplx(0.5, 0.0);
  Tolerances relaxed = tol;
  relaxed.psd_eigen_floor = std::min(relaxed.psd_eigen_floor, -1e-9 * std::max(1.0, herm.max_abs()));
  plan.rho_det = DensityMatrix(std::move(herm), relaxed);
  plan.achieved_s =
      (o.matrix() * xi.matrix() * plan.rho_det->matrix() * xi.matrix()).trace().real();
  plan.feasible = true;
  return plan;
}

struct AmplifierDesign {
  bool ok = false;
  ComplexMatrix rho_tilde;
  std::string reason;
};

/// Searches for a rho_tilde supported on the complement of ker xi with
/// Tr[o rho_tilde] = target and a solvable kernel block: combinations of one
/// or two eigenprojectors of o restricted to the complement. Plumbing for the
/// amplify command and fixtures, not a complete feasibility solver.
inline AmplifierDesign design_amplifier_source(const Observable& xi, const Observable& o,
                                               double target, const Tolerances& tol = {}) {
  AmplifierDesign out;
  const std::size_t d = xi.dim();
  if (o.dim() != d) throw Error("design_amplifier_source: dimension mismatch");
  const detail::XiSplit sp = detail::split_kernel(xi, tol);
  if (sp.complement.empty()) {
    out.reason = "xi vanishes: no complement subspace";
    return out;
  }
  const ComplexMatrix& v = sp.eig.eigenvectors;
  const ComplexMatrix ob = detail::to_basis(v, o.matrix());
  const std::size_t nc = sp.complement.size();

  ComplexMatrix oc(nc, nc);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < nc; ++j) oc(i, j) = ob(sp.complement[i], sp.complement[j]);
  const EigResult oc_eig = hermitian_eig(oc, tol);

  // Per-eigenvector data: lambda (readout), h = <w|w>, g = <w|o|w> with
  // w = xi^-1 v.
  std::vector<double> lam(nc), hh(nc), gg(nc);
  std::vector<std::vector<cplx>> vecs(nc, std::vector<cplx>(d, 0.0));
  for (std::size_t j = 0; j < nc; ++j) {
    lam[j] = oc_eig.eigenvalues[j];
    auto& vec = vecs[j];
    for (std::size_t i = 0; i < nc; ++i) vec[sp.complement[i]] = oc_eig.eigenvectors(i, j);
    std::vector<cplx> w(d, 0.0);
    for (std::size_t i : sp.complement) w[i] = vec[i] / sp.eig.eigenvalues[i];
    double h = 0.0;
    cplx g = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      h += std::norm(w[r]);
      for (std::size_t c = 0; c < d; ++c) g += std::conj(w[r]) * ob(r, c) * w[c];
    }
    hh[j] = h;
    gg[j] = g.real();
  }

  std::vector<double> kappas;
  if (!sp.kernel.empty()) {
    const std::size_t k = sp.kernel.size();
    ComplexMatrix ok(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) ok(i, j) = ob(sp.kernel[i], sp.kernel[j]);
    const EigResult ok_eig = hermitian_eig(ok, tol);
    kappas.push_back(ok_eig.eigenvalues.front());
    if (k > 1) {
      kappas.push_back(ok_eig.eigenvalues.back());
      kappas.push_back(0.5 * (ok_eig.eigenvalues.front() + ok_eig.eigenvalues.back()));
      if (ok_eig.eigenvalues.front() < 0.0 && ok_eig.eigenvalues.back() > 0.0)
        kappas.push_back(0.0);
    }
  }
  const double kmin = kappas.empty() ? 0.0 : kappas.front();
  const double kmax = kappas.empty() ? 0.0 : *std::max_element(kappas.begin(), kappas.end());

  const auto build = [&](const std::vector<std::pair<std::size_t, double>>& mix) {
    ComplexMatrix rt(d, d);
    for (const auto& [j, t] : mix)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) rt(r, c) += t * vecs[j][r] * std::conj(vecs[j][c]);
    out.ok = true;
    out.rho_tilde = detail::from_basis(v, rt);
  };

  const auto kernel_absorbs = [&](double mu, double t_kernel) {
    const double slack = 1e-9 * std::max(1.0, std::abs(mu));
    if (sp.kernel.empty()) return std::abs(t_kernel) <= 1e-9 && std::abs(mu) <= slack;
    if (t_kernel <= 1e-12) return std::abs(mu) <= slack;
    const double want = -mu / t_kernel;
    return want >= kmin - slack && want <= kmax + slack;
  };

  // Single eigenvector: t = target / lambda.
  for (std::size_t j = 0; j < nc; ++j) {
    if (std::abs(lam[j]) < 1e-12) continue;
    const double t = target / lam[j];
    if (t < 0.0) continue;
    const double tau = t * hh[j];
    if (tau > 1.0 + 1e-12) continue;
    if (!kernel_absorbs(t * gg[j], 1.0 - tau)) continue;
    build({{j, t}});
    return out;
  }

  // Pairs, steering the kernel block to a fixed per-unit-trace average kappa.
  for (double kappa : kappas)
    for (std::size_t j1 = 0; j1 < nc; ++j1)
      for (std::size_t j2 = j1 + 1; j2 < nc; ++j2) {
        const double a11 = lam[j1], a12 = lam[j2];
        const double a21 = kappa * hh[j1] - gg[j1], a22 = kappa * hh[j2] - gg[j2];
        const double det = a11 * a22 - a12 * a21;
        if (std::abs(det) < 1e-12) continue;
        double t1 = (target * a22 - a12 * kappa) / det;
        double t2 = (a11 * kappa - target * a21) / det;
        if (t1 < -1e-12 || t2 < -1e-12) continue;
        t1 = std::max(0.0, t1);
        t2 = std::max(0.0, t2);
        const double tau = t1 * hh[j1] + t2 * hh[j2];
        if (tau > 1.0 + 1e-12) continue;
        if (!kernel_absorbs(t1 * gg[j1] + t2 * gg[j2], 1.0 - tau)) continue;
        build({{j1, t1}, {j2, t2}});
        return out;
      }

  out.reason = "no eigenprojector combination meets the target within the trace budget";
  return out;
}

/// Stationary couplings of <do>(lambda) = (P l + Q l^2)/(1 + R l + T l^2)
/// with P = c A'_w - a A''_w, Q = s B_w, R = -2 xi_mean A''_w,
/// T = (1 + xi_mean^2) B_w: roots of (PT - QR) l^2 - 2 Q l - P = 0. The
/// literal printed closed form (with its factor-4 discrepancy inside the
/// radical) is evaluated alongside for comparison; the quadratic is what the
/// scan oracle confirms.
struct CouplingOptimum {
  std::array<double, 2> lambda_roots{std::numeric_limits<double>::quiet_NaN(),
                                     std::numeric_limits<double>::quiet_NaN()};
  std::array<double, 2> values{std::numeric_limits<double>::quiet_NaN(),
                               std::numeric_limits<double>::quiet_NaN()};
  std::array<double, 2> literal_paper_roots{std::numeric_limits<double>::quiet_NaN(),
                                            std::numeric_limits<double>::quiet_NaN()};
  int n_roots = 0;
  bool perturbation_checked = false;
  std::array<bool, 2> perturbation_ok{true, true};
};

inline double coupling_response(const DetectorMoments& m, cplx a_w, double b_w, double lambda) {
  const double p = m.c * a_w.real() - m.a * a_w.imag();
  const double qq = m.s * b_w;
  const double r = -2.0 * m.xi_mean * a_w.imag();
  const double t = (1.0 + m.xi_mean * m.xi_mean) * b_w;
  return (p * lambda + qq * lambda * lambda) / (1.0 + r * lambda + t * lambda * lambda);
}

inline CouplingOptimum optimal_coupling(const DetectorMoments& m, cplx a_w, double b_w,
                                        const MeasurementSetup* context = nullptr,
                                        double delta = 0.1, std::size_t n_max = 8,
                                        const Tolerances& tol = {}) {
  const double scale = std::max({1.0, std::abs(m.a), std::abs(m.c), std::abs(m.s), b_w});
  if (b_w < std::norm(a_w) - 1e-9 * scale)
    throw Error("optimal_coupling: B_w < |A_w|^2 violates the weak-value region");

  const double p = m.c * a_w.real() - m.a * a_w.imag();
  const double qq = m.s * b_w;
  const double r = -2.0 * m.xi_mean * a_w.imag();
  const double t = (1.0 + m.xi_mean * m.xi_mean) * b_w;
  const double tiny = 1e-14 * scale;
  if (std::abs(p) <= tiny && std::abs(qq) <= tiny)
    throw Error("optimal_coupling: P = Q = 0, output identically zero in lambda at this order");

  CouplingOptimum res;
  const double a2 = p * t - qq * r;
  std::vector<double> roots;
  if (std::abs(a2) <= tiny * std::max(1.0, t)) {
    if (std::abs(qq) > tiny) roots.push_back(-p / (2.0 * qq));
  } else {
    const double disc = 4.0 * qq * qq + 4.0 * a2 * p;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      roots.push_back((2.0 * qq + sq) / (2.0 * a2));
      roots.push_back((2.0 * qq - sq) / (2.0 * a2));
    }
  }
  res.n_roots = static_cast<int>(roots.size());
  std::vector<std::pair<double, double>> rv;  // (value, root)
  for (double x : roots) rv.emplace_back(coupling_response(m, a_w, b_w, x), x);
  std::sort(rv.begin(), rv.end(), [](const auto& l, const auto& rr) { return l.first > rr.first; });
  for (std::size_t i = 0; i < rv.size() && i < 2; ++i) {
    res.lambda_roots[i] = rv[i].second;
    res.values[i] = rv[i].first;
  }

  const double denom = (1.0 + m.xi_mean * m.xi_mean) * p + 2.0 * m.s * m.xi_mean * a_w.imag();
  if (b_w > 0.0 && std::abs(denom) > tiny) {
    const double rad = m.s * m.s + 4.0 * p * denom / b_w;
    if (rad >= 0.0) {
      res.literal_paper_roots[0] = (m.s + std::sqrt(rad)) / denom;
      res.literal_paper_roots[1] = (m.s - std::sqrt(rad)) / denom;
    }
  }

  if (context != nullptr) {
    res.perturbation_checked = true;
    for (std::size_t i = 0; i < rv.size() && i < 2; ++i) {
      MeasurementSetup probe = *context;
      probe.lambda = res.lambda_roots[i];
      res.perturbation_ok[i] = validity_report(probe, delta, n_max).condition_holds;
    }
  }
  (void)tol;
  return res;
}

}  // namespace wmopt
