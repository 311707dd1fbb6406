#pragma once

#include <limits>
#include <optional>

#include "wmopt/linalg.hpp"
#include "wmopt/states.hpp"
#include "wmopt/weak_values.hpp"

namespace wmopt {

/// Postselection probabilities below this floor leave the conditional state
/// undefined; operations fail rather than divide.
inline constexpr double kPostselectionFloor = 1e-14;

/// U = exp(i lambda A (x) q), constant across sweeps that vary only the
/// system preparation/postselection.
inline ComplexMatrix joint_propagator(const Observable& a, const Observable& q, double lambda,
                                      const Tolerances& tol = {},
                                      std::size_t max_dim = kDefaultMaxDimension) {
  return unitary_exp(tensor_product(a.matrix(), q.matrix(), max_dim), lambda, tol);
}

/// rho_plus = U (rho_i (x) rho_det) U^dagger.
inline DensityMatrix evolve_joint(const MeasurementSetup& setup,
                                  std::size_t max_dim = kDefaultMaxDimension) {
  const ComplexMatrix u = joint_propagator(setup.A, setup.q, setup.lambda, setup.tol, max_dim);
  const ComplexMatrix rho = tensor_product(setup.rho_i.matrix(), setup.rho_det.matrix(), max_dim);
  return DensityMatrix(u * rho * u.adjoint(), setup.tol);
}

struct PostselectResult {
  DensityMatrix rho_cond;  // conditional detector state
  double N = 0.0;          // postselection probability
};

/// N = Tr[(E_f (x) 1) rho_plus]; rho_cond = Tr_sys[(E_f (x) 1) rho_plus] / N.
inline PostselectResult postselect(const DensityMatrix& rho_plus, const PovmElement& e_f,
                                   const Tolerances& tol = {}) {
  const std::size_t d_sys = e_f.dim();
  const std::size_t d_joint = rho_plus.dim();
  if (d_joint % d_sys != 0)
    throw Error("postselect: joint dimension " + std::to_string(d_joint) +
                " not divisible by system dimension " + std::to_string(d_sys));
  const std::size_t d_det = d_joint / d_sys;
  const ComplexMatrix ef_joint = tensor_product(e_f.matrix(), ComplexMatrix::identity(d_det));
  const ComplexMatrix selected = ef_joint * rho_plus.matrix();
  const double n = selected.trace().real();
  if (n < kPostselectionFloor)
    throw Error("postselection probability numerically zero (N = " + std::to_string(n) + ")");
  ComplexMatrix cond = partial_trace(selected, d_sys, d_det, Subsystem::detector);
  cond *= cplx(1.0 / n, 0.0);
  // selected is not Hermitian entry-wise; the partial trace of E rho over the
  // system is, up to rounding. Symmetrize before validating.
  ComplexMatrix herm = cond;
  herm += cond.adjoint();
  herm *= cplx(0.5, 0.0);
  return {DensityMatrix(std::move(herm), tol), n};
}

namespace detail {

/// First-order (consistent) expansion of Tr[(E_f (x) op) U1 rho U1^dagger]
/// with U1 = 1 + i lambda A q:
///   omega <op> + i lambda <op q> alpha - i lambda <q op> alpha* + lambda^2 <q op q> beta.
inline double first_order_functional(const WeakValueTriple& t, const ComplexMatrix& op,
                                     const ComplexMatrix& q, const ComplexMatrix& rho_det,
                                     double lambda) {
  const cplx op_avg = trace_of_product(op, rho_det);
  const cplx opq_avg = (op * q * rho_det).trace();
  const cplx qop_avg = (q * op * rho_det).trace();
  const cplx qopq_avg = (q * op * q * rho_det).trace();
  const cplx i_lambda(0.0, lambda);
  const cplx value = t.omega * op_avg + i_lambda * opq_avg * t.alpha -
                     i_lambda * qop_avg * std::conj(t.alpha) +
                     lambda * lambda * qopq_avg * t.beta;
  return value.real();
}

}  // namespace detail

/// Conditional detector readout through three tiers: the exact M/N path, the
/// interpolating first-order formula M1/N1 (robust for vanishing overlap),
/// and the first-order truncation that reduces to <p> = lambda Re(A_w) in the
/// canonical Gaussian case. mean_aav is NaN when the overlap is below the
/// orthogonality threshold (aav_available = false).
struct ConditionalOutput {
  double mean_exact = 0.0;
  double N_exact = 0.0;
  double mean_interp = 0.0;
  double mean_aav = 0.0;
  double M1 = 0.0;
  double N1 = 0.0;
  DensityMatrix rho_det_cond;
  bool aav_available = false;
};

inline ConditionalOutput conditional_mean(const MeasurementSetup& setup,
                                          std::size_t max_dim = kDefaultMaxDimension) {
  const ComplexMatrix u = joint_propagator(setup.A, setup.q, setup.lambda, setup.tol, max_dim);
  const ComplexMatrix rho0 =
      tensor_product(setup.rho_i.matrix(), setup.rho_det.matrix(), max_dim);
  const ComplexMatrix rho_plus = u * rho0 * u.adjoint();
  const std::size_t d_det = setup.dim_det();

  const ComplexMatrix ef_id = tensor_product(setup.E_f.matrix(), ComplexMatrix::identity(d_det));
  const ComplexMatrix ef_o = tensor_product(setup.E_f.matrix(), setup.o.matrix());
  const double n_exact = trace_of_product(ef_id, rho_plus).real();
  const double m_exact = trace_of_product(ef_o, rho_plus).real();
  if (n_exact < kPostselectionFloor)
    throw Error("postselection probability numerically zero (N = " + std::to_string(n_exact) +
                ")");

  ComplexMatrix cond = partial_trace(ef_id * rho_plus, setup.dim_sys(), d_det, Subsystem::detector);
  cond *= cplx(1.0 / n_exact, 0.0);
  ComplexMatrix herm = cond;
  herm += cond.adjoint();
  herm *= cplx(0.5, 0.0);

  const WeakValueTriple t = weak_value_triple(setup.E_f, setup.rho_i, setup.A, setup.tol);
  const ComplexMatrix& q = setup.q.matrix();
  const ComplexMatrix& o = setup.o.matrix();
  const ComplexMatrix& rd = setup.rho_det.matrix();
  const double lambda = setup.lambda;

  const double m1 = detail::first_order_functional(t, o, q, rd, lambda);
  const double n1 =
      detail::first_order_functional(t, ComplexMatrix::identity(d_det), q, rd, lambda);
  if (n1 < kPostselectionFloor)
    throw Error("first-order postselection probability numerically zero (N1 = " +
                std::to_string(n1) + ")");

  ConditionalOutput out{m_exact / n_exact,
                        n_exact,
                        m1 / n1,
                        std::numeric_limits<double>::quiet_NaN(),
                        m1,
                        n1,
                        DensityMatrix(std::move(herm), setup.tol),
                        false};

  const CanonicalWeakValues w = canonical_weak_values(t, setup.E_f, setup.rho_i, setup.A, setup.tol);
  if (!w.orthogonal_flag) {
    const double o_avg = trace_of_product(o, rd).real();
    const double q_avg = trace_of_product(q, rd).real();
    const double comm = (cplx(0.0, -1.0) * trace_of_product(commutator(q, o), rd)).real();
    const double anti = trace_of_product(anticommutator(q, o), rd).real();
    out.mean_aav =
        o_avg + lambda * (comm * w.A_w.real() - (anti - 2.0 * q_avg * o_avg) * w.A_w.imag());
    out.aav_available = true;
  }
  return out;
}

/// Joint and marginal postselection probabilities from the
/// positivity-preserving first-order expansion, normalized by
/// 1 + lambda^2 <A^2>_i <q^2>_det so complementary postselections sum to one.
struct ProbabilityReport {
  std::vector<double> joint;
  double marginal = 0.0;
  double normalization = 0.0;
};

inline ProbabilityReport normalized_probabilities(const MeasurementSetup& setup,
                                                  const std::vector<Observable>& outcomes) {
  const std::size_t d_det = setup.dim_det();
  ComplexMatrix sum(d_det, d_det);
  for (const auto& pi : outcomes) {
    if (pi.dim() != d_det) throw Error("normalized_probabilities: projector dimension mismatch");
    if (min_eigenvalue(pi.matrix(), setup.tol) <
        setup.tol.psd_eigen_floor * std::max(1.0, pi.matrix().max_abs()))
      throw Error("normalized_probabilities: outcome operator is not positive semi-definite");
    sum += pi.matrix();
  }
  if (max_abs_diff(sum, ComplexMatrix::identity(d_det)) > 1e3 * setup.tol.general_rel)
    throw Error("normalized_probabilities: outcome projectors do not resolve the identity");

  const WeakValueTriple t = weak_value_triple(setup.E_f, setup.rho_i, setup.A, setup.tol);
  const ComplexMatrix& q = setup.q.matrix();
  const ComplexMatrix& rd = setup.rho_det.matrix();
  const double a2_avg = trace_of_product(setup.A.matrix() * setup.A.matrix(),
                                         setup.rho_i.matrix())
                            .real();
  const double q2_avg = trace_of_product(q * q, rd).real();
  const double norm = 1.0 + setup.lambda * setup.lambda * a2_avg * q2_avg;

  ProbabilityReport rep;
  rep.normalization = norm;
  rep.joint.reserve(outcomes.size());
  for (const auto& pi : outcomes)
    rep.joint.push_back(detail::first_order_functional(t, pi.matrix(), q, rd, setup.lambda) /
                        norm);
  rep.marginal = detail::first_order_functional(t, ComplexMatrix::identity(d_det), q, rd,
                                                setup.lambda) /
                 norm;
  return rep;
}

/// Certificate for the first-order propagator expansion. The sufficient
/// condition (2 lambda max|A|)^n <q^2n>^(1/2) <= delta^n is checked for
/// n = 1..n_max; when it holds, |N - N1| <= epsilon = Tr[E_f](e^delta-1-delta)
/// and |M - M1| <= (1+u) epsilon <o^2>^(1/2), the latter resting on a stated
/// conjecture with constant u supplied by the caller (never asserted here).
struct ValidityReport {
  double delta = 0.0;
  std::size_t n_max = 0;
  bool condition_holds = false;
  double epsilon = 0.0;
  double N_error_bound = 0.0;
  double M_error_bound = 0.0;
  double u_conjecture = 0.0;
  double N_error_actual = 0.0;
  double M_error_actual = 0.0;
  bool m_bound_violated = false;
};

inline ValidityReport validity_report(const MeasurementSetup& setup, double delta = 0.1,
                                      std::size_t n_max = 8, double u = 1.0) {
  if (!(delta > 0.0)) throw Error("validity_report: delta must be positive");
  if (n_max < 2) throw Error("validity_report: n_max must be >= 2");

  const EigResult q_eig = hermitian_eig(setup.q.matrix(), setup.tol);
  const std::size_t d = q_eig.eigenvalues.size();
  std::vector<double> weights(d, 0.0);  // <v_i| rho_det |v_i>
  for (std::size_t i = 0; i < d; ++i) {
    cplx w = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        w += std::conj(q_eig.eigenvectors(r, i)) * setup.rho_det.matrix()(r, c) *
             q_eig.eigenvectors(c, i);
    weights[i] = std::max(0.0, w.real());
  }

  const EigResult a_eig = hermitian_eig(setup.A.matrix(), setup.tol);
  const double max_abs_a =
      std::max(std::abs(a_eig.eigenvalues.front()), std::abs(a_eig.eigenvalues.back()));

  ValidityReport rep;
  rep.delta = delta;
  rep.n_max = n_max;
  rep.u_conjecture = u;
  rep.condition_holds = true;
  const double base = 2.0 * std::abs(setup.lambda) * max_abs_a;
  for (std::size_t n = 1; n <= n_max && rep.condition_holds; ++n) {
    double moment = 0.0;  // <q^(2n)>
    for (std::size_t i = 0; i < d; ++i)
      moment += weights[i] * std::pow(q_eig.eigenvalues[i], 2.0 * static_cast<double>(n));
    const double lhs = std::pow(base, static_cast<double>(n)) * std::sqrt(std::max(0.0, moment));
    if (lhs > std::pow(delta, static_cast<double>(n))) rep.condition_holds = false;
  }

  const double tr_ef = setup.E_f.matrix().trace().real();
  rep.epsilon = tr_ef * (std::exp(delta) - 1.0 - delta);
  rep.N_error_bound = rep.epsilon;
  const double o2_avg =
      trace_of_product(setup.o.matrix() * setup.o.matrix(), setup.rho_det.matrix()).real();
  rep.M_error_bound = (1.0 + u) * rep.epsilon * std::sqrt(std::max(0.0, o2_avg));

  const ConditionalOutput out = conditional_mean(setup);
  rep.N_error_actual = std::abs(out.N_exact - out.N1);
  rep.M_error_actual = std::abs(out.mean_exact * out.N_exact - out.M1);
  rep.m_bound_violated =
      rep.condition_holds && rep.M_error_actual > rep.M_error_bound + 1e-12;
  return rep;
}

}  // namespace wmopt
