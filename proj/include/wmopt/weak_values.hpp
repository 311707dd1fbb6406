#pragma once

#include "wmopt/linalg.hpp"
#include "wmopt/states.hpp"

namespace wmopt {

/// The three system-side scalars of the perturbative expansion:
/// omega = Tr[E_f rho_i], alpha = Tr[E_f A rho_i], beta = Tr[E_f A rho_i A].
/// omega and beta are real and nonnegative; |alpha|^2 <= beta * omega.
struct WeakValueTriple {
  double omega = 0.0;
  cplx alpha = 0.0;
  double beta = 0.0;
};

/// Canonical weak values A_w = alpha/omega, B_w = beta/omega, plus the
/// second-order scalar C_w = Tr[E_f A^2 rho_i]/omega. When omega is
/// negligible against the rest of the triple the division is refused and
/// orthogonal_flag is set; consumers must fall back to the raw triple.
struct CanonicalWeakValues {
  cplx A_w = 0.0;
  double B_w = 0.0;
  cplx C_w = 0.0;
  bool orthogonal_flag = false;
};

inline WeakValueTriple weak_value_triple(const PovmElement& e_f, const DensityMatrix& rho_i,
                                         const Observable& a, const Tolerances& tol = {}) {
  if (e_f.dim() != rho_i.dim() || a.dim() != rho_i.dim())
    throw Error("weak_value_triple: dimension mismatch");
  const ComplexMatrix& E = e_f.matrix();
  const ComplexMatrix& R = rho_i.matrix();
  const ComplexMatrix& A = a.matrix();
  const cplx omega_c = trace_of_product(E, R);
  const cplx alpha = (E * A * R).trace();
  const cplx beta_c = (E * A * R * A).trace();
  const double scale = std::max({1.0, std::abs(omega_c), std::abs(beta_c)});
  if (std::abs(omega_c.imag()) > tol.general_rel * scale)
    throw Error("weak_value_triple: omega has non-negligible imaginary part (invalid inputs)");
  if (std::abs(beta_c.imag()) > tol.general_rel * scale)
    throw Error("weak_value_triple: beta has non-negligible imaginary part (invalid inputs)");
  WeakValueTriple t{omega_c.real(), alpha, beta_c.real()};
  if (t.omega < -tol.general_rel * scale || t.beta < -tol.general_rel * scale)
    throw Error("weak_value_triple: negative omega or beta (invalid inputs)");
  return t;
}

/// Relative orthogonality threshold: omega is compared against
/// orth_rel * beta / max|A|^2, the scale of the other triple entries.
inline double orthogonality_threshold(const WeakValueTriple& t, const Observable& a,
                                      const Tolerances& tol = {}, double orth_rel = 1e-12) {
  const EigResult eig = hermitian_eig(a.matrix(), tol);
  const double max_abs_a =
      std::max(std::abs(eig.eigenvalues.front()), std::abs(eig.eigenvalues.back()));
  if (!(max_abs_a > 0.0)) return 0.0;
  return orth_rel * t.beta / (max_abs_a * max_abs_a);
}

inline CanonicalWeakValues canonical_weak_values(const WeakValueTriple& t, const PovmElement& e_f,
                                                 const DensityMatrix& rho_i, const Observable& a,
                                                 const Tolerances& tol = {}) {
  CanonicalWeakValues w;
  const double threshold = orthogonality_threshold(t, a, tol);
  if (t.omega <= threshold || !(t.omega > 0.0)) {
    w.orthogonal_flag = true;
    return w;
  }
  w.A_w = t.alpha / t.omega;
  w.B_w = t.beta / t.omega;
  const ComplexMatrix& A = a.matrix();
  w.C_w = (e_f.matrix() * A * A * rho_i.matrix()).trace() / t.omega;
  return w;
}

enum class EqualityReason { omega_zero, beta_zero, shifted_null_vector, none };

inline const char* to_string(EqualityReason r) {
  switch (r) {
    case EqualityReason::omega_zero: return "omega_zero";
    case EqualityReason::beta_zero: return "beta_zero";
    case EqualityReason::shifted_null_vector: return "shifted_null_vector";
    case EqualityReason::none: return "none";
  }
  return "none";
}

struct CauchySchwarzReport {
  double lhs = 0.0;  // |alpha|^2
  double rhs = 0.0;  // beta * omega
  bool equality = false;
  EqualityReason equality_reason = EqualityReason::none;
};

/// Checks |alpha|^2 <= beta * omega and classifies how equality arises:
/// orthogonality (omega = 0), beta = 0, or A - z being a null vector of the
/// semi-inner product, tested as <f|A|i> = z <f|i> over the eigenvectors of
/// E_f and rho_i with nonzero eigenvalues (z = A_w).
inline CauchySchwarzReport cauchy_schwarz_report(const PovmElement& e_f,
                                                 const DensityMatrix& rho_i, const Observable& a,
                                                 const Tolerances& tol = {},
                                                 double eigen_cutoff = 1e-10) {
  const WeakValueTriple t = weak_value_triple(e_f, rho_i, a, tol);
  CauchySchwarzReport rep;
  rep.lhs = std::norm(t.alpha);
  rep.rhs = t.beta * t.omega;
  const double scale = std::max({1.0, rep.lhs, rep.rhs});
  rep.equality = std::abs(rep.lhs - rep.rhs) <= 1e2 * tol.general_rel * scale;

  const EigResult eig_a = hermitian_eig(a.matrix(), tol);
  const double max_abs_a =
      std::max(std::abs(eig_a.eigenvalues.front()), std::abs(eig_a.eigenvalues.back()));
  const double beta_scale = std::max(1.0, max_abs_a * max_abs_a);
  if (t.omega <= orthogonality_threshold(t, a, tol) ||
      t.omega <= tol.general_rel) {
    rep.equality_reason = EqualityReason::omega_zero;
    return rep;
  }
  if (t.beta <= tol.general_rel * beta_scale) {
    rep.equality_reason = EqualityReason::beta_zero;
    return rep;
  }

  const cplx z = t.alpha / t.omega;
  const EigResult ef_eig = hermitian_eig(e_f.matrix(), tol);
  const EigResult rho_eig = hermitian_eig(rho_i.matrix(), tol);
  const ComplexMatrix shifted = [&] {
    ComplexMatrix m = a.matrix();
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) -= z;
    return m;
  }();
  const double check_scale = std::max(1.0, max_abs_a + std::abs(z));
  bool null_vector = true;
  const std::size_t d = a.dim();
  for (std::size_t fi = 0; fi < d && null_vector; ++fi) {
    if (ef_eig.eigenvalues[fi] <= eigen_cutoff) continue;
    for (std::size_t ii = 0; ii < d; ++ii) {
      if (rho_eig.eigenvalues[ii] <= eigen_cutoff) continue;
      cplx amp = 0.0;  // <f| (A - z) |i>
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c)
          amp += std::conj(ef_eig.eigenvectors(r, fi)) * shifted(r, c) *
                 rho_eig.eigenvectors(c, ii);
      if (std::abs(amp) > 1e3 * tol.general_rel * check_scale) {
        null_vector = false;
        break;
      }
    }
  }
  rep.equality_reason = null_vector ? EqualityReason::shifted_null_vector : EqualityReason::none;
  return rep;
}

}  // namespace wmopt
