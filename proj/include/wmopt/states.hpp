#pragma once

#include "wmopt/linalg.hpp"
#include "wmopt/matrix.hpp"
#include "wmopt/random.hpp"

namespace wmopt {

/// Hermitian, positive semi-definite, unit-trace matrix. Validation failures
/// are hard errors at construction: every downstream formula assumes these
/// invariants.
class DensityMatrix {
public:
  explicit DensityMatrix(ComplexMatrix m, const Tolerances& tol = {}, const std::string& path = {})
      : m_(std::move(m)) {
    m_.require_square("DensityMatrix");
    if (!m_.is_finite()) throw Error("density matrix has non-finite entries", path);
    if (!m_.is_hermitian(tol.hermiticity)) throw Error("density matrix is not Hermitian", path);
    const double tr = m_.trace().real();
    if (std::abs(tr - 1.0) > tol.trace_one)
      throw Error("density matrix trace = " + std::to_string(tr) + ", expected 1", path);
    const double lo = min_eigenvalue(m_, tol);
    if (lo < tol.psd_eigen_floor)
      throw Error("density matrix has negative eigenvalue " + std::to_string(lo), path);
  }

  std::size_t dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

private:
  ComplexMatrix m_;
};

/// POVM element E_f: Hermitian with spectrum in [0, 1]. The trace need not be
/// one (mixed postselection is plain input data here).
class PovmElement {
public:
  explicit PovmElement(ComplexMatrix m, const Tolerances& tol = {}, const std::string& path = {})
      : m_(std::move(m)) {
    m_.require_square("PovmElement");
    if (!m_.is_finite()) throw Error("POVM element has non-finite entries", path);
    if (!m_.is_hermitian(tol.hermiticity)) throw Error("POVM element is not Hermitian", path);
    const EigResult eig = hermitian_eig(m_, tol);
    if (eig.eigenvalues.front() < tol.psd_eigen_floor)
      throw Error("POVM element has negative eigenvalue " +
                      std::to_string(eig.eigenvalues.front()),
                  path);
    if (eig.eigenvalues.back() > 1.0 - tol.psd_eigen_floor)
      throw Error("POVM element has eigenvalue " + std::to_string(eig.eigenvalues.back()) +
                      " above 1",
                  path);
    const double tr = m_.trace().real();
    if (!(tr > 0.0))
      throw Error("POVM element has non-positive trace " + std::to_string(tr), path);
  }

  std::size_t dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

private:
  ComplexMatrix m_;
};

class Observable {
public:
  explicit Observable(ComplexMatrix m, const Tolerances& tol = {}, const std::string& path = {})
      : m_(std::move(m)) {
    m_.require_square("Observable");
    if (!m_.is_finite()) throw Error("observable has non-finite entries", path);
    if (!m_.is_hermitian(tol.hermiticity)) throw Error("observable is not Hermitian", path);
  }

  std::size_t dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

private:
  ComplexMatrix m_;
};

/// Full description of one postselected weak measurement: system preparation
/// rho_i, postselection E_f, measured observable A, detector state rho_det,
/// coupling variable q, readout o, and the coupling constant lambda.
struct MeasurementSetup {
  DensityMatrix rho_i;
  PovmElement E_f;
  Observable A;
  DensityMatrix rho_det;
  Observable q;
  Observable o;
  double lambda = 0.0;
  Tolerances tol;

  MeasurementSetup(DensityMatrix rho_i_, PovmElement ef, Observable a, DensityMatrix rho_det_,
                   Observable q_, Observable o_, double lambda_, Tolerances tol_ = {})
      : rho_i(std::move(rho_i_)),
        E_f(std::move(ef)),
        A(std::move(a)),
        rho_det(std::move(rho_det_)),
        q(std::move(q_)),
        o(std::move(o_)),
        lambda(lambda_),
        tol(tol_) {
    if (E_f.dim() != rho_i.dim() || A.dim() != rho_i.dim())
      throw Error("system operators disagree on dimension");
    if (q.dim() != rho_det.dim() || o.dim() != rho_det.dim())
      throw Error("detector operators disagree on dimension");
    if (!std::isfinite(lambda)) throw Error("lambda must be finite", "lambda");
  }

  std::size_t dim_sys() const { return rho_i.dim(); }
  std::size_t dim_det() const { return rho_det.dim(); }
};

inline double expectation(const ComplexMatrix& op, const DensityMatrix& rho) {
  return trace_of_product(op, rho.matrix()).real();
}

inline ComplexMatrix pauli_x() { return ComplexMatrix{{0.0, 1.0}, {1.0, 0.0}}; }
inline ComplexMatrix pauli_y() {
  return ComplexMatrix{{0.0, cplx(0.0, -1.0)}, {cplx(0.0, 1.0), 0.0}};
}
inline ComplexMatrix pauli_z() { return ComplexMatrix{{1.0, 0.0}, {0.0, -1.0}}; }

/// Rank-1 projector |v><v| / <v|v>.
inline ComplexMatrix projector(const std::vector<cplx>& v) {
  double n2 = 0.0;
  for (const auto& z : v) n2 += std::norm(z);
  if (!(n2 > 0.0)) throw Error("projector: zero vector");
  ComplexMatrix out(v.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = v[i] * std::conj(v[j]) / n2;
  return out;
}

struct OscillatorOperators {
  Observable q;
  Observable p;
};

/// Truncated Fock-space position/momentum pair: q = (a + a^dagger)/sqrt(2),
/// p = (a - a^dagger)/(i sqrt(2)). The continuous-spectrum pointer of the von
/// Neumann model is approximated by this finite surrogate; the ground state
/// reproduces <[q,p]> = i exactly, truncation only touches the top level.
inline OscillatorOperators oscillator_operators(std::size_t dim, const Tolerances& tol = {}) {
  if (dim < 2) throw Error("oscillator_operators: dim must be >= 2");
  ComplexMatrix q(dim, dim), p(dim, dim);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t k = 1; k < dim; ++k) {
    const double s = std::sqrt(static_cast<double>(k));  // a[k-1][k] = sqrt(k)
    q(k - 1, k) = s * inv_sqrt2;
    q(k, k - 1) = s * inv_sqrt2;
    p(k - 1, k) = cplx(0.0, -s * inv_sqrt2);
    p(k, k - 1) = cplx(0.0, s * inv_sqrt2);
  }
  return {Observable(std::move(q), tol), Observable(std::move(p), tol)};
}

/// |0><0| on the truncated Fock space.
inline DensityMatrix oscillator_ground_state(std::size_t dim, const Tolerances& tol = {}) {
  if (dim < 2) throw Error("oscillator_ground_state: dim must be >= 2");
  ComplexMatrix m(dim, dim);
  m(0, 0) = 1.0;
  return DensityMatrix(std::move(m), tol);
}

inline DensityMatrix maximally_mixed_state(std::size_t dim, const Tolerances& tol = {}) {
  ComplexMatrix m = ComplexMatrix::identity(dim);
  m *= cplx(1.0 / static_cast<double>(dim), 0.0);
  return DensityMatrix(std::move(m), tol);
}

inline std::vector<cplx> random_unit_vector(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<cplx> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& z : v) {
      z = rng.complex_gaussian();
      n2 += std::norm(z);
    }
  } while (!(n2 > 1e-30));
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& z : v) z *= inv;
  return v;
}

/// Haar-ish rank-1 projector from a normalized complex-Gaussian vector.
inline DensityMatrix random_pure_state(std::size_t dim, std::uint64_t seed,
                                       const Tolerances& tol = {}) {
  return DensityMatrix(projector(random_unit_vector(dim, seed)), tol);
}

inline ComplexMatrix random_ginibre(std::size_t dim, Rng& rng) {
  ComplexMatrix g(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) g(r, c) = rng.complex_gaussian();
  return g;
}

/// G G^dagger / Tr[G G^dagger] for complex-Gaussian G; full rank with
/// probability one.
inline DensityMatrix random_mixed_state(std::size_t dim, std::uint64_t seed,
                                        const Tolerances& tol = {}) {
  Rng rng(seed);
  const ComplexMatrix g = random_ginibre(dim, rng);
  ComplexMatrix m = g * g.adjoint();
  const double tr = m.trace().real();
  m *= cplx(1.0 / tr, 0.0);
  return DensityMatrix(std::move(m), tol);
}

inline ComplexMatrix random_hermitian(std::size_t dim, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  ComplexMatrix h(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    h(r, r) = scale * rng.gaussian();
    for (std::size_t c = r + 1; c < dim; ++c) {
      const cplx z = 0.5 * scale * rng.complex_gaussian();
      h(r, c) = z;
      h(c, r) = std::conj(z);
    }
  }
  return h;
}

/// Random POVM effect: G G^dagger rescaled so the spectrum sits in (0, 1].
inline PovmElement random_povm_element(std::size_t dim, std::uint64_t seed,
                                       const Tolerances& tol = {}) {
  Rng rng(seed);
  const ComplexMatrix g = random_ginibre(dim, rng);
  ComplexMatrix m = g * g.adjoint();
  const EigResult eig = hermitian_eig(m, tol);
  const double top = eig.eigenvalues.back();
  const double u = 0.05 + 0.95 * rng.uniform();  // keep strictly inside (0, 1]
  m *= cplx(u / top, 0.0);
  return PovmElement(std::move(m), tol);
}

}  // namespace wmopt
