#pragma once

#include <Eigen/Dense>

#include "wmopt/matrix.hpp"

namespace wmopt {

struct EigResult {
  std::vector<double> eigenvalues;  // ascending
  ComplexMatrix eigenvectors;       // columns; H = V diag(e) V^dagger
};

namespace detail {

inline Eigen::MatrixXcd to_eigen(const ComplexMatrix& m) {
  Eigen::MatrixXcd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

inline ComplexMatrix from_eigen(const Eigen::MatrixXcd& m) {
  ComplexMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return out;
}

}  // namespace detail

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
inline EigResult hermitian_eig(const ComplexMatrix& h, const Tolerances& tol = {}) {
  h.require_square("hermitian_eig");
  if (!h.is_finite()) throw Error("hermitian_eig: non-finite entries");
  if (!h.is_hermitian(tol.hermiticity))
    throw Error("hermitian_eig: input is not Hermitian within tolerance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(detail::to_eigen(h));
  if (solver.info() != Eigen::Success) throw Error("hermitian_eig: solver failed to converge");
  EigResult res;
  res.eigenvalues.assign(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  res.eigenvectors = detail::from_eigen(solver.eigenvectors());
  return res;
}

/// V f(diag) V^dagger for a spectral function f acting on real eigenvalues.
template <typename F>
ComplexMatrix spectral_apply(const EigResult& eig, F&& f) {
  const std::size_t n = eig.eigenvalues.size();
  const ComplexMatrix& v = eig.eigenvectors;
  ComplexMatrix out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      cplx s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += v(r, k) * f(eig.eigenvalues[k]) * std::conj(v(c, k));
      out(r, c) = s;
    }
  return out;
}

/// exp(i * scale * H) for Hermitian H, via eigendecomposition. Unitary by
/// construction up to rounding.
inline ComplexMatrix unitary_exp(const ComplexMatrix& h, double scale, const Tolerances& tol = {}) {
  const EigResult eig = hermitian_eig(h, tol);
  return spectral_apply(eig, [scale](double x) {
    return std::exp(cplx(0.0, scale * x));
  });
}

inline double min_eigenvalue(const ComplexMatrix& h, const Tolerances& tol = {}) {
  return hermitian_eig(h, tol).eigenvalues.front();
}

/// Semi-inner product (X, Y) = Tr[P2 X P1 Y^dagger] of Appendix-style
/// operator geometry; P1, P2 must be nonnegative Hermitian.
inline cplx semi_inner_product(const ComplexMatrix& p2, const ComplexMatrix& p1,
                               const ComplexMatrix& x, const ComplexMatrix& y,
                               const Tolerances& tol = {}) {
  const std::size_t d = p2.rows();
  if (!p2.is_square() || !p1.is_square() || p1.rows() != d || x.rows() != d || x.cols() != d ||
      y.rows() != d || y.cols() != d)
    throw Error("semi_inner_product: dimension mismatch");
  if (min_eigenvalue(p1, tol) < tol.psd_eigen_floor * std::max(1.0, p1.max_abs()))
    throw Error("semi_inner_product: P1 is not positive semi-definite");
  if (min_eigenvalue(p2, tol) < tol.psd_eigen_floor * std::max(1.0, p2.max_abs()))
    throw Error("semi_inner_product: P2 is not positive semi-definite");
  return (p2 * x * p1 * y.adjoint()).trace();
}

}  // namespace wmopt
