#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace wmopt {

using cplx = std::complex<double>;

/// Error type for all validation and precondition failures. `path` carries a
/// field path ("detector.rho_det") when the error originates from input data.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg, std::string path = {})
      : std::runtime_error(path.empty() ? msg : path + ": " + msg),
        path_(std::move(path)) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

/// Numerical tolerances shared by the validated quantum types.
struct Tolerances {
  double hermiticity = 1e-9;     // max-entry norm of M - M^dagger, scale-relative
  double psd_eigen_floor = -1e-9; // eigenvalues of nonnegative operators may dip this low
  double trace_one = 1e-9;
  double general_rel = 1e-9;

  void validate() const {
    if (!(hermiticity > 0) || !(trace_one > 0) || !(general_rel > 0))
      throw Error("tolerances must be positive", "tolerances");
    if (!(psd_eigen_floor < 0))
      throw Error("psd_eigen_floor must be negative", "tolerances.psd_eigen_floor");
  }
};

/// Dense row-major complex matrix. The only container used throughout; all
/// operators (A, q, o, rho, E_f) live in instances of this type.
class ComplexMatrix {
public:
  ComplexMatrix() : rows_(0), cols_(0) {}

  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, cplx(0.0, 0.0)) {
    if (rows == 0 || cols == 0) throw Error("matrix dimensions must be >= 1");
  }

  ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> rows)
      : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
    if (rows_ == 0 || cols_ == 0) throw Error("matrix dimensions must be >= 1");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error("ragged initializer for matrix");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static ComplexMatrix identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static ComplexMatrix diag(const std::vector<double>& d) {
    ComplexMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  const std::vector<cplx>& data() const { return data_; }
  std::vector<cplx>& data() { return data_; }

  bool is_finite() const {
    for (const auto& z : data_)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& z : data_) m = std::max(m, std::abs(z));
    return m;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const auto& z : data_) s += std::norm(z);
    return std::sqrt(s);
  }

  cplx trace() const {
    require_square("trace");
    cplx t = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
    return t;
  }

  ComplexMatrix adjoint() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
    return out;
  }

  ComplexMatrix transpose() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  /// Scale-relative hermiticity test: max |M - M^dagger| <= tol * max(1, |M|_max).
  bool is_hermitian(double tol) const {
    if (!is_square()) return false;
    const double scale = std::max(1.0, max_abs());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = r; c < cols_; ++c)
        if (std::abs((*this)(r, c) - std::conj((*this)(c, r))) > tol * scale) return false;
    return true;
  }

  ComplexMatrix& operator+=(const ComplexMatrix& o) {
    require_same_shape(o, "+");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  ComplexMatrix& operator-=(const ComplexMatrix& o) {
    require_same_shape(o, "-");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  ComplexMatrix& operator*=(cplx z) {
    for (auto& v : data_) v *= z;
    return *this;
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(cplx z, ComplexMatrix a) { return a *= z; }
  friend ComplexMatrix operator*(ComplexMatrix a, cplx z) { return a *= z; }

  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols_ != b.rows_)
      throw Error("matrix product dimension mismatch: " + a.shape_str() + " * " + b.shape_str());
    ComplexMatrix out(a.rows_, b.cols_);
    for (std::size_t r = 0; r < a.rows_; ++r)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const cplx arv = a(r, k);
        if (arv == cplx(0.0, 0.0)) continue;
        for (std::size_t c = 0; c < b.cols_; ++c) out(r, c) += arv * b(k, c);
      }
    return out;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  void require_square(const char* what) const {
    if (!is_square()) throw Error(std::string(what) + " requires a square matrix, got " + shape_str());
  }

private:
  void require_same_shape(const ComplexMatrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw Error(std::string("shape mismatch in ") + op + ": " + shape_str() + " vs " + o.shape_str());
  }

  std::size_t rows_, cols_;
  std::vector<cplx> data_;
};

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b - b * a;
}

inline ComplexMatrix anticommutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b + b * a;
}

/// max |A - B| entry-wise; shapes must match.
inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error("shape mismatch in max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline constexpr std::size_t kDefaultMaxDimension = 4096;

/// Kronecker product, system factor first, detector factor second. The
/// ordering is fixed project-wide; there is no runtime reordering.
inline ComplexMatrix tensor_product(const ComplexMatrix& a, const ComplexMatrix& b,
                                    std::size_t max_dim = kDefaultMaxDimension) {
  if (a.rows() * b.rows() > max_dim || a.cols() * b.cols() > max_dim)
    throw Error("tensor_product dimension overflow: " + a.shape_str() + " x " + b.shape_str() +
                " exceeds max total dimension " + std::to_string(max_dim));
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx(0.0, 0.0)) continue;
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

enum class Subsystem { system, detector };

/// Partial trace over one factor of a (d_sys*d_det)-dimensional square matrix
/// laid out with the fixed system-first ordering.
inline ComplexMatrix partial_trace(const ComplexMatrix& m, std::size_t d_sys, std::size_t d_det,
                                   Subsystem keep) {
  const std::size_t d = d_sys * d_det;
  if (!m.is_square() || m.rows() != d)
    throw Error("partial_trace: expected " + std::to_string(d) + "x" + std::to_string(d) +
                " matrix, got " + m.shape_str());
  if (keep == Subsystem::detector) {
    ComplexMatrix out(d_det, d_det);
    for (std::size_t k = 0; k < d_det; ++k)
      for (std::size_t l = 0; l < d_det; ++l) {
        cplx s = 0.0;
        for (std::size_t i = 0; i < d_sys; ++i) s += m(i * d_det + k, i * d_det + l);
        out(k, l) = s;
      }
    return out;
  }
  ComplexMatrix out(d_sys, d_sys);
  for (std::size_t i = 0; i < d_sys; ++i)
    for (std::size_t j = 0; j < d_sys; ++j) {
      cplx s = 0.0;
      for (std::size_t k = 0; k < d_det; ++k) s += m(i * d_det + k, j * d_det + k);
      out(i, j) = s;
    }
  return out;
}

/// Tr[A B] without forming the product.
inline cplx trace_of_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols())
    throw Error("trace_of_product dimension mismatch: " + a.shape_str() + " * " + b.shape_str());
  cplx t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) t += a(i, k) * b(k, i);
  return t;
}

}  // namespace wmopt
