#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gce/errors.hpp"

namespace gce {

using cplx = std::complex<double>;
using ComplexVector = std::vector<cplx>;

// Guard against accidental materialization of huge dense matrices (e.g. a
// Kronecker product that should have stayed matrix-free).
inline constexpr std::size_t kMaxDenseElements = 16u * 1024u * 1024u;

// Dense complex matrix, column-major: element (r, c) lives at data[c * rows + r].
// Column-major storage makes vec()/unvec() free and matches the vectorization
// convention used throughout (vec stacks columns).
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows > 0 && cols > kMaxDenseElements / rows)
      throw argument_error("ComplexMatrix: dimensions exceed dense element cap");
    data_.assign(rows * cols, cplx(0.0, 0.0));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<cplx> data_;
};

inline ComplexMatrix identity_matrix(std::size_t n) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline bool all_finite(const ComplexMatrix& m) {
  for (const auto& z : m.data())
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

inline bool all_finite(const ComplexVector& v) {
  for (const auto& z : v)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

inline ComplexMatrix transpose(const ComplexMatrix& m) {
  ComplexMatrix t(m.cols(), m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < m.rows(); ++r) t(c, r) = m(r, c);
  return t;
}

inline ComplexMatrix adjoint(const ComplexMatrix& m) {
  ComplexMatrix t(m.cols(), m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < m.rows(); ++r) t(c, r) = std::conj(m(r, c));
  return t;
}

inline ComplexMatrix conjugate(const ComplexMatrix& m) {
  ComplexMatrix t(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) t.data()[i] = std::conj(m.data()[i]);
  return t;
}

inline ComplexMatrix multiply(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) throw argument_error("multiply: inner dimensions disagree");
  ComplexMatrix out(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx bkj = b(k, j);
      if (bkj == cplx(0.0, 0.0)) continue;
      const cplx* acol = a.data().data() + k * a.rows();
      cplx* ocol = out.data().data() + j * a.rows();
      for (std::size_t i = 0; i < a.rows(); ++i) ocol[i] += acol[i] * bkj;
    }
  return out;
}

inline ComplexVector matvec(const ComplexMatrix& a, const ComplexVector& x) {
  if (a.cols() != x.size()) throw argument_error("matvec: dimension mismatch");
  ComplexVector y(a.rows(), cplx(0.0, 0.0));
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const cplx xk = x[k];
    if (xk == cplx(0.0, 0.0)) continue;
    const cplx* acol = a.data().data() + k * a.rows();
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] += acol[i] * xk;
  }
  return y;
}

inline ComplexVector adjoint_matvec(const ComplexMatrix& a, const ComplexVector& y) {
  if (a.rows() != y.size()) throw argument_error("adjoint_matvec: dimension mismatch");
  ComplexVector x(a.cols(), cplx(0.0, 0.0));
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const cplx* acol = a.data().data() + k * a.rows();
    cplx acc(0.0, 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) acc += std::conj(acol[i]) * y[i];
    x[k] = acc;
  }
  return x;
}

inline ComplexMatrix scale(const ComplexMatrix& m, cplx s) {
  ComplexMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i] * s;
  return out;
}

inline ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw argument_error("add: shape mismatch");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

inline ComplexMatrix subtract(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw argument_error("subtract: shape mismatch");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

// <a, b> = sum conj(a_i) b_i, accumulated in double precision.
inline cplx vdot(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() != b.size()) throw argument_error("vdot: length mismatch");
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const cplx t = std::conj(a[i]) * b[i];
    re += t.real();
    im += t.imag();
  }
  return {re, im};
}

inline double norm2_squared(const ComplexVector& v) {
  double s = 0.0;
  for (const auto& z : v) s += z.real() * z.real() + z.imag() * z.imag();
  return s;
}

inline double norm2(const ComplexVector& v) { return std::sqrt(norm2_squared(v)); }

inline double frobenius_norm(const ComplexMatrix& m) {
  double s = 0.0;
  for (const auto& z : m.data()) s += z.real() * z.real() + z.imag() * z.imag();
  return std::sqrt(s);
}

// vec: stack columns (a no-op on column-major storage).
inline ComplexVector vec(const ComplexMatrix& m) { return m.data(); }

inline ComplexMatrix unvec(const ComplexVector& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw argument_error("unvec: length does not match shape");
  ComplexMatrix m(rows, cols);
  m.data() = v;
  return m;
}

// Kronecker product: block (i, j) of the result is a(i, j) * b.
inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (rows == 0 || cols == 0) throw argument_error("kron: empty operand");
  if (rows > kMaxDenseElements / cols)
    throw argument_error("kron: result exceeds dense element cap");
  ComplexMatrix out(rows, cols);
  for (std::size_t ja = 0; ja < a.cols(); ++ja)
    for (std::size_t jb = 0; jb < b.cols(); ++jb)
      for (std::size_t ia = 0; ia < a.rows(); ++ia) {
        const cplx aij = a(ia, ja);
        if (aij == cplx(0.0, 0.0)) continue;
        for (std::size_t ib = 0; ib < b.rows(); ++ib)
          out(ia * b.rows() + ib, ja * b.cols() + jb) = aij * b(ib, jb);
      }
  return out;
}

struct SvdResult {
  ComplexMatrix u;                      // m x k, orthonormal columns
  std::vector<double> singular_values;  // k = min(m, n), descending, >= 0
  ComplexMatrix v;                      // n x k, orthonormal columns
};

namespace detail {

// One-sided Jacobi on a tall-or-square matrix: orthogonalize column pairs of a
// working copy W = A * V by unitary plane rotations until all pairwise
// correlations are negligible; then sigma_i = ||w_i|| and u_i = w_i / sigma_i.
inline SvdResult svd_tall(const ComplexMatrix& a0) {
  const std::size_t m = a0.rows(), n = a0.cols();
  ComplexMatrix w = a0;
  ComplexMatrix v = identity_matrix(n);

  constexpr int kMaxSweeps = 100;
  constexpr double kTol = 1e-12;  // relative off-diagonal threshold

  auto col = [](ComplexMatrix& mat, std::size_t j) { return mat.data().data() + j * mat.rows(); };

  // Columns this small against the matrix scale carry a zero singular value.
  // They must be skipped: a rotation that annihilates one of two parallel
  // columns leaves a rounding residue that is still fully correlated with its
  // partner, so the relative criterion alone would never see convergence.
  double scale2 = 0.0;
  for (const cplx& z : w.data()) scale2 += std::norm(z);
  const double negligible2 = scale2 * 1e-28;

  bool converged = (n <= 1) || scale2 == 0.0;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        cplx* wi = col(w, i);
        cplx* wj = col(w, j);
        double aa = 0.0, bb = 0.0;
        double cre = 0.0, cim = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          aa += std::norm(wi[k]);
          bb += std::norm(wj[k]);
          const cplx t = std::conj(wi[k]) * wj[k];
          cre += t.real();
          cim += t.imag();
        }
        if (aa <= negligible2 || bb <= negligible2) continue;
        const double cabs = std::hypot(cre, cim);
        const double denom = std::sqrt(aa * bb);
        if (denom == 0.0 || cabs <= kTol * denom) continue;
        worst = std::max(worst, cabs / denom);

        // Gram block [[aa, c], [conj(c), bb]] with c = |c| * omega. Diagonalize
        // the phase-stripped real block with a classical Jacobi rotation, then
        // fold the phase back into the second column.
        const cplx omega(cre / cabs, cim / cabs);
        const double zeta = (bb - aa) / (2.0 * cabs);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        const cplx omega_conj = std::conj(omega);

        for (std::size_t k = 0; k < m; ++k) {
          const cplx ui = wi[k], uj = wj[k];
          wi[k] = cs * ui - sn * (omega_conj * uj);
          wj[k] = sn * (omega * ui) + cs * uj;
        }
        cplx* vi = col(v, i);
        cplx* vj = col(v, j);
        for (std::size_t k = 0; k < n; ++k) {
          const cplx ui = vi[k], uj = vj[k];
          vi[k] = cs * ui - sn * (omega_conj * uj);
          vj[k] = sn * (omega * ui) + cs * uj;
        }
      }
    }
    converged = (worst <= kTol);
  }
  if (!converged) throw numerical_error("svd: Jacobi sweeps did not converge");

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += std::norm(w(k, j));
    sigma[j] = std::sqrt(s);
  }

  // Stable descending order by sigma.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.u = ComplexMatrix(m, n);
  out.v = ComplexMatrix(n, n);
  out.singular_values.resize(n);
  const double smax = sigma.empty() ? 0.0 : sigma[order[0]];
  const double tiny = smax * 1e-13;

  std::size_t filled = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.singular_values[j] = sigma[src];
    for (std::size_t k = 0; k < n; ++k) out.v(k, j) = v(k, src);
    if (sigma[src] > tiny && sigma[src] > 0.0) {
      const double inv = 1.0 / sigma[src];
      for (std::size_t k = 0; k < m; ++k) out.u(k, j) = w(k, src) * inv;
      ++filled;
    }
  }
  // Complete U for (numerically) zero singular values: Gram-Schmidt of standard
  // basis vectors against the columns built so far. Deterministic.
  for (std::size_t j = filled; j < n; ++j) {
    bool placed = false;
    for (std::size_t e = 0; e < m && !placed; ++e) {
      ComplexVector cand(m, cplx(0.0, 0.0));
      cand[e] = 1.0;
      for (std::size_t q = 0; q < j; ++q) {
        cplx proj(0.0, 0.0);
        for (std::size_t k = 0; k < m; ++k) proj += std::conj(out.u(k, q)) * cand[k];
        for (std::size_t k = 0; k < m; ++k) cand[k] -= proj * out.u(k, q);
      }
      const double nrm = norm2(cand);
      if (nrm > 0.5) {
        for (std::size_t k = 0; k < m; ++k) out.u(k, j) = cand[k] / nrm;
        placed = true;
      }
    }
    if (!placed) throw numerical_error("svd: failed to complete orthonormal basis");
  }
  return out;
}

}  // namespace detail

// Thin SVD of an arbitrary complex matrix via one-sided Jacobi. Wide inputs are
// handled by factoring the adjoint and swapping U and V.
inline SvdResult svd(const ComplexMatrix& a) {
  if (a.rows() == 0 || a.cols() == 0) throw argument_error("svd: empty matrix");
  if (!all_finite(a)) throw argument_error("svd: non-finite entries");
  if (a.rows() >= a.cols()) return detail::svd_tall(a);
  SvdResult r = detail::svd_tall(adjoint(a));
  std::swap(r.u, r.v);
  return r;
}

inline double nuclear_norm(const ComplexMatrix& a) {
  const SvdResult r = svd(a);
  double s = 0.0;
  for (double x : r.singular_values) s += x;
  return s;
}

// Subgradient of the nuclear norm at A: U V^H from the thin SVD. For zero
// singular values this picks a valid element of the subdifferential.
inline ComplexMatrix nuclear_norm_subgradient(const ComplexMatrix& a) {
  const SvdResult r = svd(a);
  return multiply(r.u, adjoint(r.v));
}

}  // namespace gce
