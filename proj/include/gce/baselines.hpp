#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gce/errors.hpp"
#include "gce/linalg.hpp"
#include "gce/measurement.hpp"
#include "gce/rng.hpp"

namespace gce {

// Unitary DFT matrix: entry (k, l) = exp(-j 2 pi k l / n) / sqrt(n).
inline ComplexMatrix dft_matrix(std::size_t n) {
  if (n == 0) throw argument_error("dft_matrix: order must be at least 1");
  ComplexMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double base = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t k = 0; k < n; ++k) {
      const double phase = base * static_cast<double>((k * l) % n);
      f(k, l) = cplx(scale * std::cos(phase), scale * std::sin(phase));
    }
  return f;
}

// Virtual-channel (beamspace) view of the pilot measurement: H = A_R H_v A_T^H
// with unitary DFT bases, so y = A_sp vec(H_v) s + n for A_sp = ((A_T^H P)^T kron A_R).
struct BeamspaceSystem {
  ComplexMatrix a_t;   // N_t x N_t transmit basis
  ComplexMatrix a_r;   // N_r x N_r receive basis
  ComplexMatrix a_sp;  // (N_r N_p) x (N_r N_t) dense sensing matrix
  ComplexMatrix at_h_p;  // A_T^H P, cached for the matrix-free path
  cplx s{1.0, 0.0};

  std::size_t n_r() const { return a_r.rows(); }
  std::size_t n_t() const { return a_t.rows(); }
  std::size_t n_p() const { return at_h_p.cols(); }
  std::size_t input_dim() const { return n_r() * n_t(); }
  std::size_t output_dim() const { return n_r() * n_p(); }

  // A_sp * h_v without forming the Kronecker product.
  ComplexVector apply(const ComplexVector& h_v) const {
    if (h_v.size() != input_dim()) throw argument_error("BeamspaceSystem::apply: length mismatch");
    return vec(multiply(a_r, multiply(unvec(h_v, n_r(), n_t()), at_h_p)));
  }

  ComplexVector adjoint(const ComplexVector& u) const {
    if (u.size() != output_dim())
      throw argument_error("BeamspaceSystem::adjoint: length mismatch");
    return vec(multiply(::gce::adjoint(a_r),
                        multiply(unvec(u, n_r(), n_p()), ::gce::adjoint(at_h_p))));
  }
};

inline BeamspaceSystem beamspace_system(const PilotMatrix& pilot, std::size_t n_r,
                                        std::size_t n_t) {
  if (n_r == 0 || n_t == 0) throw argument_error("beamspace_system: empty dimensions");
  if (pilot.p.rows() != n_t)
    throw argument_error("beamspace_system: pilot rows disagree with n_t");
  BeamspaceSystem sys;
  sys.a_t = dft_matrix(n_t);
  sys.a_r = dft_matrix(n_r);
  sys.at_h_p = multiply(adjoint(sys.a_t), pilot.p);
  sys.a_sp = kron(transpose(sys.at_h_p), sys.a_r);
  sys.s = pilot.s;
  return sys;
}

inline ComplexMatrix beamspace_to_channel(const ComplexVector& h_v,
                                          const BeamspaceSystem& system) {
  if (h_v.size() != system.input_dim())
    throw argument_error("beamspace_to_channel: length mismatch");
  return multiply(system.a_r,
                  multiply(unvec(h_v, system.n_r(), system.n_t()), adjoint(system.a_t)));
}

inline ComplexVector channel_to_beamspace(const ComplexMatrix& h, const BeamspaceSystem& system) {
  if (h.rows() != system.n_r() || h.cols() != system.n_t())
    throw argument_error("channel_to_beamspace: shape mismatch");
  return vec(multiply(adjoint(system.a_r), multiply(h, system.a_t)));
}

struct SparseEstimate {
  ComplexVector h_v;                 // beamspace coefficients, length N_r * N_t
  std::vector<std::size_t> support;  // selection order (OMP) / nonzeros (Lasso) / likely-active (GAMP)
  std::size_t iterations_used = 0;
  double residual_norm = 0.0;
  bool used_pseudo_inverse = false;  // OMP hit a rank-deficient support system
  double learned_noise_var = 0.0;    // EM-GAMP only
};

namespace baselines_detail {

inline ComplexMatrix columns(const ComplexMatrix& a, const std::vector<std::size_t>& idx) {
  ComplexMatrix out(a.rows(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) out(i, j) = a(i, idx[j]);
  return out;
}

// In-place Cholesky of a Hermitian positive-definite matrix; false on failure.
inline bool cholesky(ComplexMatrix& g) {
  const std::size_t n = g.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += g(i, i).real();
  const double floor = std::max(trace, 1.0) * 1e-13;
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j).real();
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(g(j, k));
    if (!(d > floor)) return false;
    const double root = std::sqrt(d);
    g(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      cplx v = g(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= g(i, k) * std::conj(g(j, k));
      g(i, j) = v / root;
    }
  }
  return true;
}

struct LeastSquaresFit {
  ComplexVector coef;
  bool used_pseudo_inverse = false;
};

// Least squares on the selected columns via normal equations; falls back to an
// SVD pseudo-inverse when the Gram matrix is numerically rank deficient.
inline LeastSquaresFit ls_on_support(const ComplexMatrix& a,
                                     const std::vector<std::size_t>& support,
                                     const ComplexVector& y) {
  const ComplexMatrix sub = columns(a, support);
  ComplexMatrix gram = multiply(adjoint(sub), sub);
  const ComplexVector rhs = matvec(adjoint(sub), y);
  LeastSquaresFit fit;
  ComplexMatrix chol = gram;
  if (cholesky(chol)) {
    // Forward then backward substitution with L and L^H.
    const std::size_t n = support.size();
    ComplexVector t(n);
    for (std::size_t i = 0; i < n; ++i) {
      cplx v = rhs[i];
      for (std::size_t k = 0; k < i; ++k) v -= chol(i, k) * t[k];
      t[i] = v / chol(i, i);
    }
    fit.coef.resize(n);
    for (std::size_t ii = n; ii-- > 0;) {
      cplx v = t[ii];
      for (std::size_t k = ii + 1; k < n; ++k) v -= std::conj(chol(k, ii)) * fit.coef[k];
      fit.coef[ii] = v / chol(ii, ii);
    }
    return fit;
  }
  fit.used_pseudo_inverse = true;
  const SvdResult dec = svd(sub);
  const double cutoff =
      dec.singular_values.empty() ? 0.0 : dec.singular_values.front() * 1e-12;
  ComplexVector uy = matvec(adjoint(dec.u), y);
  for (std::size_t i = 0; i < uy.size(); ++i)
    uy[i] = dec.singular_values[i] > cutoff ? uy[i] / dec.singular_values[i] : cplx(0.0, 0.0);
  fit.coef = matvec(dec.v, uy);
  return fit;
}

}  // namespace baselines_detail

// Orthogonal matching pursuit on the beamspace system. Selects the column with
// the largest norm-weighted correlation each round, refits by least squares,
// and stops once the residual energy falls below the total noise energy
// N_r N_p sigma^2 (or a relative floor for noiseless data).
inline SparseEstimate omp_estimate(const ComplexVector& y, const BeamspaceSystem& system,
                                   double noise_var, std::size_t max_iter = 100) {
  if (y.size() != system.output_dim()) throw argument_error("omp_estimate: length mismatch");
  if (noise_var < 0.0) throw argument_error("omp_estimate: negative noise variance");

  SparseEstimate est;
  est.h_v.assign(system.input_dim(), cplx(0.0, 0.0));
  const double y_energy = norm2_squared(y);
  if (y_energy == 0.0) return est;

  const ComplexMatrix& a = system.a_sp;
  const std::size_t n_cols = a.cols();
  std::vector<double> col_norm(n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) e += std::norm(a(i, j));
    col_norm[j] = std::sqrt(e);
  }
  std::vector<char> in_support(n_cols, 0);
  const double stop_energy =
      std::max(static_cast<double>(y.size()) * noise_var, 1e-24 * y_energy);

  ComplexVector residual = y;
  ComplexVector coef;
  while (est.iterations_used < max_iter) {
    if (norm2_squared(residual) <= stop_energy) break;
    std::size_t best = n_cols;
    double best_score = 0.0;
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (col_norm[j] < 1e-15) continue;
      cplx dot(0.0, 0.0);
      for (std::size_t i = 0; i < a.rows(); ++i) dot += std::conj(a(i, j)) * residual[i];
      const double score = std::abs(dot) / col_norm[j];
      if (score > best_score) {  // strict: ties keep the lowest index
        best_score = score;
        best = j;
      }
    }
    if (best == n_cols || best_score == 0.0 || in_support[best]) break;
    in_support[best] = 1;
    est.support.push_back(best);

    const auto fit = baselines_detail::ls_on_support(a, est.support, y);
    est.used_pseudo_inverse = est.used_pseudo_inverse || fit.used_pseudo_inverse;
    coef = fit.coef;
    residual = y;
    for (std::size_t j = 0; j < est.support.size(); ++j)
      for (std::size_t i = 0; i < a.rows(); ++i) residual[i] -= a(i, est.support[j]) * coef[j];
    ++est.iterations_used;
  }

  for (std::size_t j = 0; j < est.support.size(); ++j)
    est.h_v[est.support[j]] = coef[j] / system.s;
  est.residual_norm = norm2(residual);
  return est;
}

// Standard heuristic when no regularization weight is supplied.
inline double default_lasso_lambda(const ComplexVector& y, const BeamspaceSystem& system) {
  const ComplexVector g = system.adjoint(y);
  double peak = 0.0;
  for (const cplx& v : g) peak = std::max(peak, std::abs(v));
  return 0.1 * peak;
}

// L1-regularized recovery, min (1/2) ||y - A c||^2 + lambda ||c||_1, solved by
// FISTA with complex soft thresholding and a monotone restart: a proposed step
// that would raise the objective is rejected and the momentum reset.
inline SparseEstimate lasso_estimate(const ComplexVector& y, const BeamspaceSystem& system,
                                     double lambda_sp, std::size_t max_iter = 500,
                                     double tol = 1e-6) {
  if (y.size() != system.output_dim()) throw argument_error("lasso_estimate: length mismatch");
  if (!(lambda_sp > 0.0)) throw argument_error("lasso_estimate: lambda must be positive");
  if (!(tol > 0.0)) throw argument_error("lasso_estimate: tol must be positive");

  SparseEstimate est;
  est.h_v.assign(system.input_dim(), cplx(0.0, 0.0));
  if (norm2_squared(y) == 0.0) return est;

  // Largest squared singular value of A_sp by power iteration on A^H A.
  Rng power_rng(0x9e3779b97f4a7c15ull);
  ComplexVector v(system.input_dim());
  for (auto& z : v) z = power_rng.cgauss(1.0);
  double lipschitz = 0.0;
  for (int it = 0; it < 50; ++it) {
    ComplexVector w = system.adjoint(system.apply(v));
    const double n = norm2(w);
    if (!(n > 0.0) || !std::isfinite(n))
      throw numerical_error("lasso_estimate: step-size error (power iteration failed)");
    for (auto& z : w) z /= n;
    v = std::move(w);
    lipschitz = n;
  }
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz))
    throw numerical_error("lasso_estimate: step-size error (power iteration failed)");
  const double step = 1.0 / lipschitz;

  auto objective = [&](const ComplexVector& c) {
    const ComplexVector ac = system.apply(c);
    double f = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) f += std::norm(y[i] - ac[i]);
    f *= 0.5;
    for (const cplx& z : c) f += lambda_sp * std::abs(z);
    return f;
  };
  auto prox = [&](ComplexVector u, double t) {
    for (auto& z : u) {
      const double mag = std::abs(z);
      z *= mag > t ? (1.0 - t / mag) : 0.0;
    }
    return u;
  };

  ComplexVector x(system.input_dim(), cplx(0.0, 0.0));
  ComplexVector y_k = x;
  double t_k = 1.0;
  double f_x = objective(x);
  for (std::size_t it = 0; it < max_iter; ++it) {
    ++est.iterations_used;
    ComplexVector ay = system.apply(y_k);
    for (std::size_t i = 0; i < ay.size(); ++i) ay[i] -= y[i];
    const ComplexVector grad = system.adjoint(ay);
    ComplexVector z = y_k;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= step * grad[i];
    z = prox(std::move(z), lambda_sp * step);
    const double f_z = objective(z);

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
    if (f_z <= f_x) {
      for (std::size_t i = 0; i < x.size(); ++i)
        y_k[i] = z[i] + ((t_k - 1.0) / t_next) * (z[i] - x[i]);
      x = std::move(z);
      const double change = std::abs(f_x - f_z);
      f_x = f_z;
      t_k = t_next;
      if (change <= tol * std::max(1.0, std::abs(f_x))) break;
    } else {
      // Monotone restart: keep x, drop the momentum.
      y_k = x;
      t_k = 1.0;
    }
  }

  for (std::size_t i = 0; i < x.size(); ++i) {
    est.h_v[i] = x[i] / system.s;
    if (x[i] != cplx(0.0, 0.0)) est.support.push_back(i);
  }
  ComplexVector residual = system.apply(x);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = y[i] - residual[i];
  est.residual_norm = norm2(residual);
  return est;
}

struct GampConfig {
  std::size_t max_iter = 200;
  double tol = 1e-6;
  double damping = 0.7;

  void validate() const {
    if (max_iter < 1) throw config_error("gamp: need at least one iteration");
    if (!(tol > 0.0)) throw config_error("gamp: tol must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) throw config_error("gamp: damping must be in (0, 1]");
  }
};

// Sum-product GAMP with a Bernoulli-Gaussian prior whose sparsity rate, active
// variance, and noise variance are re-learned by EM every iteration.
inline SparseEstimate gamp_estimate(const ComplexVector& y, const BeamspaceSystem& system,
                                    const GampConfig& config = GampConfig{}) {
  config.validate();
  if (y.size() != system.output_dim()) throw argument_error("gamp_estimate: length mismatch");

  const std::size_t m = system.output_dim(), n = system.input_dim();
  SparseEstimate est;
  est.h_v.assign(n, cplx(0.0, 0.0));
  const double y_energy = norm2_squared(y);
  if (y_energy == 0.0) return est;

  // |A|^2 entries, col-major, for the componentwise variance propagation.
  const ComplexMatrix& a = system.a_sp;
  std::vector<double> abs2(m * n);
  double fro2 = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      const double e = std::norm(a(i, j));
      abs2[j * m + i] = e;
      fro2 += e;
    }
  if (!(fro2 > 0.0)) throw argument_error("gamp_estimate: zero sensing matrix");

  double rho = 0.1;
  double sigma2 = 0.01 * y_energy / static_cast<double>(m);
  double psi = std::max(1e-12, (y_energy - static_cast<double>(m) * sigma2) / (rho * fro2));

  ComplexVector x_hat(n, cplx(0.0, 0.0)), s_tilde(m, cplx(0.0, 0.0));
  std::vector<double> tau_x(n, rho * psi), pi(n, rho);
  const double theta = config.damping;
  const double res0 = std::sqrt(y_energy);
  int divergence_streak = 0;

  std::vector<double> tau_p(m), tau_r(n);
  ComplexVector p(m), z_hat(m), r(n);
  for (std::size_t it = 1; it <= config.max_iter; ++it) {
    // Output side.
    const ComplexVector ax = system.apply(x_hat);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += abs2[j * m + i] * tau_x[j];
      tau_p[i] = std::max(acc, 1e-30);
      p[i] = ax[i] - tau_p[i] * s_tilde[i];
      const double denom = tau_p[i] + sigma2;
      z_hat[i] = (tau_p[i] * y[i] + sigma2 * p[i]) / denom;
      s_tilde[i] = (y[i] - p[i]) / denom;
    }

    // Input side.
    const ComplexVector ahs = system.adjoint(s_tilde);
    double zr_acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double denom = tau_p[i] + sigma2;
      zr_acc += std::norm(y[i] - z_hat[i]) + tau_p[i] * sigma2 / denom;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += abs2[j * m + i] / (tau_p[i] + sigma2);
      tau_r[j] = 1.0 / std::max(acc, 1e-30);
      r[j] = x_hat[j] + tau_r[j] * ahs[j];
    }

    // Bernoulli-Gaussian posterior and EM refresh of (rho, psi, sigma2).
    const double log_odds = std::log(rho / (1.0 - rho));
    double pi_sum = 0.0, active_sum = 0.0;
    ComplexVector x_new(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double beta = psi / (psi + tau_r[j]);
      const cplx mean = beta * r[j];
      const double var = beta * tau_r[j];
      double llr = log_odds + std::log(tau_r[j] / (psi + tau_r[j])) +
                   std::norm(r[j]) * (1.0 / tau_r[j] - 1.0 / (psi + tau_r[j]));
      llr = std::clamp(llr, -40.0, 40.0);
      pi[j] = 1.0 / (1.0 + std::exp(-llr));
      x_new[j] = pi[j] * mean;
      tau_x[j] = pi[j] * (1.0 - pi[j]) * std::norm(mean) + pi[j] * var;
      pi_sum += pi[j];
      active_sum += pi[j] * (std::norm(mean) + var);
    }
    double delta2 = 0.0, base2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const cplx damped = theta * x_new[j] + (1.0 - theta) * x_hat[j];
      delta2 += std::norm(damped - x_hat[j]);
      base2 += std::norm(x_hat[j]);
      x_hat[j] = damped;
    }
    rho = std::clamp(pi_sum / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    if (pi_sum > 1e-12) psi = std::max(active_sum / pi_sum, 1e-12);
    sigma2 = std::max(zr_acc / static_cast<double>(m), 1e-12);
    est.iterations_used = it;
    est.learned_noise_var = sigma2;

    const ComplexVector ax_new = system.apply(x_hat);
    double res2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) res2 += std::norm(y[i] - ax_new[i]);
    if (!std::isfinite(res2) || std::sqrt(res2) > 10.0 * res0) {
      if (++divergence_streak >= 5)
        throw numerical_error("gamp_estimate: iterates diverged; increase damping");
    } else {
      divergence_streak = 0;
    }
    est.residual_norm = std::sqrt(res2);
    if (std::sqrt(delta2) <= config.tol * std::max(std::sqrt(base2), 1e-30)) break;
  }

  for (std::size_t j = 0; j < n; ++j) {
    est.h_v[j] = x_hat[j] / system.s;
    if (pi[j] > 0.5) est.support.push_back(j);
  }
  return est;
}

}  // namespace gce
