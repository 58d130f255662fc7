#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/linalg.hpp"

namespace gce {

// Steering-vector codebook on a grid uniform in sin(angle).
struct PrecodingDictionary {
  ComplexMatrix atoms;         // N_t x N_cand, unit-norm columns
  std::vector<double> angles;  // grid angle (radians) behind each atom
};

// Analog/digital factorization of a transmit precoder. f_rf columns are
// dictionary atoms; f_bb is scaled so ||f_rf * f_bb||_F^2 equals the stream
// count.
struct HybridPrecoder {
  ComplexMatrix f_rf;  // N_t x N_RF
  ComplexMatrix f_bb;  // N_RF x N_s
  std::vector<std::size_t> atom_indices;  // dictionary columns behind f_rf
  bool reduced_rank = false;  // channel rank < N_s; padded with next singular vectors
};

inline PrecodingDictionary build_dictionary(const ArrayGeometry& geometry, std::size_t n_cand) {
  validate(geometry);
  if (n_cand == 0) throw argument_error("build_dictionary: need at least one atom");
  PrecodingDictionary dict;
  dict.atoms = ComplexMatrix(geometry.num_antennas, n_cand);
  dict.angles.resize(n_cand);
  for (std::size_t g = 0; g < n_cand; ++g) {
    const double sin_g = -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(n_cand);
    const double phi = std::asin(sin_g);
    dict.angles[g] = phi;
    const ComplexVector a = steering_vector(geometry, phi);
    for (std::size_t i = 0; i < a.size(); ++i) dict.atoms(i, g) = a[i];
  }
  return dict;
}

namespace precoding_detail {

// Minimum-norm least squares X = argmin ||A X - B||_F via the SVD
// pseudo-inverse (the normal equations go rank-deficient whenever the same
// atom direction is picked twice).
inline ComplexMatrix least_squares(const ComplexMatrix& a, const ComplexMatrix& b) {
  const SvdResult sv = svd(a);
  const std::size_t rank_bound = sv.singular_values.size();
  const double cutoff =
      (rank_bound ? sv.singular_values[0] : 0.0) * 1e-12;
  ComplexMatrix uh_b = multiply(adjoint(sv.u), b);
  for (std::size_t i = 0; i < uh_b.rows(); ++i) {
    const double s = i < rank_bound ? sv.singular_values[i] : 0.0;
    const double inv = s > cutoff ? 1.0 / s : 0.0;
    for (std::size_t j = 0; j < uh_b.cols(); ++j) uh_b(i, j) *= inv;
  }
  return multiply(sv.v, uh_b);
}

inline double fro_norm(const ComplexMatrix& m) {
  double acc = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) acc += std::norm(m(i, j));
  return std::sqrt(acc);
}

}  // namespace precoding_detail

// Spatially sparse precoding: greedily pick n_rf codebook beams whose span
// best captures the top-n_s right singular vectors of the channel estimate,
// then least-squares fit the digital combiner and renormalize to the power
// budget. The snr argument is unused under equal power allocation; it stays
// in the signature so a water-filling variant is a drop-in replacement.
inline HybridPrecoder hybrid_precoder_omp(const ComplexMatrix& h_hat,
                                          const PrecodingDictionary& dictionary,
                                          std::size_t n_rf, std::size_t n_s, double snr) {
  (void)snr;
  if (h_hat.rows() == 0 || h_hat.cols() == 0)
    throw argument_error("hybrid_precoder_omp: empty channel estimate");
  if (dictionary.atoms.rows() != h_hat.cols())
    throw argument_error("hybrid_precoder_omp: dictionary antenna count mismatch");
  const std::size_t n_cand = dictionary.atoms.cols();
  if (n_s == 0) throw argument_error("hybrid_precoder_omp: need at least one stream");
  if (n_s > n_rf || n_rf > n_cand)
    throw argument_error("hybrid_precoder_omp: need n_s <= n_rf <= dictionary size");
  if (n_s > std::min(h_hat.rows(), h_hat.cols()))
    throw argument_error("hybrid_precoder_omp: more streams than min(N_r, N_t)");

  const SvdResult sv = svd(h_hat);
  HybridPrecoder out;
  const double sigma_max = sv.singular_values.empty() ? 0.0 : sv.singular_values[0];
  std::size_t rank = 0;
  for (const double s : sv.singular_values)
    if (s > sigma_max * 1e-12 && s > 0.0) ++rank;
  out.reduced_rank = rank < n_s;

  // Optimal fully digital precoder: top-n_s right singular vectors (padded
  // with the remaining orthonormal columns when the estimate is low rank).
  ComplexMatrix f_opt(h_hat.cols(), n_s);
  for (std::size_t j = 0; j < n_s; ++j)
    for (std::size_t i = 0; i < f_opt.rows(); ++i) f_opt(i, j) = sv.v(i, j);

  ComplexMatrix f_res = f_opt;
  ComplexMatrix f_bb;
  std::vector<char> used(n_cand, 0);
  for (std::size_t t = 0; t < n_rf; ++t) {
    // Row energies of atoms^H * f_res; strict ascending scan keeps ties at
    // the lowest index.
    const ComplexMatrix psi = multiply(adjoint(dictionary.atoms), f_res);
    double best = -1.0;
    std::size_t best_g = n_cand;
    for (std::size_t g = 0; g < n_cand; ++g) {
      if (used[g]) continue;
      double energy = 0.0;
      for (std::size_t j = 0; j < psi.cols(); ++j) energy += std::norm(psi(g, j));
      if (energy > best) {
        best = energy;
        best_g = g;
      }
    }
    if (best_g == n_cand) break;  // every atom already selected
    used[best_g] = 1;
    out.atom_indices.push_back(best_g);

    ComplexMatrix f_rf(h_hat.cols(), out.atom_indices.size());
    for (std::size_t c = 0; c < out.atom_indices.size(); ++c)
      for (std::size_t i = 0; i < f_rf.rows(); ++i)
        f_rf(i, c) = dictionary.atoms(i, out.atom_indices[c]);
    f_bb = precoding_detail::least_squares(f_rf, f_opt);

    ComplexMatrix res = multiply(f_rf, f_bb);
    for (std::size_t j = 0; j < res.cols(); ++j)
      for (std::size_t i = 0; i < res.rows(); ++i) res(i, j) = f_opt(i, j) - res(i, j);
    const double res_norm = precoding_detail::fro_norm(res);
    out.f_rf = std::move(f_rf);
    if (res_norm <= 1e-15) break;  // span already captures f_opt exactly
    for (std::size_t j = 0; j < res.cols(); ++j)
      for (std::size_t i = 0; i < res.rows(); ++i) res(i, j) /= res_norm;
    f_res = std::move(res);
  }

  const double power = precoding_detail::fro_norm(multiply(out.f_rf, f_bb));
  if (!(power > 0.0))
    throw numerical_error("hybrid_precoder_omp: precoder collapsed to zero");
  const double scale = std::sqrt(static_cast<double>(n_s)) / power;
  for (std::size_t j = 0; j < f_bb.cols(); ++j)
    for (std::size_t i = 0; i < f_bb.rows(); ++i) f_bb(i, j) *= scale;
  out.f_bb = std::move(f_bb);
  return out;
}

// Achievable rate with optimal unconstrained combining and equal power per
// stream: log2 det(I + (snr/N_s) F^H H^H H F) for F = f_rf * f_bb, evaluated
// through the singular values of H F.
inline double spectral_efficiency(const ComplexMatrix& h_true, const HybridPrecoder& precoder,
                                  double snr) {
  if (!(snr > 0.0)) throw argument_error("spectral_efficiency: snr must be positive (linear)");
  if (precoder.f_rf.cols() != precoder.f_bb.rows())
    throw argument_error("spectral_efficiency: precoder factor dims disagree");
  if (h_true.cols() != precoder.f_rf.rows())
    throw argument_error("spectral_efficiency: channel/precoder antenna mismatch");
  const ComplexMatrix hf = multiply(h_true, multiply(precoder.f_rf, precoder.f_bb));
  const std::size_t n_s = precoder.f_bb.cols();
  double sum = 0.0;
  bool all_zero = true;
  for (std::size_t j = 0; j < hf.cols(); ++j)
    for (std::size_t i = 0; i < hf.rows(); ++i)
      if (hf(i, j) != cplx(0.0, 0.0)) all_zero = false;
  if (all_zero) return 0.0;
  const SvdResult sv = svd(hf);
  const double per_stream = snr / static_cast<double>(n_s);
  for (const double s : sv.singular_values) sum += std::log2(1.0 + per_stream * s * s);
  return sum;
}

}  // namespace gce
