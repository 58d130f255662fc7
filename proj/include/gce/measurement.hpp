#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/linalg.hpp"
#include "gce/rng.hpp"

namespace gce {

// Pilot block P (Nt x Np) with a scalar training symbol s (unit modulus).
// The receive window stacks to y = (P^T kron I_Nr) vec(H) s + n.
struct PilotMatrix {
  ComplexMatrix p;
  cplx s{1.0, 0.0};
};

// QPSK pilot entries drawn uniformly from {(+-1 +-j)/sqrt(2)}.
inline PilotMatrix generate_pilots(std::size_t n_t, std::size_t n_p, Rng& rng) {
  if (n_t == 0 || n_p == 0) throw argument_error("generate_pilots: empty dimensions");
  PilotMatrix pm;
  pm.p = ComplexMatrix(n_t, n_p);
  const double a = 1.0 / std::sqrt(2.0);
  for (std::size_t j = 0; j < n_p; ++j)
    for (std::size_t i = 0; i < n_t; ++i) {
      const std::uint64_t bits = rng.next_u64();
      pm.p(i, j) = cplx((bits & 1) ? a : -a, (bits & 2) ? a : -a);
    }
  return pm;
}

// Number of pilot symbols for a measurement ratio alpha = Np / Nt.
inline std::size_t pilots_for_ratio(double alpha, std::size_t n_t) {
  if (!(alpha > 0.0)) throw argument_error("pilots_for_ratio: alpha must be positive");
  const long long np = std::llround(alpha * static_cast<double>(n_t));
  return static_cast<std::size_t>(std::max(1ll, np));
}

// Matrix-free action of A = P^T kron I_Nr on length-Nr*Nt vectors:
//   apply(x)  = vec(unvec(x) P)        (Nr*Np long)
//   adjoint(u) = vec(unvec(u) P^H)     (Nr*Nt long)
// The training symbol s is NOT folded in; callers apply it explicitly.
class SensingOperator {
 public:
  SensingOperator(const PilotMatrix& pilot, std::size_t n_r)
      : pilot_(pilot), n_r_(n_r), n_t_(pilot.p.rows()), n_p_(pilot.p.cols()) {
    if (n_r == 0) throw argument_error("SensingOperator: need at least one receive antenna");
    if (std::abs(std::abs(pilot.s) - 1.0) > 1e-9)
      throw argument_error("SensingOperator: training symbol must have unit modulus");
  }

  std::size_t input_dim() const { return n_r_ * n_t_; }
  std::size_t output_dim() const { return n_r_ * n_p_; }
  std::size_t n_r() const { return n_r_; }
  std::size_t n_t() const { return n_t_; }
  std::size_t n_p() const { return n_p_; }
  const PilotMatrix& pilot() const { return pilot_; }

  ComplexVector apply(const ComplexVector& x) const {
    if (x.size() != input_dim()) throw argument_error("SensingOperator::apply: bad length");
    ComplexVector y(output_dim(), cplx(0.0, 0.0));
    // y(:, j) = X * p(:, j) with X = unvec(x), done column-by-column in place.
    for (std::size_t j = 0; j < n_p_; ++j) {
      cplx* ycol = y.data() + j * n_r_;
      for (std::size_t k = 0; k < n_t_; ++k) {
        const cplx pkj = pilot_.p(k, j);
        const cplx* xcol = x.data() + k * n_r_;
        for (std::size_t i = 0; i < n_r_; ++i) ycol[i] += xcol[i] * pkj;
      }
    }
    return y;
  }

  ComplexVector adjoint(const ComplexVector& u) const {
    if (u.size() != output_dim()) throw argument_error("SensingOperator::adjoint: bad length");
    ComplexVector x(input_dim(), cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n_t_; ++k) {
      cplx* xcol = x.data() + k * n_r_;
      for (std::size_t j = 0; j < n_p_; ++j) {
        const cplx pc = std::conj(pilot_.p(k, j));
        const cplx* ucol = u.data() + j * n_r_;
        for (std::size_t i = 0; i < n_r_; ++i) xcol[i] += ucol[i] * pc;
      }
    }
    return x;
  }

  // Dense A = P^T kron I_Nr; for tests and solvers that need entry access.
  ComplexMatrix dense() const { return kron(transpose(pilot_.p), identity_matrix(n_r_)); }

 private:
  PilotMatrix pilot_;
  std::size_t n_r_, n_t_, n_p_;
};

inline constexpr std::uint32_t kFullResolution = 0;

struct MeasurementSet {
  ComplexVector y;
  double noise_var = 0.0;  // sigma^2, total per complex sample
  double snr_db = 0.0;
  std::uint32_t quantization_bits = kFullResolution;  // 0 = full resolution
};

// sigma^2 = ||vec(H P) s||^2 / (Nr Np 10^(snr/10)): noise level calibrated so
// the realized per-sample signal power hits the requested SNR exactly.
inline double snr_to_noise_var(double snr_db, const ComplexMatrix& h, const PilotMatrix& pilot,
                               std::size_t n_r) {
  SensingOperator op(pilot, n_r);
  if (h.rows() != n_r || h.cols() != pilot.p.rows())
    throw argument_error("snr_to_noise_var: channel shape mismatch");
  const double energy = norm2_squared(op.apply(vec(h)));  // |s| = 1
  if (energy <= 0.0) throw argument_error("snr_to_noise_var: zero received energy");
  const double samples = static_cast<double>(op.output_dim());
  return energy / (samples * std::pow(10.0, snr_db / 10.0));
}

// y = vec(H P) s + n with n circularly symmetric CN(0, sigma^2 I).
// snr_db = +inf means noiseless.
inline MeasurementSet measure(const ComplexMatrix& h, const PilotMatrix& pilot, std::size_t n_r,
                              double snr_db, Rng& rng) {
  SensingOperator op(pilot, n_r);
  if (h.rows() != n_r || h.cols() != pilot.p.rows())
    throw argument_error("measure: channel shape mismatch");
  MeasurementSet m;
  m.snr_db = snr_db;
  m.y = op.apply(vec(h));
  for (auto& z : m.y) z *= pilot.s;
  m.noise_var = std::isinf(snr_db) ? 0.0 : snr_to_noise_var(snr_db, h, pilot, n_r);
  if (m.noise_var > 0.0)
    for (auto& z : m.y) z += rng.cgauss(m.noise_var);
  return m;
}

// One-bit quantizer applied separately to real and imaginary parts:
//   Q1(z) = (sign(Re z) + j sign(Im z)) / sqrt(2),  sign(0) = +1.
inline MeasurementSet quantize(const MeasurementSet& m, std::uint32_t bits) {
  MeasurementSet out = m;
  out.quantization_bits = bits;
  if (bits == kFullResolution) return out;
  if (bits != 1) throw unsupported_error("quantize: only 1-bit and full resolution supported");
  const double a = 1.0 / std::sqrt(2.0);
  for (auto& z : out.y)
    z = cplx(z.real() >= 0.0 ? a : -a, z.imag() >= 0.0 ? a : -a);
  return out;
}

// --- binary measurement file (GMS1) -------------------------------------------
// Layout (little-endian):
//   magic "GMS1" | u32 n_r | u32 n_p | u32 quantization_bits
//   f64 noise_var | f64 snr_db
//   n_r*n_p complex samples as interleaved f64 (re, im)

inline void write_measurements(const MeasurementSet& m, std::size_t n_r, const std::string& path) {
  if (n_r == 0 || m.y.size() % n_r != 0)
    throw argument_error("write_measurements: length not divisible by n_r");
  std::string bytes;
  bytes.reserve(32 + m.y.size() * 16);
  bytes.append("GMS1", 4);
  detail::put_u32(bytes, static_cast<std::uint32_t>(n_r));
  detail::put_u32(bytes, static_cast<std::uint32_t>(m.y.size() / n_r));
  detail::put_u32(bytes, m.quantization_bits);
  detail::put_f64(bytes, m.noise_var);
  detail::put_f64(bytes, m.snr_db);
  for (const auto& z : m.y) {
    detail::put_f64(bytes, z.real());
    detail::put_f64(bytes, z.imag());
  }
  detail::write_file(path, bytes);
}

struct MeasurementFile {
  MeasurementSet set;
  std::size_t n_r = 0, n_p = 0;
};

inline MeasurementFile read_measurements(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "measurements " + path);
  r.magic("GMS1");
  MeasurementFile f;
  f.n_r = r.u32();
  f.n_p = r.u32();
  f.set.quantization_bits = r.u32();
  f.set.noise_var = r.f64();
  f.set.snr_db = r.f64();
  if (f.n_r == 0 || f.n_p == 0) throw format_error("measurements " + path + ": empty dimensions");
  f.set.y.resize(f.n_r * f.n_p);
  for (auto& z : f.set.y) {
    const double re = r.f64();
    const double im = r.f64();
    z = cplx(re, im);
  }
  r.expect_done();
  return f;
}

}  // namespace gce
