#include "gce/baselines.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "test_util.hpp"

using namespace gce;

namespace {

ComplexVector random_cvec(std::size_t n, Rng& rng, double var = 1.0) {
  ComplexVector v(n);
  for (auto& z : v) z = rng.cgauss(var);
  return v;
}

double beam_nmse_db(const ComplexVector& truth, const ComplexVector& est) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += std::norm(truth[i] - est[i]);
    den += std::norm(truth[i]);
  }
  return 10.0 * std::log10(num / den);
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(DftMatrix, SmallOrdersMatchClosedForm) {
  const ComplexMatrix f1 = dft_matrix(1);
  EXPECT_NEAR(std::abs(f1(0, 0) - cplx(1.0, 0.0)), 0.0, 1e-15);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const ComplexMatrix f2 = dft_matrix(2);
  EXPECT_NEAR(std::abs(f2(0, 0) - cplx(inv_sqrt2, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f2(0, 1) - cplx(inv_sqrt2, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f2(1, 0) - cplx(inv_sqrt2, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f2(1, 1) - cplx(-inv_sqrt2, 0.0)), 0.0, 1e-15);

  // Spot-check one interior entry against the defining exponential.
  const ComplexMatrix f8 = dft_matrix(8);
  const cplx want = std::exp(cplx(0.0, -2.0 * 3.14159265358979323846 * 6.0 / 8.0)) / std::sqrt(8.0);
  EXPECT_NEAR(std::abs(f8(2, 3) - want), 0.0, 1e-14);

  EXPECT_THROW(dft_matrix(0), argument_error);
}

TEST(DftMatrix, IsUnitary) {
  for (const std::size_t n : {16u, 64u}) {
    const ComplexMatrix f = dft_matrix(n);
    const ComplexMatrix prod = multiply(adjoint(f), f);
    double defect = 0.0;
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t r = 0; r < n; ++r)
        defect = std::max(defect, std::abs(prod(r, c) - (r == c ? cplx(1.0, 0.0) : cplx(0.0, 0.0))));
    EXPECT_LT(defect, 1e-12) << "n=" << n;
  }
}

TEST(BeamspaceSystem, MeasurementFactorsThroughBeamspace) {
  Rng rng(21);
  const std::size_t n_r = 4, n_t = 8, n_p = 5;
  const PilotMatrix pilot = generate_pilots(n_t, n_p, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  ComplexMatrix h(n_r, n_t);
  for (std::size_t c = 0; c < n_t; ++c)
    for (std::size_t r = 0; r < n_r; ++r) h(r, c) = rng.cgauss(1.0);
  const MeasurementSet ms = measure(h, pilot, n_r, std::numeric_limits<double>::infinity(), rng);

  const ComplexVector h_v = channel_to_beamspace(h, sys);
  ComplexVector y_beam = matvec(sys.a_sp, h_v);
  for (auto& z : y_beam) z *= sys.s;
  for (std::size_t i = 0; i < ms.y.size(); ++i)
    EXPECT_NEAR(std::abs(ms.y[i] - y_beam[i]), 0.0, 1e-10);
}

TEST(BeamspaceSystem, OrthonormalPilotsGiveKroneckerIdentity) {
  const std::size_t n_r = 4, n_t = 8;
  PilotMatrix pilot;
  pilot.p = dft_matrix(n_t);  // P = A_T
  pilot.s = std::polar(1.0, 0.3);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);
  const ComplexMatrix want = kron(identity_matrix(n_t), sys.a_r);
  EXPECT_LT(gce::test::max_abs_diff(sys.a_sp, want), 1e-12);
}

TEST(BeamspaceSystem, MatrixFreeMatchesDense) {
  Rng rng(22);
  const PilotMatrix pilot = generate_pilots(8, 5, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  const ComplexVector h_v = random_cvec(sys.input_dim(), rng);
  const ComplexVector u = random_cvec(sys.output_dim(), rng);

  const ComplexVector ax = sys.apply(h_v);
  const ComplexVector ax_dense = matvec(sys.a_sp, h_v);
  for (std::size_t i = 0; i < ax.size(); ++i)
    EXPECT_NEAR(std::abs(ax[i] - ax_dense[i]), 0.0, 1e-10);

  const ComplexVector at_u = sys.adjoint(u);
  const ComplexVector at_dense = matvec(adjoint(sys.a_sp), u);
  for (std::size_t i = 0; i < at_u.size(); ++i)
    EXPECT_NEAR(std::abs(at_u[i] - at_dense[i]), 0.0, 1e-10);

  // <A x, u> == <x, A^H u>
  const cplx lhs = vdot(u, ax);
  const cplx rhs = vdot(at_u, h_v);
  EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-10);
}

TEST(BeamspaceSystem, ChannelRoundTripAndNormPreservation) {
  Rng rng(23);
  const PilotMatrix pilot = generate_pilots(8, 3, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);

  // Single beam: E_{00} maps to an outer product of the first basis columns.
  ComplexVector e0(sys.input_dim(), cplx(0.0, 0.0));
  e0[0] = cplx(1.0, 0.0);
  const ComplexMatrix h0 = beamspace_to_channel(e0, sys);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t r = 0; r < 4; ++r)
      EXPECT_NEAR(std::abs(h0(r, c) - sys.a_r(r, 0) * std::conj(sys.a_t(c, 0))), 0.0, 1e-14);

  ComplexMatrix h(4, 8);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t r = 0; r < 4; ++r) h(r, c) = rng.cgauss(1.0);
  const ComplexVector h_v = channel_to_beamspace(h, sys);
  const ComplexMatrix back = beamspace_to_channel(h_v, sys);
  EXPECT_LT(gce::test::max_abs_diff(h, back), 1e-12);

  double fro2 = 0.0;
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t r = 0; r < 4; ++r) fro2 += std::norm(h(r, c));
  EXPECT_NEAR(std::sqrt(fro2), norm2(h_v), 1e-12);
}

TEST(Omp, RecoversPlantedOneSparse) {
  Rng rng(24);
  const std::size_t n_r = 4, n_t = 16;
  const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(0.4, n_t), rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  ComplexVector h_v(sys.input_dim(), cplx(0.0, 0.0));
  const std::size_t planted = 37;
  h_v[planted] = cplx(1.3, -0.4);
  ComplexVector y = sys.apply(h_v);
  for (auto& z : y) z *= sys.s;

  const SparseEstimate est = omp_estimate(y, sys, 0.0);
  ASSERT_EQ(est.support.size(), 1u);
  EXPECT_EQ(est.support[0], planted);
  EXPECT_EQ(est.iterations_used, 1u);
  EXPECT_LT(std::abs(est.h_v[planted] - h_v[planted]), 1e-8);
  for (std::size_t i = 0; i < est.h_v.size(); ++i) {
    if (i != planted) {
      EXPECT_EQ(est.h_v[i], cplx(0.0, 0.0));
    }
  }
  EXPECT_FALSE(est.used_pseudo_inverse);
}

TEST(Omp, ZeroMeasurementsGiveEmptyEstimate) {
  Rng rng(25);
  const PilotMatrix pilot = generate_pilots(8, 4, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  const ComplexVector y(sys.output_dim(), cplx(0.0, 0.0));
  const SparseEstimate est = omp_estimate(y, sys, 0.1);
  EXPECT_TRUE(est.support.empty());
  EXPECT_EQ(est.iterations_used, 0u);
  EXPECT_EQ(est.residual_norm, 0.0);
  for (const cplx& z : est.h_v) EXPECT_EQ(z, cplx(0.0, 0.0));
}

TEST(Omp, RecoversPlantedFiveSparseNoiseless) {
  Rng rng(26);
  const std::size_t n_r = 4, n_t = 16;
  const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(0.75, n_t), rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  ComplexVector h_v(sys.input_dim(), cplx(0.0, 0.0));
  const std::vector<std::size_t> planted = {3, 17, 30, 44, 58};
  for (std::size_t k = 0; k < planted.size(); ++k)
    h_v[planted[k]] = std::polar(1.0 + 0.1 * static_cast<double>(k), rng.uniform(0.0, 6.28));
  ComplexVector y = sys.apply(h_v);
  for (auto& z : y) z *= sys.s;

  const SparseEstimate est = omp_estimate(y, sys, 0.0, 5);
  EXPECT_EQ(sorted(est.support), planted);
  EXPECT_LT(est.residual_norm, 1e-8);
}

TEST(Omp, ResidualStrictlyDecreasesAcrossIterations) {
  Rng rng(27);
  const PilotMatrix pilot = generate_pilots(8, 5, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  const ComplexVector y = random_cvec(sys.output_dim(), rng);

  double prev = norm2(y);
  for (std::size_t k = 1; k <= 8; ++k) {
    const SparseEstimate est = omp_estimate(y, sys, 0.0, k);
    EXPECT_EQ(est.iterations_used, k);
    EXPECT_LT(est.residual_norm, prev);
    prev = est.residual_norm;
  }
}

TEST(Omp, StopsOnceResidualReachesNoiseEnergy) {
  Rng rng(28);
  const std::size_t n_r = 4, n_t = 16;
  const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(0.75, n_t), rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  ComplexVector h_v(sys.input_dim(), cplx(0.0, 0.0));
  for (const std::size_t idx : {5u, 21u, 40u}) h_v[idx] = rng.cgauss(1.0);
  const ComplexMatrix h = beamspace_to_channel(h_v, sys);
  const MeasurementSet ms = measure(h, pilot, n_r, 10.0, rng);

  const SparseEstimate est = omp_estimate(ms.y, sys, ms.noise_var);
  EXPECT_LT(est.iterations_used, 100u);
  EXPECT_LE(est.residual_norm * est.residual_norm,
            static_cast<double>(ms.y.size()) * ms.noise_var);
}

TEST(Omp, RankDeficientSupportFallsBackToPseudoInverse) {
  // Duplicate column: the normal equations are singular, the fit must flag it
  // and return the symmetric minimum-norm solution.
  ComplexMatrix a(4, 2);
  Rng rng(29);
  for (std::size_t i = 0; i < 4; ++i) {
    a(i, 0) = rng.cgauss(1.0);
    a(i, 1) = a(i, 0);
  }
  ComplexVector y(4);
  for (std::size_t i = 0; i < 4; ++i) y[i] = a(i, 0);
  const auto fit = baselines_detail::ls_on_support(a, {0, 1}, y);
  EXPECT_TRUE(fit.used_pseudo_inverse);
  ASSERT_EQ(fit.coef.size(), 2u);
  EXPECT_LT(std::abs(fit.coef[0] - cplx(0.5, 0.0)), 1e-10);
  EXPECT_LT(std::abs(fit.coef[1] - cplx(0.5, 0.0)), 1e-10);
}

TEST(Lasso, LargeLambdaShrinksEverythingToZero) {
  Rng rng(30);
  const PilotMatrix pilot = generate_pilots(8, 5, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  const ComplexVector y = random_cvec(sys.output_dim(), rng);

  const ComplexVector g = sys.adjoint(y);
  double peak = 0.0;
  for (const cplx& z : g) peak = std::max(peak, std::abs(z));

  const SparseEstimate est = lasso_estimate(y, sys, 1.0001 * peak);
  EXPECT_TRUE(est.support.empty());
  for (const cplx& z : est.h_v) EXPECT_EQ(z, cplx(0.0, 0.0));
  EXPECT_NEAR(est.residual_norm, norm2(y), 1e-12);
}

TEST(Lasso, MatchesClosedFormOnOrthonormalDesign) {
  Rng rng(31);
  const std::size_t n_r = 4, n_t = 8;
  PilotMatrix pilot;
  pilot.p = dft_matrix(n_t);  // unitary A_sp
  pilot.s = std::polar(1.0, -0.8);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);
  const ComplexVector y = random_cvec(sys.output_dim(), rng);

  const ComplexVector g = sys.adjoint(y);
  double mean_abs = 0.0;
  for (const cplx& z : g) mean_abs += std::abs(z);
  mean_abs /= static_cast<double>(g.size());
  const double lambda = 0.8 * mean_abs;

  const SparseEstimate est = lasso_estimate(y, sys, lambda, 500, 1e-12);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mag = std::abs(g[i]);
    const cplx want = (mag > lambda ? g[i] * (1.0 - lambda / mag) : cplx(0.0, 0.0)) / sys.s;
    EXPECT_LT(std::abs(est.h_v[i] - want), 1e-6) << "entry " << i;
  }
}

TEST(Lasso, ObjectiveIsMonotoneAcrossIterationBudgets) {
  Rng rng(32);
  const PilotMatrix pilot = generate_pilots(16, 8, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 16);
  const ComplexVector y = random_cvec(sys.output_dim(), rng);
  const double lambda = default_lasso_lambda(y, sys);
  ASSERT_GT(lambda, 0.0);

  auto objective = [&](const SparseEstimate& e) {
    ComplexVector c(e.h_v.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = e.h_v[i] * sys.s;
    const ComplexVector ac = sys.apply(c);
    double f = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) f += std::norm(y[i] - ac[i]);
    f *= 0.5;
    for (const cplx& z : c) f += lambda * std::abs(z);
    return f;
  };

  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t budget = 5; budget <= 40; ++budget) {
    const double f = objective(lasso_estimate(y, sys, lambda, budget, 1e-14));
    EXPECT_LE(f, prev + 1e-12) << "budget " << budget;
    prev = f;
  }
  // Never worse than the all-zero vector.
  EXPECT_LE(prev, 0.5 * norm2_squared(y) + 1e-12);
}

TEST(Lasso, DegenerateSystemRaisesStepSizeError) {
  PilotMatrix pilot;
  pilot.p = ComplexMatrix(8, 4);  // all-zero pilots
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  Rng rng(33);
  const ComplexVector y = random_cvec(sys.output_dim(), rng);
  EXPECT_THROW(lasso_estimate(y, sys, 0.1), numerical_error);
}

TEST(Gamp, IdentitySystemApproachesDenseMeasurements) {
  Rng rng(34);
  const std::size_t n_t = 16;
  PilotMatrix pilot;
  pilot.p = dft_matrix(n_t);  // with N_r = 1 this makes A_sp the identity
  pilot.s = std::polar(1.0, 0.5);
  const BeamspaceSystem sys = beamspace_system(pilot, 1, n_t);
  // Dense unit-modulus data: every entry's activation probability pins to 1,
  // so EM drives the sparsity rate to 1 and the prior's shrinkage vanishes.
  ComplexVector y(sys.output_dim());
  for (auto& v : y) v = std::polar(1.0, rng.uniform(0.0, 6.283185307179586));

  // On noiseless data the learned noise variance drains toward zero and the
  // mean-update mixing time grows like 1/sqrt(sigma2), so the estimate
  // approaches y with an algebraically shrinking gap rather than hitting
  // machine precision.  Heavy damping keeps the loop from limit-cycling.
  GampConfig cfg;
  cfg.max_iter = 2000;
  cfg.tol = 1e-15;
  cfg.damping = 0.2;
  const SparseEstimate est = gamp_estimate(y, sys, cfg);
  for (std::size_t i = 0; i < y.size(); ++i)
    EXPECT_LT(std::abs(est.h_v[i] * sys.s - y[i]), 1e-2) << "entry " << i;
  EXPECT_LT(est.learned_noise_var, 1e-4);
  EXPECT_EQ(est.support.size(), n_t);  // sparsity rate was pushed to 1
}

TEST(Gamp, RecoversPlantedTenSparseAtTwentyDb) {
  Rng rng(35);
  const std::size_t n_r = 4, n_t = 16;
  const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(0.75, n_t), rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  ComplexVector h_v(sys.input_dim(), cplx(0.0, 0.0));
  std::vector<std::size_t> planted;
  while (planted.size() < 10) {
    const std::size_t idx = rng.next_u64() % sys.input_dim();
    if (std::find(planted.begin(), planted.end(), idx) == planted.end()) planted.push_back(idx);
  }
  for (const std::size_t idx : planted) h_v[idx] = rng.cgauss(1.0);
  const ComplexMatrix h = beamspace_to_channel(h_v, sys);
  const MeasurementSet ms = measure(h, pilot, n_r, 20.0, rng);

  const SparseEstimate est = gamp_estimate(ms.y, sys);
  EXPECT_LT(beam_nmse_db(h_v, est.h_v), -15.0);
}

TEST(Gamp, ZeroMeasurementsGiveZeroEstimate) {
  Rng rng(36);
  const PilotMatrix pilot = generate_pilots(8, 4, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  const ComplexVector y(sys.output_dim(), cplx(0.0, 0.0));
  const SparseEstimate est = gamp_estimate(y, sys);
  EXPECT_EQ(est.iterations_used, 0u);
  EXPECT_TRUE(est.support.empty());
  for (const cplx& z : est.h_v) EXPECT_EQ(z, cplx(0.0, 0.0));
}

TEST(Gamp, LearnedNoiseVarianceTracksTruth) {
  Rng rng(37);
  const std::size_t n_r = 4, n_t = 16;
  const PilotMatrix pilot = generate_pilots(n_t, pilots_for_ratio(0.75, n_t), rng);
  const BeamspaceSystem sys = beamspace_system(pilot, n_r, n_t);

  std::vector<double> ratios;
  for (int trial = 0; trial < 100; ++trial) {
    Rng trial_rng(Rng::substream(401, static_cast<std::uint64_t>(trial)));
    ComplexVector h_v(sys.input_dim(), cplx(0.0, 0.0));
    std::vector<std::size_t> planted;
    while (planted.size() < 6) {
      const std::size_t idx = trial_rng.next_u64() % sys.input_dim();
      if (std::find(planted.begin(), planted.end(), idx) == planted.end()) planted.push_back(idx);
    }
    for (const std::size_t idx : planted) h_v[idx] = trial_rng.cgauss(1.0);
    const ComplexMatrix h = beamspace_to_channel(h_v, sys);
    const MeasurementSet ms = measure(h, pilot, n_r, 10.0, trial_rng);
    const SparseEstimate est = gamp_estimate(ms.y, sys);
    ratios.push_back(est.learned_noise_var / ms.noise_var);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  EXPECT_GT(median, 1.0 / 3.0);
  EXPECT_LT(median, 3.0);
}

TEST(Gamp, RejectsBadConfigAndLengths) {
  Rng rng(38);
  const PilotMatrix pilot = generate_pilots(8, 4, rng);
  const BeamspaceSystem sys = beamspace_system(pilot, 4, 8);
  GampConfig bad;
  bad.damping = 0.0;
  EXPECT_THROW(gamp_estimate(random_cvec(sys.output_dim(), rng), sys, bad), config_error);
  EXPECT_THROW(gamp_estimate(random_cvec(3, rng), sys), argument_error);
  EXPECT_THROW(omp_estimate(random_cvec(3, rng), sys, 0.0), argument_error);
  EXPECT_THROW(lasso_estimate(random_cvec(3, rng), sys, 0.1), argument_error);
  EXPECT_THROW(lasso_estimate(random_cvec(sys.output_dim(), rng), sys, 0.0), argument_error);
}
