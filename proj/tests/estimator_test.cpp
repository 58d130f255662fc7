#include "gce/estimator.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_util.hpp"

using namespace gce;

namespace {

template <class Real>
LoadedWeights<Real> random_weights(std::size_t n_r, std::size_t n_t, std::size_t d,
                                   std::size_t base, Rng& rng, double init_std = 0.02) {
  LoadedWeights<Real> w;
  w.spec = make_generator_spec(n_r, n_t, d, base);
  w.store = init_weights<Real>(w.spec, rng, init_std);
  w.store.norm.n_r = n_r;
  w.store.norm.n_t = n_t;
  w.store.norm.mu.resize(2 * n_r * n_t);
  w.store.norm.sigma.resize(2 * n_r * n_t);
  for (auto& v : w.store.norm.mu) v = 0.1 * rng.normal();
  for (auto& v : w.store.norm.sigma) v = 0.5 + rng.uniform();
  return w;
}

std::vector<double> random_latent(std::size_t d, Rng& rng) {
  std::vector<double> z(d);
  for (auto& v : z) v = rng.normal();
  return z;
}

PilotMatrix make_pilots(std::size_t n_t, std::size_t n_p, Rng& rng) {
  return generate_pilots(n_t, n_p, rng);
}

// Noiseless full-resolution measurement of the generator output at z.
template <class Real>
MeasurementSet planted_measurement(const std::vector<double>& z, const LoadedWeights<Real>& w,
                                   const SensingOperator& op) {
  const ComplexMatrix h = gce_detail::eval_generator(z, w).h;
  const ComplexVector ax = op.apply(vec(h));
  MeasurementSet ms;
  ms.y.resize(ax.size());
  for (std::size_t i = 0; i < ax.size(); ++i) ms.y[i] = op.pilot().s * ax[i];
  ms.noise_var = 0.0;
  ms.snr_db = std::numeric_limits<double>::infinity();
  ms.quantization_bits = 0;
  return ms;
}

double nmse_db(const ComplexMatrix& h, const ComplexMatrix& h_hat) {
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < h.cols(); ++c)
    for (std::size_t r = 0; r < h.rows(); ++r) {
      num += std::norm(h(r, c) - h_hat(r, c));
      den += std::norm(h(r, c));
    }
  return 10.0 * std::log10(num / den);
}

}  // namespace

TEST(FullresObjective, ExactFitHasZeroLoss) {
  Rng rng(1);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  const std::vector<double> z = random_latent(5, rng);
  const MeasurementSet ms = planted_measurement(z, w, op);
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 0.0;
  const ObjectiveEval ev = fullres_objective(z, ms, op, w, cfg);
  EXPECT_EQ(ev.loss, 0.0);
}

TEST(FullresObjective, ZeroLatentMakesRegularizerVanish) {
  Rng rng(2);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 3, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 0.5;
  const std::vector<double> z(5, 0.0);
  const ObjectiveEval ev = fullres_objective(z, ms, op, w, cfg);

  const ComplexMatrix h0 = gce_detail::eval_generator(z, w).h;
  const ComplexVector ax = op.apply(vec(h0));
  double want = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) want += std::norm(ms.y[i] - op.pilot().s * ax[i]);
  EXPECT_DOUBLE_EQ(ev.loss, want);
}

TEST(FullresObjective, MatchesDenseOperatorPath) {
  Rng rng(3);
  const auto w = random_weights<double>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 3, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 0.25;
  const std::vector<double> z = random_latent(5, rng);
  const ObjectiveEval ev = fullres_objective(z, ms, op, w, cfg);

  const ComplexMatrix a = op.dense();
  const ComplexVector g = vec(gce_detail::eval_generator(z, w).h);
  const ComplexVector ag = matvec(a, g);
  double want = 0.0;
  for (std::size_t i = 0; i < ag.size(); ++i) want += std::norm(ms.y[i] - op.pilot().s * ag[i]);
  for (const double v : z) want += cfg.lambda_reg * v * v;
  EXPECT_NEAR(ev.loss, want, 1e-10 * std::max(1.0, want));
}

TEST(FullresObjective, RegularizerDecomposesExactly) {
  Rng rng(4);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 3, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  const std::vector<double> z = random_latent(5, rng);
  GceConfig with;
  with.latent_dim = 5;
  with.lambda_reg = 0.7;
  GceConfig without = with;
  without.lambda_reg = 0.0;
  double reg = 0.0;
  for (const double v : z) reg += with.lambda_reg * v * v;
  EXPECT_DOUBLE_EQ(fullres_objective(z, ms, op, w, with).loss,
                   fullres_objective(z, ms, op, w, without).loss + reg);
}

TEST(FullresObjective, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const auto w = random_weights<double>(4, 8, 6, 8, rng, 0.1);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 6;
  cfg.lambda_reg = 0.01;
  const std::vector<double> z = random_latent(6, rng);
  const ObjectiveEval ev = fullres_objective(z, ms, op, w, cfg);

  const double h = 1e-3;
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    std::vector<double> zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const double fd = (fullres_objective(zp, ms, op, w, cfg).loss -
                       fullres_objective(zm, ms, op, w, cfg).loss) /
                      (2.0 * h);
    num += (fd - ev.grad_z[j]) * (fd - ev.grad_z[j]);
    den += fd * fd;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

// The fused reverse-mode gradient must equal the operator-form expression
// 2 (J_re^T Re(q) + J_im^T Im(q)) + 2 lambda z, where J is the Jacobian of the
// denormalized output planes w.r.t. z and q = conj(s) A^H (A vec(G(z)) s - y).
TEST(FullresObjective, GradientHasAdjointOperatorStructure) {
  Rng rng(6);
  const auto w = random_weights<double>(4, 8, 6, 8, rng, 0.1);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 6;
  cfg.lambda_reg = 0.3;
  const std::vector<double> z = random_latent(6, rng);

  const ObjectiveEval ev = fullres_objective(z, ms, op, w, cfg);

  // Assemble the Jacobian rows by one-hot reverse passes.
  const std::size_t n = op.input_dim();
  std::vector<std::vector<double>> jac(2 * n);
  for (std::size_t p = 0; p < 2 * n; ++p) {
    auto gen = gce_detail::eval_generator(z, w);
    std::vector<double> onehot(2 * n, 0.0);
    onehot[p] = 1.0;
    jac[p] = gce_detail::backprop_planes(onehot, w, gen.tape);
  }

  const ComplexVector g = vec(gce_detail::eval_generator(z, w).h);
  const ComplexVector ag = op.apply(g);
  const cplx s = op.pilot().s;
  ComplexVector resid(ag.size());
  for (std::size_t i = 0; i < ag.size(); ++i) resid[i] = s * ag[i] - ms.y[i];
  ComplexVector q = op.adjoint(resid);
  for (auto& v : q) v *= std::conj(s);

  std::vector<double> want(z.size(), 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < z.size(); ++j)
      want[j] += 2.0 * (q[k].real() * jac[k][j] + q[k].imag() * jac[n + k][j]);
  for (std::size_t j = 0; j < z.size(); ++j) want[j] += 2.0 * cfg.lambda_reg * z[j];

  for (std::size_t j = 0; j < z.size(); ++j) EXPECT_NEAR(ev.grad_z[j], want[j], 1e-6);
}

TEST(OnebitObjective, LambdaZeroIsNuclearNorm) {
  Rng rng(7);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  const MeasurementSet q = quantize(ms, 1);
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 0.0;
  const std::vector<double> z = random_latent(5, rng);
  const ObjectiveEval ev = onebit_objective(z, q, op, w, cfg);
  const double want = nuclear_norm(gce_detail::eval_generator(z, w).h);
  EXPECT_NEAR(ev.loss, want, 1e-12 * std::max(1.0, want));
}

TEST(OnebitObjective, SignFlipFlipsCorrelationExactly) {
  Rng rng(8);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  MeasurementSet q = quantize(ms, 1);
  MeasurementSet q_flipped = q;
  for (auto& v : q_flipped.y) v = -v;
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 2.0;
  const std::vector<double> z = random_latent(5, rng);
  const double nuclear = nuclear_norm(gce_detail::eval_generator(z, w).h);
  const double a = onebit_objective(z, q, op, w, cfg).loss;
  const double b = onebit_objective(z, q_flipped, op, w, cfg).loss;
  EXPECT_NEAR(a + b, 2.0 * nuclear, 1e-9);
}

TEST(OnebitObjective, InvariantToPositiveMeasurementScaling) {
  Rng rng(9);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  MeasurementSet scaled = ms;
  for (auto& v : scaled.y) v *= 7.5;
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.lambda_reg = 1.0;
  const std::vector<double> z = random_latent(5, rng);
  EXPECT_EQ(onebit_objective(z, quantize(ms, 1), op, w, cfg).loss,
            onebit_objective(z, quantize(scaled, 1), op, w, cfg).loss);
}

TEST(OnebitObjective, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  const auto w = random_weights<double>(4, 8, 6, 8, rng, 0.1);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  const MeasurementSet q = quantize(ms, 1);
  GceConfig cfg;
  cfg.latent_dim = 6;
  cfg.lambda_reg = 1.0;
  const std::vector<double> z = random_latent(6, rng);

  // The nuclear norm is smooth only away from singular-value degeneracy.
  const SvdResult dec = svd(gce_detail::eval_generator(z, w).h);
  for (std::size_t i = 1; i < dec.singular_values.size(); ++i)
    ASSERT_GT(dec.singular_values[i - 1] - dec.singular_values[i], 1e-3)
        << "degenerate spectrum; pick another seed";

  const ObjectiveEval ev = onebit_objective(z, q, op, w, cfg);
  const double h = 1e-4;
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    std::vector<double> zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const double fd = (onebit_objective(zp, q, op, w, cfg).loss -
                       onebit_objective(zm, q, op, w, cfg).loss) /
                      (2.0 * h);
    num += (fd - ev.grad_z[j]) * (fd - ev.grad_z[j]);
    den += fd * fd;
  }
  EXPECT_LT(std::sqrt(num / den), 1e-2);
}

TEST(OptimalScale, ClosedFormExamples) {
  Rng rng(11);
  ComplexMatrix h(3, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 3; ++r) h(r, c) = rng.cgauss(1.0);

  ComplexMatrix doubled(3, 2), rotated(3, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 3; ++r) {
      doubled(r, c) = 2.0 * h(r, c);
      rotated(r, c) = cplx(0.0, 1.0) * h(r, c);
    }
  const cplx k1 = optimal_scale(h, doubled);
  EXPECT_NEAR(k1.real(), 0.5, 1e-12);
  EXPECT_NEAR(k1.imag(), 0.0, 1e-12);
  const cplx k2 = optimal_scale(h, rotated);
  EXPECT_NEAR(k2.real(), 0.0, 1e-12);
  EXPECT_NEAR(k2.imag(), -1.0, 1e-12);

  // Residual at kappa is zero for pure scalings.
  double resid = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 3; ++r) resid += std::norm(h(r, c) - k1 * doubled(r, c));
  EXPECT_NEAR(resid, 0.0, 1e-20);

  const ComplexMatrix zero(3, 2);
  EXPECT_THROW(optimal_scale(h, zero), argument_error);
}

TEST(OptimalScale, BeatsRandomSearch) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    ComplexMatrix h(4, 3), h_hat(4, 3);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < 4; ++r) {
        h(r, c) = rng.cgauss(1.0);
        h_hat(r, c) = rng.cgauss(1.0);
      }
    auto residual = [&](cplx k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < 4; ++r) acc += std::norm(h(r, c) - k * h_hat(r, c));
      return acc;
    };
    const double best = residual(optimal_scale(h, h_hat));
    for (int i = 0; i < 1000; ++i) {
      const cplx k = rng.cgauss(2.0);
      EXPECT_GE(residual(k), best - 1e-12);
    }
  }
}

TEST(Estimate, PlantedLatentIsRecovered) {
  Rng rng(13);
  const auto w = random_weights<float>(8, 16, 8, 16, rng, 0.05);
  const PilotMatrix pilot = make_pilots(16, pilots_for_ratio(0.4, 16), rng);
  const SensingOperator op(pilot, 8);

  GceConfig cfg;
  cfg.latent_dim = 8;
  cfg.lambda_reg = 0.0;
  cfg.iterations = 150;
  cfg.restarts = 3;

  int hits = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const std::vector<double> z_true = random_latent(8, rng);
    const ComplexMatrix h = gce_detail::eval_generator(z_true, w).h;
    const MeasurementSet ms = planted_measurement(z_true, w, op);
    Rng est_rng(Rng::substream(99, static_cast<std::uint64_t>(trial)));
    const EstimationResult res = estimate(ms, pilot, w, cfg, EstimationMode::fullres, est_rng);
    EXPECT_EQ(res.loss_trace.size(), cfg.iterations);
    if (nmse_db(h, res.h_hat) < -20.0) ++hits;
  }
  EXPECT_GE(hits, 3);
}

TEST(Estimate, ZeroIterationsPicksBestInitialPoint) {
  Rng rng(14);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);

  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.iterations = 0;
  cfg.restarts = 3;
  Rng est_rng(77);
  const EstimationResult res = estimate(ms, pilot, w, cfg, EstimationMode::fullres, est_rng);
  EXPECT_TRUE(res.loss_trace.empty());

  // Replay the restart draws and pick the best initial loss by hand.
  Rng replay(77);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_z;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::vector<double> z0 = random_latent(5, replay);
    const double loss = fullres_objective(z0, ms, op, w, cfg).loss;
    if (loss < best) {
      best = loss;
      best_z = z0;
      best_k = k;
    }
  }
  EXPECT_EQ(res.restart_index_chosen, best_k);
  EXPECT_EQ(res.z_star, best_z);
  const ComplexMatrix want = gce_detail::eval_generator(best_z, w).h;
  EXPECT_LT(gce::test::max_abs_diff(res.h_hat, want), 1e-15);
}

TEST(Estimate, ReportedLossIsMinimumOverRestarts) {
  Rng rng(15);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);

  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.iterations = 25;
  cfg.restarts = 3;
  Rng est_rng(55);
  const EstimationResult combined = estimate(ms, pilot, w, cfg, EstimationMode::fullres, est_rng);

  GceConfig single = cfg;
  single.restarts = 1;
  std::vector<double> finals;
  for (std::size_t k = 0; k < 3; ++k) {
    Rng r(55);
    for (std::size_t skip = 0; skip < k * 5; ++skip) r.normal();  // burn earlier draws
    const EstimationResult one = estimate(ms, pilot, w, single, EstimationMode::fullres, r);
    finals.push_back(one.loss_trace.back());
  }
  const double reported = combined.loss_trace.back();
  for (const double f : finals) EXPECT_LE(reported, f + 1e-12);
  EXPECT_DOUBLE_EQ(reported, *std::min_element(finals.begin(), finals.end()));
  EXPECT_EQ(combined.restart_index_chosen,
            static_cast<std::size_t>(std::min_element(finals.begin(), finals.end()) -
                                     finals.begin()));
}

TEST(Estimate, MedianFinalLossShrinksWithMoreIterations) {
  Rng rng(16);
  const auto w = random_weights<float>(4, 8, 5, 8, rng, 0.05);
  const PilotMatrix pilot = make_pilots(8, 6, rng);
  const SensingOperator op(pilot, 4);

  const std::size_t counts[] = {10, 50, 100};
  std::vector<std::vector<double>> finals(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> z_true = random_latent(5, rng);
    MeasurementSet ms = planted_measurement(z_true, w, op);
    Rng noise_rng(Rng::substream(7, static_cast<std::uint64_t>(trial)));
    const double nv = snr_to_noise_var(10.0, gce_detail::eval_generator(z_true, w).h, pilot, 4);
    for (auto& v : ms.y) v += noise_rng.cgauss(nv);
    ms.snr_db = 10.0;
    ms.noise_var = nv;

    for (std::size_t ci = 0; ci < 3; ++ci) {
      GceConfig cfg;
      cfg.latent_dim = 5;
      cfg.iterations = counts[ci];
      cfg.restarts = 2;
      Rng est_rng(Rng::substream(1000, static_cast<std::uint64_t>(trial)));
      const EstimationResult res = estimate(ms, pilot, w, cfg, EstimationMode::fullres, est_rng);
      finals[ci].push_back(res.loss_trace.back());
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double m10 = median(finals[0]), m50 = median(finals[1]), m100 = median(finals[2]);
  EXPECT_GE(m10, m50);
  EXPECT_GE(m50, m100);
}

TEST(Estimate, AllFailingRestartsRaiseEstimationFailure) {
  Rng rng(17);
  auto w = random_weights<float>(4, 8, 5, 8, rng);
  w.store.params[0].a[0] = std::numeric_limits<float>::infinity();
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  MeasurementSet ms;
  ms.y.resize(4 * 4);
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 5;
  cfg.iterations = 5;
  Rng est_rng(3);
  EXPECT_THROW(estimate(ms, pilot, w, cfg, EstimationMode::fullres, est_rng), numerical_error);
}

TEST(Estimate, RejectsMismatchedModeAndConfig) {
  Rng rng(18);
  const auto w = random_weights<float>(4, 8, 5, 8, rng);
  const PilotMatrix pilot = make_pilots(8, 4, rng);
  const SensingOperator op(pilot, 4);
  MeasurementSet ms;
  ms.y.resize(op.output_dim());
  for (auto& v : ms.y) v = rng.cgauss(1.0);
  GceConfig cfg;
  cfg.latent_dim = 5;
  Rng est_rng(4);
  // One-bit mode on a full-resolution measurement.
  EXPECT_THROW(estimate(ms, pilot, w, cfg, EstimationMode::onebit, est_rng), argument_error);
  // Config latent dimension disagreeing with the weights.
  GceConfig wrong = cfg;
  wrong.latent_dim = 7;
  EXPECT_THROW(estimate(ms, pilot, w, wrong, EstimationMode::fullres, est_rng), config_error);
  // Objective-level mismatch too.
  EXPECT_THROW(onebit_objective(std::vector<double>(5, 0.0), ms, op, w, cfg), argument_error);
}
