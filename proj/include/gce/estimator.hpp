#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/linalg.hpp"
#include "gce/measurement.hpp"
#include "gce/nn.hpp"
#include "gce/rng.hpp"
#include "gce/weights_io.hpp"

namespace gce {

enum class EstimationMode { fullres, onebit };

// Latent-space estimation settings. lambda_reg weights the L2 bound on z for
// full-resolution recovery and the correlation term for one-bit recovery; the
// defaults differ, so use defaults_for(mode) when configuring programmatically.
struct GceConfig {
  std::size_t latent_dim = 35;
  double lambda_reg = 0.001;  // full-resolution default; one-bit default is 1.0
  double learning_rate = 1e-2;  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t iterations = 100;
  std::size_t restarts = 3;

  static GceConfig defaults_for(EstimationMode mode) {
    GceConfig c;
    if (mode == EstimationMode::onebit) c.lambda_reg = 1.0;
    return c;
  }

  void validate() const {
    if (latent_dim < 1) throw config_error("gce: latent_dim must be at least 1");
    if (lambda_reg < 0.0) throw config_error("gce: lambda_reg must be non-negative");
    if (!(learning_rate > 0.0)) throw config_error("gce: learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw config_error("gce: Adam betas must be in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw config_error("gce: Adam epsilon must be positive");
    if (restarts < 1) throw config_error("gce: need at least one restart");
  }
};

struct EstimationResult {
  ComplexMatrix h_hat;
  std::vector<double> z_star;
  std::vector<double> loss_trace;  // loss after each iteration, winning restart
  double wall_time_per_iteration = 0.0;  // seconds, averaged over all restarts
  std::size_t restart_index_chosen = 0;
};

struct ObjectiveEval {
  double loss = 0.0;
  std::vector<double> grad_z;
};

namespace gce_detail {

template <class Real>
struct GeneratorEval {
  ComplexMatrix h;  // denormalized estimate
  Tape<Real> tape;
};

template <class Real>
void require_stats(const LoadedWeights<Real>& weights, const char* who) {
  const NormalizationStats& st = weights.store.norm;
  if (st.n_r == 0 || st.n_t == 0 || st.mu.size() != 2 * st.n_r * st.n_t ||
      st.sigma.size() != st.mu.size())
    throw argument_error(std::string(who) + ": weights carry no normalization statistics");
}

template <class Real>
GeneratorEval<Real> eval_generator(const std::vector<double>& z,
                                   const LoadedWeights<Real>& weights) {
  require_stats(weights, "eval_generator");
  const NormalizationStats& st = weights.store.norm;
  std::vector<Real> zr(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zr[i] = static_cast<Real>(z[i]);
  auto [out, tape] = generator_forward(weights.store, weights.spec, zr, RunMode::infer);
  const std::vector<double> planes = tensor_to_planes(out, st.n_r, st.n_t);
  return {denormalize_planes(planes, st), std::move(tape)};
}

// Pull a gradient in denormalized plane space back to the latent vector:
// scale by sigma (the denormalization Jacobian), reorder into the network
// tensor layout, and run the taped reverse pass.
template <class Real>
std::vector<double> backprop_planes(const std::vector<double>& grad_planes,
                                    const LoadedWeights<Real>& weights, Tape<Real>& tape) {
  const NormalizationStats& st = weights.store.norm;
  std::vector<double> scaled(grad_planes.size());
  for (std::size_t i = 0; i < grad_planes.size(); ++i) scaled[i] = grad_planes[i] * st.sigma[i];
  const std::vector<Real> upstream = planes_to_tensor<Real>(scaled, st.n_r, st.n_t);
  auto [grad_z, grads] = generator_backward(weights.store, weights.spec, tape, upstream);
  std::vector<double> g(grad_z.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(grad_z[i]);
  return g;
}

template <class Real>
void check_operator(const SensingOperator& op, const LoadedWeights<Real>& weights,
                    const MeasurementSet& measurement, const char* who) {
  const NormalizationStats& st = weights.store.norm;
  if (op.n_r() != st.n_r || op.n_t() != st.n_t)
    throw argument_error(std::string(who) + ": operator dimensions do not match the weights");
  if (measurement.y.size() != op.output_dim())
    throw argument_error(std::string(who) + ": measurement length mismatch");
}

}  // namespace gce_detail

// Full-resolution objective ||y - A vec(G(z)) s||^2 + lambda ||z||^2 and its
// latent gradient.
template <class Real>
ObjectiveEval fullres_objective(const std::vector<double>& z, const MeasurementSet& measurement,
                                const SensingOperator& op, const LoadedWeights<Real>& weights,
                                const GceConfig& config) {
  if (measurement.quantization_bits != 0)
    throw argument_error("fullres_objective: measurement must be full resolution");
  gce_detail::require_stats(weights, "fullres_objective");
  gce_detail::check_operator(op, weights, measurement, "fullres_objective");

  gce_detail::GeneratorEval<Real> ev = gce_detail::eval_generator(z, weights);
  const ComplexVector g = vec(ev.h);
  const ComplexVector w = op.apply(g);
  const cplx s = op.pilot().s;

  ComplexVector r(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) r[i] = measurement.y[i] - s * w[i];
  double loss = norm2_squared(r);
  for (const double v : z) loss += config.lambda_reg * v * v;
  if (!std::isfinite(loss)) throw numerical_error("fullres_objective: non-finite loss");

  const ComplexVector back = op.adjoint(r);
  const cplx scale = -2.0 * std::conj(s);
  const std::size_t n = op.input_dim();
  std::vector<double> grad_planes(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx t = scale * back[k];
    grad_planes[k] = t.real();
    grad_planes[n + k] = t.imag();
  }

  ObjectiveEval out;
  out.loss = loss;
  out.grad_z = gce_detail::backprop_planes(grad_planes, weights, ev.tape);
  for (std::size_t j = 0; j < z.size(); ++j) out.grad_z[j] += 2.0 * config.lambda_reg * z[j];
  return out;
}

// One-bit objective -lambda * corr(Q1(y), A vec(G(z)) s) + ||G(z)||_*, with the
// correlation summed over real and imaginary parts separately.
template <class Real>
ObjectiveEval onebit_objective(const std::vector<double>& z, const MeasurementSet& quantized,
                               const SensingOperator& op, const LoadedWeights<Real>& weights,
                               const GceConfig& config) {
  if (quantized.quantization_bits != 1)
    throw argument_error("onebit_objective: measurement must be one-bit quantized");
  gce_detail::require_stats(weights, "onebit_objective");
  gce_detail::check_operator(op, weights, quantized, "onebit_objective");

  gce_detail::GeneratorEval<Real> ev = gce_detail::eval_generator(z, weights);
  const std::size_t n = op.input_dim();
  ComplexVector g_re(n), g_im(n);
  for (std::size_t c = 0; c < ev.h.cols(); ++c)
    for (std::size_t r = 0; r < ev.h.rows(); ++r) {
      const std::size_t k = c * ev.h.rows() + r;
      g_re[k] = cplx(ev.h(r, c).real(), 0.0);
      g_im[k] = cplx(ev.h(r, c).imag(), 0.0);
    }
  const cplx s = op.pilot().s;
  const ComplexVector w1 = op.apply(g_re);
  const ComplexVector w2 = op.apply(g_im);
  double corr = 0.0;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    corr += quantized.y[i].real() * (s * w1[i]).real();
    corr += quantized.y[i].imag() * (s * w2[i]).imag();
  }

  const SvdResult dec = svd(ev.h);
  double nuclear = 0.0;
  for (const double sv : dec.singular_values) nuclear += sv;
  const double loss = -config.lambda_reg * corr + nuclear;
  if (!std::isfinite(loss)) throw numerical_error("onebit_objective: non-finite loss");

  ComplexVector u(op.output_dim()), v(op.output_dim());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = cplx(quantized.y[i].real(), 0.0);
    v[i] = cplx(quantized.y[i].imag(), 0.0);
  }
  const ComplexVector au = op.adjoint(u);
  const ComplexVector av = op.adjoint(v);
  const cplx sc = std::conj(s);
  const ComplexMatrix subgrad = multiply(dec.u, adjoint(dec.v));

  std::vector<double> grad_planes(2 * n);
  for (std::size_t c = 0; c < ev.h.cols(); ++c)
    for (std::size_t r = 0; r < ev.h.rows(); ++r) {
      const std::size_t k = c * ev.h.rows() + r;
      grad_planes[k] = -config.lambda_reg * (sc * au[k]).real() + subgrad(r, c).real();
      grad_planes[n + k] = config.lambda_reg * (sc * av[k]).imag() + subgrad(r, c).imag();
    }

  ObjectiveEval out;
  out.loss = loss;
  out.grad_z = gce_detail::backprop_planes(grad_planes, weights, ev.tape);
  return out;
}

// Closed-form minimizer of ||h_true - kappa * h_hat||_F over complex kappa.
inline cplx optimal_scale(const ComplexMatrix& h_true, const ComplexMatrix& h_hat) {
  if (h_true.rows() != h_hat.rows() || h_true.cols() != h_hat.cols())
    throw argument_error("optimal_scale: dimension mismatch");
  const ComplexVector a = vec(h_hat);
  const double denom = norm2_squared(a);
  if (!(denom > 0.0)) throw argument_error("optimal_scale: estimate is identically zero");
  return vdot(a, vec(h_true)) / denom;
}

// Latent-space channel estimation: multiple Adam restarts on the selected
// objective, keeping the restart with the lowest final loss.
template <class Real>
EstimationResult estimate(const MeasurementSet& measurement, const PilotMatrix& pilot,
                          const LoadedWeights<Real>& weights, const GceConfig& config,
                          EstimationMode mode, Rng& rng) {
  config.validate();
  gce_detail::require_stats(weights, "estimate");
  const NormalizationStats& st = weights.store.norm;
  const SensingOperator op(pilot, st.n_r);
  gce_detail::check_operator(op, weights, measurement, "estimate");
  const std::size_t d = weights.spec.input_shape.flat();
  if (config.latent_dim != d)
    throw config_error("estimate: config latent_dim disagrees with the weights");
  if ((mode == EstimationMode::fullres) != (measurement.quantization_bits == 0))
    throw argument_error("estimate: measurement resolution does not match the mode");

  auto objective = [&](const std::vector<double>& z) {
    return mode == EstimationMode::fullres
               ? fullres_objective(z, measurement, op, weights, config)
               : onebit_objective(z, measurement, op, weights, config);
  };

  bool any_ok = false;
  std::size_t best_index = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_z, best_trace;
  std::string last_failure;

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < config.restarts; ++k) {
    std::vector<double> zv(d);
    for (auto& v : zv) v = rng.normal();
    try {
      ObjectiveEval cur = objective(zv);
      std::vector<double> trace;
      trace.reserve(config.iterations);
      std::vector<double> m(d, 0.0), s2(d, 0.0);
      double final_loss = cur.loss;
      for (std::size_t it = 1; it <= config.iterations; ++it) {
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(it));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(it));
        for (std::size_t j = 0; j < d; ++j) {
          const double gj = cur.grad_z[j];
          m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
          s2[j] = config.beta2 * s2[j] + (1.0 - config.beta2) * gj * gj;
          zv[j] -= config.learning_rate * (m[j] / bc1) / (std::sqrt(s2[j] / bc2) +
                                                          config.adam_epsilon);
        }
        try {
          cur = objective(zv);
        } catch (const numerical_error& e) {
          throw numerical_error(std::string(e.what()) + " at iteration " + std::to_string(it));
        }
        trace.push_back(cur.loss);
        final_loss = cur.loss;
      }
      any_ok = true;
      if (final_loss < best_loss) {
        best_loss = final_loss;
        best_z = zv;
        best_trace = std::move(trace);
        best_index = k;
      }
    } catch (const numerical_error& e) {
      last_failure = e.what();
      continue;
    }
  }
  if (!any_ok)
    throw numerical_error("estimate: all restarts diverged" +
                          (last_failure.empty() ? std::string() : " (" + last_failure + ")"));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  EstimationResult res;
  res.z_star = std::move(best_z);
  res.loss_trace = std::move(best_trace);
  res.restart_index_chosen = best_index;
  res.wall_time_per_iteration =
      elapsed / static_cast<double>(config.restarts * std::max<std::size_t>(1, config.iterations));
  res.h_hat = gce_detail::eval_generator(res.z_star, weights).h;
  return res;
}

}  // namespace gce
