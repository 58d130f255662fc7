#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/nn.hpp"
#include "gce/rng.hpp"

namespace gce {

// Wasserstein GAN trainer with weight clipping. Each epoch is one outer
// iteration: n_d critic updates (each followed by clipping the critic
// parameters to [-c, c]) and one generator update, all via RMSProp.
struct TrainerConfig {
  std::size_t n_d = 5;
  double clip = 0.01;
  double learning_rate = 5e-5;
  double decay = 0.9;        // RMSProp second-moment decay
  double epsilon = 1e-8;     // RMSProp denominator floor
  std::size_t batch = 200;   // m
  std::size_t epochs = 3000;

  void validate() const {
    if (n_d < 1) throw config_error("trainer: n_d must be at least 1");
    if (!(clip > 0.0)) throw config_error("trainer: clip bound must be positive");
    if (!(learning_rate > 0.0)) throw config_error("trainer: learning rate must be positive");
    if (!(decay > 0.0 && decay < 1.0)) throw config_error("trainer: decay must be in (0, 1)");
    if (!(epsilon > 0.0)) throw config_error("trainer: epsilon must be positive");
    if (batch < 1) throw config_error("trainer: batch size must be at least 1");
  }
};

struct WganResult {
  WeightStore<float> generator;  // carries the dataset normalization stats
  WeightStore<float> critic;
  std::vector<double> critic_objective;  // Wasserstein estimate, one per epoch
};

namespace wgan_detail {

template <class Real>
struct RmsProp {
  double lr, decay, eps;
  std::vector<std::vector<double>> ra, rb;  // second moments, per layer

  RmsProp(const WeightStore<Real>& store, double lr_, double decay_, double eps_)
      : lr(lr_), decay(decay_), eps(eps_) {
    ra.reserve(store.params.size());
    rb.reserve(store.params.size());
    for (const auto& p : store.params) {
      ra.emplace_back(p.a.size(), 0.0);
      rb.emplace_back(p.b.size(), 0.0);
    }
  }

  // direction +1 ascends the objective the gradients describe, -1 descends.
  void step(WeightStore<Real>& store, const Gradients<Real>& g, double direction) {
    for (std::size_t l = 0; l < store.params.size(); ++l) {
      update(store.params[l].a, g.params[l].a, ra[l], direction);
      update(store.params[l].b, g.params[l].b, rb[l], direction);
    }
  }

 private:
  void update(std::vector<Real>& p, const std::vector<Real>& g, std::vector<double>& r,
              double direction) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      r[i] = decay * r[i] + (1.0 - decay) * gi * gi;
      p[i] = static_cast<Real>(static_cast<double>(p[i]) +
                               direction * lr * gi / (std::sqrt(r[i]) + eps));
    }
  }
};

template <class Real>
void add_gradients(Gradients<Real>& into, const Gradients<Real>& other) {
  for (std::size_t l = 0; l < into.params.size(); ++l) {
    for (std::size_t i = 0; i < into.params[l].a.size(); ++i)
      into.params[l].a[i] += other.params[l].a[i];
    for (std::size_t i = 0; i < into.params[l].b.size(); ++i)
      into.params[l].b[i] += other.params[l].b[i];
  }
}

// Mean critic score over a batch; the tape is kept so the caller can
// backpropagate d(mean)/d(score_s) = 1/batch afterwards.
template <class Real>
double mean_score(const NetworkSpec& critic_spec, const WeightStore<Real>& critic,
                  const BatchBuffer<Real>& batch, Tape<Real>* tape) {
  BatchBuffer<Real> out = net_forward(critic_spec, critic, batch, RunMode::train, tape);
  double acc = 0.0;
  for (const Real v : out.data) acc += static_cast<double>(v);
  return acc / static_cast<double>(out.batch);
}

// Critic objective mean D(real) - mean D(fake) on fixed batches.
template <class Real>
double critic_objective(const NetworkSpec& critic_spec, const WeightStore<Real>& critic,
                        const BatchBuffer<Real>& real_batch, const BatchBuffer<Real>& fake_batch) {
  return mean_score<Real>(critic_spec, critic, real_batch, nullptr) -
         mean_score<Real>(critic_spec, critic, fake_batch, nullptr);
}

// Gradient of the critic objective with respect to the critic parameters,
// as a single combined gradient over both batches.
template <class Real>
Gradients<Real> critic_gradients(const NetworkSpec& critic_spec, const WeightStore<Real>& critic,
                                 const BatchBuffer<Real>& real_batch,
                                 const BatchBuffer<Real>& fake_batch, double* objective = nullptr) {
  Tape<Real> tape_real, tape_fake;
  const double mean_real = mean_score(critic_spec, critic, real_batch, &tape_real);
  const double mean_fake = mean_score(critic_spec, critic, fake_batch, &tape_fake);
  if (objective != nullptr) *objective = mean_real - mean_fake;

  const std::vector<Real> up_real(real_batch.batch,
                                  Real(1) / static_cast<Real>(real_batch.batch));
  const std::vector<Real> up_fake(fake_batch.batch,
                                  Real(-1) / static_cast<Real>(fake_batch.batch));
  Gradients<Real> g = net_backward(critic_spec, critic, tape_real, up_real);
  add_gradients(g, net_backward(critic_spec, critic, tape_fake, up_fake));
  return g;
}

template <class Real>
void check_finite(const WeightStore<Real>& store, const char* which, std::size_t epoch) {
  for (std::size_t l = 0; l < store.params.size(); ++l) {
    auto bad = [](const std::vector<Real>& v) {
      for (const Real x : v)
        if (!std::isfinite(static_cast<double>(x))) return true;
      return false;
    };
    if (bad(store.params[l].a) || bad(store.params[l].b))
      throw numerical_error("wgan_train: non-finite " + std::string(which) + " parameter in layer " +
                            std::to_string(l) + " at epoch " + std::to_string(epoch));
  }
}

}  // namespace wgan_detail

// Trains generator and critic on the dataset. Samples are normalized with the
// dataset statistics before being shown to the critic, and those statistics are
// attached to the returned generator weights so estimates can be denormalized.
inline WganResult wgan_train(const ChannelDataset& dataset, const NetworkSpec& gen_spec,
                             const NetworkSpec& critic_spec, const TrainerConfig& config, Rng& rng,
                             const std::function<void(std::size_t, double)>& on_epoch = {}) {
  config.validate();
  if (dataset.planes.size() < config.batch)
    throw argument_error("wgan_train: dataset smaller than one batch");

  const std::vector<Shape> gen_shapes = infer_shapes(gen_spec);
  const Shape out = gen_shapes.back();
  if (out.h != dataset.n_r || out.w != dataset.n_t || out.c != 2)
    throw config_error("wgan_train: generator output shape does not match the dataset");
  if (infer_shapes(critic_spec).front() != out)
    throw config_error("wgan_train: critic input shape does not match the generator output");
  const std::size_t latent_dim = gen_spec.input_shape.flat();
  const std::size_t m = config.batch;

  WganResult result;
  result.generator = init_weights<float>(gen_spec, rng);
  result.critic = init_weights<float>(critic_spec, rng);
  result.generator.norm = dataset.stats;
  result.critic.norm.n_r = 0;
  result.critic.norm.n_t = 0;
  result.critic_objective.reserve(config.epochs);

  wgan_detail::RmsProp<float> opt_critic(result.critic, config.learning_rate, config.decay,
                                         config.epsilon);
  wgan_detail::RmsProp<float> opt_gen(result.generator, config.learning_rate, config.decay,
                                      config.epsilon);

  auto sample_real = [&]() {
    BatchBuffer<float> b;
    b.batch = m;
    b.shape = out;
    b.data.resize(m * out.flat());
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t idx = static_cast<std::size_t>(rng.next_u64() % dataset.planes.size());
      const std::vector<double> norm = normalize_planes(dataset.planes[idx], dataset.stats);
      const std::vector<float> t = planes_to_tensor<float>(norm, dataset.n_r, dataset.n_t);
      std::copy(t.begin(), t.end(), b.data.begin() + static_cast<std::ptrdiff_t>(s * out.flat()));
    }
    return b;
  };

  auto sample_latent = [&]() {
    BatchBuffer<float> b;
    b.batch = m;
    b.shape = gen_spec.input_shape;
    b.data.resize(m * latent_dim);
    for (auto& v : b.data) v = static_cast<float>(rng.normal());
    return b;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double objective = 0.0;
    for (std::size_t step = 0; step < config.n_d; ++step) {
      const BatchBuffer<float> real_batch = sample_real();
      const BatchBuffer<float> z = sample_latent();
      Tape<float>* no_tape = nullptr;
      const BatchBuffer<float> fake_batch =
          net_forward(gen_spec, result.generator, z, RunMode::train, no_tape, &result.generator);
      const Gradients<float> g = wgan_detail::critic_gradients(
          critic_spec, result.critic, real_batch, fake_batch, &objective);
      opt_critic.step(result.critic, g, +1.0);
      clip_weights(result.critic, config.clip);
      wgan_detail::check_finite(result.critic, "critic", epoch);
    }

    {
      const BatchBuffer<float> z = sample_latent();
      Tape<float> tape_g, tape_c;
      const BatchBuffer<float> fake_batch = net_forward(gen_spec, result.generator, z,
                                                        RunMode::train, &tape_g, &result.generator);
      net_forward(critic_spec, result.critic, fake_batch, RunMode::train, &tape_c);
      // Generator objective mean -D(G(z)); descend it.
      const std::vector<float> up(m, -1.0f / static_cast<float>(m));
      const Gradients<float> g_c = net_backward(critic_spec, result.critic, tape_c, up);
      const Gradients<float> g_g = net_backward(gen_spec, result.generator, tape_g, g_c.input);
      opt_gen.step(result.generator, g_g, -1.0);
      wgan_detail::check_finite(result.generator, "generator", epoch);
    }

    result.critic_objective.push_back(objective);
    if (on_epoch) on_epoch(epoch, objective);
  }
  return result;
}

}  // namespace gce
