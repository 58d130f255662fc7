#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/rng.hpp"

namespace gce {

// Small feed-forward graphs assembled from a fixed layer vocabulary, with
// hand-rolled forward and reverse-mode passes. Tensors are stored HWC within a
// sample — flat index (row * W + col) * C + ch — and batches are sample-major.

enum class LayerKind : std::uint8_t {
  dense = 1,
  reshape = 2,
  upsample2x = 3,
  conv2d = 4,
  batchnorm = 5,
  activation = 6,
};

enum class Activation : std::uint8_t { linear = 0, relu = 1, leaky_relu = 2 };

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;  // running = momentum*running + (1-momentum)*batch

struct Shape {
  std::size_t h = 1, w = 1, c = 1;
  std::size_t flat() const { return h * w * c; }
  bool operator==(const Shape& o) const { return h == o.h && w == o.w && c == o.c; }
  bool operator!=(const Shape& o) const { return !(*this == o); }
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in = 0, out = 0;                     // dense
  Shape shape;                                     // reshape target
  std::size_t kernel = 4, in_ch = 0, out_ch = 0;   // conv2d
  std::size_t stride = 1;                          // conv2d: 1 or 2
  std::size_t channels = 0;                        // batchnorm
  Activation act = Activation::linear;             // activation

  static LayerSpec Dense(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in = in;
    l.out = out;
    return l;
  }
  static LayerSpec Reshape(std::size_t h, std::size_t w, std::size_t c) {
    LayerSpec l;
    l.kind = LayerKind::reshape;
    l.shape = {h, w, c};
    return l;
  }
  static LayerSpec Upsample2x() {
    LayerSpec l;
    l.kind = LayerKind::upsample2x;
    return l;
  }
  static LayerSpec Conv2D(std::size_t in_ch, std::size_t out_ch, std::size_t stride = 1,
                          std::size_t kernel = 4) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.stride = stride;
    l.kernel = kernel;
    return l;
  }
  static LayerSpec BatchNorm(std::size_t channels) {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    l.channels = channels;
    return l;
  }
  static LayerSpec Act(Activation a) {
    LayerSpec l;
    l.kind = LayerKind::activation;
    l.act = a;
    return l;
  }
};

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t stride) {
  return (in + stride - 1) / stride;  // ceil, "same" padding
}

inline std::size_t conv_pad_begin(std::size_t in, std::size_t out, std::size_t k,
                                  std::size_t stride) {
  const std::size_t span = (out - 1) * stride + k;
  return span > in ? (span - in) / 2 : 0;
}

// Shapes through the network: result[0] is the input shape, result[l+1] the
// output of layer l. Throws config_error when consecutive layers do not chain.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size() + 1);
  if (spec.input_shape.flat() == 0) throw config_error("network: empty input shape");
  shapes.push_back(spec.input_shape);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    const Shape& prev = shapes.back();
    const std::string where = "network layer " + std::to_string(l);
    switch (ls.kind) {
      case LayerKind::dense:
        if (ls.in == 0 || ls.out == 0) throw config_error(where + ": dense with zero size");
        if (ls.in != prev.flat())
          throw config_error(where + ": dense input " + std::to_string(ls.in) +
                             " != incoming " + std::to_string(prev.flat()));
        shapes.push_back({1, 1, ls.out});
        break;
      case LayerKind::reshape:
        if (ls.shape.flat() != prev.flat())
          throw config_error(where + ": reshape changes element count");
        shapes.push_back(ls.shape);
        break;
      case LayerKind::upsample2x:
        shapes.push_back({prev.h * 2, prev.w * 2, prev.c});
        break;
      case LayerKind::conv2d: {
        if (ls.kernel == 0 || ls.out_ch == 0) throw config_error(where + ": bad conv dims");
        if (ls.stride != 1 && ls.stride != 2)
          throw config_error(where + ": conv stride must be 1 or 2");
        if (ls.in_ch != prev.c) throw config_error(where + ": conv in_ch mismatch");
        shapes.push_back({conv_out_extent(prev.h, ls.stride), conv_out_extent(prev.w, ls.stride),
                          ls.out_ch});
        break;
      }
      case LayerKind::batchnorm:
        if (ls.channels != prev.c) throw config_error(where + ": batchnorm channel mismatch");
        shapes.push_back(prev);
        break;
      case LayerKind::activation:
        shapes.push_back(prev);
        break;
      default:
        throw config_error(where + ": unknown layer kind");
    }
  }
  return shapes;
}

// Parameter tensor lengths (a, b) for one layer; (0, 0) for parameterless kinds.
inline std::pair<std::size_t, std::size_t> param_sizes(const LayerSpec& ls) {
  switch (ls.kind) {
    case LayerKind::dense:
      return {ls.in * ls.out, ls.out};
    case LayerKind::conv2d:
      return {ls.kernel * ls.kernel * ls.in_ch * ls.out_ch, ls.out_ch};
    case LayerKind::batchnorm:
      return {ls.channels, ls.channels};  // gamma, beta
    default:
      return {0, 0};
  }
}

template <class Real>
struct WeightStore {
  struct LayerParams {
    std::vector<Real> a, b;
  };
  struct BnState {
    std::vector<Real> mean, var;
  };
  std::vector<LayerParams> params;  // indexed by layer, empty for parameterless
  std::vector<BnState> bn;          // indexed by layer, filled only for batchnorm
  NormalizationStats norm;          // element-wise channel statistics (may be empty)
};

template <class Real>
void validate_store(const NetworkSpec& spec, const WeightStore<Real>& store) {
  if (store.params.size() != spec.layers.size() || store.bn.size() != spec.layers.size())
    throw config_error("weight store: layer count mismatch");
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto [na, nb] = param_sizes(spec.layers[l]);
    if (store.params[l].a.size() != na || store.params[l].b.size() != nb)
      throw config_error("weight store: parameter shape mismatch at layer " + std::to_string(l));
    const bool is_bn = spec.layers[l].kind == LayerKind::batchnorm;
    const std::size_t want = is_bn ? spec.layers[l].channels : 0;
    if (store.bn[l].mean.size() != want || store.bn[l].var.size() != want)
      throw config_error("weight store: running-stat shape mismatch at layer " +
                         std::to_string(l));
  }
}

// Dense and conv weights from N(0, init_std^2); biases zero; BN scale 1 shift 0,
// running mean 0 / var 1.
template <class Real>
WeightStore<Real> init_weights(const NetworkSpec& spec, Rng& rng, double init_std = 0.02) {
  infer_shapes(spec);  // validate chaining before allocating
  WeightStore<Real> store;
  store.params.resize(spec.layers.size());
  store.bn.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    const auto [na, nb] = param_sizes(ls);
    auto& p = store.params[l];
    p.a.resize(na);
    p.b.resize(nb);
    if (ls.kind == LayerKind::batchnorm) {
      for (auto& v : p.a) v = Real(1);  // gamma
      for (auto& v : p.b) v = Real(0);  // beta
      store.bn[l].mean.assign(ls.channels, Real(0));
      store.bn[l].var.assign(ls.channels, Real(1));
    } else {
      for (auto& v : p.a) v = static_cast<Real>(rng.normal(0.0, init_std));
      for (auto& v : p.b) v = Real(0);
    }
  }
  return store;
}

template <class Real>
std::size_t num_params(const WeightStore<Real>& store) {
  std::size_t n = 0;
  for (const auto& p : store.params) n += p.a.size() + p.b.size();
  return n;
}

// Clamp every trainable parameter to [-c, c]; a projection, hence idempotent.
template <class Real>
void clip_weights(WeightStore<Real>& store, double c) {
  if (!(c > 0.0)) throw argument_error("clip_weights: clip bound must be positive");
  const Real lo = static_cast<Real>(-c), hi = static_cast<Real>(c);
  for (auto& p : store.params) {
    for (auto& v : p.a) v = std::min(hi, std::max(lo, v));
    for (auto& v : p.b) v = std::min(hi, std::max(lo, v));
  }
}

enum class RunMode { train, infer };

template <class Real>
struct BatchBuffer {
  std::size_t batch = 0;
  Shape shape;
  std::vector<Real> data;  // batch * shape.flat(), sample-major
};

// Records one forward pass: the input of every layer plus per-BatchNorm
// statistics, enough to replay the reverse pass exactly once.
template <class Real>
struct Tape {
  RunMode mode = RunMode::infer;
  std::size_t batch = 0;
  std::vector<Shape> shapes;               // layers + 1 entries
  std::vector<std::vector<Real>> acts;     // acts[l] = input of layer l
  struct BnCache {
    std::vector<double> mean, inv_std;     // per channel, as used in this pass
  };
  std::vector<BnCache> bn_cache;           // indexed by layer
  bool consumed = false;
};

namespace nn_detail {

// All dot-product style reductions below accumulate in double even when the
// parameters and activations are single precision.
template <class Real>
void dense_forward(const LayerSpec& ls, const std::vector<Real>& wa, const std::vector<Real>& wb,
                   const Real* x, Real* y, std::size_t batch) {
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * ls.in;
    Real* ys = y + s * ls.out;
    for (std::size_t o = 0; o < ls.out; ++o) {
      const Real* row = wa.data() + o * ls.in;
      double acc = static_cast<double>(wb[o]);
      for (std::size_t i = 0; i < ls.in; ++i)
        acc += static_cast<double>(row[i]) * static_cast<double>(xs[i]);
      ys[o] = static_cast<Real>(acc);
    }
  }
}

template <class Real>
void dense_backward(const LayerSpec& ls, const std::vector<Real>& wa, const Real* x,
                    const Real* gy, Real* gx, std::vector<Real>& ga, std::vector<Real>& gb,
                    std::size_t batch) {
  std::vector<double> ga_d(ga.size(), 0.0), gb_d(gb.size(), 0.0);
  std::vector<double> gx_d(ls.in);
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * ls.in;
    const Real* gys = gy + s * ls.out;
    Real* gxs = gx + s * ls.in;
    std::fill(gx_d.begin(), gx_d.end(), 0.0);
    for (std::size_t o = 0; o < ls.out; ++o) {
      const double g = static_cast<double>(gys[o]);
      gb_d[o] += g;
      const Real* row = wa.data() + o * ls.in;
      double* grow = ga_d.data() + o * ls.in;
      for (std::size_t i = 0; i < ls.in; ++i) {
        gx_d[i] += static_cast<double>(row[i]) * g;
        grow[i] += static_cast<double>(xs[i]) * g;
      }
    }
    for (std::size_t i = 0; i < ls.in; ++i) gxs[i] = static_cast<Real>(gx_d[i]);
  }
  for (std::size_t i = 0; i < ga.size(); ++i)
    ga[i] = static_cast<Real>(static_cast<double>(ga[i]) + ga_d[i]);
  for (std::size_t i = 0; i < gb.size(); ++i)
    gb[i] = static_cast<Real>(static_cast<double>(gb[i]) + gb_d[i]);
}

template <class Real>
void upsample_forward(const Shape& in, const Real* x, Real* y, std::size_t batch) {
  const std::size_t ow = in.w * 2;
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * in.flat();
    Real* ys = y + s * in.flat() * 4;
    for (std::size_t r = 0; r < in.h; ++r)
      for (std::size_t cidx = 0; cidx < in.w; ++cidx) {
        const Real* src = xs + (r * in.w + cidx) * in.c;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            Real* dst = ys + ((2 * r + dy) * ow + (2 * cidx + dx)) * in.c;
            for (std::size_t ch = 0; ch < in.c; ++ch) dst[ch] = src[ch];
          }
      }
  }
}

// Adjoint of replication: 2x2 sum pooling of the upstream gradient.
template <class Real>
void upsample_backward(const Shape& in, const Real* gy, Real* gx, std::size_t batch) {
  const std::size_t ow = in.w * 2;
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* gys = gy + s * in.flat() * 4;
    Real* gxs = gx + s * in.flat();
    for (std::size_t r = 0; r < in.h; ++r)
      for (std::size_t cidx = 0; cidx < in.w; ++cidx) {
        Real* dst = gxs + (r * in.w + cidx) * in.c;
        for (std::size_t ch = 0; ch < in.c; ++ch) dst[ch] = Real(0);
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const Real* src = gys + ((2 * r + dy) * ow + (2 * cidx + dx)) * in.c;
            for (std::size_t ch = 0; ch < in.c; ++ch) dst[ch] += src[ch];
          }
      }
  }
}

template <class Real>
void conv_forward(const LayerSpec& ls, const Shape& in, const Shape& out,
                  const std::vector<Real>& wa, const std::vector<Real>& wb, const Real* x,
                  Real* y, std::size_t batch) {
  const std::size_t k = ls.kernel, ic = ls.in_ch, oc = ls.out_ch, st = ls.stride;
  const std::size_t pb_h = conv_pad_begin(in.h, out.h, k, st);
  const std::size_t pb_w = conv_pad_begin(in.w, out.w, k, st);
  std::vector<double> acc(oc);
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * in.flat();
    Real* ys = y + s * out.flat();
    for (std::size_t oy = 0; oy < out.h; ++oy) {
      for (std::size_t ox = 0; ox < out.w; ++ox) {
        for (std::size_t o = 0; o < oc; ++o) acc[o] = static_cast<double>(wb[o]);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * st + ky) - static_cast<std::ptrdiff_t>(pb_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * st + kx) - static_cast<std::ptrdiff_t>(pb_w);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const Real* px = xs + (static_cast<std::size_t>(iy) * in.w +
                                   static_cast<std::size_t>(ix)) * ic;
            const Real* pk = wa.data() + (ky * k + kx) * ic * oc;
            for (std::size_t i = 0; i < ic; ++i) {
              const double v = static_cast<double>(px[i]);
              const Real* kb = pk + i * oc;
              for (std::size_t o = 0; o < oc; ++o) acc[o] += v * static_cast<double>(kb[o]);
            }
          }
        }
        Real* op = ys + (oy * out.w + ox) * oc;
        for (std::size_t o = 0; o < oc; ++o) op[o] = static_cast<Real>(acc[o]);
      }
    }
  }
}

template <class Real>
void conv_backward(const LayerSpec& ls, const Shape& in, const Shape& out,
                   const std::vector<Real>& wa, const Real* x, const Real* gy, Real* gx,
                   std::vector<Real>& ga, std::vector<Real>& gb, std::size_t batch) {
  const std::size_t k = ls.kernel, ic = ls.in_ch, oc = ls.out_ch, st = ls.stride;
  const std::size_t pb_h = conv_pad_begin(in.h, out.h, k, st);
  const std::size_t pb_w = conv_pad_begin(in.w, out.w, k, st);
  std::vector<double> ga_d(ga.size(), 0.0), gb_d(gb.size(), 0.0);
  std::vector<double> gx_d(in.flat());
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * in.flat();
    const Real* gys = gy + s * out.flat();
    Real* gxs = gx + s * in.flat();
    std::fill(gx_d.begin(), gx_d.end(), 0.0);
    for (std::size_t oy = 0; oy < out.h; ++oy) {
      for (std::size_t ox = 0; ox < out.w; ++ox) {
        const Real* g = gys + (oy * out.w + ox) * oc;
        for (std::size_t o = 0; o < oc; ++o) gb_d[o] += static_cast<double>(g[o]);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * st + ky) - static_cast<std::ptrdiff_t>(pb_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * st + kx) - static_cast<std::ptrdiff_t>(pb_w);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * in.w +
                                      static_cast<std::size_t>(ix)) * ic;
            const Real* px = xs + base;
            double* pgx = gx_d.data() + base;
            const std::size_t kbase = (ky * k + kx) * ic * oc;
            for (std::size_t i = 0; i < ic; ++i) {
              const Real* kb = wa.data() + kbase + i * oc;
              double* gkb = ga_d.data() + kbase + i * oc;
              double acc = 0.0;
              const double v = static_cast<double>(px[i]);
              for (std::size_t o = 0; o < oc; ++o) {
                const double go = static_cast<double>(g[o]);
                acc += static_cast<double>(kb[o]) * go;
                gkb[o] += v * go;
              }
              pgx[i] += acc;
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < in.flat(); ++i) gxs[i] = static_cast<Real>(gx_d[i]);
  }
  for (std::size_t i = 0; i < ga.size(); ++i)
    ga[i] = static_cast<Real>(static_cast<double>(ga[i]) + ga_d[i]);
  for (std::size_t i = 0; i < gb.size(); ++i)
    gb[i] = static_cast<Real>(static_cast<double>(gb[i]) + gb_d[i]);
}

template <class Real>
void activation_forward(Activation act, const Real* x, Real* y, std::size_t n) {
  switch (act) {
    case Activation::linear:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i];
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i)
        y[i] = x[i] > Real(0) ? x[i] : static_cast<Real>(kLeakySlope) * x[i];
      break;
  }
}

template <class Real>
void activation_backward(Activation act, const Real* x, const Real* gy, Real* gx, std::size_t n) {
  switch (act) {
    case Activation::linear:
      for (std::size_t i = 0; i < n; ++i) gx[i] = gy[i];
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > Real(0) ? gy[i] : Real(0);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i)
        gx[i] = x[i] > Real(0) ? gy[i] : static_cast<Real>(kLeakySlope) * gy[i];
      break;
  }
}

// BatchNorm forward. Train mode: statistics over the batch x spatial extent
// per channel (biased variance), cached for backward; optionally folds the
// batch statistics into running stats. Infer mode: running statistics.
template <class Real>
void bn_forward(const LayerSpec& ls, const Shape& shape, const std::vector<Real>& gamma,
                const std::vector<Real>& beta, const typename WeightStore<Real>::BnState& run,
                const Real* x, Real* y, std::size_t batch, RunMode mode,
                typename Tape<Real>::BnCache* cache,
                typename WeightStore<Real>::BnState* running_update) {
  const std::size_t c = ls.channels;
  const std::size_t spatial = shape.h * shape.w;
  const std::size_t per_sample = shape.flat();
  const double set_size = static_cast<double>(batch * spatial);
  std::vector<double> mean(c, 0.0), var(c, 0.0), inv_std(c, 0.0);

  if (mode == RunMode::train) {
    for (std::size_t s = 0; s < batch; ++s) {
      const Real* xs = x + s * per_sample;
      for (std::size_t p = 0; p < spatial; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += static_cast<double>(xs[p * c + ch]);
    }
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= set_size;
    for (std::size_t s = 0; s < batch; ++s) {
      const Real* xs = x + s * per_sample;
      for (std::size_t p = 0; p < spatial; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double d = static_cast<double>(xs[p * c + ch]) - mean[ch];
          var[ch] += d * d;
        }
    }
    for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= set_size;
    if (running_update) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        running_update->mean[ch] = static_cast<Real>(
            kBnMomentum * static_cast<double>(running_update->mean[ch]) +
            (1.0 - kBnMomentum) * mean[ch]);
        running_update->var[ch] = static_cast<Real>(
            kBnMomentum * static_cast<double>(running_update->var[ch]) +
            (1.0 - kBnMomentum) * var[ch]);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = static_cast<double>(run.mean[ch]);
      var[ch] = static_cast<double>(run.var[ch]);
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kBnEpsilon);

  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * per_sample;
    Real* ys = y + s * per_sample;
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double xhat = (static_cast<double>(xs[p * c + ch]) - mean[ch]) * inv_std[ch];
        ys[p * c + ch] = static_cast<Real>(static_cast<double>(gamma[ch]) * xhat +
                                           static_cast<double>(beta[ch]));
      }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
}

template <class Real>
void bn_backward(const LayerSpec& ls, const Shape& shape, const std::vector<Real>& gamma,
                 const typename Tape<Real>::BnCache& cache, const Real* x, const Real* gy,
                 Real* gx, std::vector<Real>& ggamma, std::vector<Real>& gbeta,
                 std::size_t batch, RunMode mode) {
  const std::size_t c = ls.channels;
  const std::size_t spatial = shape.h * shape.w;
  const std::size_t per_sample = shape.flat();
  const double set_size = static_cast<double>(batch * spatial);

  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * per_sample;
    const Real* gys = gy + s * per_sample;
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = static_cast<double>(gys[p * c + ch]);
        const double xhat =
            (static_cast<double>(xs[p * c + ch]) - cache.mean[ch]) * cache.inv_std[ch];
        sum_g[ch] += g;
        sum_gx[ch] += g * xhat;
      }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    ggamma[ch] += static_cast<Real>(sum_gx[ch]);
    gbeta[ch] += static_cast<Real>(sum_g[ch]);
  }
  for (std::size_t s = 0; s < batch; ++s) {
    const Real* xs = x + s * per_sample;
    const Real* gys = gy + s * per_sample;
    Real* gxs = gx + s * per_sample;
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = static_cast<double>(gys[p * c + ch]);
        const double scale_ch = static_cast<double>(gamma[ch]) * cache.inv_std[ch];
        if (mode == RunMode::train) {
          const double xhat =
              (static_cast<double>(xs[p * c + ch]) - cache.mean[ch]) * cache.inv_std[ch];
          gxs[p * c + ch] = static_cast<Real>(
              scale_ch * (g - sum_g[ch] / set_size - xhat * sum_gx[ch] / set_size));
        } else {
          // Frozen statistics: the map is affine per element.
          gxs[p * c + ch] = static_cast<Real>(scale_ch * g);
        }
      }
  }
}

}  // namespace nn_detail

// Forward pass over a batch. When `tape` is given, layer inputs and BatchNorm
// statistics are recorded for net_backward. In train mode BatchNorm uses batch
// statistics and, if `running_update` is non-null, folds them into that
// store's running stats (pass the training store itself).
template <class Real>
BatchBuffer<Real> net_forward(const NetworkSpec& spec, const WeightStore<Real>& store,
                              const BatchBuffer<Real>& input, RunMode mode,
                              Tape<Real>* tape = nullptr,
                              WeightStore<Real>* running_update = nullptr) {
  validate_store(spec, store);
  const std::vector<Shape> shapes = infer_shapes(spec);
  if (input.shape != spec.input_shape) throw argument_error("net_forward: input shape mismatch");
  if (input.batch == 0 || input.data.size() != input.batch * input.shape.flat())
    throw argument_error("net_forward: input buffer size mismatch");

  if (tape) {
    tape->mode = mode;
    tape->batch = input.batch;
    tape->shapes = shapes;
    tape->acts.clear();
    tape->acts.reserve(spec.layers.size());
    tape->bn_cache.assign(spec.layers.size(), {});
    tape->consumed = false;
  }

  std::vector<Real> cur = input.data;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    const Shape& sin = shapes[l];
    const Shape& sout = shapes[l + 1];
    std::vector<Real> next(input.batch * sout.flat());
    const auto& p = store.params[l];
    switch (ls.kind) {
      case LayerKind::dense:
        nn_detail::dense_forward(ls, p.a, p.b, cur.data(), next.data(), input.batch);
        break;
      case LayerKind::reshape:
        next = cur;  // same element order, new interpretation
        break;
      case LayerKind::upsample2x:
        nn_detail::upsample_forward(sin, cur.data(), next.data(), input.batch);
        break;
      case LayerKind::conv2d:
        nn_detail::conv_forward(ls, sin, sout, p.a, p.b, cur.data(), next.data(), input.batch);
        break;
      case LayerKind::batchnorm:
        nn_detail::bn_forward<Real>(
            ls, sin, p.a, p.b, store.bn[l], cur.data(), next.data(), input.batch, mode,
            tape ? &tape->bn_cache[l] : nullptr,
            (running_update && mode == RunMode::train) ? &running_update->bn[l] : nullptr);
        break;
      case LayerKind::activation:
        nn_detail::activation_forward(ls.act, cur.data(), next.data(), cur.size());
        break;
    }
    if (tape)
      tape->acts.push_back(std::move(cur));
    cur = std::move(next);
  }
  for (const Real v : cur)
    if (!std::isfinite(static_cast<double>(v)))
      throw numerical_error("net_forward: non-finite activation");
  BatchBuffer<Real> out;
  out.batch = input.batch;
  out.shape = shapes.back();
  out.data = std::move(cur);
  return out;
}

template <class Real>
struct Gradients {
  std::vector<typename WeightStore<Real>::LayerParams> params;  // aligned with store
  std::vector<Real> input;                                      // batch x input flat
};

// Reverse pass. `upstream` is dLoss/dOutput, batch-major, matching the forward
// output buffer. Gradients w.r.t. parameters are sums over the batch (scale
// the upstream by 1/batch for means). Consumes the tape.
template <class Real>
Gradients<Real> net_backward(const NetworkSpec& spec, const WeightStore<Real>& store,
                             Tape<Real>& tape, const std::vector<Real>& upstream) {
  if (tape.consumed) throw contract_error("net_backward: tape already consumed");
  tape.consumed = true;
  if (tape.acts.size() != spec.layers.size())
    throw argument_error("net_backward: tape does not match network");
  if (upstream.size() != tape.batch * tape.shapes.back().flat())
    throw argument_error("net_backward: upstream size mismatch");

  Gradients<Real> g;
  g.params.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto [na, nb] = param_sizes(spec.layers[l]);
    g.params[l].a.assign(na, Real(0));
    g.params[l].b.assign(nb, Real(0));
  }

  std::vector<Real> gy = upstream;
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& ls = spec.layers[li];
    const Shape& sin = tape.shapes[li];
    const Shape& sout = tape.shapes[li + 1];
    (void)sout;
    const std::vector<Real>& x = tape.acts[li];
    std::vector<Real> gx(tape.batch * sin.flat());
    switch (ls.kind) {
      case LayerKind::dense:
        nn_detail::dense_backward(ls, store.params[li].a, x.data(), gy.data(), gx.data(),
                                  g.params[li].a, g.params[li].b, tape.batch);
        break;
      case LayerKind::reshape:
        gx = gy;
        break;
      case LayerKind::upsample2x:
        nn_detail::upsample_backward(sin, gy.data(), gx.data(), tape.batch);
        break;
      case LayerKind::conv2d:
        nn_detail::conv_backward(ls, sin, sout, store.params[li].a, x.data(), gy.data(),
                                 gx.data(), g.params[li].a, g.params[li].b, tape.batch);
        break;
      case LayerKind::batchnorm:
        nn_detail::bn_backward<Real>(ls, sin, store.params[li].a, tape.bn_cache[li], x.data(),
                                     gy.data(), gx.data(), g.params[li].a, g.params[li].b,
                                     tape.batch, tape.mode);
        break;
      case LayerKind::activation:
        nn_detail::activation_backward(ls.act, x.data(), gy.data(), gx.data(), gy.size());
        break;
    }
    gy = std::move(gx);
    tape.acts[li].clear();
    tape.acts[li].shrink_to_fit();
  }
  g.input = std::move(gy);
  return g;
}

// --- plane/tensor layout bridge --------------------------------------------------

// Channel planes are [real plane col-major | imag plane col-major]; network
// tensors are HWC with channel 0 real, channel 1 imaginary.
template <class Real>
std::vector<Real> planes_to_tensor(const std::vector<double>& planes, std::size_t n_r,
                                   std::size_t n_t) {
  if (planes.size() != 2 * n_r * n_t)
    throw argument_error("planes_to_tensor: plane length mismatch");
  std::vector<Real> t(planes.size());
  for (std::size_t r = 0; r < n_r; ++r)
    for (std::size_t c = 0; c < n_t; ++c) {
      t[(r * n_t + c) * 2 + 0] = static_cast<Real>(planes[c * n_r + r]);
      t[(r * n_t + c) * 2 + 1] = static_cast<Real>(planes[n_r * n_t + c * n_r + r]);
    }
  return t;
}

template <class Real>
std::vector<double> tensor_to_planes(const std::vector<Real>& tensor, std::size_t n_r,
                                     std::size_t n_t) {
  if (tensor.size() != 2 * n_r * n_t)
    throw argument_error("tensor_to_planes: tensor length mismatch");
  std::vector<double> p(tensor.size());
  for (std::size_t r = 0; r < n_r; ++r)
    for (std::size_t c = 0; c < n_t; ++c) {
      p[c * n_r + r] = static_cast<double>(tensor[(r * n_t + c) * 2 + 0]);
      p[n_r * n_t + c * n_r + r] = static_cast<double>(tensor[(r * n_t + c) * 2 + 1]);
    }
  return p;
}

// --- reference architectures ---------------------------------------------------

// Generator: latent d -> Dense -> (N_r/4, N_t/4, base) -> two rounds of
// [Upsample2x -> Conv2D(4) -> BatchNorm -> relu] -> Conv2D(4, 2 channels, linear).
// Output (N_r, N_t, 2): real plane channel 0, imaginary plane channel 1.
inline NetworkSpec make_generator_spec(std::size_t n_r, std::size_t n_t, std::size_t latent_dim,
                                       std::size_t base_channels = 128) {
  if (latent_dim == 0) throw config_error("generator: latent_dim must be positive");
  if (base_channels == 0) throw config_error("generator: base_channels must be positive");
  if (n_r == 0 || n_t == 0 || n_r % 4 != 0 || n_t % 4 != 0)
    throw config_error("generator: antenna counts must be positive multiples of 4");
  NetworkSpec spec;
  spec.input_shape = {1, 1, latent_dim};
  const std::size_t h0 = n_r / 4, w0 = n_t / 4;
  spec.layers = {
      LayerSpec::Dense(latent_dim, base_channels * h0 * w0),
      LayerSpec::Reshape(h0, w0, base_channels),
      LayerSpec::Upsample2x(),
      LayerSpec::Conv2D(base_channels, base_channels),
      LayerSpec::BatchNorm(base_channels),
      LayerSpec::Act(Activation::relu),
      LayerSpec::Upsample2x(),
      LayerSpec::Conv2D(base_channels, base_channels),
      LayerSpec::BatchNorm(base_channels),
      LayerSpec::Act(Activation::relu),
      LayerSpec::Conv2D(base_channels, 2),
      LayerSpec::Act(Activation::linear),
  };
  const std::vector<Shape> shapes = infer_shapes(spec);
  const Shape want{n_r, n_t, 2};
  if (shapes.back() != want) throw config_error("generator: output shape mismatch");
  return spec;
}

// Critic: two stride-2 convolutions with leaky relu, then a linear scalar
// head. No BatchNorm (weight-clipped Wasserstein critic convention).
inline NetworkSpec make_critic_spec(std::size_t n_r, std::size_t n_t,
                                    std::size_t base_channels = 64) {
  if (n_r == 0 || n_t == 0 || base_channels == 0) throw config_error("critic: bad dimensions");
  NetworkSpec spec;
  spec.input_shape = {n_r, n_t, 2};
  spec.layers = {
      LayerSpec::Conv2D(2, base_channels, 2),
      LayerSpec::Act(Activation::leaky_relu),
      LayerSpec::Conv2D(base_channels, 2 * base_channels, 2),
      LayerSpec::Act(Activation::leaky_relu),
  };
  const std::size_t flat = infer_shapes(spec).back().flat();
  spec.layers.push_back(LayerSpec::Dense(flat, 1));
  infer_shapes(spec);
  return spec;
}

// --- single-sample wrappers -----------------------------------------------------

template <class Real>
std::pair<std::vector<Real>, Tape<Real>> generator_forward(const WeightStore<Real>& weights,
                                                           const NetworkSpec& spec,
                                                           const std::vector<Real>& z,
                                                           RunMode mode) {
  if (z.size() != spec.input_shape.flat())
    throw argument_error("generator_forward: latent length mismatch");
  BatchBuffer<Real> in;
  in.batch = 1;
  in.shape = spec.input_shape;
  in.data = z;
  Tape<Real> tape;
  BatchBuffer<Real> out = net_forward(spec, weights, in, mode, &tape);
  return {std::move(out.data), std::move(tape)};
}

// grad_z plus parameter gradients for one recorded generator pass.
template <class Real>
std::pair<std::vector<Real>, Gradients<Real>> generator_backward(
    const WeightStore<Real>& weights, const NetworkSpec& spec, Tape<Real>& tape,
    const std::vector<Real>& upstream) {
  Gradients<Real> g = net_backward(spec, weights, tape, upstream);
  return {g.input, std::move(g)};
}

template <class Real>
std::pair<Real, Tape<Real>> critic_forward(const WeightStore<Real>& weights,
                                           const NetworkSpec& spec, const std::vector<Real>& x,
                                           RunMode mode) {
  if (x.size() != spec.input_shape.flat())
    throw argument_error("critic_forward: input length mismatch");
  BatchBuffer<Real> in;
  in.batch = 1;
  in.shape = spec.input_shape;
  in.data = x;
  Tape<Real> tape;
  BatchBuffer<Real> out = net_forward(spec, weights, in, mode, &tape);
  if (out.data.size() != 1) throw config_error("critic_forward: network output is not scalar");
  return {out.data[0], std::move(tape)};
}

}  // namespace gce
