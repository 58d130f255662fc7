#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/nn.hpp"

namespace gce {

// Weight file "GGW1": magic, u16 version, u32 input shape (h, w, c), u32 layer
// count, per-layer {kind u8, dims, f32 params (a then b)}, then running stats
// for each BatchNorm layer in order (f32 mean, f32 var), then the attached
// NormalizationStats (u32 n_r, u32 n_t, f64 mu, f64 sigma). Little-endian
// throughout; byte layout documented in docs/formats.md.

inline constexpr std::uint16_t kWeightsVersion = 1;

namespace detail {

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

template <class Real>
std::string serialize_weights(const WeightStore<Real>& store, const NetworkSpec& spec) {
  validate_store(spec, store);
  std::string bytes;
  bytes.append("GGW1", 4);
  detail::put_u16(bytes, kWeightsVersion);
  detail::put_u32(bytes, static_cast<std::uint32_t>(spec.input_shape.h));
  detail::put_u32(bytes, static_cast<std::uint32_t>(spec.input_shape.w));
  detail::put_u32(bytes, static_cast<std::uint32_t>(spec.input_shape.c));
  detail::put_u32(bytes, static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    bytes.push_back(static_cast<char>(ls.kind));
    switch (ls.kind) {
      case LayerKind::dense:
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.in));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.out));
        break;
      case LayerKind::reshape:
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.shape.h));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.shape.w));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.shape.c));
        break;
      case LayerKind::upsample2x:
        break;
      case LayerKind::conv2d:
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.kernel));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.in_ch));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.out_ch));
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.stride));
        break;
      case LayerKind::batchnorm:
        detail::put_u32(bytes, static_cast<std::uint32_t>(ls.channels));
        break;
      case LayerKind::activation:
        bytes.push_back(static_cast<char>(ls.act));
        break;
    }
    for (const Real v : store.params[l].a) detail::put_f32(bytes, static_cast<float>(v));
    for (const Real v : store.params[l].b) detail::put_f32(bytes, static_cast<float>(v));
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (spec.layers[l].kind != LayerKind::batchnorm) continue;
    for (const Real v : store.bn[l].mean) detail::put_f32(bytes, static_cast<float>(v));
    for (const Real v : store.bn[l].var) detail::put_f32(bytes, static_cast<float>(v));
  }
  detail::put_u32(bytes, static_cast<std::uint32_t>(store.norm.n_r));
  detail::put_u32(bytes, static_cast<std::uint32_t>(store.norm.n_t));
  const std::size_t dim = 2 * store.norm.n_r * store.norm.n_t;
  if (store.norm.mu.size() != dim || store.norm.sigma.size() != dim)
    throw argument_error("serialize_weights: normalization stats length mismatch");
  for (const double v : store.norm.mu) detail::put_f64(bytes, v);
  for (const double v : store.norm.sigma) detail::put_f64(bytes, v);
  return bytes;
}

template <class Real>
void save_weights(const WeightStore<Real>& store, const NetworkSpec& spec,
                  const std::string& path) {
  detail::write_file(path, serialize_weights(store, spec));
}

template <class Real = float>
struct LoadedWeights {
  NetworkSpec spec;
  WeightStore<Real> store;
};

template <class Real = float>
LoadedWeights<Real> parse_weights(const std::string& bytes, const std::string& what) {
  detail::ByteReader r(bytes, what);
  r.magic("GGW1");
  const std::uint16_t version = r.u16();
  if (version != kWeightsVersion)
    throw format_error(what + ": unsupported version " + std::to_string(version));
  LoadedWeights<Real> out;
  out.spec.input_shape.h = r.u32();
  out.spec.input_shape.w = r.u32();
  out.spec.input_shape.c = r.u32();
  const std::uint32_t layer_count = r.u32();
  if (layer_count > 4096) throw format_error(what + ": implausible layer count");
  out.spec.layers.reserve(layer_count);
  out.store.params.resize(layer_count);
  out.store.bn.resize(layer_count);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    LayerSpec ls;
    const std::uint8_t kind = r.u8();
    switch (kind) {
      case static_cast<std::uint8_t>(LayerKind::dense): {
        const std::uint32_t fan_in = r.u32(), fan_out = r.u32();
        ls = LayerSpec::Dense(fan_in, fan_out);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::reshape): {
        const std::uint32_t h = r.u32(), w = r.u32(), c = r.u32();
        ls = LayerSpec::Reshape(h, w, c);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::upsample2x):
        ls = LayerSpec::Upsample2x();
        break;
      case static_cast<std::uint8_t>(LayerKind::conv2d): {
        const std::uint32_t k = r.u32(), ic = r.u32(), oc = r.u32(), st = r.u32();
        ls = LayerSpec::Conv2D(ic, oc, st, k);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::batchnorm):
        ls = LayerSpec::BatchNorm(r.u32());
        break;
      case static_cast<std::uint8_t>(LayerKind::activation): {
        const std::uint8_t a = r.u8();
        if (a > static_cast<std::uint8_t>(Activation::leaky_relu))
          throw format_error(what + ": unknown activation tag");
        ls = LayerSpec::Act(static_cast<Activation>(a));
        break;
      }
      default:
        throw format_error(what + ": unknown layer kind tag " + std::to_string(kind));
    }
    const auto [na, nb] = param_sizes(ls);
    auto& p = out.store.params[l];
    p.a.resize(na);
    p.b.resize(nb);
    for (auto& v : p.a) v = static_cast<Real>(r.f32());
    for (auto& v : p.b) v = static_cast<Real>(r.f32());
    out.spec.layers.push_back(ls);
  }
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    if (out.spec.layers[l].kind != LayerKind::batchnorm) continue;
    auto& bn = out.store.bn[l];
    bn.mean.resize(out.spec.layers[l].channels);
    bn.var.resize(out.spec.layers[l].channels);
    for (auto& v : bn.mean) v = static_cast<Real>(r.f32());
    for (auto& v : bn.var) v = static_cast<Real>(r.f32());
  }
  out.store.norm.n_r = r.u32();
  out.store.norm.n_t = r.u32();
  const std::size_t dim = 2 * out.store.norm.n_r * out.store.norm.n_t;
  out.store.norm.mu.resize(dim);
  out.store.norm.sigma.resize(dim);
  for (auto& v : out.store.norm.mu) v = r.f64();
  for (auto& v : out.store.norm.sigma) v = r.f64();
  r.expect_done();

  infer_shapes(out.spec);  // chaining errors surface as config_error
  validate_store(out.spec, out.store);
  for (const auto& p : out.store.params)
    for (const Real v : p.a)
      if (!std::isfinite(static_cast<double>(v)))
        throw format_error(what + ": non-finite parameter");
  return out;
}

template <class Real = float>
LoadedWeights<Real> load_weights(const std::string& path) {
  return parse_weights<Real>(detail::read_file(path), "weights " + path);
}

}  // namespace gce
