#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

#include "gce/errors.hpp"

namespace gce {

// splitmix64 mixer (Steele et al.); used both as a seed expander and to derive
// independent substream seeds from (master seed, index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Substream seed derivation. Documented in docs/formats.md; changing this
// breaks reproducibility of every recorded experiment.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x9e3779b97f4a7c15ull));
}

// Tagged stream id: mixes a label with up to three integer coordinates.
inline std::uint64_t stream_id(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
  std::uint64_t h = fnv1a64(tag);
  h = splitmix64(h ^ splitmix64(a + 1));
  h = splitmix64(h ^ splitmix64(b + 2));
  h = splitmix64(h ^ splitmix64(c + 3));
  return h;
}

// Deterministic generator with hand-rolled samplers. std::normal_distribution
// and friends are implementation-defined, so results would not be reproducible
// across standard libraries; these samplers pin the exact sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  static Rng substream(std::uint64_t master, std::uint64_t index) {
    return Rng(substream_seed(master, index));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one spare is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Zero-mean Laplace with scale b (variance 2 b^2), via inverse CDF.
  double laplace(double scale) {
    if (scale < 0.0) throw argument_error("laplace: negative scale");
    if (scale == 0.0) return 0.0;
    double u = uniform() - 0.5;  // [-0.5, 0.5)
    double t = 1.0 - 2.0 * std::abs(u);
    if (t < 1e-300) t = 1e-300;
    double x = -scale * std::log(t);
    return u < 0.0 ? -x : x;
  }

  // Circularly symmetric complex Gaussian with E|x|^2 = var.
  std::complex<double> cgauss(double var = 1.0) {
    if (var < 0.0) throw argument_error("cgauss: negative variance");
    double s = std::sqrt(var * 0.5);
    double re = normal();
    double im = normal();
    return {s * re, s * im};
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gce
