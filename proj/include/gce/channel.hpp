#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gce/errors.hpp"
#include "gce/linalg.hpp"
#include "gce/rng.hpp"

namespace gce {

inline constexpr double kPi = 3.14159265358979323846;

// Uniform linear array: antenna n sits at n * spacing (in carrier wavelengths).
struct ArrayGeometry {
  std::size_t num_antennas = 1;
  double spacing_wavelengths = 0.5;
};

inline void validate(const ArrayGeometry& g) {
  if (g.num_antennas == 0) throw argument_error("ArrayGeometry: need at least one antenna");
  if (!(g.spacing_wavelengths > 0.0) || !(g.spacing_wavelengths <= 10.0))
    throw argument_error("ArrayGeometry: spacing must be in (0, 10] wavelengths");
}

// Unit-norm array response for a plane wave at the given angle (radians,
// measured from broadside): a_n = exp(j 2 pi spacing n sin(angle)) / sqrt(N).
inline ComplexVector steering_vector(const ArrayGeometry& g, double angle) {
  validate(g);
  if (!(angle >= -kPi / 2 - 1e-12 && angle <= kPi / 2 + 1e-12))
    throw argument_error("steering_vector: angle outside [-pi/2, pi/2]");
  const double phase_step = 2.0 * kPi * g.spacing_wavelengths * std::sin(angle);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(g.num_antennas));
  ComplexVector a(g.num_antennas);
  for (std::size_t n = 0; n < g.num_antennas; ++n) {
    const double p = phase_step * static_cast<double>(n);
    a[n] = cplx(std::cos(p) * inv_sqrt_n, std::sin(p) * inv_sqrt_n);
  }
  return a;
}

// One path per (cluster, ray): arrival/departure angles plus a complex gain.
struct ClusterParams {
  std::vector<double> aoa;  // radians, length = num paths
  std::vector<double> aod;
  std::vector<cplx> gains;  // CN(0,1) per path
};

struct ClusterConfig {
  std::size_t clusters = 3;
  std::size_t rays_per_cluster = 10;
  double angular_spread_rad = 5.0 * kPi / 180.0;  // Laplacian scale of ray offsets
  double center_range_rad = kPi / 3.0;            // cluster centers uniform in +/- this
};

inline void validate(const ClusterConfig& c) {
  if (c.clusters == 0 || c.rays_per_cluster == 0)
    throw config_error("ClusterConfig: clusters and rays_per_cluster must be positive");
  if (c.angular_spread_rad < 0.0) throw config_error("ClusterConfig: negative angular spread");
  if (!(c.center_range_rad >= 0.0 && c.center_range_rad <= kPi / 2))
    throw config_error("ClusterConfig: center range outside [0, pi/2]");
}

// Cluster centers are uniform in [-range, range]; rays scatter around their
// center with Laplacian offsets and are clamped to the physical angle range.
inline ClusterParams sample_cluster_params(const ClusterConfig& cfg, Rng& rng) {
  validate(cfg);
  ClusterParams p;
  const std::size_t total = cfg.clusters * cfg.rays_per_cluster;
  p.aoa.reserve(total);
  p.aod.reserve(total);
  p.gains.reserve(total);
  auto clamp_angle = [](double a) { return std::min(kPi / 2, std::max(-kPi / 2, a)); };
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    const double center_aoa = rng.uniform(-cfg.center_range_rad, cfg.center_range_rad);
    const double center_aod = rng.uniform(-cfg.center_range_rad, cfg.center_range_rad);
    for (std::size_t r = 0; r < cfg.rays_per_cluster; ++r) {
      p.aoa.push_back(clamp_angle(center_aoa + rng.laplace(cfg.angular_spread_rad)));
      p.aod.push_back(clamp_angle(center_aod + rng.laplace(cfg.angular_spread_rad)));
      p.gains.push_back(rng.cgauss(1.0));
    }
  }
  return p;
}

// H = sqrt(Nt Nr / L) * sum_l gain_l a_rx(aoa_l) a_tx(aod_l)^H.
// With unit-norm steering vectors and CN(0,1) gains, E ||H||_F^2 = Nr Nt.
inline ComplexMatrix generate_channel(const ClusterParams& p, const ArrayGeometry& tx,
                                      const ArrayGeometry& rx) {
  validate(tx);
  validate(rx);
  const std::size_t paths = p.gains.size();
  if (paths == 0 || p.aoa.size() != paths || p.aod.size() != paths)
    throw argument_error("generate_channel: inconsistent path parameters");
  ComplexMatrix h(rx.num_antennas, tx.num_antennas);
  const double scale_factor = std::sqrt(
      static_cast<double>(tx.num_antennas) * static_cast<double>(rx.num_antennas) /
      static_cast<double>(paths));
  for (std::size_t l = 0; l < paths; ++l) {
    const ComplexVector ar = steering_vector(rx, p.aoa[l]);
    const ComplexVector at = steering_vector(tx, p.aod[l]);
    const cplx g = p.gains[l] * scale_factor;
    for (std::size_t j = 0; j < tx.num_antennas; ++j) {
      const cplx w = g * std::conj(at[j]);
      for (std::size_t i = 0; i < rx.num_antennas; ++i) h(i, j) += w * ar[i];
    }
  }
  return h;
}

struct ChannelRealization {
  ComplexMatrix h;
  ClusterParams params;
};

// --- real-plane encoding -----------------------------------------------------
// A complex Nr x Nt channel maps to 2 Nr Nt reals: first the real parts in
// column-major order, then the imaginary parts. All statistics, network
// outputs, and dataset files use this layout.

inline std::vector<double> channel_to_planes(const ComplexMatrix& h) {
  const std::size_t n = h.data().size();
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = h.data()[i].real();
    out[n + i] = h.data()[i].imag();
  }
  return out;
}

inline ComplexMatrix planes_to_channel(const std::vector<double>& planes, std::size_t rows,
                                       std::size_t cols) {
  const std::size_t n = rows * cols;
  if (planes.size() != 2 * n) throw argument_error("planes_to_channel: length mismatch");
  ComplexMatrix h(rows, cols);
  for (std::size_t i = 0; i < n; ++i) h.data()[i] = cplx(planes[i], planes[n + i]);
  return h;
}

inline constexpr double kSigmaFloor = 1e-6;

// Per-element mean and standard deviation over a dataset, in plane layout.
// sigma is floored so elements that are constant across the dataset do not
// produce divisions by zero when normalizing.
struct NormalizationStats {
  std::size_t n_r = 0, n_t = 0;
  std::vector<double> mu;     // length 2 Nr Nt
  std::vector<double> sigma;  // length 2 Nr Nt, each >= kSigmaFloor
};

inline NormalizationStats compute_norm_stats(const std::vector<std::vector<double>>& planes,
                                             std::size_t n_r, std::size_t n_t) {
  if (planes.empty()) throw argument_error("compute_norm_stats: empty dataset");
  const std::size_t dim = 2 * n_r * n_t;
  NormalizationStats st;
  st.n_r = n_r;
  st.n_t = n_t;
  st.mu.assign(dim, 0.0);
  st.sigma.assign(dim, 0.0);
  const double inv_n = 1.0 / static_cast<double>(planes.size());
  for (const auto& s : planes) {
    if (s.size() != dim) throw argument_error("compute_norm_stats: sample length mismatch");
    for (std::size_t i = 0; i < dim; ++i) st.mu[i] += s[i];
  }
  for (std::size_t i = 0; i < dim; ++i) st.mu[i] *= inv_n;
  for (const auto& s : planes) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = s[i] - st.mu[i];
      st.sigma[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    st.sigma[i] = std::max(kSigmaFloor, std::sqrt(st.sigma[i] * inv_n));
  return st;
}

inline std::vector<double> normalize_planes(const std::vector<double>& planes,
                                            const NormalizationStats& st) {
  if (planes.size() != st.mu.size()) throw argument_error("normalize_planes: length mismatch");
  std::vector<double> out(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i) out[i] = (planes[i] - st.mu[i]) / st.sigma[i];
  return out;
}

inline ComplexMatrix denormalize_planes(const std::vector<double>& normalized,
                                        const NormalizationStats& st) {
  if (normalized.size() != st.mu.size())
    throw argument_error("denormalize_planes: length mismatch");
  std::vector<double> planes(normalized.size());
  for (std::size_t i = 0; i < planes.size(); ++i)
    planes[i] = st.mu[i] + st.sigma[i] * normalized[i];
  return planes_to_channel(planes, st.n_r, st.n_t);
}

// --- dataset -----------------------------------------------------------------

struct ChannelDataset {
  std::size_t n_r = 0, n_t = 0;
  std::vector<std::vector<double>> planes;  // raw (un-normalized) samples
  NormalizationStats stats;
};

struct DatasetConfig {
  ArrayGeometry tx{64, 0.1};
  ArrayGeometry rx{16, 0.1};
  ClusterConfig clusters;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

// Sample `count` independent realizations; realization i consumes the
// substream ("dataset", i) of the master seed, so any prefix of the dataset is
// stable under changes of count.
inline ChannelDataset generate_dataset(const DatasetConfig& cfg) {
  validate(cfg.tx);
  validate(cfg.rx);
  validate(cfg.clusters);
  if (cfg.count == 0) throw argument_error("generate_dataset: count must be positive");
  ChannelDataset ds;
  ds.n_r = cfg.rx.num_antennas;
  ds.n_t = cfg.tx.num_antennas;
  ds.planes.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng = Rng::substream(cfg.seed, stream_id("dataset", i));
    const ClusterParams p = sample_cluster_params(cfg.clusters, rng);
    ds.planes.push_back(channel_to_planes(generate_channel(p, cfg.tx, cfg.rx)));
  }
  ds.stats = compute_norm_stats(ds.planes, ds.n_r, ds.n_t);
  return ds;
}

// --- binary dataset file (GCH1) ---------------------------------------------
// Layout (little-endian):
//   magic "GCH1" | u32 n_r | u32 n_t | u32 count
//   count records of 2*n_r*n_t float32 (plane layout, raw channels)
//   2*n_r*n_t float64 mu | 2*n_r*n_t float64 sigma

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  s.append(b, 4);
}

inline void put_f32(std::string& s, float v) {
  static_assert(sizeof(float) == 4);
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);  // little-endian host assumed (x86-64)
}

inline void put_f64(std::string& s, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& what) : buf_(buf), what_(what) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf_[pos_ + i]);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(
        static_cast<unsigned char>(buf_[pos_]) |
        (static_cast<unsigned char>(buf_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  void magic(const char* m) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0)
      throw format_error(what_ + ": bad magic (expected " + m + ")");
    pos_ += 4;
  }
  bool done() const { return pos_ == buf_.size(); }
  void expect_done() const {
    if (!done()) throw format_error(what_ + ": trailing bytes");
  }

 private:
  void need(std::size_t n) {
    if (buf_.size() - pos_ < n) throw format_error(what_ + ": truncated");
  }
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw format_error("cannot open for writing: " + path);
  const std::size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  const int rc = std::fclose(f);
  if (n != bytes.size() || rc != 0) throw format_error("short write: " + path);
}

inline std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw format_error("cannot open: " + path);
  std::string out;
  char buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace detail

inline void write_dataset(const ChannelDataset& ds, const std::string& path) {
  const std::size_t dim = 2 * ds.n_r * ds.n_t;
  std::string bytes;
  bytes.reserve(16 + ds.planes.size() * dim * 4 + dim * 16);
  bytes.append("GCH1", 4);
  detail::put_u32(bytes, static_cast<std::uint32_t>(ds.n_r));
  detail::put_u32(bytes, static_cast<std::uint32_t>(ds.n_t));
  detail::put_u32(bytes, static_cast<std::uint32_t>(ds.planes.size()));
  for (const auto& s : ds.planes) {
    if (s.size() != dim) throw argument_error("write_dataset: sample length mismatch");
    for (double v : s) detail::put_f32(bytes, static_cast<float>(v));
  }
  if (ds.stats.mu.size() != dim || ds.stats.sigma.size() != dim)
    throw argument_error("write_dataset: stats length mismatch");
  for (double v : ds.stats.mu) detail::put_f64(bytes, v);
  for (double v : ds.stats.sigma) detail::put_f64(bytes, v);
  detail::write_file(path, bytes);
}

inline ChannelDataset read_dataset(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "dataset " + path);
  r.magic("GCH1");
  ChannelDataset ds;
  ds.n_r = r.u32();
  ds.n_t = r.u32();
  const std::uint32_t count = r.u32();
  if (ds.n_r == 0 || ds.n_t == 0 || count == 0)
    throw format_error("dataset " + path + ": empty dimensions");
  const std::size_t dim = 2 * ds.n_r * ds.n_t;
  ds.planes.assign(count, std::vector<double>(dim));
  for (auto& s : ds.planes)
    for (auto& v : s) v = static_cast<double>(r.f32());
  ds.stats.n_r = ds.n_r;
  ds.stats.n_t = ds.n_t;
  ds.stats.mu.resize(dim);
  ds.stats.sigma.resize(dim);
  for (auto& v : ds.stats.mu) v = r.f64();
  for (auto& v : ds.stats.sigma) v = r.f64();
  r.expect_done();
  return ds;
}

}  // namespace gce
