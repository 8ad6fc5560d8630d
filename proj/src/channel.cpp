#include "gfma/channel.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "gfma/errors.hpp"

namespace gfma {

namespace {
// Delays are not pinned by the scenario; a 1 us spread gives ~10 resolvable
// taps at 10 MHz, enough frequency selectivity across the code length while
// staying inside a typical cyclic prefix.
constexpr double kMaxDelaySeconds = 1e-6;
}  // namespace

CVec steering_vector(double phi, int antennas) {
  CVec a(antennas);
  const double w = kPi * std::sin(phi);
  for (int n = 0; n < antennas; ++n) a(n) = cxd(std::cos(w * n), -std::sin(w * n));
  return a;
}

PathSet draw_paths(Rng& rng, const SystemConfig& cfg, double center_angle) {
  PathSet p;
  const int span = cfg.paths_max - cfg.paths_min + 1;
  p.count = cfg.paths_min + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));
  const double spread = deg2rad(cfg.angle_spread_deg);
  const double sigma_gain = std::sqrt(1.0 / p.count);
  p.angle.resize(p.count);
  p.delay.resize(p.count);
  p.gain.resize(p.count);
  for (int i = 0; i < p.count; ++i) {
    p.angle[i] = rng.uniform(center_angle - spread, center_angle + spread);
    p.delay[i] = rng.uniform(0.0, kMaxDelaySeconds);
    p.gain[i] = sigma_gain * rng.cgaussian();
  }
  return p;
}

CMat small_scale_channel(const PathSet& paths, int antennas, int subcarriers, double bandwidth_hz) {
  CMat h = CMat::Zero(antennas, subcarriers);
  for (int p = 0; p < paths.count; ++p) {
    const CVec steer = steering_vector(paths.angle[p], antennas);
    for (int m = 0; m < subcarriers; ++m) {
      const double f = -bandwidth_hz / 2.0 + bandwidth_hz * m / subcarriers;
      const double ang = -2.0 * kPi * paths.delay[p] * f;
      const cxd rot = paths.gain[p] * cxd(std::cos(ang), std::sin(ang));
      h.col(m) += rot * steer;
    }
  }
  return h;
}

double large_scale_gain(double d_km) {
  if (!(d_km > 0.0)) throw NonPositiveDistance(d_km);
  const double pl_db = 128.1 + 37.6 * std::log10(d_km);
  return std::pow(10.0, -pl_db / 10.0);
}

ChannelRealization generate_channel(Rng& rng, const SystemConfig& cfg) {
  ChannelRealization ch;
  const int K = cfg.total_ues;
  ch.H.reserve(K);
  ch.large_scale_gain.resize(K);
  ch.distance_km.resize(K);
  ch.paths.reserve(K);
  ch.center_angle.resize(K);
  for (int k = 0; k < K; ++k) {
    ch.center_angle[k] = rng.uniform(-kPi / 2.0, kPi / 2.0);
    ch.distance_km(k) = rng.uniform(cfg.dist_min_km, cfg.dist_max_km);
    ch.large_scale_gain(k) = large_scale_gain(ch.distance_km(k));
    ch.paths.push_back(draw_paths(rng, cfg, ch.center_angle[k]));
    ch.H.push_back(small_scale_channel(ch.paths.back(), cfg.bs_antennas, cfg.subcarriers,
                                       cfg.bandwidth_hz));
    if (!ch.H.back().allFinite())
      throw NumericalDivergence("generate_channel", k);
  }
  return ch;
}

namespace {

constexpr uint64_t kChannelMagic = 0x6766616368616e31ULL;  // "gfachan1"

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!f) throw ConfigError("channel file truncated");
  return v;
}

}  // namespace

void save_channel(const ChannelRealization& ch, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  put(f, kChannelMagic);
  const int64_t K = static_cast<int64_t>(ch.H.size());
  const int64_t N = K > 0 ? ch.H[0].rows() : 0;
  const int64_t M = K > 0 ? ch.H[0].cols() : 0;
  put(f, K);
  put(f, N);
  put(f, M);
  for (const auto& slice : ch.H)
    f.write(reinterpret_cast<const char*>(slice.data()),
            static_cast<std::streamsize>(sizeof(cxd) * N * M));
  f.write(reinterpret_cast<const char*>(ch.large_scale_gain.data()),
          static_cast<std::streamsize>(sizeof(double) * K));
  f.write(reinterpret_cast<const char*>(ch.distance_km.data()),
          static_cast<std::streamsize>(sizeof(double) * K));
  f.write(reinterpret_cast<const char*>(ch.center_angle.data()),
          static_cast<std::streamsize>(sizeof(double) * K));
  for (const auto& p : ch.paths) {
    put(f, static_cast<int64_t>(p.count));
    f.write(reinterpret_cast<const char*>(p.angle.data()),
            static_cast<std::streamsize>(sizeof(double) * p.count));
    f.write(reinterpret_cast<const char*>(p.delay.data()),
            static_cast<std::streamsize>(sizeof(double) * p.count));
    f.write(reinterpret_cast<const char*>(p.gain.data()),
            static_cast<std::streamsize>(sizeof(cxd) * p.count));
  }
  if (!f) throw ConfigError("write to '" + path + "' failed");
}

ChannelRealization load_channel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  if (get<uint64_t>(f) != kChannelMagic) throw ConfigError("'" + path + "' is not a channel dump");
  const auto K = get<int64_t>(f);
  const auto N = get<int64_t>(f);
  const auto M = get<int64_t>(f);
  ChannelRealization ch;
  ch.H.resize(K);
  for (auto& slice : ch.H) {
    slice.resize(N, M);
    f.read(reinterpret_cast<char*>(slice.data()),
           static_cast<std::streamsize>(sizeof(cxd) * N * M));
  }
  ch.large_scale_gain.resize(K);
  ch.distance_km.resize(K);
  ch.center_angle.resize(K);
  f.read(reinterpret_cast<char*>(ch.large_scale_gain.data()),
         static_cast<std::streamsize>(sizeof(double) * K));
  f.read(reinterpret_cast<char*>(ch.distance_km.data()),
         static_cast<std::streamsize>(sizeof(double) * K));
  f.read(reinterpret_cast<char*>(ch.center_angle.data()),
         static_cast<std::streamsize>(sizeof(double) * K));
  ch.paths.resize(K);
  for (auto& p : ch.paths) {
    p.count = static_cast<int>(get<int64_t>(f));
    p.angle.resize(p.count);
    p.delay.resize(p.count);
    p.gain.resize(p.count);
    f.read(reinterpret_cast<char*>(p.angle.data()),
           static_cast<std::streamsize>(sizeof(double) * p.count));
    f.read(reinterpret_cast<char*>(p.delay.data()),
           static_cast<std::streamsize>(sizeof(double) * p.count));
    f.read(reinterpret_cast<char*>(p.gain.data()),
           static_cast<std::streamsize>(sizeof(cxd) * p.count));
  }
  if (!f) throw ConfigError("channel file truncated");
  return ch;
}

}  // namespace gfma
