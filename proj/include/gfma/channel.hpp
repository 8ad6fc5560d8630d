#pragma once

#include <string>
#include <vector>

#include "gfma/rng.hpp"
#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"

namespace gfma {

// Multipath geometry and gains for one UE.
struct PathSet {
  int count = 0;             // P
  std::vector<double> angle; // arrival angles, radians
  std::vector<double> delay; // seconds
  std::vector<cxd> gain;     // complex path gains, E[sum |gain|^2] = 1
};

// One-ring spatial-frequency realization for all K UEs.
struct ChannelRealization {
  CTensor H;                      // per-UE slices, each N x M (antenna x subcarrier)
  RVec large_scale_gain;          // g_k, linear power gain
  RVec distance_km;               // d_k
  std::vector<PathSet> paths;
  std::vector<double> center_angle;  // per-UE mean arrival angle, radians
};

// ULA steering vector with half-wavelength spacing: entry n = exp(-j*pi*n*sin(phi)).
CVec steering_vector(double phi, int antennas);

PathSet draw_paths(Rng& rng, const SystemConfig& cfg, double center_angle);

// Column m (0-based) = sum_p gain_p * steering(angle_p) * exp(-j*2*pi*delay_p*f_m),
// f_m = -Bs/2 + m*Bs/M.
CMat small_scale_channel(const PathSet& paths, int antennas, int subcarriers, double bandwidth_hz);

// 10^(-(128.1 + 37.6*log10(d_km))/10); throws NonPositiveDistance.
double large_scale_gain(double d_km);

ChannelRealization generate_channel(Rng& rng, const SystemConfig& cfg);

// Bit-exact binary round trip, used for regression fixtures.
void save_channel(const ChannelRealization& ch, const std::string& path);
ChannelRealization load_channel(const std::string& path);

}  // namespace gfma
