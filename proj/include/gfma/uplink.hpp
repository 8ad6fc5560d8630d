#pragma once

#include <vector>

#include "gfma/channel.hpp"
#include "gfma/rng.hpp"
#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"

namespace gfma {

// UE-side pre-equalization factors against the beacon antenna's channel.
struct PreEqualization {
  CMat Theta;         // M x K
  BoolMat null_mask;  // true where the factor was nulled
  double mean_factor_power = 0.0;  // p_e, empirical mean of |theta|^2 over non-nulled entries
};

// theta_m = 1/h_m where |h_m| >= h0 (boundary included), else 0.
std::pair<CVec, Eigen::Array<bool, Eigen::Dynamic, 1>> pre_equalize(const CVec& h_beacon_row,
                                                                    double h0);

// Applies pre_equalize to every UE's beacon-antenna row.
PreEqualization make_pre_equalization(const ChannelRealization& ch, int beacon_antenna, double h0);

// Realized average per-subcarrier transmit power of each UE,
// p_k * mean_m |theta_{m,k}|^2 (diagnostic only; nothing enforces a cap).
RVec realized_tx_power(const PreEqualization& pre, const RVec& large_scale_gain);

// Ground truth for one frame.
struct FrameTruth {
  std::vector<int> active_set;  // ascending true-active UE indices, |.| = Ka
  Eigen::VectorXi alpha;        // K activity indicators
  CMat X;                       // K x T, zero rows for inactive UEs
  Eigen::MatrixXi symbol_index; // K x T, -1 for inactive entries
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits;  // K x (T*bits_per_symbol)
  CTensor Y;                    // per-antenna slices, each M x T
  double sigma2 = 0.0;          // per-subcarrier noise variance used
  RVec power_control;           // p_k = 1/g_k
};

// Uniform active set without replacement, i.i.d. uniform symbols on it.
void draw_frame(Rng& rng, const SystemConfig& cfg, const Constellation& constellation,
                FrameTruth& out);

// Thermal noise power over the band split evenly across subcarriers.
double noise_variance(double bandwidth_hz, double noise_psd_dbm_hz, int subcarriers);

// Received tensor per the generative model; nulled subcarriers of a UE
// contribute exactly zero (the receiver's S*X view is an approximation, the
// synthesis is not).
CTensor synthesize_uplink(const CTensor& H, const RVec& large_scale_gain, const CMat& Theta,
                          const CMat& S, const Eigen::VectorXi& alpha, const CMat& X,
                          double sigma2, Rng& noise_rng);

}  // namespace gfma
