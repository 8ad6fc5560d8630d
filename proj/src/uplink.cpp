#include "gfma/uplink.hpp"

#include <cmath>

#include "gfma/errors.hpp"

namespace gfma {

std::pair<CVec, Eigen::Array<bool, Eigen::Dynamic, 1>> pre_equalize(const CVec& h_beacon_row,
                                                                    double h0) {
  const auto M = h_beacon_row.size();
  CVec theta(M);
  Eigen::Array<bool, Eigen::Dynamic, 1> nulled(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    if (std::abs(h_beacon_row(m)) >= h0) {
      theta(m) = 1.0 / h_beacon_row(m);
      nulled(m) = false;
    } else {
      theta(m) = 0.0;
      nulled(m) = true;
    }
  }
  return {theta, nulled};
}

PreEqualization make_pre_equalization(const ChannelRealization& ch, int beacon_antenna,
                                      double h0) {
  const int K = static_cast<int>(ch.H.size());
  const int M = K > 0 ? static_cast<int>(ch.H[0].cols()) : 0;
  PreEqualization pre;
  pre.Theta.resize(M, K);
  pre.null_mask.resize(M, K);
  double power_sum = 0.0;
  long kept = 0;
  for (int k = 0; k < K; ++k) {
    auto [theta, nulled] = pre_equalize(ch.H[k].row(beacon_antenna - 1).transpose(), h0);
    pre.Theta.col(k) = theta;
    pre.null_mask.col(k) = nulled;
    for (int m = 0; m < M; ++m)
      if (!nulled(m)) {
        power_sum += std::norm(theta(m));
        ++kept;
      }
  }
  pre.mean_factor_power = kept > 0 ? power_sum / kept : 0.0;
  return pre;
}

RVec realized_tx_power(const PreEqualization& pre, const RVec& large_scale_gain) {
  const int K = static_cast<int>(pre.Theta.cols());
  RVec out(K);
  for (int k = 0; k < K; ++k)
    out(k) = pre.Theta.col(k).squaredNorm() / pre.Theta.rows() / large_scale_gain(k);
  return out;
}

void draw_frame(Rng& rng, const SystemConfig& cfg, const Constellation& constellation,
                FrameTruth& out) {
  const int K = cfg.total_ues;
  const int T = cfg.slots;
  const int L = constellation.order();
  out.active_set = rng.sample_without_replacement(K, cfg.active_ues);
  out.alpha = Eigen::VectorXi::Zero(K);
  out.X = CMat::Zero(K, T);
  out.symbol_index = Eigen::MatrixXi::Constant(K, T, -1);
  out.bits.setZero(K, T * constellation.bits_per_symbol);
  for (int k : out.active_set) {
    out.alpha(k) = 1;
    std::vector<uint8_t> row_bits;
    row_bits.reserve(static_cast<size_t>(T) * constellation.bits_per_symbol);
    for (int t = 0; t < T; ++t) {
      const int l = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(L)));
      out.symbol_index(k, t) = l;
      out.X(k, t) = constellation.points[static_cast<size_t>(l)];
      constellation.append_bits(l, row_bits);
    }
    for (size_t b = 0; b < row_bits.size(); ++b)
      out.bits(k, static_cast<Eigen::Index>(b)) = row_bits[b];
  }
}

double noise_variance(double bandwidth_hz, double noise_psd_dbm_hz, int subcarriers) {
  const double total_watt = dbm2watt(noise_psd_dbm_hz) * bandwidth_hz;
  return total_watt / subcarriers;
}

CTensor synthesize_uplink(const CTensor& H, const RVec& large_scale_gain, const CMat& Theta,
                          const CMat& S, const Eigen::VectorXi& alpha, const CMat& X,
                          double sigma2, Rng& noise_rng) {
  const int K = static_cast<int>(H.size());
  if (K == 0) throw ShapeMismatch("synthesize_uplink: no UEs");
  const int N = static_cast<int>(H[0].rows());
  const int M = static_cast<int>(H[0].cols());
  const int T = static_cast<int>(X.cols());
  if (Theta.rows() != M || Theta.cols() != K || S.rows() != M || S.cols() != K ||
      alpha.size() != K || X.rows() != K || large_scale_gain.size() != K)
    throw ShapeMismatch("synthesize_uplink: inconsistent input shapes");

  CTensor Y(N, CMat::Zero(M, T));
  for (int k = 0; k < K; ++k) {
    if (alpha(k) == 0) continue;
    // sqrt(p_k) * sqrt(g_k) with p_k = 1/g_k: power control inverts the
    // large-scale fading, leaving (H o theta o s) * x per UE.
    const double p_k = 1.0 / large_scale_gain(k);
    const double amp = std::sqrt(p_k) * std::sqrt(large_scale_gain(k));
    const CVec code = amp * Theta.col(k).cwiseProduct(S.col(k));
    for (int n = 0; n < N; ++n) {
      const CVec eff = H[k].row(n).transpose().cwiseProduct(code);
      Y[n].noalias() += eff * X.row(k);
    }
  }
  if (sigma2 > 0.0) {
    const double s = std::sqrt(sigma2);
    for (int n = 0; n < N; ++n)
      for (int t = 0; t < T; ++t)
        for (int m = 0; m < M; ++m) Y[n](m, t) += s * noise_rng.cgaussian();
  }
  return Y;
}

}  // namespace gfma
