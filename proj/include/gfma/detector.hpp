#pragma once

#include <optional>
#include <vector>

#include "gfma/ce_gmmv.hpp"
#include "gfma/coarse_dd.hpp"
#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"
#include "gfma/uplink.hpp"

namespace gfma {

// Ground truth handed to the detector when per-stage diagnostics are wanted.
struct TruthContext {
  const FrameTruth* truth = nullptr;
  const PreEqualization* pre = nullptr;
  const ChannelRealization* channel = nullptr;
};

struct StageDiagnostics {
  double coarse_ber = -1.0;                // hard-decided coarse estimate
  std::vector<double> ber_per_iter;        // after each outer iteration
  std::vector<double> nmse_per_iter;       // linear, +inf when undefined
};

struct DetectionResult {
  std::vector<int> active_set_hat;  // ascending
  CMat Xhat;                        // K x T soft estimates, zero rows outside the set
  CMat Xhard;                       // Ka_hat x T hard decisions
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits_hat;  // Ka_hat x (T*bps)
  CTensor H_equ_hat;                // per-detected-UE N x M slices (empty if CE never ran)
  double sigma2_hat = 0.0;          // noise variance used by the last LMMSE stage
  RMat coarse_pi;                   // beliefs from the coarse stage
  StageDiagnostics diagnostics;
};

// Phi_DD stacked antenna-major (rows n*M..n*M+M-1 belong to antenna n) and
// the received tensor stacked the same way.
std::pair<CMat, CMat> build_dd_operator(const CTensor& H_equ_hat, const CMat& S,
                                        const std::vector<int>& active_set_hat,
                                        const CTensor& Y);

// Regularized LMMSE: (Phi^H Phi + sigma2 I)^-1 Phi^H Y_dd.
CMat lmmse_detect(const CMat& Phi_dd, const CMat& Y_dd, double sigma2_hat);

// Nearest constellation point per entry; ties go to the lowest symbol index.
std::pair<CMat, Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>> hard_decision(
    const CMat& X_soft, const Constellation& constellation);

// Coarse detection on the beacon antenna, then outer_iters rounds of
// data-aided CE (GMMV-AMP, or ridge LS once T >= Ka_hat) followed by LMMSE
// refinement. Re-sliced hard symbols serve as the next round's CE pilots;
// the result keeps the soft estimates. The detected set is fixed after the
// coarse stage.
DetectionResult iterative_detect(const CTensor& Y, const CMat& S, const SystemConfig& cfg,
                                 const Constellation& constellation,
                                 const TruthContext& truth = {});

// Shared with the harness: BER of hard decisions against the truth, counting
// every bit of a missed active UE as wrong and ignoring false alarms.
double bit_error_rate(const std::vector<int>& active_set_hat, const CMat& Xhard,
                      const Constellation& constellation, const FrameTruth& truth);

// NMSE of the equivalent CSI over correctly detected UEs; +inf when none.
double equivalent_csi_nmse(const std::vector<int>& active_set_hat, const CTensor& H_equ_hat,
                           const PreEqualization& pre, const ChannelRealization& channel,
                           const std::vector<int>& true_active);

}  // namespace gfma
