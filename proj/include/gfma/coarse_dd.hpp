#pragma once

#include <ostream>
#include <vector>

#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"

namespace gfma {

// Message-passing state for one AMP run over Y = S*X + W with the discrete
// spike-and-slab prior on the entries of X.
struct AmpState {
  RMat V;              // M x T factor-node variances
  CMat Z;              // M x T factor-node means (with Onsager correction)
  CMat C;              // K x T variable-node means
  RMat D;              // K x T variable-node variances
  CMat xhat;           // K x T posterior means
  RMat v;              // K x T posterior variances
  RMat pi;             // K x T belief indicators
  std::vector<RMat> xi;  // per-symbol posterior weights, xi[l] is K x T;
                         // stored max-subtracted, i.e. up to a common
                         // positive factor per (k,t)
  RMat gamma;          // K x T sparsity ratios
  RVec sigma2_t;       // per-slot learned noise variance
  int iter = 0;
};

struct PosteriorOut {
  RMat pi;
  std::vector<RMat> xi;
  CMat xhat;
  RMat v;
};

struct CoarseResult {
  CMat Xhat;                   // K x T posterior means
  RMat pi;                     // final beliefs
  std::vector<int> active_set_hat;  // ascending detected-active UE indices
  int Ka_hat = 0;
  RVec sigma2_t;               // learned per-slot noise variance (diagnostic,
                               // also seeds the CE stage's regularizer)
  int iters_run = 0;
};

struct CoarseOptions {
  double rho_damp = 0.3;
  int max_iters = 50;
  double gamma0 = 0.1;   // initial sparsity ratio; pass Ka/K when Ka is known
  double tol = 1e-6;     // early exit when max |xhat - xhat_prev| drops below
  std::ostream* trace = nullptr;  // per-iteration CSV rows when set
};

AmpState init_amp_state(const CMat& Y_beacon, int total_ues, int mod_order, double gamma0);

// Factor-node update: V from the posterior variances, Z with the standard
// Onsager memory term Z = S*xhat - V o (Y - Z_prev) / (sigma2 + V_prev).
// Returns undamped values; the caller applies damping.
std::pair<RMat, CMat> amp_factor_update(const AmpState& state, const CMat& Y_beacon,
                                        const CMat& S);

// Variable-node update (D, C) from the damped factor-node state.
std::pair<RMat, CMat> amp_variable_update(const AmpState& state, const CMat& Y_beacon,
                                          const CMat& S);

// Spike-and-slab posterior from the pseudo-channel N(C, D) under sparsity
// ratio gamma. Exponents are max-subtracted before exponentiation.
PosteriorOut posterior_step(const CMat& C, const RMat& D, const RMat& gamma,
                            const Constellation& constellation);

// EM noise-variance update plus the cross-slot sparsity sharing
// gamma_{k,t} = mean_t pi_{k,t}.
std::pair<RMat, RVec> em_update(const AmpState& state, const CMat& Y_beacon);

// Full coarse detection: AMP with damping, EM hyperparameter learning and
// cross-slot belief sharing; UE k is declared active when its slot-averaged
// belief exceeds 1/2 (strictly).
CoarseResult coarse_detect(const CMat& Y_beacon, const CMat& S,
                           const Constellation& constellation, const CoarseOptions& opts);

}  // namespace gfma
