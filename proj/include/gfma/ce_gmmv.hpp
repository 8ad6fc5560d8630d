#pragma once

#include <ostream>
#include <vector>

#include "gfma/types.hpp"

namespace gfma {

// Per-subcarrier sensing model for data-aided CE, already rotated to the
// virtual angular domain across the antenna axis.
struct CeProblem {
  std::vector<CMat> Phi;  // M sensing matrices, each T x Ka_hat
  std::vector<CMat> R;    // M observations, each T x N (angular domain)
  CMat U_bs;              // N x N unitary DFT
};

struct CeResult {
  CTensor H_equ_hat;      // per-detected-UE slices, each N x M (spatial-frequency)
  std::vector<CMat> A_hat;  // angular-domain estimates, each Ka_hat x N
  double sigma2_hat = 0.0;  // learned (or passed-through) noise variance
  int iters_run = 0;
};

// [U]_{a,b} = exp(-j*2*pi*a*b/N) / sqrt(N).
CMat dft_matrix(int n);

// Assembles Phi from the detected-active rows of Xhat and rotates the
// received tensor (per-antenna M x T slices) into the angular domain.
// Throws EmptyActiveSet when active_set_hat is empty.
CeProblem build_ce_problem(const CTensor& Y, const CMat& S, const CMat& Xhat,
                           const std::vector<int>& active_set_hat);

struct GmmvOptions {
  int max_iters = 100;
  double rho_damp = 0.3;
  double lambda0 = 0.1;  // initial angular-domain activity ratio
  double tol = 1e-6;
  // The AMP recursion assumes an underdetermined system; by default T >=
  // Ka_hat throws Overdetermined so the caller can switch to ls_fallback.
  // Direct studies of the solver on tall systems may override.
  bool allow_overdetermined = false;
  std::ostream* trace = nullptr;
};

// AMP over the M stacked subcarrier problems with a Bernoulli-Gaussian prior
// per angular entry. EM learns the per-entry activity ratio (shared across
// subcarriers: common angular support over frequency), the per-entry prior
// variance, and a global noise variance.
CeResult gmmv_amp(const CeProblem& problem, const GmmvOptions& opts);

// Ridge least squares per subcarrier for the T >= Ka_hat regime; sigma2_reg
// comes from the coarse stage and is passed through as sigma2_hat.
CeResult ls_fallback(const CeProblem& problem, double sigma2_reg);

}  // namespace gfma
