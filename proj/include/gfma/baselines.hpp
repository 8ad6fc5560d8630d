#pragma once

#include <string>
#include <vector>

#include "gfma/channel.hpp"
#include "gfma/detector.hpp"
#include "gfma/rng.hpp"
#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"
#include "gfma/uplink.hpp"

namespace gfma {

enum class BaselineKind {
  PilotGmmvAmp,       // pilot+data, JADCE via GMMV-AMP, coherent LMMSE DD
  PilotSomp,          // pilot+data, JADCE via SOMP, coherent LMMSE DD
  SingleAntennaAmp,   // pre-equalized JADD on the beacon antenna (AMP engine)
  SingleAntennaSomp,  // pre-equalized JADD on the beacon antenna (SOMP engine)
};

std::string to_string(BaselineKind kind);

struct SompStop {
  int max_sparsity = 0;             // 0 disables the sparsity bound
  double residual_threshold = -1.0; // < 0 disables the residual stop
};

struct SompResult {
  std::vector<int> support;       // in selection order
  CMat Xhat;                      // row-sparse, Phi.cols() x Y.cols()
  std::vector<double> residual_norms;  // after each selection
};

// Simultaneous OMP: per iteration pick the column with the largest summed
// correlation energy across measurement vectors (normalized by column power),
// least-squares refit on the support, update the residual.
SompResult somp_recover(const CMat& Y_obs, const CMat& Phi, const SompStop& stop);

// Everything a baseline run needs from the trial. The frame truth carries the
// pre-equalized uplink tensor used by the single-antenna kinds; pilot kinds
// synthesize their own pilot and data tensors (no pre-equalization) from the
// same channel, truth symbols and noise level.
struct BaselineScenario {
  const SystemConfig* cfg = nullptr;
  const Constellation* constellation = nullptr;
  const SpreadingCodes* codes = nullptr;
  const ChannelRealization* channel = nullptr;
  const FrameTruth* truth = nullptr;
  double sigma2 = 0.0;
  Rng* pilot_rng = nullptr;
  Rng* noise_rng = nullptr;
  double activity_frac = 0.1;  // row-energy threshold as a fraction of the
                               // median energy among the Ka strongest rows
};

// Pilot matrices of the pilot+data baselines: one T x K draw per subcarrier,
// occupying the same (M, T) resource grid as the proposed scheme's frame.
// The SOMP variant repeats a single common draw so JADCE stays one MMV
// problem.
std::vector<CMat> make_baseline_pilots(BaselineKind kind, const SystemConfig& cfg, Rng& rng);

DetectionResult run_baseline(BaselineKind kind, const BaselineScenario& sc);

}  // namespace gfma
