#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gfma/baselines.hpp"
#include "gfma/detector.hpp"
#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"

namespace gfma {

enum class Scheme { Proposed, PilotGmmvAmp, PilotSomp, SingleAntennaAmp, SingleAntennaSomp };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& s);

struct ExperimentConfig {
  SystemConfig sys;
  Scheme scheme = Scheme::Proposed;
  // per-subcarrier noise variance override; negative means "derive from the
  // link budget at the configured transmit power"
  double sigma2_override = -1.0;
  double pilot_activity_frac = 0.1;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_text(const std::string& text);

// Average per-subcarrier received power a UE would need the nominal
// channel-inverting transmit power for, i.e. E[|theta|^2] * E[1/g] under the
// configured threshold and distance distribution (closed form).
double nominal_rx_power_budget(const SystemConfig& cfg);

// Thermal noise scaled so that the configured transmit power sets the
// per-subcarrier SNR of the unit-power received model.
double synthesis_noise_variance(const SystemConfig& cfg);

struct TrialMetrics {
  int trial = 0;
  uint64_t seed = 0;
  double adep = 0.0;
  double ber = 0.0;
  double nmse = 0.0;     // linear; +inf when no correctly detected UE
  double nmse_db = 0.0;  // 10*log10(nmse)
  double coarse_ber = -1.0;               // proposed scheme only
  std::vector<double> ber_per_iter;       // proposed scheme only
  std::vector<double> nmse_per_iter;      // proposed scheme only (linear)
  bool failed = false;
  std::string error;
};

// ADEP = (misses + false alarms)/K; BER counts all bits of a missed UE as
// wrong and ignores false alarms; NMSE is restricted to correctly detected
// UEs with H(n,m,k)*Theta(m,k) as the reference.
TrialMetrics compute_metrics(const FrameTruth& truth, const DetectionResult& result,
                             const CMat& Theta_ref, const ChannelRealization& channel,
                             const Constellation& constellation);

// One frame end to end: deterministic per (config, trial_index).
TrialMetrics run_trial(const ExperimentConfig& cfg, int trial_index);

struct SweepRow {
  std::string sweep_var;
  std::string value;
  std::string scheme;
  std::string metric;
  double mean = 0.0;
  double stderr_mean = 0.0;
  int trials = 0;
  uint64_t seed = 0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::string to_csv() const;  // schema: sweep_var,value,scheme,metric,mean,stderr,trials,seed
};

// Aggregates one configuration over `trials` frames (rows carry sweep_var
// "none"). Trials run in parallel; output order is fixed.
SweepTable run_experiment(const ExperimentConfig& cfg, int trials);

// Cartesian sweep over var values and schemes. var is one of
// T | M | rho | N_iter | scheme; for "scheme" the values name the schemes and
// the schemes argument is ignored.
SweepTable sweep(const ExperimentConfig& cfg, const std::string& var,
                 const std::vector<std::string>& values, int trials,
                 const std::vector<Scheme>& schemes);

// Worker count for parallel trials: GFMA_WORKERS, else hardware concurrency.
int worker_count();

// Runs fn(0..count-1) on the worker pool; fn must be thread-safe.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace gfma
