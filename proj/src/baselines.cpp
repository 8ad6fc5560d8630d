#include "gfma/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "gfma/ce_gmmv.hpp"
#include "gfma/coarse_dd.hpp"
#include "gfma/errors.hpp"

namespace gfma {

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::PilotGmmvAmp: return "pilot_gmmv_amp";
    case BaselineKind::PilotSomp: return "pilot_somp";
    case BaselineKind::SingleAntennaAmp: return "single_antenna_amp";
    case BaselineKind::SingleAntennaSomp: return "single_antenna_somp";
  }
  return "?";
}

SompResult somp_recover(const CMat& Y_obs, const CMat& Phi, const SompStop& stop) {
  if (Y_obs.rows() != Phi.rows()) throw ShapeMismatch("somp_recover: row count mismatch");
  const int K = static_cast<int>(Phi.cols());
  const int max_picks = stop.max_sparsity > 0 ? std::min(stop.max_sparsity, K) : K;

  SompResult res;
  res.Xhat = CMat::Zero(K, Y_obs.cols());
  const RVec col_power = Phi.colwise().squaredNorm().cwiseMax(1e-300);
  CMat residual = Y_obs;
  std::vector<char> picked(static_cast<size_t>(K), 0);
  CMat Phi_s;

  while (static_cast<int>(res.support.size()) < max_picks) {
    if (stop.residual_threshold >= 0.0 && residual.norm() <= stop.residual_threshold) break;
    int best = -1;
    double best_c = 0.0;
    const CMat corr = Phi.adjoint() * residual;  // K x T
    for (int k = 0; k < K; ++k) {
      if (picked[static_cast<size_t>(k)]) continue;
      const double c = corr.row(k).squaredNorm() / col_power(k);
      if (c > best_c) {
        best_c = c;
        best = k;
      }
    }
    if (best < 0 || best_c <= 0.0) break;  // nothing left to explain
    picked[static_cast<size_t>(best)] = 1;
    res.support.push_back(best);

    const auto s = static_cast<int>(res.support.size());
    Phi_s.conservativeResize(Phi.rows(), s);
    Phi_s.col(s - 1) = Phi.col(best);
    // least-squares refit on the support (rank-safe for support sizes beyond
    // the measurement count, where the fit is no longer unique)
    const CMat coeff = Phi_s.colPivHouseholderQr().solve(Y_obs);
    residual = Y_obs - Phi_s * coeff;
    res.residual_norms.push_back(residual.norm());

    res.Xhat.setZero();
    for (int i = 0; i < s; ++i) res.Xhat.row(res.support[static_cast<size_t>(i)]) = coeff.row(i);
  }
  return res;
}

namespace {

// Pilot-phase received tensor: per (n,m,t) the sum over active UEs of
// channel x pilot (power control cancels the large-scale factor).
CTensor synthesize_pilot_rx(const CTensor& H, const Eigen::VectorXi& alpha,
                            const std::vector<CMat>& pilots, double sigma2, Rng& noise_rng) {
  const int K = static_cast<int>(H.size());
  const int N = static_cast<int>(H[0].rows());
  const int M = static_cast<int>(H[0].cols());
  const int T = static_cast<int>(pilots[0].rows());
  CTensor Y(N, CMat::Zero(M, T));
  for (int k = 0; k < K; ++k) {
    if (alpha(k) == 0) continue;
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m)
        Y[n].row(m) += H[k](n, m) * pilots[static_cast<size_t>(m)].col(k).transpose();
  }
  if (sigma2 > 0.0) {
    const double s = std::sqrt(sigma2);
    for (int n = 0; n < N; ++n)
      for (int t = 0; t < T; ++t)
        for (int m = 0; m < M; ++m) Y[n](m, t) += s * noise_rng.cgaussian();
  }
  return Y;
}

// UE k is kept when its row energy reaches activity_frac times the median
// energy among the Ka strongest rows.
std::vector<int> threshold_row_energy(const RVec& energy, int expected_active, double frac) {
  const int K = static_cast<int>(energy.size());
  std::vector<double> sorted(energy.data(), energy.data() + K);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const int top = std::max(1, std::min(expected_active, K));
  const double median_top = sorted[static_cast<size_t>(top / 2)];
  const double thr = frac * median_top;
  std::vector<int> active;
  for (int k = 0; k < K; ++k)
    if (energy(k) >= thr && energy(k) > 0.0) active.push_back(k);
  return active;
}

DetectionResult score_soft_rows(const std::vector<int>& active_set, const CMat& X_soft_rows,
                                const Constellation& constellation, int total_ues, int slots) {
  DetectionResult res;
  res.active_set_hat = active_set;
  res.Xhat = CMat::Zero(total_ues, slots);
  for (size_t kappa = 0; kappa < active_set.size(); ++kappa)
    res.Xhat.row(active_set[kappa]) = X_soft_rows.row(static_cast<Eigen::Index>(kappa));
  auto [hard, bits] = hard_decision(X_soft_rows, constellation);
  res.Xhard = std::move(hard);
  res.bits_hat = std::move(bits);
  return res;
}

DetectionResult run_pilot_baseline(BaselineKind kind, const BaselineScenario& sc) {
  const SystemConfig& cfg = *sc.cfg;
  const int N = cfg.bs_antennas;
  const int M = cfg.subcarriers;
  const int K = cfg.total_ues;
  const int T = cfg.slots;

  const std::vector<CMat> pilots = make_baseline_pilots(kind, cfg, *sc.pilot_rng);

  const CTensor Y_pilot =
      synthesize_pilot_rx(sc.channel->H, sc.truth->alpha, pilots, sc.sigma2, *sc.noise_rng);

  // JADCE: estimated spatial channel per UE and a noise variance estimate
  CTensor H_est(static_cast<size_t>(K), CMat::Zero(N, M));
  double sigma2_hat = sc.sigma2;
  if (kind == BaselineKind::PilotGmmvAmp) {
    CeProblem problem;
    problem.U_bs = dft_matrix(N);
    const CMat U_conj = problem.U_bs.conjugate();
    for (int m = 0; m < M; ++m) {
      problem.Phi.push_back(pilots[static_cast<size_t>(m)]);
      CMat y_t(T, N);
      for (int n = 0; n < N; ++n) y_t.col(n) = Y_pilot[static_cast<size_t>(n)].row(m).transpose();
      problem.R.push_back(y_t * U_conj);
    }
    CeResult ce;
    if (T >= K) {
      ce = ls_fallback(problem, sc.sigma2);
    } else {
      GmmvOptions gopts;
      gopts.max_iters = cfg.gmmv_iters;
      gopts.rho_damp = cfg.rho_damp;
      ce = gmmv_amp(problem, gopts);
    }
    H_est = std::move(ce.H_equ_hat);
    sigma2_hat = ce.sigma2_hat;
  } else if (cfg.active_ues > 0) {
    // one MMV problem with N*M measurement vectors and the common pilot
    CMat Y_obs(T, static_cast<Eigen::Index>(N) * M);
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m)
        Y_obs.col(static_cast<Eigen::Index>(n) * M + m) =
            Y_pilot[static_cast<size_t>(n)].row(m).transpose();
    SompStop stop;
    stop.max_sparsity = cfg.active_ues;  // genie-aided sparsity for the baseline
    const SompResult somp = somp_recover(Y_obs, pilots[0], stop);
    for (int k : somp.support)
      for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m)
          H_est[static_cast<size_t>(k)](n, m) =
              somp.Xhat(k, static_cast<Eigen::Index>(n) * M + m);
  }

  RVec energy(K);
  for (int k = 0; k < K; ++k) energy(k) = H_est[static_cast<size_t>(k)].squaredNorm();
  const std::vector<int> active = threshold_row_energy(energy, cfg.active_ues, sc.activity_frac);

  if (active.empty()) {
    DetectionResult res;
    res.Xhat = CMat::Zero(K, T);
    res.Xhard.resize(0, T);
    res.bits_hat.resize(0, T * sc.constellation->bits_per_symbol);
    return res;
  }

  // coherent data phase: spread symbols, power controlled, no pre-equalization
  const CMat theta_ones = CMat::Ones(M, K);
  CTensor Y_data = synthesize_uplink(sc.channel->H, sc.channel->large_scale_gain, theta_ones,
                                     sc.codes->S, sc.truth->alpha, sc.truth->X, sc.sigma2,
                                     *sc.noise_rng);
  CTensor H_active;
  H_active.reserve(active.size());
  for (int k : active) H_active.push_back(H_est[static_cast<size_t>(k)]);
  auto [Phi_dd, Y_dd] = build_dd_operator(H_active, sc.codes->S, active, Y_data);
  const CMat X_soft = lmmse_detect(Phi_dd, Y_dd, std::max(sigma2_hat, 1e-15));

  DetectionResult res = score_soft_rows(active, X_soft, *sc.constellation, K, T);
  res.H_equ_hat = std::move(H_active);
  res.sigma2_hat = sigma2_hat;
  return res;
}

DetectionResult run_single_antenna(BaselineKind kind, const BaselineScenario& sc) {
  const SystemConfig& cfg = *sc.cfg;
  const CMat& beacon = sc.truth->Y[static_cast<size_t>(cfg.beacon_antenna - 1)];

  if (kind == BaselineKind::SingleAntennaAmp) {
    CoarseOptions opts;
    opts.rho_damp = cfg.rho_damp;
    opts.max_iters = cfg.coarse_iters;
    opts.gamma0 = cfg.active_ues > 0 ? static_cast<double>(cfg.active_ues) / cfg.total_ues : 0.1;
    const CoarseResult coarse = coarse_detect(beacon, sc.codes->S, *sc.constellation, opts);
    CMat rows(static_cast<Eigen::Index>(coarse.active_set_hat.size()), cfg.slots);
    for (size_t kappa = 0; kappa < coarse.active_set_hat.size(); ++kappa)
      rows.row(static_cast<Eigen::Index>(kappa)) = coarse.Xhat.row(coarse.active_set_hat[kappa]);
    DetectionResult res = score_soft_rows(coarse.active_set_hat, rows, *sc.constellation,
                                          cfg.total_ues, cfg.slots);
    res.coarse_pi = coarse.pi;
    res.sigma2_hat = coarse.sigma2_t.mean();
    return res;
  }

  std::vector<int> active;
  CMat Xhat_rows = CMat::Zero(cfg.total_ues, cfg.slots);
  if (cfg.active_ues > 0) {
    SompStop stop;
    stop.max_sparsity = cfg.active_ues;  // genie-aided sparsity
    const SompResult somp = somp_recover(beacon, sc.codes->S, stop);
    active = somp.support;
    std::sort(active.begin(), active.end());
    Xhat_rows = somp.Xhat;
  }
  CMat rows(static_cast<Eigen::Index>(active.size()), cfg.slots);
  for (size_t kappa = 0; kappa < active.size(); ++kappa)
    rows.row(static_cast<Eigen::Index>(kappa)) = Xhat_rows.row(active[kappa]);
  return score_soft_rows(active, rows, *sc.constellation, cfg.total_ues, cfg.slots);
}

}  // namespace

std::vector<CMat> make_baseline_pilots(BaselineKind kind, const SystemConfig& cfg, Rng& rng) {
  const int M = cfg.subcarriers;
  const int K = cfg.total_ues;
  const int T = cfg.slots;
  std::vector<CMat> pilots;
  pilots.reserve(static_cast<size_t>(M));
  if (kind == BaselineKind::PilotSomp) {
    CMat common(T, K);
    for (int k = 0; k < K; ++k)
      for (int t = 0; t < T; ++t) common(t, k) = rng.cgaussian();
    pilots.assign(static_cast<size_t>(M), common);
  } else {
    for (int m = 0; m < M; ++m) {
      CMat p(T, K);
      for (int k = 0; k < K; ++k)
        for (int t = 0; t < T; ++t) p(t, k) = rng.cgaussian();
      pilots.push_back(std::move(p));
    }
  }
  return pilots;
}

DetectionResult run_baseline(BaselineKind kind, const BaselineScenario& sc) {
  if (!sc.cfg || !sc.constellation || !sc.codes || !sc.channel || !sc.truth || !sc.pilot_rng ||
      !sc.noise_rng)
    throw ConfigError("run_baseline: incomplete scenario");
  switch (kind) {
    case BaselineKind::PilotGmmvAmp:
    case BaselineKind::PilotSomp:
      return run_pilot_baseline(kind, sc);
    case BaselineKind::SingleAntennaAmp:
    case BaselineKind::SingleAntennaSomp:
      return run_single_antenna(kind, sc);
  }
  throw ConfigError("run_baseline: unknown kind");
}

}  // namespace gfma
