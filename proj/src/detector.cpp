#include "gfma/detector.hpp"

#include <cmath>
#include <limits>

#include "gfma/errors.hpp"

namespace gfma {

namespace {
constexpr double kNoiseFloor = 1e-15;
}

std::pair<CMat, CMat> build_dd_operator(const CTensor& H_equ_hat, const CMat& S,
                                        const std::vector<int>& active_set_hat,
                                        const CTensor& Y) {
  const int Ka = static_cast<int>(active_set_hat.size());
  const int N = static_cast<int>(Y.size());
  if (Ka == 0 || static_cast<int>(H_equ_hat.size()) != Ka)
    throw ShapeMismatch("build_dd_operator: active set / CE size mismatch");
  const int M = static_cast<int>(Y[0].rows());
  const int T = static_cast<int>(Y[0].cols());
  if (H_equ_hat[0].rows() != N || H_equ_hat[0].cols() != M || S.rows() != M)
    throw ShapeMismatch("build_dd_operator: inconsistent shapes");

  CMat Phi(N * M, Ka);
  CMat Y_dd(N * M, T);
  for (int n = 0; n < N; ++n) {
    Y_dd.middleRows(n * M, M) = Y[n];
    for (int kappa = 0; kappa < Ka; ++kappa) {
      const int k = active_set_hat[static_cast<size_t>(kappa)];
      Phi.block(n * M, kappa, M, 1) =
          H_equ_hat[kappa].row(n).transpose().cwiseProduct(S.col(k));
    }
  }
  return {std::move(Phi), std::move(Y_dd)};
}

CMat lmmse_detect(const CMat& Phi_dd, const CMat& Y_dd, double sigma2_hat) {
  if (Phi_dd.rows() != Y_dd.rows()) throw ShapeMismatch("lmmse_detect: row count mismatch");
  CMat gram = Phi_dd.adjoint() * Phi_dd;
  gram.diagonal().array() += std::max(sigma2_hat, kNoiseFloor);
  Eigen::LLT<CMat> llt(gram);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("lmmse_detect: Phi^H Phi + sigma2 I not positive definite");
  CMat out = llt.solve(Phi_dd.adjoint() * Y_dd);
  if (!out.allFinite()) throw SingularSystem("lmmse_detect: non-finite solution");
  return out;
}

std::pair<CMat, Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>> hard_decision(
    const CMat& X_soft, const Constellation& constellation) {
  const int rows = static_cast<int>(X_soft.rows());
  const int T = static_cast<int>(X_soft.cols());
  const int L = constellation.order();
  CMat hard(rows, T);
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits(rows,
                                                              T * constellation.bits_per_symbol);
  std::vector<uint8_t> row_bits;
  for (int r = 0; r < rows; ++r) {
    row_bits.clear();
    for (int t = 0; t < T; ++t) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int l = 0; l < L; ++l) {
        const double d = std::norm(X_soft(r, t) - constellation.points[static_cast<size_t>(l)]);
        if (d < best_d) {  // strict: ties keep the lowest index
          best_d = d;
          best = l;
        }
      }
      hard(r, t) = constellation.points[static_cast<size_t>(best)];
      constellation.append_bits(best, row_bits);
    }
    for (size_t b = 0; b < row_bits.size(); ++b)
      bits(r, static_cast<Eigen::Index>(b)) = row_bits[b];
  }
  return {std::move(hard), std::move(bits)};
}

double bit_error_rate(const std::vector<int>& active_set_hat, const CMat& Xhard,
                      const Constellation& constellation, const FrameTruth& truth) {
  const int T = static_cast<int>(truth.X.cols());
  const int bps = constellation.bits_per_symbol;
  long total = 0, wrong = 0;
  std::vector<uint8_t> hat_bits;
  for (int k : truth.active_set) {
    total += static_cast<long>(T) * bps;
    const auto it = std::find(active_set_hat.begin(), active_set_hat.end(), k);
    if (it == active_set_hat.end()) {
      wrong += static_cast<long>(T) * bps;  // missed UE: every bit counts as wrong
      continue;
    }
    const auto kappa = static_cast<Eigen::Index>(it - active_set_hat.begin());
    hat_bits.clear();
    for (int t = 0; t < T; ++t) {
      int l = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int cand = 0; cand < constellation.order(); ++cand) {
        const double d =
            std::norm(Xhard(kappa, t) - constellation.points[static_cast<size_t>(cand)]);
        if (d < best_d) {
          best_d = d;
          l = cand;
        }
      }
      constellation.append_bits(l, hat_bits);
    }
    for (int b = 0; b < T * bps; ++b)
      if (hat_bits[static_cast<size_t>(b)] != truth.bits(k, b)) ++wrong;
  }
  return total > 0 ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
}

double equivalent_csi_nmse(const std::vector<int>& active_set_hat, const CTensor& H_equ_hat,
                           const PreEqualization& pre, const ChannelRealization& channel,
                           const std::vector<int>& true_active) {
  double err = 0.0, ref = 0.0;
  bool any = false;
  for (size_t kappa = 0; kappa < active_set_hat.size(); ++kappa) {
    const int k = active_set_hat[kappa];
    if (std::find(true_active.begin(), true_active.end(), k) == true_active.end())
      continue;  // false alarms have no ground-truth CSI
    any = true;
    const CMat& est = H_equ_hat[kappa];
    CMat ref_slice = channel.H[static_cast<size_t>(k)];
    for (int m = 0; m < ref_slice.cols(); ++m) ref_slice.col(m) *= pre.Theta(m, k);
    err += (est - ref_slice).squaredNorm();
    ref += ref_slice.squaredNorm();
  }
  if (!any || ref <= 0.0) return std::numeric_limits<double>::infinity();
  return err / ref;
}

DetectionResult iterative_detect(const CTensor& Y, const CMat& S, const SystemConfig& cfg,
                                 const Constellation& constellation, const TruthContext& truth) {
  const int K = static_cast<int>(S.cols());
  const int T = static_cast<int>(Y.empty() ? 0 : Y[0].cols());

  CoarseOptions copts;
  copts.rho_damp = cfg.rho_damp;
  copts.max_iters = cfg.coarse_iters;
  copts.gamma0 = cfg.active_ues > 0 ? static_cast<double>(cfg.active_ues) / cfg.total_ues : 0.1;
  const CMat& beacon = Y[static_cast<size_t>(cfg.beacon_antenna - 1)];
  CoarseResult coarse = coarse_detect(beacon, S, constellation, copts);

  DetectionResult res;
  res.active_set_hat = coarse.active_set_hat;
  res.Xhat = CMat::Zero(K, T);
  res.coarse_pi = coarse.pi;
  res.sigma2_hat = coarse.sigma2_t.mean();

  const bool with_truth = truth.truth != nullptr;
  auto score_ber = [&](const CMat& X_active_rows) {
    auto [hard, bits] = hard_decision(X_active_rows, constellation);
    (void)bits;
    return bit_error_rate(res.active_set_hat, hard, constellation, *truth.truth);
  };

  if (res.active_set_hat.empty()) {
    // nothing detected: empty result, scored as all-miss by the caller
    res.Xhard.resize(0, T);
    res.bits_hat.resize(0, T * constellation.bits_per_symbol);
    if (with_truth)
      res.diagnostics.coarse_ber = truth.truth->active_set.empty() ? 0.0 : 1.0;
    return res;
  }

  const int Ka_hat = static_cast<int>(res.active_set_hat.size());
  for (int kappa = 0; kappa < Ka_hat; ++kappa)
    res.Xhat.row(res.active_set_hat[static_cast<size_t>(kappa)]) =
        coarse.Xhat.row(res.active_set_hat[static_cast<size_t>(kappa)]);

  CMat X_active(Ka_hat, T);
  for (int kappa = 0; kappa < Ka_hat; ++kappa)
    X_active.row(kappa) = coarse.Xhat.row(res.active_set_hat[static_cast<size_t>(kappa)]);
  if (with_truth) res.diagnostics.coarse_ber = score_ber(X_active);

  // CE pilots: the coarse posterior means to start with, then re-sliced hard
  // symbols after each LMMSE pass. Feeding the soft LMMSE output back leaves
  // its errors correlated with the noise in Y and the factor estimates drift
  // apart (BER keeps falling but the CSI NMSE creeps up); slicing breaks the
  // correlation.
  CMat X_pilot = res.Xhat;
  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    CeProblem problem = build_ce_problem(Y, S, X_pilot, res.active_set_hat);
    CeResult ce;
    if (T >= Ka_hat) {
      ce = ls_fallback(problem, res.sigma2_hat);
    } else {
      GmmvOptions gopts;
      gopts.max_iters = cfg.gmmv_iters;
      gopts.rho_damp = cfg.rho_damp;
      ce = gmmv_amp(problem, gopts);
    }
    auto [Phi_dd, Y_dd] = build_dd_operator(ce.H_equ_hat, S, res.active_set_hat, Y);
    const CMat X_fine = lmmse_detect(Phi_dd, Y_dd, ce.sigma2_hat);

    res.H_equ_hat = std::move(ce.H_equ_hat);
    res.sigma2_hat = ce.sigma2_hat;
    auto [X_sliced, sliced_bits] = hard_decision(X_fine, constellation);
    (void)sliced_bits;
    for (int kappa = 0; kappa < Ka_hat; ++kappa) {
      res.Xhat.row(res.active_set_hat[static_cast<size_t>(kappa)]) = X_fine.row(kappa);
      X_pilot.row(res.active_set_hat[static_cast<size_t>(kappa)]) = X_sliced.row(kappa);
    }

    if (with_truth) {
      res.diagnostics.ber_per_iter.push_back(score_ber(X_fine));
      if (truth.pre && truth.channel)
        res.diagnostics.nmse_per_iter.push_back(
            equivalent_csi_nmse(res.active_set_hat, res.H_equ_hat, *truth.pre, *truth.channel,
                                truth.truth->active_set));
    }
  }

  CMat X_final(Ka_hat, T);
  for (int kappa = 0; kappa < Ka_hat; ++kappa)
    X_final.row(kappa) = res.Xhat.row(res.active_set_hat[static_cast<size_t>(kappa)]);
  auto [hard, bits] = hard_decision(X_final, constellation);
  res.Xhard = std::move(hard);
  res.bits_hat = std::move(bits);
  return res;
}

}  // namespace gfma
