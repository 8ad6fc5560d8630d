#include "oracles.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gfma::checks {

CMat brute_force_posterior_mean(const CMat& Y, const CMat& S, const Constellation& constellation,
                                double gamma, double sigma2) {
  const int M = static_cast<int>(S.rows());
  const int K = static_cast<int>(S.cols());
  const int T = static_cast<int>(Y.cols());
  const int L = constellation.order();
  if (K > 8) throw std::invalid_argument("brute force oracle limited to K <= 8");

  // hypothesis values and log priors per user: index 0 is "silent"
  std::vector<cxd> value(static_cast<size_t>(L) + 1);
  std::vector<double> logp(static_cast<size_t>(L) + 1);
  value[0] = 0.0;
  logp[0] = std::log(1.0 - gamma);
  for (int l = 0; l < L; ++l) {
    value[static_cast<size_t>(l) + 1] = constellation.points[static_cast<size_t>(l)];
    logp[static_cast<size_t>(l) + 1] = std::log(gamma / L);
  }

  long total = 1;
  for (int k = 0; k < K; ++k) total *= L + 1;

  CMat xhat = CMat::Zero(K, T);
  std::vector<int> assign(static_cast<size_t>(K));
  std::vector<cxd> h(static_cast<size_t>(K));
  CVec residual(M);

  for (int t = 0; t < T; ++t) {
    std::vector<double> logw(static_cast<size_t>(total));
    std::vector<std::vector<cxd>> hyp(static_cast<size_t>(total));
    double max_logw = -std::numeric_limits<double>::infinity();
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      double lp = 0.0;
      for (int k = 0; k < K; ++k) {
        const int a = static_cast<int>(rem % (L + 1));
        rem /= L + 1;
        assign[static_cast<size_t>(k)] = a;
        h[static_cast<size_t>(k)] = value[static_cast<size_t>(a)];
        lp += logp[static_cast<size_t>(a)];
      }
      residual = Y.col(t);
      for (int k = 0; k < K; ++k)
        if (assign[static_cast<size_t>(k)] != 0) residual -= S.col(k) * h[static_cast<size_t>(k)];
      const double lw = lp - residual.squaredNorm() / sigma2;
      logw[static_cast<size_t>(idx)] = lw;
      hyp[static_cast<size_t>(idx)] = h;
      max_logw = std::max(max_logw, lw);
    }
    double wsum = 0.0;
    CVec num = CVec::Zero(K);
    for (long idx = 0; idx < total; ++idx) {
      const double w = std::exp(logw[static_cast<size_t>(idx)] - max_logw);
      wsum += w;
      for (int k = 0; k < K; ++k) num(k) += w * hyp[static_cast<size_t>(idx)][static_cast<size_t>(k)];
    }
    xhat.col(t) = num / wsum;
  }
  return xhat;
}

CMat least_squares(const CMat& A, const CMat& B) {
  return A.colPivHouseholderQr().solve(B);
}

}  // namespace gfma::checks
