#include "gfma/coarse_dd.hpp"

#include <cmath>
#include <limits>

#include "gfma/errors.hpp"

namespace gfma {

namespace {

constexpr double kVarFloor = 1e-12;    // D and V floors (both are divisors)
constexpr double kNoiseFloor = 1e-15;  // learned sigma^2 floor
constexpr double kInitSnr = 100.0;     // 20 dB assumed at initialization

void check_finite(const char* where, int iter, const CMat& a, const RMat& b) {
  if (!a.allFinite() || !b.allFinite()) throw NumericalDivergence(where, iter);
}

}  // namespace

AmpState init_amp_state(const CMat& Y_beacon, int total_ues, int mod_order, double gamma0) {
  const int M = static_cast<int>(Y_beacon.rows());
  const int T = static_cast<int>(Y_beacon.cols());
  AmpState s;
  s.V = RMat::Ones(M, T);
  s.Z = Y_beacon;
  s.C = CMat::Zero(total_ues, T);
  s.D = RMat::Ones(total_ues, T);
  s.xhat = CMat::Zero(total_ues, T);
  s.v = RMat::Ones(total_ues, T);
  s.pi = RMat::Constant(total_ues, T, gamma0);
  s.xi.assign(mod_order, RMat::Constant(total_ues, T, 1.0 / mod_order));
  s.gamma = RMat::Constant(total_ues, T, gamma0);
  s.sigma2_t.resize(T);
  for (int t = 0; t < T; ++t)
    s.sigma2_t(t) =
        std::max(Y_beacon.col(t).squaredNorm() / ((kInitSnr + 1.0) * M), kNoiseFloor);
  s.iter = 0;
  return s;
}

std::pair<RMat, CMat> amp_factor_update(const AmpState& state, const CMat& Y_beacon,
                                        const CMat& S) {
  const RMat S2 = S.cwiseAbs2();
  RMat V = S2 * state.v;  // V_{m,t} = sum_k |s_{m,k}|^2 v_{k,t}
  CMat Z = S * state.xhat;
  const int T = static_cast<int>(Y_beacon.cols());
  for (int t = 0; t < T; ++t) {
    const double sigma2 = state.sigma2_t(t);
    Z.col(t).array() -= V.col(t).array() * (Y_beacon.col(t) - state.Z.col(t)).array() /
                        (sigma2 + state.V.col(t).array());
  }
  V = V.cwiseMax(kVarFloor);
  return {std::move(V), std::move(Z)};
}

std::pair<RMat, CMat> amp_variable_update(const AmpState& state, const CMat& Y_beacon,
                                          const CMat& S) {
  const int T = static_cast<int>(Y_beacon.cols());
  const RMat S2 = S.cwiseAbs2();
  RMat W(state.V.rows(), T);  // 1 / (sigma2_t + V_{m,t})
  for (int t = 0; t < T; ++t)
    W.col(t) = (state.sigma2_t(t) + state.V.col(t).array()).inverse().matrix();
  RMat D = (S2.transpose() * W).cwiseInverse().cwiseMax(kVarFloor);
  const CMat resid_scaled = (Y_beacon - state.Z).cwiseProduct(W.cast<cxd>());
  CMat C = state.xhat + (S.adjoint() * resid_scaled).cwiseProduct(D.cast<cxd>());
  return {std::move(D), std::move(C)};
}

PosteriorOut posterior_step(const CMat& C, const RMat& D, const RMat& gamma,
                            const Constellation& constellation) {
  const int K = static_cast<int>(C.rows());
  const int T = static_cast<int>(C.cols());
  const int L = constellation.order();
  PosteriorOut out;
  out.pi.resize(K, T);
  out.xhat.resize(K, T);
  out.v.resize(K, T);
  out.xi.assign(L, RMat(K, T));
  std::vector<double> expo(L);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      const double d = std::max(D(k, t), kVarFloor);
      const cxd c = C(k, t);
      // symbol exponents relative to the spike's (0 once the common
      // exp(-|C|^2/D) factor is divided out); the max is subtracted before
      // exponentiation so the dominant symbol always carries weight one
      double emax = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < L; ++l) {
        const cxd a = constellation.points[static_cast<size_t>(l)];
        expo[static_cast<size_t>(l)] =
            -(std::norm(a) - 2.0 * (a.real() * c.real() + a.imag() * c.imag())) / d;
        emax = std::max(emax, expo[static_cast<size_t>(l)]);
      }
      double wsum = 0.0;
      cxd mean_num = 0.0;
      double sq_num = 0.0;
      for (int l = 0; l < L; ++l) {
        const double w = std::exp(expo[static_cast<size_t>(l)] - emax);
        out.xi[static_cast<size_t>(l)](k, t) = w;
        wsum += w;
        mean_num += constellation.points[static_cast<size_t>(l)] * w;
        sq_num += std::norm(constellation.points[static_cast<size_t>(l)]) * w;
      }
      const double g = gamma(k, t);
      double pi;
      if (g <= 0.0) {
        pi = 0.0;
      } else if (g >= 1.0) {
        pi = 1.0;
      } else {
        // log of spike-to-slab weight ratio
        const double log_ratio = std::log1p(-g) - std::log(g / L * wsum) - emax;
        pi = log_ratio > 0.0 ? std::exp(-log_ratio) / (1.0 + std::exp(-log_ratio))
                             : 1.0 / (1.0 + std::exp(log_ratio));
      }
      const cxd xh = pi * mean_num / wsum;
      out.pi(k, t) = pi;
      out.xhat(k, t) = xh;
      out.v(k, t) = std::max(pi * sq_num / wsum - std::norm(xh), 0.0);
    }
  }
  return out;
}

std::pair<RMat, RVec> em_update(const AmpState& state, const CMat& Y_beacon) {
  const int M = static_cast<int>(Y_beacon.rows());
  const int T = static_cast<int>(Y_beacon.cols());
  RVec sigma2(T);
  for (int t = 0; t < T; ++t) {
    const double prev = state.sigma2_t(t);
    double acc = 0.0;
    for (int m = 0; m < M; ++m) {
      const double V = state.V(m, t);
      const double resid = std::norm(Y_beacon(m, t) - state.Z(m, t));
      const double shrink = 1.0 + V / prev;
      acc += resid / (shrink * shrink) + prev * V / (prev + V);
    }
    sigma2(t) = std::max(acc / M, kNoiseFloor);
  }
  // cross-slot sharing: all slots of a UE carry the same activity
  RMat gamma(state.pi.rows(), T);
  const RVec mean_belief = state.pi.rowwise().mean();
  for (int t = 0; t < T; ++t) gamma.col(t) = mean_belief;
  return {std::move(gamma), std::move(sigma2)};
}

CoarseResult coarse_detect(const CMat& Y_beacon, const CMat& S,
                           const Constellation& constellation, const CoarseOptions& opts) {
  const int K = static_cast<int>(S.cols());
  if (S.rows() != Y_beacon.rows())
    throw ShapeMismatch("coarse_detect: S and Y_beacon row counts differ");
  AmpState st = init_amp_state(Y_beacon, K, constellation.order(), opts.gamma0);

  if (opts.trace) *opts.trace << "iter,mean_belief,mean_sigma2,residual_norm\n";

  // scale reference for the noise-estimate part of the early exit
  const double y_power = Y_beacon.squaredNorm() / static_cast<double>(Y_beacon.size());

  int iters = 0;
  for (int i = 1; i <= opts.max_iters; ++i) {
    iters = i;
    auto [V_new, Z_new] = amp_factor_update(st, Y_beacon, S);
    st.V = opts.rho_damp * st.V + (1.0 - opts.rho_damp) * V_new;
    st.Z = opts.rho_damp * st.Z + (1.0 - opts.rho_damp) * Z_new;
    check_finite("coarse_detect", i, st.Z, st.V);

    auto [D_new, C_new] = amp_variable_update(st, Y_beacon, S);
    st.D = std::move(D_new);
    st.C = std::move(C_new);
    check_finite("coarse_detect", i, st.C, st.D);

    const CMat xhat_prev = st.xhat;
    PosteriorOut post = posterior_step(st.C, st.D, st.gamma, constellation);
    st.pi = std::move(post.pi);
    st.xi = std::move(post.xi);
    st.xhat = std::move(post.xhat);
    st.v = std::move(post.v);
    check_finite("coarse_detect", i, st.xhat, st.v);

    auto [gamma_new, sigma2_new] = em_update(st, Y_beacon);
    const double sigma2_delta = (sigma2_new - st.sigma2_t).cwiseAbs().maxCoeff();
    st.gamma = std::move(gamma_new);
    st.sigma2_t = std::move(sigma2_new);
    st.iter = i;

    if (opts.trace)
      *opts.trace << i << ',' << st.pi.mean() << ',' << st.sigma2_t.mean() << ','
                  << (Y_beacon - st.Z).norm() << '\n';

    // the learned noise variance feeds later stages, so it must settle too,
    // not just the posterior means
    const double delta = (st.xhat - xhat_prev).cwiseAbs().maxCoeff();
    if (delta < opts.tol && sigma2_delta < opts.tol * y_power) break;
  }

  CoarseResult res;
  res.Xhat = st.xhat;
  res.pi = st.pi;
  res.sigma2_t = st.sigma2_t;
  res.iters_run = iters;
  const RVec mean_belief = st.pi.rowwise().mean();
  for (int k = 0; k < K; ++k)
    if (mean_belief(k) > 0.5) res.active_set_hat.push_back(k);
  res.Ka_hat = static_cast<int>(res.active_set_hat.size());
  return res;
}

}  // namespace gfma
