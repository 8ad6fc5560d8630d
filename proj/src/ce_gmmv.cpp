#include "gfma/ce_gmmv.hpp"

#include <cmath>

#include "gfma/errors.hpp"

namespace gfma {

namespace {

constexpr double kVarFloor = 1e-12;
constexpr double kNoiseFloor = 1e-15;
constexpr double kInitSnr = 100.0;

CTensor rotate_back(const std::vector<CMat>& A_hat, const CMat& U_bs) {
  const int M = static_cast<int>(A_hat.size());
  const int Ka = static_cast<int>(A_hat[0].rows());
  const int N = static_cast<int>(A_hat[0].cols());
  CTensor H_equ(Ka, CMat(N, M));
  for (int m = 0; m < M; ++m) {
    const CMat slice = U_bs * A_hat[m].transpose();  // N x Ka
    for (int kappa = 0; kappa < Ka; ++kappa) H_equ[kappa].col(m) = slice.col(kappa);
  }
  return H_equ;
}

}  // namespace

CMat dft_matrix(int n) {
  CMat u(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double ang = -2.0 * kPi * static_cast<double>(a) * b / n;
      u(a, b) = scale * cxd(std::cos(ang), std::sin(ang));
    }
  return u;
}

CeProblem build_ce_problem(const CTensor& Y, const CMat& S, const CMat& Xhat,
                           const std::vector<int>& active_set_hat) {
  if (active_set_hat.empty()) throw EmptyActiveSet();
  const int N = static_cast<int>(Y.size());
  if (N == 0) throw ShapeMismatch("build_ce_problem: empty received tensor");
  const int M = static_cast<int>(Y[0].rows());
  const int T = static_cast<int>(Y[0].cols());
  const int Ka = static_cast<int>(active_set_hat.size());
  if (S.rows() != M || Xhat.cols() != T || Xhat.rows() != S.cols())
    throw ShapeMismatch("build_ce_problem: inconsistent shapes");

  CeProblem p;
  p.U_bs = dft_matrix(N);
  const CMat U_conj = p.U_bs.conjugate();
  p.Phi.reserve(M);
  p.R.reserve(M);
  for (int m = 0; m < M; ++m) {
    CMat phi(T, Ka);
    for (int kappa = 0; kappa < Ka; ++kappa) {
      const int k = active_set_hat[static_cast<size_t>(kappa)];
      phi.col(kappa) = S(m, k) * Xhat.row(k).transpose();
    }
    p.Phi.push_back(std::move(phi));

    CMat y_t(T, N);  // transposed subcarrier slice of the received tensor
    for (int n = 0; n < N; ++n) y_t.col(n) = Y[n].row(m).transpose();
    p.R.push_back(y_t * U_conj);
  }
  return p;
}

CeResult gmmv_amp(const CeProblem& problem, const GmmvOptions& opts) {
  const int M = static_cast<int>(problem.Phi.size());
  if (M == 0 || problem.R.size() != problem.Phi.size())
    throw ShapeMismatch("gmmv_amp: malformed problem");
  const int T = static_cast<int>(problem.Phi[0].rows());
  const int Ka = static_cast<int>(problem.Phi[0].cols());
  const int N = static_cast<int>(problem.R[0].cols());
  if (T >= Ka && !opts.allow_overdetermined) throw Overdetermined(T, Ka);

  // per-subcarrier message state
  std::vector<CMat> A(M, CMat::Zero(Ka, N)), Z, C(M, CMat::Zero(Ka, N));
  std::vector<RMat> v, V(M, RMat::Ones(T, N)), D(M, RMat::Ones(Ka, N));
  std::vector<RMat> pi(M, RMat::Zero(Ka, N));
  Z.reserve(M);
  for (int m = 0; m < M; ++m) Z.push_back(problem.R[m]);

  // shared hyperparameters
  RMat lambda = RMat::Constant(Ka, N, opts.lambda0);
  double sigma2 = 0.0, energy = 0.0, phi_energy = 0.0;
  for (int m = 0; m < M; ++m) {
    energy += problem.R[m].squaredNorm();
    phi_energy += problem.Phi[m].squaredNorm();
  }
  const double mean_r2 = energy / (static_cast<double>(M) * T * N);
  sigma2 = std::max(mean_r2 / (kInitSnr + 1.0), kNoiseFloor);
  const double tau0 =
      std::max((mean_r2 - sigma2) * T * M / (opts.lambda0 * phi_energy), kVarFloor);
  RMat tau = RMat::Constant(Ka, N, tau0);
  v.assign(M, RMat::Constant(Ka, N, opts.lambda0 * tau0));

  if (opts.trace) *opts.trace << "iter,mean_activity,sigma2,residual_norm\n";

  CeResult res;
  int iters = 0;
  for (int i = 1; i <= opts.max_iters; ++i) {
    iters = i;
    double max_delta = 0.0;
    RMat pi_sum = RMat::Zero(Ka, N);
    RMat tau_num = RMat::Zero(Ka, N);
    double sigma2_acc = 0.0;

    for (int m = 0; m < M; ++m) {
      const CMat& Phi = problem.Phi[m];
      const CMat& R = problem.R[m];
      const RMat Phi2 = Phi.cwiseAbs2();

      RMat V_new = (Phi2 * v[m]).cwiseMax(kVarFloor);
      CMat Z_new = Phi * A[m];
      Z_new.array() -= V_new.array() * (R - Z[m]).array() / (sigma2 + V[m].array());
      V[m] = opts.rho_damp * V[m] + (1.0 - opts.rho_damp) * V_new;
      Z[m] = opts.rho_damp * Z[m] + (1.0 - opts.rho_damp) * Z_new;
      if (!Z[m].allFinite() || !V[m].allFinite()) throw NumericalDivergence("gmmv_amp", i);

      const RMat W = (sigma2 + V[m].array()).inverse();
      D[m] = (Phi2.transpose() * W).cwiseInverse().cwiseMax(kVarFloor);
      C[m] = A[m] + (Phi.adjoint() * (R - Z[m]).cwiseProduct(W.matrix().cast<cxd>()))
                        .cwiseProduct(D[m].cast<cxd>());
      if (!C[m].allFinite()) throw NumericalDivergence("gmmv_amp", i);

      // Bernoulli-Gaussian posterior per angular entry
      for (int n = 0; n < N; ++n)
        for (int kappa = 0; kappa < Ka; ++kappa) {
          const double d = D[m](kappa, n);
          const double tv = tau(kappa, n);
          const double lam = lambda(kappa, n);
          const cxd c = C[m](kappa, n);
          const double c2 = std::norm(c);
          const double post_var = tv * d / (tv + d);
          const cxd post_mean = c * (tv / (tv + d));
          const double lr = std::log(lam) - std::log1p(-lam) + std::log(d / (d + tv)) +
                            c2 * (1.0 / d - 1.0 / (d + tv));
          const double p = lr > 0.0 ? 1.0 / (1.0 + std::exp(-lr)) : std::exp(lr) / (1.0 + std::exp(lr));
          const cxd a_post = p * post_mean;
          const double second = p * (post_var + std::norm(post_mean));
          max_delta = std::max(max_delta, std::abs(a_post - A[m](kappa, n)));
          A[m](kappa, n) = a_post;
          v[m](kappa, n) = std::max(second - std::norm(a_post), kVarFloor);
          pi[m](kappa, n) = p;
          pi_sum(kappa, n) += p;
          tau_num(kappa, n) += second;
        }

      // EM noise accumulation, same shrinkage form as the coarse stage
      for (int n = 0; n < N; ++n)
        for (int t = 0; t < T; ++t) {
          const double Vmt = V[m](t, n);
          const double resid = std::norm(R(t, n) - Z[m](t, n));
          const double shrink = 1.0 + Vmt / sigma2;
          sigma2_acc += resid / (shrink * shrink) + sigma2 * Vmt / (sigma2 + Vmt);
        }
    }

    // shared EM updates: activity averaged over subcarriers (common angular
    // support across frequency), prior variance per entry
    lambda = (pi_sum / M).cwiseMax(1e-8).cwiseMin(1.0 - 1e-8);
    for (int n = 0; n < N; ++n)
      for (int kappa = 0; kappa < Ka; ++kappa)
        if (pi_sum(kappa, n) > 1e-8)
          tau(kappa, n) = std::max(tau_num(kappa, n) / pi_sum(kappa, n), kVarFloor);
    sigma2 = std::max(sigma2_acc / (static_cast<double>(M) * T * N), kNoiseFloor);

    if (opts.trace)
      *opts.trace << i << ',' << lambda.mean() << ',' << sigma2 << ','
                  << std::sqrt([&] {
                       double r = 0.0;
                       for (int m = 0; m < M; ++m) r += (problem.R[m] - Z[m]).squaredNorm();
                       return r;
                     }()) << '\n';

    if (max_delta < opts.tol) break;
  }

  res.A_hat = std::move(A);
  res.H_equ_hat = rotate_back(res.A_hat, problem.U_bs);
  res.sigma2_hat = sigma2;
  res.iters_run = iters;
  return res;
}

CeResult ls_fallback(const CeProblem& problem, double sigma2_reg) {
  const int M = static_cast<int>(problem.Phi.size());
  if (M == 0) throw ShapeMismatch("ls_fallback: malformed problem");
  const double reg = std::max(sigma2_reg, kVarFloor);

  CeResult res;
  res.A_hat.reserve(M);
  for (int m = 0; m < M; ++m) {
    const CMat& Phi = problem.Phi[m];
    CMat gram = Phi.adjoint() * Phi;
    gram.diagonal().array() += reg;
    Eigen::LLT<CMat> llt(gram);
    if (llt.info() != Eigen::Success)
      throw SingularSystem("ls_fallback: regularized normal matrix not positive definite");
    res.A_hat.push_back(llt.solve(Phi.adjoint() * problem.R[m]));
    if (!res.A_hat.back().allFinite())
      throw SingularSystem("ls_fallback: non-finite solution");
  }
  res.H_equ_hat = rotate_back(res.A_hat, problem.U_bs);
  res.sigma2_hat = sigma2_reg;
  res.iters_run = 1;
  return res;
}

}  // namespace gfma
