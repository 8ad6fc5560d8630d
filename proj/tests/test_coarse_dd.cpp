#include <doctest.h>

#include <limits>
#include <sstream>

#include "gfma/coarse_dd.hpp"
#include "gfma/errors.hpp"
#include "gfma/rng.hpp"
#include "oracles.hpp"

using namespace gfma;

namespace {

CMat gaussian_matrix(Rng& rng, int rows, int cols) {
  CMat out(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) out(r, c) = rng.cgaussian();
  return out;
}

CMat unit_modulus_matrix(Rng& rng, int rows, int cols) {
  CMat out(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) {
      const double ph = rng.uniform(0.0, 2.0 * kPi);
      out(r, c) = cxd(std::cos(ph), std::sin(ph));
    }
  return out;
}

}  // namespace

TEST_CASE("factor update degeneracies") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(1);
  const int M = 6, K = 3, T = 2;
  const CMat S = unit_modulus_matrix(rng, M, K);
  const CMat Y = gaussian_matrix(rng, M, T);
  AmpState st = init_amp_state(Y, K, 4, 0.3);

  SUBCASE("zero posterior variance kills V and the Onsager term") {
    st.v.setZero();
    st.xhat = gaussian_matrix(rng, K, T);
    st.Z = Y;  // zero residual
    auto [V, Z] = amp_factor_update(st, Y, S);
    CHECK(V.maxCoeff() <= 1e-12);
    CHECK((Z - S * st.xhat).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("unit-modulus codes with constant v give V = K*v") {
    st.v.setConstant(0.25);
    auto [V, Z] = amp_factor_update(st, Y, S);
    (void)Z;
    for (int t = 0; t < T; ++t)
      for (int m = 0; m < M; ++m) CHECK(V(m, t) == doctest::Approx(K * 0.25));
  }

  SUBCASE("first iteration from the start state has no correction") {
    // Z0 = Y so the residual term vanishes and Z1 = S*xhat = 0
    auto [V, Z] = amp_factor_update(st, Y, S);
    (void)V;
    CHECK(Z.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("variable update degeneracies") {
  const int M = 8, K = 2, T = 2;
  Rng rng(2);
  const CMat S = unit_modulus_matrix(rng, M, K);
  const CMat Y = gaussian_matrix(rng, M, T);
  AmpState st = init_amp_state(Y, K, 4, 0.3);
  st.sigma2_t.setOnes();
  st.V.setZero();

  SUBCASE("unit-modulus codes, zero V, unit noise gives D = 1/M") {
    auto [D, C] = amp_variable_update(st, Y, S);
    (void)C;
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) CHECK(D(k, t) == doctest::Approx(1.0 / M));
  }

  SUBCASE("zero residual leaves the mean untouched") {
    st.Z = Y;
    st.xhat = gaussian_matrix(rng, K, T);
    auto [D, C] = amp_variable_update(st, Y, S);
    (void)D;
    CHECK((C - st.xhat).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("scalar system reduces to a single matched filter") {
    Rng r2(3);
    const CMat S1 = CMat::Ones(1, 1);
    const CMat Y1 = gaussian_matrix(r2, 1, 1);
    AmpState s1 = init_amp_state(Y1, 1, 4, 0.3);
    s1.sigma2_t.setConstant(0.7);
    s1.V.setZero();
    s1.Z = gaussian_matrix(r2, 1, 1);
    s1.xhat = gaussian_matrix(r2, 1, 1);
    auto [D, C] = amp_variable_update(s1, Y1, S1);
    CHECK(D(0, 0) == doctest::Approx(0.7));
    CHECK(std::abs(C(0, 0) - (s1.xhat(0, 0) + Y1(0, 0) - s1.Z(0, 0))) < 1e-12);
  }
}

TEST_CASE("posterior step closed forms") {
  const Constellation qpsk = make_constellation(4);
  const int K = 1, T = 1;

  SUBCASE("gamma = 0 forces the spike") {
    CMat C = CMat::Constant(K, T, cxd(0.4, -0.2));
    RMat D = RMat::Constant(K, T, 0.5);
    RMat gamma = RMat::Zero(K, T);
    const PosteriorOut out = posterior_step(C, D, gamma, qpsk);
    CHECK(out.pi(0, 0) == 0.0);
    CHECK(std::abs(out.xhat(0, 0)) == 0.0);
    CHECK(out.v(0, 0) == 0.0);
  }

  SUBCASE("gamma = 1 with a concentrated likelihood picks the symbol") {
    CMat C = CMat::Constant(K, T, qpsk.points[1]);
    RMat D = RMat::Constant(K, T, 1e-9);
    RMat gamma = RMat::Ones(K, T);
    const PosteriorOut out = posterior_step(C, D, gamma, qpsk);
    CHECK(out.pi(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(out.xhat(0, 0) - qpsk.points[1]) < 1e-9);
    CHECK(out.v(0, 0) < 1e-9);
  }

  SUBCASE("symmetric pseudo-channel gives zero mean and the closed-form belief") {
    CMat C = CMat::Zero(K, T);
    const double d = 0.8;
    RMat D = RMat::Constant(K, T, d);
    RMat gamma = RMat::Constant(K, T, 0.5);
    const PosteriorOut out = posterior_step(C, D, gamma, qpsk);
    for (int l = 1; l < 4; ++l) CHECK(out.xi[0](0, 0) == doctest::Approx(out.xi[l](0, 0)));
    CHECK(std::abs(out.xhat(0, 0)) < 1e-12);
    // weights: slab = gamma*exp(-1/d), spike = 1-gamma
    const double expected = std::exp(-1.0 / d) / (std::exp(-1.0 / d) + 1.0);
    CHECK(out.pi(0, 0) == doctest::Approx(expected));
  }

  SUBCASE("tiny D does not overflow") {
    CMat C = CMat::Constant(K, T, cxd(5.0, 5.0));
    RMat D = RMat::Constant(K, T, 1e-14);
    RMat gamma = RMat::Constant(K, T, 0.5);
    const PosteriorOut out = posterior_step(C, D, gamma, qpsk);
    CHECK(std::isfinite(out.xhat(0, 0).real()));
    CHECK(out.pi(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(out.xhat(0, 0) - qpsk.points[0]) < 1e-9);
  }
}

TEST_CASE("EM update closed forms") {
  Rng rng(4);
  const int M = 5, K = 3, T = 4;
  const CMat Y = gaussian_matrix(rng, M, T);
  AmpState st = init_amp_state(Y, K, 4, 0.2);

  SUBCASE("gamma becomes the slot-average of the beliefs") {
    st.pi.setConstant(0.42);
    auto [gamma, sigma2] = em_update(st, Y);
    (void)sigma2;
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) CHECK(gamma(k, t) == doctest::Approx(0.42));
    // and an uneven profile averages across slots
    for (int t = 0; t < T; ++t) st.pi.col(t).setConstant(0.1 * (t + 1));
    auto [gamma2, s2] = em_update(st, Y);
    (void)s2;
    CHECK(gamma2(0, 0) == doctest::Approx(0.25));
  }

  SUBCASE("zero residual and zero V drive sigma2 to the floor") {
    st.Z = Y;
    st.V.setZero();
    auto [gamma, sigma2] = em_update(st, Y);
    (void)gamma;
    for (int t = 0; t < T; ++t) CHECK(sigma2(t) == doctest::Approx(1e-15));
  }
}

TEST_CASE("single-user noiseless detection is exact") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(5);
  const int M = 32;
  const CMat S = unit_modulus_matrix(rng, M, 1);
  CMat X(1, 1);
  X(0, 0) = qpsk.points[0];
  const CMat Y = S * X;
  CoarseOptions opts;
  opts.gamma0 = 0.5;
  const CoarseResult res = coarse_detect(Y, S, qpsk, opts);
  CHECK(std::abs(res.Xhat(0, 0) - qpsk.points[0]) < 1e-6);
  CHECK(res.pi(0, 0) > 1.0 - 1e-6);
  REQUIRE(res.active_set_hat.size() == 1);
  CHECK(res.active_set_hat[0] == 0);
}

TEST_CASE("an empty frame stays empty almost always") {
  const Constellation qpsk = make_constellation(4);
  const int M = 32, K = 16, T = 4;
  const double sigma2 = 0.01;  // 20 dB
  int empty = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = Rng::derive(60, static_cast<uint64_t>(trial));
    const CMat S = gaussian_matrix(rng, M, K);
    CMat Y(M, T);
    for (int t = 0; t < T; ++t)
      for (int m = 0; m < M; ++m) Y(m, t) = std::sqrt(sigma2) * rng.cgaussian();
    CoarseOptions opts;
    opts.gamma0 = 0.1;
    const CoarseResult res = coarse_detect(Y, S, qpsk, opts);
    if (res.active_set_hat.empty() && res.pi.rowwise().mean().maxCoeff() < 0.5) ++empty;
  }
  CHECK(empty >= 95);
}

TEST_CASE("posterior means track the exhaustive oracle") {
  const Constellation qpsk = make_constellation(4);
  const int M = 8, K = 4, T = 2, Ka = 2;
  const double sigma2 = std::pow(10.0, -1.5);
  double acc = 0.0;
  const int instances = 10;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng = Rng::derive(61, static_cast<uint64_t>(inst));
    const CMat S = gaussian_matrix(rng, M, K);
    const auto active = rng.sample_without_replacement(K, Ka);
    CMat X = CMat::Zero(K, T);
    for (int k : active)
      for (int t = 0; t < T; ++t) X(k, t) = qpsk.points[rng.uniform_int(4)];
    CMat Y = S * X;
    for (int t = 0; t < T; ++t)
      for (int m = 0; m < M; ++m) Y(m, t) += std::sqrt(sigma2) * rng.cgaussian();
    CoarseOptions opts;
    opts.gamma0 = 0.5;
    opts.max_iters = 200;
    const CoarseResult amp = coarse_detect(Y, S, qpsk, opts);
    const CMat oracle = checks::brute_force_posterior_mean(Y, S, qpsk, 0.5, sigma2);
    acc += (amp.Xhat - oracle).squaredNorm() / (K * T);
  }
  CHECK(acc / instances < 1e-2);
}

TEST_CASE("beliefs and variances stay in range through the iterations") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(7);
  const int M = 24, K = 40, T = 6, Ka = 6;
  const CMat S = gaussian_matrix(rng, M, K);
  const auto active = rng.sample_without_replacement(K, Ka);
  CMat X = CMat::Zero(K, T);
  for (int k : active)
    for (int t = 0; t < T; ++t) X(k, t) = qpsk.points[rng.uniform_int(4)];
  CMat Y = S * X;
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < M; ++m) Y(m, t) += 0.3 * rng.cgaussian();

  // drive the loop manually so every iteration is inspected
  AmpState st = init_amp_state(Y, K, 4, static_cast<double>(Ka) / K);
  const double damp = 0.3;
  for (int i = 1; i <= 30; ++i) {
    auto [V, Z] = amp_factor_update(st, Y, S);
    st.V = damp * st.V + (1 - damp) * V;
    st.Z = damp * st.Z + (1 - damp) * Z;
    auto [D, C] = amp_variable_update(st, Y, S);
    st.D = D;
    st.C = C;
    const PosteriorOut post = posterior_step(st.C, st.D, st.gamma, qpsk);
    st.pi = post.pi;
    st.xhat = post.xhat;
    st.v = post.v;
    auto [gamma, sigma2] = em_update(st, Y);
    st.gamma = gamma;
    st.sigma2_t = sigma2;
    CHECK(st.pi.minCoeff() >= 0.0);
    CHECK(st.pi.maxCoeff() <= 1.0);
    CHECK(st.v.minCoeff() >= 0.0);
    CHECK(st.V.allFinite());
    CHECK(st.Z.allFinite());
    CHECK(st.sigma2_t.minCoeff() > 0.0);
    // posterior means live in the convex hull of {0} and the constellation
    CHECK(st.xhat.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("activity decision is invariant to a common phase rotation") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(8);
  const int M = 24, K = 30, T = 4, Ka = 5;
  const CMat S = gaussian_matrix(rng, M, K);
  const auto active = rng.sample_without_replacement(K, Ka);
  CMat X = CMat::Zero(K, T);
  for (int k : active)
    for (int t = 0; t < T; ++t) X(k, t) = qpsk.points[rng.uniform_int(4)];
  CMat Y = S * X;
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < M; ++m) Y(m, t) += 0.2 * rng.cgaussian();

  CoarseOptions opts;
  opts.gamma0 = static_cast<double>(Ka) / K;
  const CoarseResult plain = coarse_detect(Y, S, qpsk, opts);
  const cxd rot(std::cos(1.1), std::sin(1.1));
  const CoarseResult rotated = coarse_detect(rot * Y, rot * S, qpsk, opts);
  CHECK(plain.active_set_hat == rotated.active_set_hat);
  CHECK((plain.Xhat - rotated.Xhat).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("non-finite input raises NumericalDivergence with the iteration") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(9);
  const CMat S = gaussian_matrix(rng, 4, 3);
  CMat Y = gaussian_matrix(rng, 4, 2);
  Y(0, 0) = cxd(std::numeric_limits<double>::infinity(), 0.0);
  CoarseOptions opts;
  try {
    coarse_detect(Y, S, qpsk, opts);
    FAIL("expected NumericalDivergence");
  } catch (const NumericalDivergence& e) {
    CHECK(e.iteration >= 1);
  }
}

TEST_CASE("per-iteration trace emits one row per iteration") {
  const Constellation qpsk = make_constellation(4);
  Rng rng(10);
  const CMat S = gaussian_matrix(rng, 16, 8);
  const CMat Y = gaussian_matrix(rng, 16, 2);
  std::ostringstream trace;
  CoarseOptions opts;
  opts.max_iters = 7;
  opts.tol = 0.0;  // no early exit
  opts.trace = &trace;
  coarse_detect(Y, S, qpsk, opts);
  int lines = 0;
  std::string line;
  std::istringstream in(trace.str());
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 8);  // header + 7 iterations
}
