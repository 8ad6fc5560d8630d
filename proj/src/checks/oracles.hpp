#pragma once

#include "gfma/sysmodel.hpp"
#include "gfma/types.hpp"

namespace gfma::checks {

// Exact MMSE posterior mean of X under the spike-and-slab prior (activity
// gamma, uniform symbols) for Y = S*X + CN(0, sigma2) noise, by enumerating
// all (L+1)^K hypotheses per column. Deliberately independent of the AMP
// implementation.
CMat brute_force_posterior_mean(const CMat& Y, const CMat& S, const Constellation& constellation,
                                double gamma, double sigma2);

// Plain (unregularized) least-squares solve, rank-revealing; the reference
// the sparse CE solver is compared against.
CMat least_squares(const CMat& A, const CMat& B);

}  // namespace gfma::checks
