#pragma once

// Textbook Gaussian-mixture HMM, kept deliberately independent of the library
// implementation: scaled-domain forward-backward (Rabiner scaling) instead of
// log-domain recursions, and direct moment accumulators instead of the
// regression formalism. Shares only the documented fit conventions (ridge on
// the normal equations, variance floor, keep-old fallback for empty rows).

#include <vector>

#include "dbmnet/common.hpp"

namespace refhmm {

struct RefHmm {
    int n = 0; // states
    int d = 0; // features
    int m = 0; // mixture components
    std::vector<double> init;   // n
    std::vector<double> trans;  // n x n, structural zeros stay zero
    std::vector<double> weight; // n x m
    std::vector<double> mean;   // n x m x d
    std::vector<double> var;    // n x m x d
    double ridge = 1e-6;
    double variance_floor = 1e-4;

    double sequence_loglik(const dbmnet::Matrix& x) const;

    /// One EM pass over all sequences; returns the total log-likelihood under
    /// the parameters in effect when the pass started.
    double em_iteration(const std::vector<dbmnet::Matrix>& seqs);

    std::vector<double> fit_trace(const std::vector<dbmnet::Matrix>& seqs, int iters);
};

} // namespace refhmm
