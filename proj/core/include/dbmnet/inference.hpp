#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dbmnet/model.hpp"

namespace dbmnet {

/// Forward-backward output for one sequence under one class's chain. Because
/// every dependency parent is a past *observation*, the hidden chain stays
/// first-order Markov given the data and the standard recursions apply with
/// modified emissions.
struct PosteriorSet {
    Matrix gamma;                // T x N state posteriors
    std::vector<double> xi;      // (T-1) x N x N transition posteriors
    std::vector<double> gamma_m; // T x N x M mixture responsibilities
    double loglik = 0.0;

    double xi_at(int t, int a, int b, int n) const {
        return xi[(static_cast<std::size_t>(t) * n + a) * n + b];
    }
    double gm_at(int t, int s, int m, int n, int n_mix) const {
        return gamma_m[(static_cast<std::size_t>(t) * n + s) * n_mix + m];
    }
};

double forward_loglik(const DBMModel& m, int class_idx, const Matrix& frames);
PosteriorSet forward_backward(const DBMModel& m, int class_idx, const Matrix& frames);

/// Most probable state path (local state ids) and its log score. Ties prefer
/// the lower state index.
std::pair<std::vector<int>, double> viterbi(const DBMModel& m, int class_idx, const Matrix& frames);

struct Classification {
    std::string label;
    std::vector<std::pair<std::string, double>> logliks; // per class, model order
};

/// Scores raw (unstandardized) frames under every class with a uniform class
/// prior; ties go to the lexicographically first label.
Classification classify(const DBMModel& m, const Matrix& raw_frames);

} // namespace dbmnet
