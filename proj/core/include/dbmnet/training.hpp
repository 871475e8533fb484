#pragma once

#include <cstdint>
#include <vector>

#include "dbmnet/inference.hpp"

namespace dbmnet {

struct TrainConfig {
    int max_iters = 50;
    double rel_tol = 1e-5;        // relative total log-likelihood improvement stop
    double ridge = 1e-6;          // epsilon on the normal equations
    double variance_floor = 1e-4; // standardized units
    int mixtures = 1;
    int states_per_class = 1;
    double self_loop = 0.6;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Accumulated E-step statistics. Additive across dataset shards; merged in
/// sequence order so results do not depend on the thread count.
struct SufficientStats {
    int dim = 0;
    int num_states = 0;
    int n_mix = 0;

    std::vector<double> mass; // [state][m]
    // per (state, m, feature): zz' (P x P), xz (P), and sum gamma * x^2
    std::vector<std::vector<std::vector<std::vector<double>>>> zz;
    std::vector<std::vector<std::vector<std::vector<double>>>> xz;
    std::vector<std::vector<std::vector<double>>> xx;
    std::vector<std::vector<double>> trans_counts; // per class, N x N
    std::vector<std::vector<double>> init_counts;  // per class, N
    double total_loglik = 0.0;
    std::size_t total_frames = 0;

    static SufficientStats zeros(const DBMModel& m);
    void add(const SufficientStats& other);
};

SufficientStats estep(const DBMModel& m, const SequenceDataset& ds, int threads = 1);

/// Closed-form M-step: per (state, component, feature) ridge-regularized
/// weighted least squares for the B row, floored weighted residual variance,
/// normalized masses for weights/transitions. Components whose mass collapsed
/// are re-seeded by perturbing the heaviest sibling (logged, not fatal).
DBMModel mstep(const DBMModel& m, const SufficientStats& stats, const TrainConfig& cfg);

struct TraceRow {
    int iteration = 0;
    double total_loglik = 0.0;
    double per_frame = 0.0;
};

struct FitResult {
    DBMModel model;
    std::vector<std::vector<TraceRow>> traces; // per class
};

/// Per-class EM (classes are fit independently on their own sequences).
FitResult em_fit(const DBMModel& init, const SequenceDataset& ds, const TrainConfig& cfg);

/// Bootstrap K=0 Gaussian-mixture HMM: uniform-segmentation moments seed the
/// intercepts/variances, components split by +/-0.5 sigma, then EM.
FitResult init_bootstrap(const SequenceDataset& ds, const TrainConfig& cfg);

/// Same parameters, wider structure: coefficients for newly added parents
/// start at zero so the grafted model's likelihood equals the source model's.
DBMModel graft_dependencies(const DBMModel& m, const DependencySpec& spec);

/// Expected complete-data log-likelihood of emission rows under the stats
/// (the quantity the M-step maximizes per row, up to the ridge penalty).
double expected_emission_loglik(const SufficientStats& stats, const DBMModel& m);

} // namespace dbmnet
