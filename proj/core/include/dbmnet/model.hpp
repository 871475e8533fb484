#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dbmnet/dataset.hpp"
#include "dbmnet/state_space.hpp"
#include "dbmnet/structure.hpp"

namespace dbmnet {

/// Markov chain over one class's states. Zeros in `trans` mark transitions
/// the topology forbids; they stay zero through training.
struct ChainTopology {
    int num_states = 0;
    std::vector<double> trans; // num_states x num_states, row-major
    std::vector<double> init;

    static ChainTopology left_to_right(int n, double self_loop = 0.6);
    static ChainTopology ergodic_uniform(int n);
    bool allowed(int from, int to) const { return trans[static_cast<std::size_t>(from) * num_states + to] > 0.0; }
};

/// One mixture component of a state's emission: x ~ N(B z, diag(vars)) where
/// z is the parent vector for the row's feature plus a trailing intercept.
struct EmissionComponent {
    double weight = 1.0;
    std::vector<std::vector<double>> coeffs; // per feature: |parents| + 1 entries
    std::vector<double> vars;                // per feature
};

struct DBMModel {
    std::vector<std::string> classes;
    std::vector<ChainTopology> chains;                     // per class
    DependencySpec spec;                                   // flat-state indexed
    std::vector<std::vector<EmissionComponent>> emissions; // [flat state][component]
    Standardizer standardizer;
    int dim = 0;

    StateSpace space() const;
    int mixtures() const { return emissions.empty() ? 0 : static_cast<int>(emissions[0].size()); }

    /// Empty list iff every structural invariant holds.
    std::vector<std::string> validate() const;
};

constexpr double kVarianceFloor = 1e-4;

/// Parent vector for frame t: lagged values with out-of-range lags padded by
/// 0 (the standardized feature mean), then the intercept constant 1.
std::vector<double> assemble_z(const Matrix& frames, int t, std::span<const ParentRef> parents);

/// log p(x_t | z_t(q), q): log-sum-exp over mixture components of diagonal
/// Gaussians with mean B z. Finite for floored variances.
double emission_logprob(const DBMModel& m, int class_idx, int local_state, int t, const Matrix& frames);

/// Same, addressed by flat state id (hot path; no per-call index lookup).
double emission_logprob_flat(const DBMModel& m, int flat_state, int t, const Matrix& frames);

/// Per-component log of weight * density, used for responsibilities.
void emission_component_logprobs_flat(const DBMModel& m, int flat_state, int t, const Matrix& frames,
                                      std::span<double> out);

int flat_state_offset(const DBMModel& m, int class_idx);

/// Free-parameter count under the documented convention: per state,
/// mixture weights contribute M-1; each transition row contributes
/// (allowed entries - 1); the initial distribution (nonzero entries - 1);
/// every B coefficient (including intercepts) and every variance is free.
long long param_count(const DBMModel& m);

void save_model(const DBMModel& m, const std::filesystem::path& path);
DBMModel load_model(const std::filesystem::path& path);

} // namespace dbmnet
