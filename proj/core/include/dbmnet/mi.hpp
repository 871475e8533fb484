#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dbmnet/dataset.hpp"
#include "dbmnet/state_space.hpp"

namespace dbmnet {

enum class MiEstimator { histogram, gaussian };

struct MiConfig {
    MiEstimator estimator = MiEstimator::histogram;
    int bins = 8;                // equal-frequency bins per axis
    long long min_count = 200;   // below this a cell is invalid, not estimated
    int max_past_lag = 2;        // candidate parents live at lags 1..max_past_lag
};

/// A single pairwise estimate; valid is false when the sample count is below
/// min_count (the cell is excluded from selection rather than estimated).
struct MiValue {
    double value = 0.0;
    bool valid = false;
};

/// Plug-in MI on equal-frequency bins (histogram) or the Gaussian closed form
/// -0.5 log(1 - rho^2) with |rho| clipped to 1 - 1e-12. Nats, clamped >= 0.
MiValue pairwise_mi(std::span<const double> x, std::span<const double> z, MiEstimator est,
                    int bins = 8, long long min_count = 200);

/// Per-sequence hard state assignment (flat state ids), frame-aligned.
using Alignment = std::vector<std::vector<int>>;

/// Pairwise MI tables over (target feature i, lag l, source feature j) for
/// l = 0..max_past_lag. The pair for cell (i,l,j) is (x[t][i], x[t-l][j]);
/// frames with t < l are skipped (no padding in estimation). Lag-0 cells
/// exist so candidate-candidate redundancy can be looked up by relative lag;
/// selection candidates themselves are the strictly-past lags 1..max_past_lag.
///
/// conditional tables pool the frames whose *target-frame* alignment state is
/// q; marginal tables pool everything across classes.
struct MIStats {
    int dim = 0;
    int max_lag = 0;
    int num_states = 0;
    std::vector<std::string> state_names;
    long long min_count = 0;
    MiEstimator estimator = MiEstimator::histogram;
    int bins = 8;

    std::vector<double> marginal;        // (max_lag+1) * dim * dim
    std::vector<long long> marg_count;
    std::vector<double> conditional;     // ... * num_states
    std::vector<long long> cond_count;

    std::size_t cell(int i, int lag, int j) const {
        return (static_cast<std::size_t>(lag) * dim + i) * dim + j;
    }
    std::size_t cond_cell(int i, int lag, int j, int q) const {
        return cell(i, lag, j) * num_states + q;
    }
    MiValue marg(int i, int lag, int j) const;
    MiValue cond(int i, int lag, int j, int q) const;
    /// Count-weighted average of the per-state conditional cells (valid
    /// states only): the pooled I(.;.|Q) the redundancy check uses.
    MiValue pooled_cond(int i, int lag, int j) const;
};

MIStats compute_mistats(const SequenceDataset& ds, const Alignment& alignment, const StateSpace& space,
                        const MiConfig& cfg, int threads = 1);

/// f(Z_j) = I(X_ti; Z_j | Q=q) - I(X_ti; Z_j), per cell; invalid where either
/// input cell is invalid. Indexed like the MIStats tables.
struct EarTable {
    int dim = 0;
    int max_lag = 0;
    std::vector<double> value;
    std::vector<char> valid;
    std::size_t cell(int i, int lag, int j) const {
        return (static_cast<std::size_t>(lag) * dim + i) * dim + j;
    }
};

EarTable ear_table(const MIStats& stats, int q);

void save_mistats(const MIStats& s, const std::filesystem::path& path);
MIStats load_mistats(const std::filesystem::path& path);

} // namespace dbmnet
