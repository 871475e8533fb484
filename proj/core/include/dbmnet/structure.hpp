#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dbmnet/mi.hpp"

namespace dbmnet {

struct InductionConfig {
    int max_parents = 3;     // M: per (state, feature) budget
    double tau = 0.8;        // redundancy fraction, in (0,1)
    double theta_f = 0.0;    // stop scanning once the sort key falls below this
    double theta_cmi = 0.01; // criterion 1: conditional MI must exceed this
    double theta_mi = 0.05;  // criterion 3: marginal MI must stay below this
};

/// Which sort key / filter set drives selection. `ear` is the published
/// algorithm (sort by I(X;Z|q) - I(X;Z), discriminative filter active).
/// `cmi` realizes the plain conditional-mutual-information rule inside the
/// same scan: sort by I(X;Z|q) and drop the marginal-MI filter.
enum class InductionRule { ear, cmi };

struct ParentRef {
    int lag = 0;    // >= 1: strictly past
    int source = 0; // feature index at that lag
    bool operator==(const ParentRef&) const = default;
};

struct DependencySpec {
    int num_states = 0;
    int num_features = 0;
    std::vector<std::string> state_names; // audit only; may be empty
    // parents[state][feature] in admission order
    std::vector<std::vector<std::vector<ParentRef>>> parents;

    static DependencySpec empty(int num_states, int num_features);
    int max_lag() const;
    std::size_t edge_count() const;
    void validate(int max_parents = -1) const;
};

/// The improved pairwise heuristic for one (state, target feature): scan
/// candidates (lag 1..max_lag, every source feature) in decreasing sort-key
/// order while the key stays >= theta_f, admitting a candidate iff
///   1) I(X_ti; Z_j | q)      >  theta_cmi,
///   2) for every admitted Z:   I(Z_j; Z | Q) < tau * I(Z_j; X_ti | Q),
///   3) I(X_ti; Z_j)          <  theta_mi        (ear rule only),
/// stopping once max_parents are admitted. Invalid cells are skipped.
/// Key ties break toward (smaller lag, smaller source index).
std::vector<ParentRef> improved_pairwise(const MIStats& stats, int state, int feature,
                                         const InductionConfig& cfg,
                                         InductionRule rule = InductionRule::ear);

/// Criterion 2 in isolation: true iff `candidate` is non-redundant with every
/// already-admitted parent. Pooled-over-states conditional MI between two
/// candidates is looked up at their relative lag; an unmeasurable pair
/// rejects the candidate.
bool pairwise_redundancy_check(const MIStats& stats, ParentRef candidate, int target_feature,
                               std::span<const ParentRef> admitted, double tau);

DependencySpec induce_all(const MIStats& stats, const InductionConfig& cfg,
                          InductionRule rule = InductionRule::ear, int threads = 1);

void save_depspec(const DependencySpec& spec, const std::filesystem::path& path);
DependencySpec load_depspec(const std::filesystem::path& path);

} // namespace dbmnet
