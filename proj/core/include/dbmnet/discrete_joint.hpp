#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dbmnet/common.hpp"

namespace dbmnet {

/// A fully enumerated joint distribution over a handful of finite variables,
/// one of which is the designated class variable Q. Desk-scale only: used as
/// exact ground truth for the information measures and selection rules the
/// estimators and heuristics approximate.
///
/// All information quantities are in nats. 0 log 0 = 0 throughout.
struct DiscreteJoint {
    std::vector<std::string> names;
    std::vector<int> card;
    int class_var = -1;
    std::vector<double> probs; // row-major in declared variable order

    static constexpr std::size_t kMaxCells = std::size_t(1) << 20;

    std::size_t num_cells() const;
    void validate() const; // nonnegative, sums to 1 within 1e-12, under cap

    /// Marginal table over the given (sorted internally) variable subset.
    std::vector<double> marginal(const std::vector<int>& vars) const;
};

using VarSet = std::vector<int>;

double exact_entropy(const DiscreteJoint& j, const VarSet& vars);
double exact_mi(const DiscreteJoint& j, const VarSet& a, const VarSet& b);
double exact_cmi(const DiscreteJoint& j, const VarSet& a, const VarSet& b, const VarSet& cond);

/// Extended cross-context conditional mutual information
///   I_r(X;Z|q) = sum_{x,z} p(x,z|r) log p(x,z|q) / (p(x|q) p(z|q)).
/// q is the model class (inside the log), r is the averaging class. If the
/// averaging class puts mass where the model class has none, the value is
/// -inf and support_ok is false; this is a flagged value, not an error.
struct ExtendedNats {
    double value = 0.0;
    bool support_ok = true;
};

ExtendedNats exact_cross_cmi(const DiscreteJoint& j, const VarSet& x, const VarSet& z, int q, int r);

/// S(X;Z|Q) = sum_{q,r} p(q) (delta_qr - p(r)) I_q(X;Z(r)|r) over the
/// per-class candidate sets z_per_class[r].
ExtendedNats s_measure(const DiscreteJoint& j, const VarSet& x, const std::vector<VarSet>& z_per_class);

/// Explaining-away residual I(X;Z|Q) - I(X;Z); may be negative.
double ear_score(const DiscreteJoint& j, const VarSet& x, const VarSet& z);

/// Both sides of  E[log p(Q|X,Z)] + H(X|Q) + H(Q) - H(X)
///              = I(X;Z|Q) + I(Q;Z) - I(X;Z),
/// each computed independently by enumeration.
struct DecompositionSides {
    double lhs = 0.0;
    double rhs = 0.0;
};

DecompositionSides posterior_decomposition_check(const DiscreteJoint& j, const VarSet& x, const VarSet& z);

enum class SelectionRule { cmi, s, ear };

/// Exhaustive subset selection over candidate variables, subsets of size <= c.
/// cmi and s optimize per class (one set per class value); ear optimizes one
/// global set. Ties break to the lexicographically smallest index set.
struct SelectionResult {
    bool per_class = false;
    std::vector<VarSet> sets;    // per class, or a single global entry
    std::vector<double> scores;  // matching sets
};

SelectionResult exhaustive_select(const DiscreteJoint& j, const VarSet& x, const VarSet& candidates,
                                  SelectionRule rule, int c);

void save_joint(const DiscreteJoint& j, const std::filesystem::path& path);
DiscreteJoint load_joint(const std::filesystem::path& path);

} // namespace dbmnet
