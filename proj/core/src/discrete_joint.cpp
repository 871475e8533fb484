#include "dbmnet/discrete_joint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

using nlohmann::json;

namespace dbmnet {

namespace {

void check_disjoint(std::initializer_list<const VarSet*> sets) {
    std::vector<int> all;
    for (const VarSet* s : sets) all.insert(all.end(), s->begin(), s->end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw DataError("variable sets must be disjoint");
    }
}

VarSet sorted_union(const VarSet& a, const VarSet& b) {
    VarSet u = a;
    u.insert(u.end(), b.begin(), b.end());
    std::sort(u.begin(), u.end());
    return u;
}

double table_entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

} // namespace

std::size_t DiscreteJoint::num_cells() const {
    std::size_t n = 1;
    for (int c : card) n *= static_cast<std::size_t>(c);
    return n;
}

void DiscreteJoint::validate() const {
    if (names.size() != card.size()) throw DataError("joint: names/cardinalities size mismatch");
    if (class_var < 0 || class_var >= static_cast<int>(card.size())) {
        throw DataError("joint: class variable index out of range");
    }
    for (int c : card)
        if (c < 1) throw DataError("joint: cardinalities must be >= 1");
    const std::size_t n = num_cells();
    if (n > kMaxCells) {
        throw DataError("joint exceeds the desk-scale cell cap (" + std::to_string(n) + " > " +
                        std::to_string(kMaxCells) + "); the oracle module is for small joints only");
    }
    if (probs.size() != n) throw DataError("joint: probability table has wrong size");
    double s = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw DataError("joint: negative probability");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) throw DataError("joint: probabilities sum to " + std::to_string(s));
}

std::vector<double> DiscreteJoint::marginal(const VarSet& vars) const {
    VarSet v = vars;
    std::sort(v.begin(), v.end());
    std::size_t out_size = 1;
    for (int i : v) out_size *= static_cast<std::size_t>(card[i]);
    std::vector<double> out(out_size, 0.0);

    const int nv = static_cast<int>(card.size());
    // stride of each joint variable in the full table
    std::vector<std::size_t> stride(nv, 1);
    for (int i = nv - 2; i >= 0; --i) stride[i] = stride[i + 1] * static_cast<std::size_t>(card[i + 1]);

    const std::size_t n = num_cells();
    for (std::size_t cell = 0; cell < n; ++cell) {
        std::size_t idx = 0;
        for (int k : v) {
            const std::size_t val = (cell / stride[k]) % static_cast<std::size_t>(card[k]);
            idx = idx * static_cast<std::size_t>(card[k]) + val;
        }
        out[idx] += probs[cell];
    }
    return out;
}

double exact_entropy(const DiscreteJoint& j, const VarSet& vars) {
    if (vars.empty()) return 0.0;
    return table_entropy(j.marginal(vars));
}

double exact_mi(const DiscreteJoint& j, const VarSet& a, const VarSet& b) {
    check_disjoint({&a, &b});
    if (a.empty() || b.empty()) return 0.0;
    // I(A;B) = H(A) + H(B) - H(A,B), all by enumeration
    return exact_entropy(j, a) + exact_entropy(j, b) - exact_entropy(j, sorted_union(a, b));
}

double exact_cmi(const DiscreteJoint& j, const VarSet& a, const VarSet& b, const VarSet& cond) {
    check_disjoint({&a, &b, &cond});
    if (a.empty() || b.empty()) return 0.0;
    if (cond.empty()) return exact_mi(j, a, b);
    // I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)
    return exact_entropy(j, sorted_union(a, cond)) + exact_entropy(j, sorted_union(b, cond)) -
           exact_entropy(j, sorted_union(sorted_union(a, b), cond)) - exact_entropy(j, cond);
}

ExtendedNats exact_cross_cmi(const DiscreteJoint& j, const VarSet& x, const VarSet& z, int q, int r) {
    check_disjoint({&x, &z});
    for (int v : x)
        if (v == j.class_var) throw DataError("cross_cmi: X must not contain the class variable");
    for (int v : z)
        if (v == j.class_var) throw DataError("cross_cmi: Z must not contain the class variable");

    const VarSet qset = {j.class_var};
    const std::vector<double> pq = j.marginal(qset);
    if (q < 0 || q >= static_cast<int>(pq.size()) || r < 0 || r >= static_cast<int>(pq.size())) {
        throw DataError("cross_cmi: class value out of range");
    }
    if (pq[q] <= 0.0 || pq[r] <= 0.0) throw DataError("cross_cmi: zero-probability class value");
    if (z.empty()) return {0.0, true};

    const VarSet xz = sorted_union(x, z);
    const VarSet xzq = sorted_union(xz, qset);
    const VarSet xq = sorted_union(x, qset);
    const VarSet zq = sorted_union(z, qset);

    // index helpers over the sorted xz layout with the class value appended
    const std::vector<double> p_xzq = j.marginal(xzq);
    const std::vector<double> p_xq = j.marginal(xq);
    const std::vector<double> p_zq = j.marginal(zq);

    // Walk all joint (x,z) configurations via the p_xzq layout. For each we
    // need the matching x-index and z-index; recompute from mixed-radix digits.
    std::vector<int> cards_xzq;
    for (int v : xzq) cards_xzq.push_back(j.card[v]);

    auto project = [&](const std::vector<int>& digits, const VarSet& from, const VarSet& to) {
        std::size_t idx = 0;
        for (int v : to) {
            const auto it = std::find(from.begin(), from.end(), v);
            const int pos = static_cast<int>(it - from.begin());
            idx = idx * static_cast<std::size_t>(j.card[v]) + static_cast<std::size_t>(digits[pos]);
        }
        return idx;
    };

    const int nvars = static_cast<int>(xzq.size());
    const int qpos = static_cast<int>(std::find(xzq.begin(), xzq.end(), j.class_var) - xzq.begin());
    std::vector<int> digits(nvars, 0);
    double acc = 0.0;
    bool support_ok = true;
    for (std::size_t flat = 0; flat < p_xzq.size(); ++flat) {
        // decode mixed-radix digits for this cell
        std::size_t rem = flat;
        for (int k = nvars - 1; k >= 0; --k) {
            digits[k] = static_cast<int>(rem % static_cast<std::size_t>(cards_xzq[k]));
            rem /= static_cast<std::size_t>(cards_xzq[k]);
        }
        if (digits[qpos] != r) continue;
        const double p_r = p_xzq[flat] / pq[r]; // p(x,z | r)
        if (p_r <= 0.0) continue;               // 0 log(...) = 0

        // the same (x,z) configuration under class q
        std::vector<int> dq = digits;
        dq[qpos] = q;
        const double pxz_q = p_xzq[project(dq, xzq, xzq)] / pq[q];
        if (pxz_q <= 0.0) {
            support_ok = false;
            continue;
        }
        const double px_q = p_xq[project(dq, xzq, xq)] / pq[q];
        const double pz_q = p_zq[project(dq, xzq, zq)] / pq[q];
        acc += p_r * std::log(pxz_q / (px_q * pz_q));
    }
    if (!support_ok) return {kNegInf, false};
    return {acc, true};
}

ExtendedNats s_measure(const DiscreteJoint& j, const VarSet& x, const std::vector<VarSet>& z_per_class) {
    const std::vector<double> pq = j.marginal({j.class_var});
    const int nc = static_cast<int>(pq.size());
    if (static_cast<int>(z_per_class.size()) != nc) {
        throw DataError("s_measure: need one candidate set per class value");
    }
    double total = 0.0;
    for (int q = 0; q < nc; ++q) {
        for (int r = 0; r < nc; ++r) {
            const double w = pq[q] * ((q == r ? 1.0 : 0.0) - pq[r]);
            if (w == 0.0) continue;
            const ExtendedNats term = exact_cross_cmi(j, x, z_per_class[r], r, q);
            if (!term.support_ok) return {kNegInf, false};
            total += w * term.value;
        }
    }
    return {total, true};
}

double ear_score(const DiscreteJoint& j, const VarSet& x, const VarSet& z) {
    return exact_cmi(j, x, z, {j.class_var}) - exact_mi(j, x, z);
}

DecompositionSides posterior_decomposition_check(const DiscreteJoint& j, const VarSet& x, const VarSet& z) {
    const VarSet qset = {j.class_var};
    const VarSet xz = sorted_union(x, z);
    const VarSet xzq = sorted_union(xz, qset);

    // LHS: E[log p(Q|X,Z)] + H(X|Q) + H(Q) - H(X), all terms direct
    const std::vector<double> p_xzq = j.marginal(xzq);
    const std::vector<double> p_xz = j.marginal(xz);
    const std::vector<double> p_q = j.marginal(qset);
    // align: xzq sorted contains xz's variables plus class_var
    double e_log_post = 0.0;
    {
        std::vector<int> cards;
        for (int v : xzq) cards.push_back(j.card[v]);
        const int nv = static_cast<int>(xzq.size());
        const int qpos = static_cast<int>(std::find(xzq.begin(), xzq.end(), j.class_var) - xzq.begin());
        std::vector<int> digits(nv, 0);
        for (std::size_t flat = 0; flat < p_xzq.size(); ++flat) {
            std::size_t rem = flat;
            for (int k = nv - 1; k >= 0; --k) {
                digits[k] = static_cast<int>(rem % static_cast<std::size_t>(cards[k]));
                rem /= static_cast<std::size_t>(cards[k]);
            }
            const double pj = p_xzq[flat];
            if (pj <= 0.0) continue;
            std::size_t idx = 0;
            for (int k = 0; k < nv; ++k) {
                if (xzq[k] == j.class_var) continue;
                idx = idx * static_cast<std::size_t>(cards[k]) + static_cast<std::size_t>(digits[k]);
            }
            // with empty (X,Z), p(q|x,z) reduces to p(q)
            const double pcond = xz.empty() ? p_q[static_cast<std::size_t>(digits[qpos])] : pj / p_xz[idx];
            e_log_post += pj * std::log(pcond);
        }
    }
    const double h_x_given_q =
        x.empty() ? 0.0 : exact_entropy(j, sorted_union(x, qset)) - exact_entropy(j, qset);
    DecompositionSides out;
    out.lhs = e_log_post + h_x_given_q + exact_entropy(j, qset) - exact_entropy(j, x);

    // RHS: I(X;Z|Q) + I(Q;Z) - I(X;Z)
    out.rhs = exact_cmi(j, x, z, qset) + exact_mi(j, qset, z) - exact_mi(j, x, z);
    return out;
}

SelectionResult exhaustive_select(const DiscreteJoint& j, const VarSet& x, const VarSet& candidates,
                                  SelectionRule rule, int c) {
    if (c < 0) throw DataError("exhaustive_select: c must be >= 0");
    const int nc_vars = static_cast<int>(candidates.size());
    if (nc_vars > 20) throw DataError("exhaustive_select: too many candidates for exhaustive enumeration");

    // enumerate subsets of size <= c as sorted index sets, in lexicographic order
    std::vector<VarSet> subsets;
    for (std::uint32_t mask = 0; mask < (1u << nc_vars); ++mask) {
        if (std::popcount(mask) > c) continue;
        VarSet s;
        for (int k = 0; k < nc_vars; ++k)
            if (mask & (1u << k)) s.push_back(candidates[k]);
        std::sort(s.begin(), s.end());
        subsets.push_back(std::move(s));
    }
    std::sort(subsets.begin(), subsets.end());

    const std::vector<double> pq = j.marginal({j.class_var});
    const int n_classes = static_cast<int>(pq.size());

    SelectionResult res;
    if (rule == SelectionRule::ear) {
        res.per_class = false;
        double best = kNegInf;
        VarSet best_set;
        for (const auto& s : subsets) {
            const double score = ear_score(j, x, s);
            if (score > best) {
                best = score;
                best_set = s;
            }
        }
        res.sets.push_back(best_set);
        res.scores.push_back(best);
        return res;
    }

    res.per_class = true;
    for (int q = 0; q < n_classes; ++q) {
        double best = kNegInf;
        VarSet best_set;
        for (const auto& s : subsets) {
            double score;
            if (rule == SelectionRule::cmi) {
                // Conditional MI restricted to class q.
                score = exact_cross_cmi(j, x, s, q, q).value;
            } else {
                // Per-class decomposition of S: the terms involving Z(q)
                // depend only on Z(q), so each class maximizes its own sum.
                score = 0.0;
                bool ok = true;
                for (int r = 0; r < n_classes; ++r) {
                    const double w = pq[r] * ((r == q ? 1.0 : 0.0) - pq[q]);
                    if (w == 0.0) continue;
                    const ExtendedNats term = exact_cross_cmi(j, x, s, q, r);
                    if (!term.support_ok) {
                        // -inf * negative weight would reward support gaps;
                        // treat any support violation as disqualifying.
                        ok = false;
                        break;
                    }
                    score += w * term.value;
                }
                if (!ok) continue;
            }
            if (score > best) {
                best = score;
                best_set = s;
            }
        }
        res.sets.push_back(best_set);
        res.scores.push_back(best);
    }
    return res;
}

void save_joint(const DiscreteJoint& j, const std::filesystem::path& path) {
    json out;
    out["schema_version"] = "dbmnet-joint-1";
    out["variables"] = json::array();
    for (std::size_t k = 0; k < j.names.size(); ++k) {
        out["variables"].push_back({{"name", j.names[k]}, {"cardinality", j.card[k]}});
    }
    out["class_variable"] = j.names[j.class_var];
    out["probabilities"] = j.probs;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write joint: " + path.string());
    f << out.dump(2) << '\n';
}

DiscreteJoint load_joint(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open joint: " + path.string());
    json in;
    try {
        f >> in;
    } catch (const json::exception& e) {
        throw DataError("malformed joint " + path.string() + ": " + e.what());
    }
    DiscreteJoint j;
    for (const auto& v : in.at("variables")) {
        j.names.push_back(v.at("name").get<std::string>());
        j.card.push_back(v.at("cardinality").get<int>());
    }
    const std::string cv = in.at("class_variable").get<std::string>();
    const auto it = std::find(j.names.begin(), j.names.end(), cv);
    if (it == j.names.end()) throw DataError("joint: class variable not among variables");
    j.class_var = static_cast<int>(it - j.names.begin());
    j.probs = in.at("probabilities").get<std::vector<double>>();
    j.validate();
    return j;
}

} // namespace dbmnet
