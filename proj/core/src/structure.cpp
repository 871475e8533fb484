#include "dbmnet/structure.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

using nlohmann::json;

namespace dbmnet {

DependencySpec DependencySpec::empty(int num_states, int num_features) {
    DependencySpec s;
    s.num_states = num_states;
    s.num_features = num_features;
    s.parents.assign(num_states, std::vector<std::vector<ParentRef>>(num_features));
    return s;
}

int DependencySpec::max_lag() const {
    int k = 0;
    for (const auto& st : parents)
        for (const auto& ft : st)
            for (const auto& p : ft) k = std::max(k, p.lag);
    return k;
}

std::size_t DependencySpec::edge_count() const {
    std::size_t n = 0;
    for (const auto& st : parents)
        for (const auto& ft : st) n += ft.size();
    return n;
}

void DependencySpec::validate(int max_parents) const {
    if (static_cast<int>(parents.size()) != num_states) throw DataError("dependency spec: bad state count");
    for (const auto& st : parents) {
        if (static_cast<int>(st.size()) != num_features) throw DataError("dependency spec: bad feature count");
        for (const auto& ft : st) {
            if (max_parents >= 0 && static_cast<int>(ft.size()) > max_parents) {
                throw DataError("dependency spec: parent list exceeds budget");
            }
            std::set<std::pair<int, int>> seen;
            for (const auto& p : ft) {
                if (p.lag < 1) throw DataError("dependency spec: parents must be strictly past (lag >= 1)");
                if (p.source < 0 || p.source >= num_features) {
                    throw DataError("dependency spec: source feature out of range");
                }
                if (!seen.insert({p.lag, p.source}).second) {
                    throw DataError("dependency spec: duplicate parent");
                }
            }
        }
    }
}

namespace {

/// Pooled conditional MI between two lagged candidates. The more recent of
/// the two plays the target role, so the pair maps onto the (feature,
/// relative-lag, feature) cell whose conditioning frame matches it. Equal-lag
/// pairs are canonicalized by source order (those cells are symmetric).
MiValue candidate_pair_pooled_cond(const MIStats& stats, ParentRef a, ParentRef b) {
    if (a.lag > b.lag || (a.lag == b.lag && a.source > b.source)) std::swap(a, b);
    return stats.pooled_cond(a.source, b.lag - a.lag, b.source);
}

struct Scored {
    ParentRef ref;
    double key;
    double cond;
    double marg;
};

} // namespace

bool pairwise_redundancy_check(const MIStats& stats, ParentRef candidate, int target_feature,
                               std::span<const ParentRef> admitted, double tau) {
    const MiValue self = stats.pooled_cond(target_feature, candidate.lag, candidate.source);
    for (const ParentRef& z : admitted) {
        const MiValue pair = candidate_pair_pooled_cond(stats, candidate, z);
        if (!pair.valid || !self.valid) return false;
        if (!(pair.value < tau * self.value)) return false;
    }
    return true;
}

std::vector<ParentRef> improved_pairwise(const MIStats& stats, int state, int feature,
                                         const InductionConfig& cfg, InductionRule rule) {
    std::vector<ParentRef> admitted;
    if (cfg.max_parents <= 0) return admitted;

    std::vector<Scored> cands;
    for (int lag = 1; lag <= stats.max_lag; ++lag) {
        for (int j = 0; j < stats.dim; ++j) {
            const MiValue c = stats.cond(feature, lag, j, state);
            const MiValue m = stats.marg(feature, lag, j);
            if (!c.valid || !m.valid) continue;
            Scored s;
            s.ref = {lag, j};
            s.cond = c.value;
            s.marg = m.value;
            s.key = (rule == InductionRule::ear) ? c.value - m.value : c.value;
            cands.push_back(s);
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Scored& a, const Scored& b) {
        if (a.key != b.key) return a.key > b.key;
        if (a.ref.lag != b.ref.lag) return a.ref.lag < b.ref.lag;
        return a.ref.source < b.ref.source;
    });

    for (const Scored& s : cands) {
        if (s.key < cfg.theta_f) break;
        if (!(s.cond > cfg.theta_cmi)) continue;
        if (!pairwise_redundancy_check(stats, s.ref, feature, admitted, cfg.tau)) continue;
        if (rule == InductionRule::ear && !(s.marg < cfg.theta_mi)) continue;
        admitted.push_back(s.ref);
        if (static_cast<int>(admitted.size()) == cfg.max_parents) break;
    }
    return admitted;
}

DependencySpec induce_all(const MIStats& stats, const InductionConfig& cfg, InductionRule rule,
                          int threads) {
    DependencySpec spec = DependencySpec::empty(stats.num_states, stats.dim);
    spec.state_names = stats.state_names;
    parallel_for(static_cast<std::size_t>(stats.num_states) * stats.dim, threads, [&](std::size_t k) {
        const int q = static_cast<int>(k / stats.dim);
        const int i = static_cast<int>(k % stats.dim);
        spec.parents[q][i] = improved_pairwise(stats, q, i, cfg, rule);
    });
    spec.validate(cfg.max_parents);
    return spec;
}

void save_depspec(const DependencySpec& spec, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = "dbmnet-depspec-1";
    j["num_states"] = spec.num_states;
    j["num_features"] = spec.num_features;
    j["states"] = spec.state_names;
    json edges = json::array();
    for (int q = 0; q < spec.num_states; ++q) {
        for (int i = 0; i < spec.num_features; ++i) {
            if (spec.parents[q][i].empty()) continue;
            json rec;
            rec["state"] = q;
            rec["feature"] = i;
            rec["parents"] = json::array();
            for (const auto& p : spec.parents[q][i]) {
                rec["parents"].push_back({{"lag", p.lag}, {"source", p.source}});
            }
            edges.push_back(rec);
        }
    }
    j["edges"] = edges;
    j["max_lag"] = spec.max_lag();
    std::ofstream f(path);
    if (!f) throw DataError("cannot write dependency spec: " + path.string());
    f << j.dump(2) << '\n';
}

DependencySpec load_depspec(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open dependency spec: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed dependency spec " + path.string() + ": " + e.what());
    }
    DependencySpec spec = DependencySpec::empty(j.at("num_states").get<int>(), j.at("num_features").get<int>());
    if (j.contains("states")) spec.state_names = j.at("states").get<std::vector<std::string>>();
    for (const auto& rec : j.at("edges")) {
        const int q = rec.at("state").get<int>();
        const int i = rec.at("feature").get<int>();
        if (q < 0 || q >= spec.num_states || i < 0 || i >= spec.num_features) {
            throw DataError("dependency spec: edge record out of range in " + path.string());
        }
        for (const auto& p : rec.at("parents")) {
            spec.parents[q][i].push_back({p.at("lag").get<int>(), p.at("source").get<int>()});
        }
    }
    spec.validate();
    return spec;
}

} // namespace dbmnet
