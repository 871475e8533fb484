#include "dbmnet/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

using nlohmann::json;

namespace dbmnet {

ChainTopology ChainTopology::left_to_right(int n, double self_loop) {
    ChainTopology c;
    c.num_states = n;
    c.trans.assign(static_cast<std::size_t>(n) * n, 0.0);
    c.init.assign(n, 0.0);
    c.init[0] = 1.0;
    for (int s = 0; s < n; ++s) {
        if (s + 1 < n) {
            c.trans[static_cast<std::size_t>(s) * n + s] = self_loop;
            c.trans[static_cast<std::size_t>(s) * n + s + 1] = 1.0 - self_loop;
        } else {
            c.trans[static_cast<std::size_t>(s) * n + s] = 1.0;
        }
    }
    return c;
}

ChainTopology ChainTopology::ergodic_uniform(int n) {
    ChainTopology c;
    c.num_states = n;
    c.trans.assign(static_cast<std::size_t>(n) * n, 1.0 / n);
    c.init.assign(n, 1.0 / n);
    return c;
}

StateSpace DBMModel::space() const {
    std::vector<int> counts;
    for (const auto& ch : chains) counts.push_back(ch.num_states);
    return StateSpace::make(classes, counts);
}

std::vector<std::string> DBMModel::validate() const {
    std::vector<std::string> bad;
    if (classes.size() != chains.size()) {
        bad.push_back("class/chain count mismatch");
        return bad;
    }
    const StateSpace sp = space();
    if (spec.num_states != sp.total() || spec.num_features != dim) {
        bad.push_back("dependency spec does not match topology states or feature dim");
    }
    if (static_cast<int>(emissions.size()) != sp.total()) {
        bad.push_back("emission state count mismatch");
        return bad;
    }
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const ChainTopology& ch = chains[c];
        double isum = 0.0;
        for (double p : ch.init) isum += p;
        if (std::abs(isum - 1.0) > 1e-12) {
            bad.push_back("initial distribution of class " + classes[c] + " sums to " + std::to_string(isum));
        }
        for (int s = 0; s < ch.num_states; ++s) {
            double rsum = 0.0;
            for (int t = 0; t < ch.num_states; ++t) rsum += ch.trans[static_cast<std::size_t>(s) * ch.num_states + t];
            if (std::abs(rsum - 1.0) > 1e-12) {
                bad.push_back("transition row " + std::to_string(s) + " of class " + classes[c] +
                              " sums to " + std::to_string(rsum));
            }
        }
    }
    const int m_mix = mixtures();
    for (int q = 0; q < sp.total(); ++q) {
        if (static_cast<int>(emissions[q].size()) != m_mix) {
            bad.push_back("state " + sp.name(q) + " has inconsistent mixture count");
            continue;
        }
        double wsum = 0.0;
        for (const auto& comp : emissions[q]) {
            wsum += comp.weight;
            if (comp.weight < 0.0) bad.push_back("negative mixture weight at state " + sp.name(q));
            if (static_cast<int>(comp.coeffs.size()) != dim || static_cast<int>(comp.vars.size()) != dim) {
                bad.push_back("emission shape mismatch at state " + sp.name(q));
                continue;
            }
            for (int i = 0; i < dim; ++i) {
                if (comp.coeffs[i].size() != spec.parents[q][i].size() + 1) {
                    bad.push_back("coefficient row length mismatch at state " + sp.name(q) +
                                  " feature " + std::to_string(i));
                }
                if (comp.vars[i] < kVarianceFloor) {
                    bad.push_back("variance below floor at state " + sp.name(q) + " feature " +
                                  std::to_string(i));
                }
            }
        }
        if (std::abs(wsum - 1.0) > 1e-12) {
            bad.push_back("mixture weights at state " + sp.name(q) + " sum to " + std::to_string(wsum));
        }
    }
    return bad;
}

std::vector<double> assemble_z(const Matrix& frames, int t, std::span<const ParentRef> parents) {
    std::vector<double> z;
    z.reserve(parents.size() + 1);
    for (const ParentRef& p : parents) {
        const int tp = t - p.lag;
        z.push_back(tp >= 0 ? frames(tp, p.source) : 0.0);
    }
    z.push_back(1.0);
    return z;
}

namespace {

inline double component_logdensity(const DBMModel& m, int flat_state, const EmissionComponent& comp,
                                   int t, const Matrix& frames) {
    double lp = 0.0;
    for (int i = 0; i < m.dim; ++i) {
        const auto& parents = m.spec.parents[flat_state][i];
        const auto& b = comp.coeffs[i];
        double mean = b.back(); // intercept
        for (std::size_t k = 0; k < parents.size(); ++k) {
            const int tp = t - parents[k].lag;
            const double zv = tp >= 0 ? frames(tp, parents[k].source) : 0.0;
            mean += b[k] * zv;
        }
        const double v = comp.vars[i];
        const double r = frames(t, i) - mean;
        lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - r * r / (2.0 * v);
    }
    return lp;
}

} // namespace

int flat_state_offset(const DBMModel& m, int class_idx) {
    int off = 0;
    for (int c = 0; c < class_idx; ++c) off += m.chains[c].num_states;
    return off;
}

double emission_logprob_flat(const DBMModel& m, int flat_state, int t, const Matrix& frames) {
    double acc = kNegInf;
    for (const auto& comp : m.emissions[flat_state]) {
        if (comp.weight <= 0.0) continue;
        acc = logsumexp2(acc, std::log(comp.weight) + component_logdensity(m, flat_state, comp, t, frames));
    }
    return acc;
}

double emission_logprob(const DBMModel& m, int class_idx, int local_state, int t, const Matrix& frames) {
    return emission_logprob_flat(m, flat_state_offset(m, class_idx) + local_state, t, frames);
}

void emission_component_logprobs_flat(const DBMModel& m, int flat_state, int t, const Matrix& frames,
                                      std::span<double> out) {
    for (std::size_t k = 0; k < m.emissions[flat_state].size(); ++k) {
        const auto& comp = m.emissions[flat_state][k];
        out[k] = comp.weight > 0.0
                     ? std::log(comp.weight) + component_logdensity(m, flat_state, comp, t, frames)
                     : kNegInf;
    }
}

long long param_count(const DBMModel& m) {
    long long n = 0;
    for (const auto& ch : m.chains) {
        int init_nnz = 0;
        for (double p : ch.init) init_nnz += p > 0.0;
        n += std::max(0, init_nnz - 1);
        for (int s = 0; s < ch.num_states; ++s) {
            int row_nnz = 0;
            for (int t = 0; t < ch.num_states; ++t) {
                row_nnz += ch.trans[static_cast<std::size_t>(s) * ch.num_states + t] > 0.0;
            }
            n += std::max(0, row_nnz - 1);
        }
    }
    for (const auto& state : m.emissions) {
        n += static_cast<long long>(state.size()) - 1; // mixture weights
        for (const auto& comp : state) {
            for (const auto& row : comp.coeffs) n += static_cast<long long>(row.size());
            n += static_cast<long long>(comp.vars.size());
        }
    }
    return n;
}

void save_model(const DBMModel& m, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = "dbmnet-model-1";
    j["classes"] = m.classes;
    j["dim"] = m.dim;
    j["standardizer"] = {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}};
    j["chains"] = json::array();
    for (const auto& ch : m.chains) {
        j["chains"].push_back({{"num_states", ch.num_states}, {"trans", ch.trans}, {"init", ch.init}});
    }
    j["spec"] = json::object();
    j["spec"]["num_states"] = m.spec.num_states;
    j["spec"]["num_features"] = m.spec.num_features;
    json edges = json::array();
    for (int q = 0; q < m.spec.num_states; ++q)
        for (int i = 0; i < m.spec.num_features; ++i)
            for (const auto& p : m.spec.parents[q][i])
                edges.push_back({{"state", q}, {"feature", i}, {"lag", p.lag}, {"source", p.source}});
    j["spec"]["edges"] = edges;
    j["emissions"] = json::array();
    for (const auto& state : m.emissions) {
        json comps = json::array();
        for (const auto& comp : state) {
            comps.push_back({{"weight", comp.weight}, {"coeffs", comp.coeffs}, {"vars", comp.vars}});
        }
        j["emissions"].push_back(comps);
    }
    std::ofstream f(path);
    if (!f) throw DataError("cannot write model: " + path.string());
    f << j.dump() << '\n';
}

DBMModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open model: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model " + path.string() + ": " + e.what());
    }
    if (!j.contains("schema_version")) throw DataError("model file missing schema_version: " + path.string());
    DBMModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.dim = j.at("dim").get<int>();
    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    for (const auto& cj : j.at("chains")) {
        ChainTopology ch;
        ch.num_states = cj.at("num_states").get<int>();
        ch.trans = cj.at("trans").get<std::vector<double>>();
        ch.init = cj.at("init").get<std::vector<double>>();
        m.chains.push_back(std::move(ch));
    }
    int total_states = 0;
    for (const auto& ch : m.chains) total_states += ch.num_states;
    m.spec = DependencySpec::empty(j.at("spec").at("num_states").get<int>(),
                                   j.at("spec").at("num_features").get<int>());
    if (m.spec.num_states != total_states) throw DataError("model spec/topology state mismatch");
    for (const auto& e : j.at("spec").at("edges")) {
        m.spec.parents[e.at("state").get<int>()][e.at("feature").get<int>()].push_back(
            {e.at("lag").get<int>(), e.at("source").get<int>()});
    }
    for (const auto& state : j.at("emissions")) {
        std::vector<EmissionComponent> comps;
        for (const auto& cj : state) {
            EmissionComponent comp;
            comp.weight = cj.at("weight").get<double>();
            comp.coeffs = cj.at("coeffs").get<std::vector<std::vector<double>>>();
            comp.vars = cj.at("vars").get<std::vector<double>>();
            comps.push_back(std::move(comp));
        }
        m.emissions.push_back(std::move(comps));
    }
    const auto bad = m.validate();
    if (!bad.empty()) throw DataError("model fails validation: " + bad.front());
    return m;
}

} // namespace dbmnet
