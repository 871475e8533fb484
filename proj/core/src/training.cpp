#include "dbmnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace dbmnet {

SufficientStats SufficientStats::zeros(const DBMModel& m) {
    SufficientStats s;
    s.dim = m.dim;
    const StateSpace sp = m.space();
    s.num_states = sp.total();
    s.n_mix = m.mixtures();
    s.mass.assign(static_cast<std::size_t>(s.num_states) * s.n_mix, 0.0);
    s.zz.assign(s.num_states, {});
    s.xz.assign(s.num_states, {});
    s.xx.assign(s.num_states, {});
    for (int q = 0; q < s.num_states; ++q) {
        s.zz[q].assign(s.n_mix, std::vector<std::vector<double>>(s.dim));
        s.xz[q].assign(s.n_mix, std::vector<std::vector<double>>(s.dim));
        s.xx[q].assign(s.n_mix, std::vector<double>(s.dim, 0.0));
        for (int k = 0; k < s.n_mix; ++k) {
            for (int i = 0; i < s.dim; ++i) {
                const std::size_t p = m.spec.parents[q][i].size() + 1;
                s.zz[q][k][i].assign(p * p, 0.0);
                s.xz[q][k][i].assign(p, 0.0);
            }
        }
    }
    for (const auto& ch : m.chains) {
        s.trans_counts.emplace_back(static_cast<std::size_t>(ch.num_states) * ch.num_states, 0.0);
        s.init_counts.emplace_back(ch.num_states, 0.0);
    }
    return s;
}

void SufficientStats::add(const SufficientStats& o) {
    for (std::size_t k = 0; k < mass.size(); ++k) mass[k] += o.mass[k];
    for (int q = 0; q < num_states; ++q) {
        for (int k = 0; k < n_mix; ++k) {
            for (int i = 0; i < dim; ++i) {
                for (std::size_t a = 0; a < zz[q][k][i].size(); ++a) zz[q][k][i][a] += o.zz[q][k][i][a];
                for (std::size_t a = 0; a < xz[q][k][i].size(); ++a) xz[q][k][i][a] += o.xz[q][k][i][a];
                xx[q][k][i] += o.xx[q][k][i];
            }
        }
    }
    for (std::size_t c = 0; c < trans_counts.size(); ++c) {
        for (std::size_t k = 0; k < trans_counts[c].size(); ++k) trans_counts[c][k] += o.trans_counts[c][k];
        for (std::size_t k = 0; k < init_counts[c].size(); ++k) init_counts[c][k] += o.init_counts[c][k];
    }
    total_loglik += o.total_loglik;
    total_frames += o.total_frames;
}

SufficientStats estep(const DBMModel& m, const SequenceDataset& ds, int threads) {
    std::vector<SufficientStats> per_seq(ds.sequences.size());
    parallel_for(ds.sequences.size(), threads, [&](std::size_t k) {
        const Sequence& seq = ds.sequences[k];
        const int c = ds.class_index(seq.label);
        const int off = flat_state_offset(m, c);
        const int n = m.chains[c].num_states;
        const int n_mix = m.mixtures();
        SufficientStats s = SufficientStats::zeros(m);

        PosteriorSet ps;
        try {
            ps = forward_backward(m, c, seq.frames);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (sequence " + std::to_string(k) + ")");
        }
        s.total_loglik = ps.loglik;
        s.total_frames = static_cast<std::size_t>(seq.frames.rows);

        for (int s0 = 0; s0 < n; ++s0) s.init_counts[c][s0] += ps.gamma(0, s0);
        for (int t = 0; t + 1 < seq.frames.rows; ++t)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    s.trans_counts[c][static_cast<std::size_t>(a) * n + b] += ps.xi_at(t, a, b, n);

        for (int t = 0; t < seq.frames.rows; ++t) {
            for (int ls = 0; ls < n; ++ls) {
                const int q = off + ls;
                if (ps.gamma(t, ls) == 0.0) continue;
                for (int i = 0; i < m.dim; ++i) {
                    const auto& parents = m.spec.parents[q][i];
                    const std::size_t p = parents.size() + 1;
                    const std::vector<double> z = assemble_z(seq.frames, t, parents);
                    const double x = seq.frames(t, i);
                    for (int mx = 0; mx < n_mix; ++mx) {
                        const double g = ps.gm_at(t, ls, mx, n, n_mix);
                        if (g == 0.0) continue;
                        auto& zz = s.zz[q][mx][i];
                        auto& xz = s.xz[q][mx][i];
                        for (std::size_t a = 0; a < p; ++a) {
                            xz[a] += g * x * z[a];
                            for (std::size_t b = 0; b < p; ++b) zz[a * p + b] += g * z[a] * z[b];
                        }
                        s.xx[q][mx][i] += g * x * x;
                    }
                }
                for (int mx = 0; mx < n_mix; ++mx) {
                    s.mass[static_cast<std::size_t>(q) * n_mix + mx] += ps.gm_at(t, ls, mx, n, n_mix);
                }
            }
        }
        per_seq[k] = std::move(s);
    });
    // fixed-order reduction keeps results independent of the thread count
    SufficientStats total = SufficientStats::zeros(m);
    for (const auto& s : per_seq) total.add(s);
    return total;
}

namespace {

void solve_emission_row(const std::vector<double>& zz, const std::vector<double>& xz, double xx,
                        double mass, double ridge, double floor, std::vector<double>& coeffs,
                        double& var) {
    const int p = static_cast<int>(xz.size());
    Eigen::MatrixXd A(p, p);
    Eigen::VectorXd b(p);
    for (int a = 0; a < p; ++a) {
        b(a) = xz[a];
        for (int c = 0; c < p; ++c) A(a, c) = zz[static_cast<std::size_t>(a) * p + c];
        A(a, a) += ridge * mass;
    }
    const Eigen::VectorXd sol = A.ldlt().solve(b);
    coeffs.resize(p);
    for (int a = 0; a < p; ++a) coeffs[a] = sol(a);
    // weighted mean squared residual: (xx - 2 b.xz + b' zz b) / mass
    double quad = 0.0;
    for (int a = 0; a < p; ++a) {
        quad -= 2.0 * sol(a) * xz[a];
        for (int c = 0; c < p; ++c) quad += sol(a) * zz[static_cast<std::size_t>(a) * p + c] * sol(c);
    }
    var = std::max((xx + quad) / mass, floor);
}

} // namespace

DBMModel mstep(const DBMModel& m, const SufficientStats& stats, const TrainConfig& cfg) {
    DBMModel out = m;
    const StateSpace sp = m.space();
    const int n_mix = m.mixtures();

    for (std::size_t c = 0; c < m.chains.size(); ++c) {
        ChainTopology& ch = out.chains[c];
        const int n = ch.num_states;
        for (int a = 0; a < n; ++a) {
            double row = 0.0;
            for (int b = 0; b < n; ++b) row += stats.trans_counts[c][static_cast<std::size_t>(a) * n + b];
            if (row <= 0.0) continue; // unvisited state keeps its previous row
            for (int b = 0; b < n; ++b) {
                // zeros of the topology stay exactly zero (xi is zero there)
                ch.trans[static_cast<std::size_t>(a) * n + b] =
                    stats.trans_counts[c][static_cast<std::size_t>(a) * n + b] / row;
            }
        }
        double isum = 0.0;
        for (int s0 = 0; s0 < n; ++s0) isum += stats.init_counts[c][s0];
        if (isum > 0.0) {
            for (int s0 = 0; s0 < n; ++s0) ch.init[s0] = stats.init_counts[c][s0] / isum;
        }
    }

    for (int q = 0; q < sp.total(); ++q) {
        double state_mass = 0.0;
        for (int k = 0; k < n_mix; ++k) state_mass += stats.mass[static_cast<std::size_t>(q) * n_mix + k];

        // component death: reseed from the heaviest sibling, perturbed
        int heaviest = 0;
        for (int k = 1; k < n_mix; ++k) {
            if (stats.mass[static_cast<std::size_t>(q) * n_mix + k] >
                stats.mass[static_cast<std::size_t>(q) * n_mix + heaviest]) {
                heaviest = k;
            }
        }
        for (int k = 0; k < n_mix; ++k) {
            const double mk = stats.mass[static_cast<std::size_t>(q) * n_mix + k];
            EmissionComponent& comp = out.emissions[q][k];
            if (mk < 1e-8) {
                if (state_mass <= 0.0) continue; // state never visited: keep old params
                warn("state " + sp.name(q) + " component " + std::to_string(k) +
                     " lost all responsibility; reseeding from its heaviest sibling");
                const double mh = stats.mass[static_cast<std::size_t>(q) * n_mix + heaviest];
                for (int i = 0; i < m.dim; ++i) {
                    solve_emission_row(stats.zz[q][heaviest][i], stats.xz[q][heaviest][i],
                                       stats.xx[q][heaviest][i], mh, cfg.ridge, cfg.variance_floor,
                                       comp.coeffs[i], comp.vars[i]);
                    const double sigma = std::sqrt(comp.vars[i]);
                    comp.coeffs[i].back() += (k % 2 == 0 ? 0.5 : -0.5) * sigma;
                }
                comp.weight = 1e-3;
                continue;
            }
            comp.weight = mk / state_mass;
            for (int i = 0; i < m.dim; ++i) {
                solve_emission_row(stats.zz[q][k][i], stats.xz[q][k][i], stats.xx[q][k][i], mk, cfg.ridge,
                                   cfg.variance_floor, comp.coeffs[i], comp.vars[i]);
            }
        }
        // renormalize in case reseeded weights were injected
        double wsum = 0.0;
        for (int k = 0; k < n_mix; ++k) wsum += out.emissions[q][k].weight;
        if (wsum > 0.0) {
            for (int k = 0; k < n_mix; ++k) out.emissions[q][k].weight /= wsum;
        }
    }
    return out;
}

namespace {

SequenceDataset class_subset(const SequenceDataset& ds, const std::string& label) {
    SequenceDataset out;
    out.classes = ds.classes;
    out.dim = ds.dim;
    for (const auto& s : ds.sequences) {
        if (s.label == label) out.sequences.push_back(s);
    }
    return out;
}

} // namespace

FitResult em_fit(const DBMModel& init, const SequenceDataset& ds, const TrainConfig& cfg) {
    FitResult res;
    res.model = init;
    res.traces.assign(init.classes.size(), {});

    // Classes train independently: iterate each class's EM on its own
    // sequences, holding the other classes' parameters fixed.
    for (std::size_t c = 0; c < init.classes.size(); ++c) {
        const SequenceDataset sub = class_subset(ds, init.classes[c]);
        if (sub.sequences.empty()) {
            throw DataError("em_fit: no training sequences for class " + init.classes[c]);
        }
        double prev = kNegInf;
        for (int it = 0; it < cfg.max_iters; ++it) {
            const SufficientStats stats = estep(res.model, sub, cfg.threads);
            res.traces[c].push_back({it, stats.total_loglik,
                                     stats.total_loglik / static_cast<double>(stats.total_frames)});
            res.model = mstep(res.model, stats, cfg);
            if (prev != kNegInf) {
                const double rel = (stats.total_loglik - prev) / std::max(1.0, std::abs(prev));
                if (rel < cfg.rel_tol) break;
            }
            prev = stats.total_loglik;
        }
    }
    return res;
}

FitResult init_bootstrap(const SequenceDataset& ds, const TrainConfig& cfg) {
    if (ds.sequences.empty()) throw DataError("init_bootstrap: empty dataset");
    DBMModel m;
    m.classes = ds.classes;
    m.dim = ds.dim;
    m.standardizer = Standardizer::identity(ds.dim);
    const int n = cfg.states_per_class;
    for (std::size_t c = 0; c < ds.classes.size(); ++c) {
        m.chains.push_back(ChainTopology::left_to_right(n, cfg.self_loop));
    }
    const StateSpace sp = m.space();
    m.spec = DependencySpec::empty(sp.total(), ds.dim);
    for (int q = 0; q < sp.total(); ++q) m.spec.state_names.push_back(sp.name(q));

    // uniform segmentation moments per (class, state)
    std::vector<std::vector<double>> mean(sp.total(), std::vector<double>(ds.dim, 0.0));
    std::vector<std::vector<double>> sq(sp.total(), std::vector<double>(ds.dim, 0.0));
    std::vector<double> count(sp.total(), 0.0);
    for (const auto& seq : ds.sequences) {
        const int c = ds.class_index(seq.label);
        const int T = seq.frames.rows;
        for (int t = 0; t < T; ++t) {
            // rounded proportional segmentation; short sequences visit a prefix
            const int local = std::min(n - 1, static_cast<int>((static_cast<long long>(t) * n) / T));
            const int q = sp.flat(c, local);
            count[q] += 1.0;
            for (int i = 0; i < ds.dim; ++i) {
                mean[q][i] += seq.frames(t, i);
                sq[q][i] += seq.frames(t, i) * seq.frames(t, i);
            }
        }
    }
    // global fallback for states that received no frames
    std::vector<double> gmean(ds.dim, 0.0), gsq(ds.dim, 0.0);
    double gcount = 0.0;
    for (int q = 0; q < sp.total(); ++q) {
        gcount += count[q];
        for (int i = 0; i < ds.dim; ++i) {
            gmean[i] += mean[q][i];
            gsq[i] += sq[q][i];
        }
    }
    for (int i = 0; i < ds.dim; ++i) {
        gmean[i] /= gcount;
        gsq[i] = std::max(gsq[i] / gcount - gmean[i] * gmean[i], cfg.variance_floor);
    }

    for (int q = 0; q < sp.total(); ++q) {
        std::vector<double> mu(ds.dim), var(ds.dim);
        if (count[q] > 0.0) {
            for (int i = 0; i < ds.dim; ++i) {
                mu[i] = mean[q][i] / count[q];
                var[i] = std::max(sq[q][i] / count[q] - mu[i] * mu[i], cfg.variance_floor);
            }
        } else {
            mu = gmean;
            var = gsq;
        }
        std::vector<EmissionComponent> comps;
        for (int k = 0; k < cfg.mixtures; ++k) {
            EmissionComponent comp;
            comp.weight = 1.0 / cfg.mixtures;
            // split components along +/- 0.5 sigma offsets
            const double offset =
                cfg.mixtures == 1 ? 0.0 : 0.5 * (2.0 * k - (cfg.mixtures - 1)) / (cfg.mixtures - 1);
            comp.coeffs.resize(ds.dim);
            comp.vars.resize(ds.dim);
            for (int i = 0; i < ds.dim; ++i) {
                comp.coeffs[i] = {mu[i] + offset * std::sqrt(var[i])};
                comp.vars[i] = var[i];
            }
            comps.push_back(std::move(comp));
        }
        m.emissions.push_back(std::move(comps));
    }
    return em_fit(m, ds, cfg);
}

DBMModel graft_dependencies(const DBMModel& m, const DependencySpec& spec) {
    const StateSpace sp = m.space();
    if (spec.num_states != sp.total() || spec.num_features != m.dim) {
        throw DataError("graft_dependencies: spec shape does not match the model");
    }
    DBMModel out = m;
    out.spec = spec;
    if (out.spec.state_names.empty()) {
        for (int q = 0; q < sp.total(); ++q) out.spec.state_names.push_back(sp.name(q));
    }
    for (int q = 0; q < sp.total(); ++q) {
        for (auto& comp : out.emissions[q]) {
            for (int i = 0; i < m.dim; ++i) {
                const double intercept = comp.coeffs[i].back();
                comp.coeffs[i].assign(spec.parents[q][i].size(), 0.0);
                comp.coeffs[i].push_back(intercept);
            }
        }
    }
    return out;
}

double expected_emission_loglik(const SufficientStats& stats, const DBMModel& m) {
    double total = 0.0;
    const int n_mix = m.mixtures();
    for (int q = 0; q < stats.num_states; ++q) {
        for (int k = 0; k < n_mix; ++k) {
            const double mass = stats.mass[static_cast<std::size_t>(q) * n_mix + k];
            if (mass <= 0.0) continue;
            const EmissionComponent& comp = m.emissions[q][k];
            for (int i = 0; i < stats.dim; ++i) {
                const auto& b = comp.coeffs[i];
                const std::size_t p = b.size();
                double quad = stats.xx[q][k][i];
                for (std::size_t a = 0; a < p; ++a) {
                    quad -= 2.0 * b[a] * stats.xz[q][k][i][a];
                    for (std::size_t c2 = 0; c2 < p; ++c2) {
                        quad += b[a] * stats.zz[q][k][i][a * p + c2] * b[c2];
                    }
                }
                const double v = comp.vars[i];
                total += -0.5 * mass * std::log(2.0 * std::numbers::pi * v) - quad / (2.0 * v);
            }
        }
    }
    return total;
}

} // namespace dbmnet
