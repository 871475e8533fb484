#include <doctest.h>

#include <cmath>
#include <random>

#include "dbmnet/harness.hpp"
#include "dbmnet/training.hpp"
#include "support/builders.hpp"
#include "support/enumeration.hpp"
#include "support/ref_hmm.hpp"

using namespace dbmnet;
using testsupport::random_frames;
using testsupport::random_toy_model;

namespace {

SequenceDataset wrap(const std::vector<Matrix>& frames, const std::string& label = "toy") {
    SequenceDataset ds;
    ds.classes = {label};
    ds.dim = frames.front().cols;
    for (const auto& f : frames) ds.sequences.push_back({f, label});
    return ds;
}

std::vector<Matrix> sample_from(const DBMModel& m, int n_seqs, int t, std::uint64_t seed) {
    // ancestral sampling from a single-class model (states then emissions)
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const ChainTopology& ch = m.chains[0];
    std::vector<Matrix> out;
    for (int k = 0; k < n_seqs; ++k) {
        Matrix f(t, m.dim);
        int state = 0;
        double u = unif(eng);
        for (int s = 0; s < ch.num_states; ++s) {
            u -= ch.init[s];
            if (u <= 0.0) {
                state = s;
                break;
            }
        }
        for (int tt = 0; tt < t; ++tt) {
            if (tt > 0) {
                double v = unif(eng);
                for (int s = 0; s < ch.num_states; ++s) {
                    v -= ch.trans[static_cast<std::size_t>(state) * ch.num_states + s];
                    if (v <= 0.0) {
                        state = s;
                        break;
                    }
                }
            }
            // pick a component
            double w = unif(eng);
            int comp = 0;
            for (std::size_t c = 0; c < m.emissions[state].size(); ++c) {
                w -= m.emissions[state][c].weight;
                if (w <= 0.0) {
                    comp = static_cast<int>(c);
                    break;
                }
            }
            for (int i = 0; i < m.dim; ++i) {
                const auto z = assemble_z(f, tt, m.spec.parents[state][i]);
                double mean = 0.0;
                for (std::size_t a = 0; a < z.size(); ++a) {
                    mean += m.emissions[state][comp].coeffs[i][a] * z[a];
                }
                f(tt, i) = mean + std::sqrt(m.emissions[state][comp].vars[i]) * normal(eng);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

} // namespace

TEST_SUITE("training") {

TEST_CASE("single-state single-component stats reduce to plain moment sums") {
    const DBMModel m = random_toy_model(1, 2, 1, 0, 1);
    const std::vector<Matrix> frames = {random_frames(30, 2, 2)};
    const SequenceDataset ds = wrap(frames);
    const auto stats = estep(m, ds);
    CHECK(stats.mass[0] == doctest::Approx(30.0).epsilon(1e-12));
    for (int i = 0; i < 2; ++i) {
        double sx = 0.0, sxx = 0.0;
        for (int t = 0; t < 30; ++t) {
            sx += frames[0](t, i);
            sxx += frames[0](t, i) * frames[0](t, i);
        }
        CHECK(stats.xz[0][0][i][0] == doctest::Approx(sx).epsilon(1e-12));
        CHECK(stats.xx[0][0][i] == doctest::Approx(sxx).epsilon(1e-12));
        CHECK(stats.zz[0][0][i][0] == doctest::Approx(30.0).epsilon(1e-12));
    }
}

TEST_CASE("stats are additive over dataset shards") {
    const DBMModel m = random_toy_model(2, 2, 2, 1, 5);
    const std::vector<Matrix> fa = {random_frames(15, 2, 6), random_frames(11, 2, 7)};
    const std::vector<Matrix> fb = {random_frames(9, 2, 8)};
    std::vector<Matrix> all = fa;
    all.insert(all.end(), fb.begin(), fb.end());

    auto sa = estep(m, wrap(fa));
    const auto sb = estep(m, wrap(fb));
    const auto sall = estep(m, wrap(all));
    sa.add(sb);
    for (std::size_t k = 0; k < sall.mass.size(); ++k) {
        CHECK(sa.mass[k] == doctest::Approx(sall.mass[k]).epsilon(1e-10));
    }
    for (int q = 0; q < sall.num_states; ++q)
        for (int c = 0; c < sall.n_mix; ++c)
            for (int i = 0; i < 2; ++i) {
                for (std::size_t a = 0; a < sall.zz[q][c][i].size(); ++a) {
                    CHECK(sa.zz[q][c][i][a] == doctest::Approx(sall.zz[q][c][i][a]).epsilon(1e-10));
                }
                CHECK(sa.xx[q][c][i] == doctest::Approx(sall.xx[q][c][i]).epsilon(1e-10));
            }
    CHECK(sa.total_loglik == doctest::Approx(sall.total_loglik).epsilon(1e-10));
}

TEST_CASE("estep gamma-weighted sums match the enumeration oracle's posteriors") {
    const DBMModel m = random_toy_model(2, 1, 1, 1, 9);
    const Matrix f = random_frames(6, 1, 10);
    const auto stats = estep(m, wrap({f}));
    const auto oracle = testsupport::enumerate_paths(m, 0, f);

    // single component: responsibilities equal gamma
    for (int q = 0; q < 2; ++q) {
        double mass = 0.0, sx = 0.0;
        for (int t = 0; t < 6; ++t) {
            mass += oracle.gamma(t, q);
            // z for feature 0 under state q
            const auto z = assemble_z(f, t, m.spec.parents[q][0]);
            (void)z;
            sx += oracle.gamma(t, q) * f(t, 0);
        }
        CHECK(stats.mass[q] == doctest::Approx(mass).epsilon(1e-9));
        CHECK(stats.xz[q][0][0].back() == doctest::Approx(sx).epsilon(1e-9)); // intercept slot
    }
}

TEST_CASE("estep propagates thread count without changing results") {
    const DBMModel m = random_toy_model(2, 2, 2, 1, 11);
    std::vector<Matrix> frames;
    for (int k = 0; k < 8; ++k) frames.push_back(random_frames(12, 2, 20 + k));
    const SequenceDataset ds = wrap(frames);
    const auto s1 = estep(m, ds, 1);
    const auto s4 = estep(m, ds, 4);
    CHECK(s1.total_loglik == s4.total_loglik);
    CHECK(s1.mass == s4.mass);
}

TEST_CASE("mstep: intercept-only single component is the weighted Gaussian MLE") {
    const DBMModel m = random_toy_model(1, 1, 1, 0, 13);
    const Matrix f = random_frames(400, 1, 14);
    const SequenceDataset ds = wrap({f});
    const auto stats = estep(m, ds);
    TrainConfig cfg;
    const DBMModel next = mstep(m, stats, cfg);
    double mean = 0.0, var = 0.0;
    for (int t = 0; t < 400; ++t) mean += f(t, 0);
    mean /= 400.0;
    for (int t = 0; t < 400; ++t) var += (f(t, 0) - mean) * (f(t, 0) - mean);
    var /= 400.0;
    // ridge shrinks the intercept by 1/(1+eps)
    CHECK(next.emissions[0][0].coeffs[0][0] == doctest::Approx(mean / (1.0 + cfg.ridge)).epsilon(1e-9));
    CHECK(next.emissions[0][0].vars[0] == doctest::Approx(var).epsilon(1e-4));
}

TEST_CASE("mstep recovers a planted regression") {
    // x = 0.7 z + e, var(e) = 0.1, z = previous value of feature 1
    DBMModel gen = random_toy_model(1, 2, 1, 0, 15);
    gen.spec.parents[0][0] = {{1, 1}};
    gen.emissions[0][0].coeffs[0] = {0.7, 0.0};
    gen.emissions[0][0].coeffs[1] = {0.0};
    gen.emissions[0][0].vars = {0.1, 1.0};
    const std::vector<Matrix> frames = sample_from(gen, 40, 200, 16);
    const auto stats = estep(gen, wrap(frames));
    TrainConfig cfg;
    const DBMModel next = mstep(gen, stats, cfg);
    CHECK(next.emissions[0][0].coeffs[0][0] == doctest::Approx(0.7).epsilon(0.03));
    CHECK(std::abs(next.emissions[0][0].coeffs[0][1]) < 0.02);
    CHECK(next.emissions[0][0].vars[0] == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("mstep: a parent that is always padded collapses to the ridge solution") {
    DBMModel m = random_toy_model(1, 1, 1, 0, 17);
    m.spec.parents[0][0] = {{5, 0}}; // lag 5 on 3-frame sequences: always 0-padded
    m.emissions[0][0].coeffs[0] = {0.4, 0.2};
    std::vector<Matrix> frames;
    for (int k = 0; k < 50; ++k) frames.push_back(random_frames(3, 1, 30 + k));
    const auto stats = estep(m, wrap(frames));
    TrainConfig cfg;
    const DBMModel next = mstep(m, stats, cfg);
    // the padded column is identically zero, so its coefficient is pulled to 0
    CHECK(next.emissions[0][0].coeffs[0][0] == doctest::Approx(0.0));
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames)
        for (int t = 0; t < f.rows; ++t) {
            mean += f(t, 0);
            ++n;
        }
    mean /= static_cast<double>(n);
    for (const auto& f : frames)
        for (int t = 0; t < f.rows; ++t) var += (f(t, 0) - mean) * (f(t, 0) - mean);
    var /= static_cast<double>(n);
    CHECK(next.emissions[0][0].vars[0] == doctest::Approx(var).epsilon(1e-3));
}

TEST_CASE("mstep preserves structural transition zeros") {
    const DBMModel m = random_toy_model(3, 1, 1, 0, 18, /*ergodic=*/false);
    std::vector<Matrix> frames;
    for (int k = 0; k < 10; ++k) frames.push_back(random_frames(12, 1, 50 + k));
    const auto stats = estep(m, wrap(frames));
    TrainConfig cfg;
    const DBMModel next = mstep(m, stats, cfg);
    const int n = 3;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (m.chains[0].trans[static_cast<std::size_t>(a) * n + b] == 0.0) {
                CHECK(next.chains[0].trans[static_cast<std::size_t>(a) * n + b] == 0.0);
            }
        }
    CHECK(next.validate().empty());
}

TEST_CASE("M-step rows are local optima of the expected complete-data log-likelihood") {
    const DBMModel gen = random_toy_model(2, 2, 2, 1, 19);
    const std::vector<Matrix> frames = sample_from(gen, 10, 40, 20);
    const auto stats = estep(gen, wrap(frames));
    TrainConfig cfg;
    const DBMModel fitted = mstep(gen, stats, cfg);
    const double base = expected_emission_loglik(stats, fitted);
    std::mt19937_64 eng(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        DBMModel bumped = fitted;
        for (auto& state : bumped.emissions)
            for (auto& comp : state)
                for (auto& row : comp.coeffs) {
                    std::vector<double> dir(row.size());
                    double norm = 0.0;
                    for (auto& d : dir) {
                        d = normal(eng);
                        norm += d * d;
                    }
                    norm = std::sqrt(norm);
                    for (std::size_t a = 0; a < row.size(); ++a) row[a] += 1e-3 * dir[a] / norm;
                }
        CHECK(expected_emission_loglik(stats, bumped) <= base + 1e-9 * std::abs(base));
    }
}

TEST_CASE("em_fit: an already-converged model returns promptly") {
    const DBMModel gen = random_toy_model(1, 1, 1, 0, 23);
    const std::vector<Matrix> frames = sample_from(gen, 20, 50, 24);
    const SequenceDataset ds = wrap(frames);
    TrainConfig cfg;
    cfg.max_iters = 50;
    const FitResult first = em_fit(gen, ds, cfg);
    const FitResult again = em_fit(first.model, ds, cfg);
    CHECK(again.traces[0].size() <= 2);
}

TEST_CASE("EM trace is monotone within the floor/ridge slack") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const DBMModel gen = random_toy_model(2, 2, 1 + static_cast<int>(seed % 2), 1, 1000 + seed);
        const std::vector<Matrix> frames = sample_from(gen, 12, 30, 2000 + seed);
        const SequenceDataset ds = wrap(frames);
        DBMModel init = random_toy_model(2, 2, 1 + static_cast<int>(seed % 2), 1, 3000 + seed);
        init.spec = gen.spec;
        // re-align coefficient rows with the generator's parent structure
        for (int q = 0; q < 2; ++q)
            for (auto& comp : init.emissions[q])
                for (int i = 0; i < 2; ++i) {
                    comp.coeffs[i].assign(gen.spec.parents[q][i].size() + 1, 0.0);
                    comp.coeffs[i].back() = 0.1 * static_cast<double>(q);
                }
        TrainConfig cfg;
        cfg.max_iters = 15;
        cfg.rel_tol = 0.0;
        const FitResult fit = em_fit(init, ds, cfg);
        const auto& tr = fit.traces[0];
        REQUIRE(tr.size() >= 2);
        std::size_t frames_total = 0;
        for (const auto& f : frames) frames_total += static_cast<std::size_t>(f.rows);
        for (std::size_t k = 1; k < tr.size(); ++k) {
            CHECK(tr[k].total_loglik >=
                  tr[k - 1].total_loglik - 1e-6 * static_cast<double>(frames_total));
        }
    }
}

TEST_CASE("multi-seed em_fit lands within a narrow per-frame loglik band") {
    const DBMModel gen = random_toy_model(2, 2, 1, 1, 31);
    const std::vector<Matrix> frames = sample_from(gen, 30, 60, 32);
    const SequenceDataset ds = wrap(frames);
    std::vector<double> finals;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig cfg;
        cfg.max_iters = 60;
        cfg.rel_tol = 1e-8;
        cfg.seed = seed;
        cfg.states_per_class = 2;
        const FitResult fit = init_bootstrap(ds, cfg);
        // graft the true structure and retrain
        DBMModel warm = graft_dependencies(fit.model, gen.spec);
        const FitResult full = em_fit(warm, ds, cfg);
        const auto& tr = full.traces[0];
        finals.push_back(tr.back().per_frame);
    }
    const double spread = *std::max_element(finals.begin(), finals.end()) -
                          *std::min_element(finals.begin(), finals.end());
    CHECK(spread < 0.05);
}

TEST_CASE("init_bootstrap: 1 state, 1 component is the global-moment model") {
    std::vector<Matrix> frames = {random_frames(200, 2, 41)};
    const SequenceDataset ds = wrap(frames);
    TrainConfig cfg;
    cfg.states_per_class = 1;
    cfg.mixtures = 1;
    cfg.max_iters = 1;
    const FitResult fit = init_bootstrap(ds, cfg);
    double mean = 0.0;
    for (int t = 0; t < 200; ++t) mean += frames[0](t, 0);
    mean /= 200.0;
    CHECK(fit.model.emissions[0][0].coeffs[0][0] == doctest::Approx(mean).epsilon(1e-3));
}

TEST_CASE("init_bootstrap recovers clear phase means with 3 states") {
    // three-phase sequences: means -2, 0, +2 on the single feature
    std::mt19937_64 eng(51);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> frames;
    for (int k = 0; k < 30; ++k) {
        Matrix f(30, 1);
        for (int t = 0; t < 30; ++t) {
            const double mu = t < 10 ? -2.0 : (t < 20 ? 0.0 : 2.0);
            f(t, 0) = mu + 0.3 * normal(eng);
        }
        frames.push_back(std::move(f));
    }
    const SequenceDataset ds = wrap(frames);
    TrainConfig cfg;
    cfg.states_per_class = 3;
    cfg.mixtures = 1;
    cfg.max_iters = 30;
    const FitResult fit = init_bootstrap(ds, cfg);
    CHECK(fit.model.emissions[0][0].coeffs[0][0] == doctest::Approx(-2.0).epsilon(0.1));
    CHECK(fit.model.emissions[1][0].coeffs[0][0] == doctest::Approx(0.0).epsilon(0.2));
    CHECK(fit.model.emissions[2][0].coeffs[0][0] == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("init_bootstrap handles sequences shorter than the state count") {
    std::vector<Matrix> frames = {random_frames(2, 1, 61), random_frames(3, 1, 62),
                                  random_frames(2, 1, 63)};
    const SequenceDataset ds = wrap(frames);
    TrainConfig cfg;
    cfg.states_per_class = 4;
    cfg.mixtures = 1;
    cfg.max_iters = 3;
    const FitResult fit = init_bootstrap(ds, cfg);
    CHECK(fit.model.validate().empty());
}

TEST_CASE("init_bootstrap is deterministic for a fixed seed") {
    const DBMModel gen = random_toy_model(2, 2, 2, 0, 71);
    const std::vector<Matrix> frames = sample_from(gen, 15, 25, 72);
    const SequenceDataset ds = wrap(frames);
    TrainConfig cfg;
    cfg.states_per_class = 2;
    cfg.mixtures = 2;
    cfg.max_iters = 10;
    cfg.seed = 99;
    const FitResult a = init_bootstrap(ds, cfg);
    const FitResult b = init_bootstrap(ds, cfg);
    for (std::size_t q = 0; q < a.model.emissions.size(); ++q)
        for (std::size_t k = 0; k < a.model.emissions[q].size(); ++k) {
            CHECK(a.model.emissions[q][k].coeffs == b.model.emissions[q][k].coeffs);
            CHECK(a.model.emissions[q][k].vars == b.model.emissions[q][k].vars);
        }
}

TEST_CASE("graft_dependencies keeps the likelihood and zeroes new coefficients") {
    const DBMModel gen = random_toy_model(2, 2, 2, 0, 81);
    const std::vector<Matrix> frames = sample_from(gen, 5, 20, 82);
    DependencySpec spec = DependencySpec::empty(2, 2);
    spec.parents[0][0] = {{1, 1}, {2, 0}};
    spec.parents[1][1] = {{1, 0}};
    const DBMModel grafted = graft_dependencies(gen, spec);
    CHECK(grafted.validate().empty());
    for (const auto& f : frames) {
        CHECK(forward_loglik(grafted, 0, f) == doctest::Approx(forward_loglik(gen, 0, f)).epsilon(1e-12));
    }
}

TEST_CASE("K=0 training trace matches the scaled-domain reference HMM to 1e-9") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int n = 2, d = 2, mix = 2;
        const DBMModel gen = random_toy_model(n, d, mix, 0, 9000 + seed);
        const std::vector<Matrix> frames = sample_from(gen, 6, 25, 9100 + seed);
        const SequenceDataset ds = wrap(frames);

        DBMModel init = random_toy_model(n, d, mix, 0, 9200 + seed);
        refhmm::RefHmm ref;
        ref.n = n;
        ref.d = d;
        ref.m = mix;
        ref.init = init.chains[0].init;
        ref.trans = init.chains[0].trans;
        for (int q = 0; q < n; ++q) {
            for (int k = 0; k < mix; ++k) {
                ref.weight.push_back(init.emissions[q][k].weight);
                for (int i = 0; i < d; ++i) {
                    ref.mean.push_back(init.emissions[q][k].coeffs[i][0]);
                    ref.var.push_back(init.emissions[q][k].vars[i]);
                }
            }
        }
        TrainConfig cfg;
        cfg.max_iters = 12;
        cfg.rel_tol = 0.0;
        const FitResult fit = em_fit(init, ds, cfg);
        const std::vector<double> ref_trace = ref.fit_trace(frames, 12);
        REQUIRE(fit.traces[0].size() == ref_trace.size());
        for (std::size_t k = 0; k < ref_trace.size(); ++k) {
            CHECK(fit.traces[0][k].total_loglik ==
                  doctest::Approx(ref_trace[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("adding oracle-grade parents and retraining never lowers training loglik") {
    // planted recovery world, single class: bootstrap, graft the known-true
    // structure, retrain; EM from a warm start cannot lose likelihood
    GeneratorSpec world = recovery_world();
    world.sequences_per_class = 40;
    auto [ds, gt] = generate(world, 1234);
    SequenceDataset only_a;
    only_a.classes = {"a"};
    only_a.dim = ds.dim;
    for (const auto& s : ds.sequences)
        if (s.label == "a") only_a.sequences.push_back(s);

    TrainConfig cfg;
    cfg.states_per_class = 1;
    cfg.max_iters = 40;
    const FitResult boot = init_bootstrap(only_a, cfg);
    const auto base_stats = estep(boot.model, only_a);

    DependencySpec sub = DependencySpec::empty(1, ds.dim);
    sub.parents[0] = gt.spec.parents[0]; // class a's block
    const FitResult re = em_fit(graft_dependencies(boot.model, sub), only_a, cfg);
    const auto re_stats = estep(re.model, only_a);
    const double per_frame_gain = (re_stats.total_loglik - base_stats.total_loglik) /
                                  static_cast<double>(base_stats.total_frames);
    CHECK(per_frame_gain >= -1e-6);
    CHECK(per_frame_gain > 0.08); // the planted dependency is real and strong
}

} // TEST_SUITE
