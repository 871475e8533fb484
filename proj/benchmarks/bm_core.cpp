#include <benchmark/benchmark.h>

#include <random>

#include "dbmnet/harness.hpp"

using namespace dbmnet;

namespace {

DBMModel bench_model(int states, int dim, int parents, std::uint64_t seed) {
    DBMModel m;
    m.classes = {"bench"};
    m.dim = dim;
    m.standardizer = Standardizer::identity(dim);
    m.chains.push_back(ChainTopology::ergodic_uniform(states));
    m.spec = DependencySpec::empty(states, dim);
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int max_lag = std::max(parents, 1);
    for (int q = 0; q < states; ++q)
        for (int i = 0; i < dim; ++i)
            for (int k = 0; k < parents; ++k)
                m.spec.parents[q][i].push_back({1 + k % max_lag, (i + k) % dim});
    for (int q = 0; q < states; ++q) {
        EmissionComponent c;
        c.weight = 1.0;
        c.coeffs.resize(dim);
        c.vars.assign(dim, 1.0);
        for (int i = 0; i < dim; ++i) {
            c.coeffs[i].assign(m.spec.parents[q][i].size() + 1, 0.0);
            for (auto& v : c.coeffs[i]) v = 0.05 * normal(eng);
        }
        m.emissions.push_back({c});
    }
    return m;
}

Matrix bench_frames(int t, int dim, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix f(t, dim);
    for (double& v : f.data) v = normal(eng);
    return f;
}

void BM_forward_states(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const DBMModel m = bench_model(n, 1, 0, 1);
    const Matrix f = bench_frames(1000, 1, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward_loglik(m, 0, f));
    state.SetComplexityN(n);
}
BENCHMARK(BM_forward_states)->RangeMultiplier(2)->Range(2, 32)->Complexity();

void BM_forward_frames(benchmark::State& state) {
    const int t = static_cast<int>(state.range(0));
    const DBMModel m = bench_model(4, 1, 0, 1);
    const Matrix f = bench_frames(t, 1, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward_loglik(m, 0, f));
    state.SetComplexityN(t);
}
BENCHMARK(BM_forward_frames)->RangeMultiplier(2)->Range(256, 4096)->Complexity();

void BM_forward_parents(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    const DBMModel m = bench_model(2, 16, k, 1);
    const Matrix f = bench_frames(800, 16, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward_loglik(m, 0, f));
    state.SetComplexityN(k);
}
BENCHMARK(BM_forward_parents)->RangeMultiplier(2)->Range(8, 64)->Complexity();

void BM_estep_sequence(benchmark::State& state) {
    const DBMModel m = bench_model(3, 8, 2, 3);
    SequenceDataset ds;
    ds.classes = {"bench"};
    ds.dim = 8;
    ds.sequences.push_back({bench_frames(400, 8, 4), "bench"});
    for (auto _ : state) {
        auto stats = estep(m, ds);
        benchmark::DoNotOptimize(stats.total_loglik);
    }
}
BENCHMARK(BM_estep_sequence);

void BM_mistats_cell(benchmark::State& state) {
    std::mt19937_64 eng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(20000), z(20000);
    for (int i = 0; i < 20000; ++i) {
        z[i] = normal(eng);
        x[i] = 0.5 * z[i] + normal(eng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(pairwise_mi(x, z, MiEstimator::histogram));
}
BENCHMARK(BM_mistats_cell);

} // namespace

BENCHMARK_MAIN();
