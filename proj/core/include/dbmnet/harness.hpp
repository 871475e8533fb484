#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dbmnet/training.hpp"

namespace dbmnet {

struct PlantedParent {
    int lag = 1;
    int source = 0;
    double coeff = 0.0;
};

/// Linear-Gaussian law for one feature of one (class, state).
struct PlantedFeature {
    double intercept = 0.0;
    double noise_var = 1.0;
    std::vector<PlantedParent> parents;
};

struct GeneratorSpec {
    std::vector<std::string> classes;
    int states_per_class = 1;
    int dim = 0;
    int seq_len_min = 40;
    int seq_len_max = 80;
    int sequences_per_class = 100;
    double self_loop = 0.85;
    // laws[class][state][feature]
    std::vector<std::vector<std::vector<PlantedFeature>>> laws;

    void validate() const;
    DependencySpec planted_spec() const;
};

struct GroundTruth {
    DependencySpec spec;
    std::vector<std::vector<int>> paths; // per sequence, local state ids
};

/// Ancestral sampling of the chain and the per-feature linear-Gaussian
/// conditionals; out-of-range lags are padded with 0 to match the model's
/// boundary convention.
std::pair<SequenceDataset, GroundTruth> generate(const GeneratorSpec& spec, std::uint64_t seed);

enum class Variant { hmm, dbm_ear, dbm_cmi, dbm_ar1, dbm_ar2, dbm_rand };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// AR(k): every (state, feature) depends on that feature's own k previous
/// frames; identical across states, so this is not a multinet.
DependencySpec variant_ar(int k, int num_states, int dim);

/// Per-state uniform draws without replacement from lags 1..max_lag.
DependencySpec variant_random(int count, std::uint64_t seed, int max_lag, int num_states, int dim);

struct PipelineConfig {
    double test_fraction = 0.3;
    MiConfig mi;
    InductionConfig induction;
    TrainConfig training;
    int random_edges = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<Variant> variants = {Variant::hmm, Variant::dbm_ear, Variant::dbm_cmi,
                                     Variant::dbm_ar1, Variant::dbm_ar2, Variant::dbm_rand};
};

struct VariantResult {
    std::string name;
    long long params = 0;
    double accuracy = 0.0;
    double train_loglik_per_frame = 0.0;
    double test_loglik_per_frame = 0.0;
    int max_lag = 0;
    long long edges = 0;
};

struct ExperimentReport {
    std::vector<VariantResult> variants;
    std::uint64_t seed = 0;
    int dim = 0;
    std::size_t train_sequences = 0;
    std::size_t test_sequences = 0;
};

/// Stage functions shared by the CLI and run_pipeline, so the staged CLI
/// invocations and a single `compare` run produce identical artifacts.
Alignment viterbi_alignment(const DBMModel& m, const SequenceDataset& standardized);
DependencySpec induce_variant(Variant v, const MIStats& stats, const PipelineConfig& cfg);

struct EvalReport {
    double accuracy = 0.0;
    double loglik_per_frame = 0.0;
    std::vector<std::string> predicted;
    std::vector<std::string> truth;
    std::vector<std::vector<double>> per_class_loglik; // per sequence, model class order
    std::vector<std::vector<long long>> confusion;     // truth x predicted
};

EvalReport evaluate(const DBMModel& m, const SequenceDataset& raw_test, int threads = 1);

ExperimentReport run_pipeline(const SequenceDataset& train, const SequenceDataset& test,
                              const PipelineConfig& cfg);

void save_report_json(const ExperimentReport& r, const std::filesystem::path& path);
void save_report_csv(const ExperimentReport& r, const std::filesystem::path& path);

// ---- shipped synthetic worlds -----------------------------------------

/// Planted class-conditional structure with sign-flipped coefficients across
/// classes; marginals match, so recovering structure is what separates the
/// classes. Used for recovery and likelihood-improvement checks.
GeneratorSpec recovery_world();

/// Two strong shared dependencies that dominate conditional-MI rankings (one
/// with class-flipped near-tie parents, one masking a discriminative edge),
/// plus mean contrasts an HMM can see. Realizes the regime where structure
/// chosen for likelihood hurts classification.
GeneratorSpec adversarial_world();

/// Parameter-matched capacity comparison: planted per-state structure worth
/// one mixture component of parameters (2D+1 edges per state).
GeneratorSpec capacity_world(int states_per_class);

struct ProbeConfig {
    std::vector<int> n_grid = {2, 4, 8, 16};
    std::vector<int> t_grid = {400, 800, 1600, 3200};
    std::vector<int> k_grid = {8, 16, 32, 64};
    int n_fixed_t = 1500;
    int t_fixed_n = 4;
    int k_fixed_t = 800;
    int k_dim = 16;
    int repeats = 7;
    double min_sample_seconds = 0.004;
    std::uint64_t seed = 7;
};

struct ProbeResult {
    struct Row {
        std::string axis;
        int value = 0;
        double seconds = 0.0;
    };
    std::vector<Row> rows;
    double slope_n = 0.0;
    double slope_t = 0.0;
    double slope_k = 0.0;
};

/// Times forward_loglik across N/T/K grids (dense ergodic chains so the
/// N^2 transition work is real) and fits log-log slopes.
ProbeResult complexity_probe(const ProbeConfig& cfg);

} // namespace dbmnet
