// dbmnet CLI: staged sequence-classification pipeline over dynamic Bayesian
// multinets. Stages mirror the training procedure: generate -> train-bootstrap
// -> mi-stats -> induce -> train -> eval, with `compare` running the whole
// sweep and `bench` probing inference complexity. Every stage reads/writes
// JSON artifacts so the pipeline is resumable and auditable.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "dbmnet/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dbmnet;

namespace {

struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    double test_fraction = 0.3;
    double scale_floor = 1e-8;

    std::string generator_preset = "adversarial";
    int gen_sequences_per_class = -1; // -1: preset default
    int gen_seq_len_min = -1;
    int gen_seq_len_max = -1;
    int gen_states_per_class = -1; // capacity preset knob

    MiConfig mi;
    InductionConfig induction;
    TrainConfig training;

    std::vector<std::string> variants = {"hmm", "dbm-ear", "dbm-cmi", "dbm-ar1", "dbm-ar2", "dbm-rand"};
    int random_edges = 1;

    ProbeConfig bench;

    json resolved; // echo of everything, written next to outputs
};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw DataError("config: unknown key '" + key + "' in " + where);
        }
    }
}

RunConfig parse_config(const fs::path& path) {
    RunConfig rc;
    json j = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open config: " + path.string());
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw DataError("malformed config " + path.string() + ": " + e.what());
        }
    }
    reject_unknown(j, {"schema_version", "seed", "threads", "data", "generator", "mi", "induction",
                       "training", "compare", "bench"},
                   "top level");
    rc.seed = j.value("seed", rc.seed);
    rc.threads = j.value("threads", rc.threads);
    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, {"test_fraction", "scale_floor"}, "data");
        rc.test_fraction = d.value("test_fraction", rc.test_fraction);
        rc.scale_floor = d.value("scale_floor", rc.scale_floor);
    }
    if (j.contains("generator")) {
        const json& g = j["generator"];
        reject_unknown(g, {"preset", "sequences_per_class", "seq_len_min", "seq_len_max",
                           "states_per_class"},
                       "generator");
        rc.generator_preset = g.value("preset", rc.generator_preset);
        rc.gen_sequences_per_class = g.value("sequences_per_class", rc.gen_sequences_per_class);
        rc.gen_seq_len_min = g.value("seq_len_min", rc.gen_seq_len_min);
        rc.gen_seq_len_max = g.value("seq_len_max", rc.gen_seq_len_max);
        rc.gen_states_per_class = g.value("states_per_class", rc.gen_states_per_class);
    }
    if (j.contains("mi")) {
        const json& m = j["mi"];
        reject_unknown(m, {"estimator", "bins", "min_count", "max_lag"}, "mi");
        const std::string est = m.value("estimator", std::string("histogram"));
        if (est == "histogram") rc.mi.estimator = MiEstimator::histogram;
        else if (est == "gaussian") rc.mi.estimator = MiEstimator::gaussian;
        else throw DataError("config: mi.estimator must be histogram or gaussian");
        rc.mi.bins = m.value("bins", rc.mi.bins);
        rc.mi.min_count = m.value("min_count", rc.mi.min_count);
        rc.mi.max_past_lag = m.value("max_lag", rc.mi.max_past_lag);
    }
    if (j.contains("induction")) {
        const json& s = j["induction"];
        reject_unknown(s, {"max_parents", "tau", "theta_f", "theta_cmi", "theta_mi"}, "induction");
        rc.induction.max_parents = s.value("max_parents", rc.induction.max_parents);
        rc.induction.tau = s.value("tau", rc.induction.tau);
        rc.induction.theta_f = s.value("theta_f", rc.induction.theta_f);
        rc.induction.theta_cmi = s.value("theta_cmi", rc.induction.theta_cmi);
        rc.induction.theta_mi = s.value("theta_mi", rc.induction.theta_mi);
        if (!(rc.induction.tau > 0.0 && rc.induction.tau < 1.0)) {
            throw DataError("config: induction.tau must be in (0,1)");
        }
    }
    if (j.contains("training")) {
        const json& t = j["training"];
        reject_unknown(t, {"max_iters", "rel_tol", "ridge", "variance_floor", "mixtures",
                           "states_per_class", "self_loop"},
                       "training");
        rc.training.max_iters = t.value("max_iters", rc.training.max_iters);
        rc.training.rel_tol = t.value("rel_tol", rc.training.rel_tol);
        rc.training.ridge = t.value("ridge", rc.training.ridge);
        rc.training.variance_floor = t.value("variance_floor", rc.training.variance_floor);
        rc.training.mixtures = t.value("mixtures", rc.training.mixtures);
        rc.training.states_per_class = t.value("states_per_class", rc.training.states_per_class);
        rc.training.self_loop = t.value("self_loop", rc.training.self_loop);
    }
    if (j.contains("compare")) {
        const json& c = j["compare"];
        reject_unknown(c, {"variants", "random_edges"}, "compare");
        if (c.contains("variants")) rc.variants = c["variants"].get<std::vector<std::string>>();
        rc.random_edges = c.value("random_edges", rc.random_edges);
    }
    if (j.contains("bench")) {
        const json& b = j["bench"];
        reject_unknown(b, {"n_grid", "t_grid", "k_grid", "repeats"}, "bench");
        if (b.contains("n_grid")) rc.bench.n_grid = b["n_grid"].get<std::vector<int>>();
        if (b.contains("t_grid")) rc.bench.t_grid = b["t_grid"].get<std::vector<int>>();
        if (b.contains("k_grid")) rc.bench.k_grid = b["k_grid"].get<std::vector<int>>();
        rc.bench.repeats = b.value("repeats", rc.bench.repeats);
    }
    return rc;
}

json config_echo(const RunConfig& rc) {
    json j;
    j["schema_version"] = "dbmnet-config-1";
    j["seed"] = rc.seed;
    j["threads"] = rc.threads;
    j["data"] = {{"test_fraction", rc.test_fraction}, {"scale_floor", rc.scale_floor}};
    j["generator"] = {{"preset", rc.generator_preset},
                      {"sequences_per_class", rc.gen_sequences_per_class},
                      {"seq_len_min", rc.gen_seq_len_min},
                      {"seq_len_max", rc.gen_seq_len_max},
                      {"states_per_class", rc.gen_states_per_class}};
    j["mi"] = {{"estimator", rc.mi.estimator == MiEstimator::histogram ? "histogram" : "gaussian"},
               {"bins", rc.mi.bins},
               {"min_count", rc.mi.min_count},
               {"max_lag", rc.mi.max_past_lag}};
    j["induction"] = {{"max_parents", rc.induction.max_parents},
                      {"tau", rc.induction.tau},
                      {"theta_f", rc.induction.theta_f},
                      {"theta_cmi", rc.induction.theta_cmi},
                      {"theta_mi", rc.induction.theta_mi}};
    j["training"] = {{"max_iters", rc.training.max_iters},
                     {"rel_tol", rc.training.rel_tol},
                     {"ridge", rc.training.ridge},
                     {"variance_floor", rc.training.variance_floor},
                     {"mixtures", rc.training.mixtures},
                     {"states_per_class", rc.training.states_per_class},
                     {"self_loop", rc.training.self_loop}};
    j["compare"] = {{"variants", rc.variants}, {"random_edges", rc.random_edges}};
    return j;
}

void write_resolved_config(const RunConfig& rc, const std::string& stage, const fs::path& out_dir) {
    json j = config_echo(rc);
    j["run"] = {{"stage", stage}, {"seed", rc.seed}};
    std::ofstream f(out_dir / "config.resolved.json");
    if (!f) throw DataError("cannot write resolved config in " + out_dir.string());
    f << j.dump(2) << '\n';
}

GeneratorSpec generator_from_config(const RunConfig& rc) {
    GeneratorSpec g;
    if (rc.generator_preset == "recovery") g = recovery_world();
    else if (rc.generator_preset == "adversarial") g = adversarial_world();
    else if (rc.generator_preset == "capacity") {
        g = capacity_world(rc.gen_states_per_class > 0 ? rc.gen_states_per_class : 1);
    } else {
        throw DataError("config: unknown generator preset '" + rc.generator_preset + "'");
    }
    if (rc.gen_sequences_per_class > 0) g.sequences_per_class = rc.gen_sequences_per_class;
    if (rc.gen_seq_len_min > 0) g.seq_len_min = rc.gen_seq_len_min;
    if (rc.gen_seq_len_max > 0) g.seq_len_max = rc.gen_seq_len_max;
    return g;
}

PipelineConfig pipeline_from_config(const RunConfig& rc) {
    PipelineConfig pc;
    pc.test_fraction = rc.test_fraction;
    pc.mi = rc.mi;
    pc.induction = rc.induction;
    pc.training = rc.training;
    pc.random_edges = rc.random_edges;
    pc.seed = rc.seed;
    pc.threads = rc.threads;
    pc.variants.clear();
    for (const auto& name : rc.variants) pc.variants.push_back(variant_from_name(name));
    return pc;
}

void write_trace_csv(const FitResult& fit, const std::vector<std::string>& classes, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write trace: " + path.string());
    f << "class,iteration,total_loglik,per_frame_loglik\n";
    for (std::size_t c = 0; c < fit.traces.size(); ++c) {
        for (const auto& row : fit.traces[c]) {
            f << classes[c] << ',' << row.iteration << ',' << row.total_loglik << ',' << row.per_frame
              << '\n';
        }
    }
}

// standardized train/test replay shared by every stage past `generate`
struct StagedData {
    SequenceDataset train_raw, test_raw;
};

StagedData load_and_split(const fs::path& manifest, const RunConfig& rc) {
    const SequenceDataset ds = load_dataset(manifest);
    StagedData sd;
    std::tie(sd.train_raw, sd.test_raw) = split(ds, rc.test_fraction, rc.seed);
    return sd;
}

int run_generate(const RunConfig& rc, const fs::path& out) {
    fs::create_directories(out);
    const GeneratorSpec g = generator_from_config(rc);
    auto [ds, gt] = generate(g, rc.seed);
    save_dataset(ds, out / "manifest.json");
    save_depspec(gt.spec, out / "ground_truth_spec.json");
    write_resolved_config(rc, "generate", out);
    std::cout << "generated " << ds.sequences.size() << " sequences (D=" << ds.dim << ") in "
              << out.string() << "\n";
    return 0;
}

int run_train_bootstrap(const RunConfig& rc, const fs::path& data, const fs::path& out) {
    fs::create_directories(out);
    StagedData sd = load_and_split(data, rc);
    const Standardizer st = fit_standardizer(sd.train_raw, rc.scale_floor);
    const SequenceDataset train = apply_standardizer(sd.train_raw, st);
    TrainConfig tc = rc.training;
    tc.threads = rc.threads;
    tc.seed = rc.seed;
    FitResult fit = init_bootstrap(train, tc);
    fit.model.standardizer = st;
    save_model(fit.model, out / "bootstrap_model.json");
    write_trace_csv(fit, fit.model.classes, out / "bootstrap_trace.csv");
    write_resolved_config(rc, "train-bootstrap", out);
    std::cout << "bootstrap HMM trained on " << train.sequences.size() << " sequences; model in "
              << (out / "bootstrap_model.json").string() << "\n";
    return 0;
}

int run_mi_stats(const RunConfig& rc, const fs::path& data, const fs::path& model_path,
                 const fs::path& out) {
    fs::create_directories(out);
    StagedData sd = load_and_split(data, rc);
    const DBMModel model = load_model(model_path);
    const SequenceDataset train = apply_standardizer(sd.train_raw, model.standardizer);
    const Alignment align = viterbi_alignment(model, train);
    const MIStats stats = compute_mistats(train, align, model.space(), rc.mi, rc.threads);
    save_mistats(stats, out / "mistats.json");
    write_resolved_config(rc, "mi-stats", out);
    std::cout << "MI tables over " << stats.dim << " features x lags 0.." << stats.max_lag << " in "
              << (out / "mistats.json").string() << "\n";
    return 0;
}

int run_induce(const RunConfig& rc, const fs::path& mistats_path, const std::string& variant,
               const fs::path& out) {
    fs::create_directories(out);
    const MIStats stats = load_mistats(mistats_path);
    const PipelineConfig pc = pipeline_from_config(rc);
    const DependencySpec spec = induce_variant(variant_from_name(variant), stats, pc);
    save_depspec(spec, out / "depspec.json");
    write_resolved_config(rc, "induce", out);
    std::cout << "induced " << spec.edge_count() << " edges (max lag " << spec.max_lag() << ") in "
              << (out / "depspec.json").string() << "\n";
    return 0;
}

int run_train(const RunConfig& rc, const fs::path& data, const fs::path& bootstrap_path,
              const fs::path& spec_path, const fs::path& out) {
    fs::create_directories(out);
    StagedData sd = load_and_split(data, rc);
    const DBMModel boot = load_model(bootstrap_path);
    const DependencySpec spec = load_depspec(spec_path);
    const SequenceDataset train = apply_standardizer(sd.train_raw, boot.standardizer);
    TrainConfig tc = rc.training;
    tc.threads = rc.threads;
    tc.seed = rc.seed;
    FitResult fit;
    if (spec.edge_count() == 0) {
        fit.model = boot;
        fit.traces.assign(boot.classes.size(), {});
    } else {
        fit = em_fit(graft_dependencies(boot, spec), train, tc);
    }
    save_model(fit.model, out / "model.json");
    write_trace_csv(fit, fit.model.classes, out / "trace.csv");
    write_resolved_config(rc, "train", out);
    std::cout << "trained DBM with " << fit.model.spec.edge_count() << " edges; model in "
              << (out / "model.json").string() << "\n";
    return 0;
}

int run_eval(const RunConfig& rc, const fs::path& data, const fs::path& model_path, const fs::path& out) {
    fs::create_directories(out);
    StagedData sd = load_and_split(data, rc);
    const DBMModel model = load_model(model_path);
    const EvalReport ev = evaluate(model, sd.test_raw, rc.threads);
    json j;
    j["schema_version"] = "dbmnet-eval-1";
    j["accuracy"] = ev.accuracy;
    j["test_loglik_per_frame"] = ev.loglik_per_frame;
    j["classes"] = model.classes;
    j["confusion"] = ev.confusion;
    j["sequences"] = json::array();
    for (std::size_t k = 0; k < ev.predicted.size(); ++k) {
        j["sequences"].push_back({{"truth", ev.truth[k]},
                                  {"predicted", ev.predicted[k]},
                                  {"loglik", ev.per_class_loglik[k]}});
    }
    std::ofstream f(out / "eval.json");
    if (!f) throw DataError("cannot write eval report in " + out.string());
    f << j.dump(2) << '\n';
    write_resolved_config(rc, "eval", out);
    std::cout << "accuracy " << ev.accuracy << " over " << ev.predicted.size() << " sequences; report in "
              << (out / "eval.json").string() << "\n";
    return 0;
}

int run_compare(const RunConfig& rc, const fs::path& data, const fs::path& out) {
    fs::create_directories(out);
    SequenceDataset ds;
    if (data.empty()) {
        const GeneratorSpec g = generator_from_config(rc);
        ds = generate(g, rc.seed).first;
        save_dataset(ds, out / "manifest.json");
    } else {
        ds = load_dataset(data);
    }
    auto [train, test] = split(ds, rc.test_fraction, rc.seed);
    const PipelineConfig pc = pipeline_from_config(rc);
    const ExperimentReport report = run_pipeline(train, test, pc);
    save_report_json(report, out / "report.json");
    save_report_csv(report, out / "report.csv");
    write_resolved_config(rc, "compare", out);
    for (const auto& v : report.variants) {
        std::cout << v.name << ": params=" << v.params << " acc=" << v.accuracy
                  << " train_ll/frame=" << v.train_loglik_per_frame << "\n";
    }
    return 0;
}

int run_bench(const RunConfig& rc, const fs::path& out) {
    fs::create_directories(out);
    ProbeConfig bc = rc.bench;
    bc.seed = rc.seed;
    const ProbeResult pr = complexity_probe(bc);
    json j;
    j["schema_version"] = "dbmnet-bench-1";
    j["slope_n"] = pr.slope_n;
    j["slope_t"] = pr.slope_t;
    j["slope_k"] = pr.slope_k;
    j["rows"] = json::array();
    for (const auto& r : pr.rows) {
        j["rows"].push_back({{"axis", r.axis}, {"value", r.value}, {"seconds", r.seconds}});
    }
    std::ofstream f(out / "bench.json");
    if (!f) throw DataError("cannot write bench report in " + out.string());
    f << j.dump(2) << '\n';
    write_resolved_config(rc, "bench", out);
    std::cout << "slopes: N " << pr.slope_n << ", T " << pr.slope_t << ", K " << pr.slope_k << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic Bayesian multinet sequence-classification toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, model_path, mistats_path, spec_path, bootstrap_path;
    std::string out_dir = "out";
    std::string variant = "dbm-ear";
    bool json_errors = false;
    std::int64_t seed_override = -1;
    int threads_override = 0;

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_flag("--json-errors", json_errors, "emit machine-readable errors on stderr");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--threads", threads_override, "override the config thread count");

    auto* c_gen = app.add_subcommand("generate", "sample a synthetic dataset");
    c_gen->add_option("--out", out_dir, "output directory");

    auto* c_boot = app.add_subcommand("train-bootstrap", "train the bootstrap HMM with EM");
    c_boot->add_option("--data", data_path, "dataset manifest")->required();
    c_boot->add_option("--out", out_dir, "output directory");

    auto* c_mi = app.add_subcommand("mi-stats", "pairwise MI tables from the aligned training split");
    c_mi->add_option("--data", data_path, "dataset manifest")->required();
    c_mi->add_option("--model", model_path, "bootstrap model JSON")->required();
    c_mi->add_option("--out", out_dir, "output directory");

    auto* c_induce = app.add_subcommand("induce", "run the pairwise structure heuristic");
    c_induce->add_option("--mistats", mistats_path, "MI tables JSON")->required();
    c_induce->add_option("--variant", variant, "hmm|dbm-ear|dbm-cmi|dbm-ar1|dbm-ar2|dbm-rand");
    c_induce->add_option("--out", out_dir, "output directory");

    auto* c_train = app.add_subcommand("train", "retrain with induced dependencies");
    c_train->add_option("--data", data_path, "dataset manifest")->required();
    c_train->add_option("--bootstrap", bootstrap_path, "bootstrap model JSON")->required();
    c_train->add_option("--spec", spec_path, "dependency spec JSON")->required();
    c_train->add_option("--out", out_dir, "output directory");

    auto* c_eval = app.add_subcommand("eval", "classify the held-out split");
    c_eval->add_option("--data", data_path, "dataset manifest")->required();
    c_eval->add_option("--model", model_path, "model JSON")->required();
    c_eval->add_option("--out", out_dir, "output directory");

    auto* c_cmp = app.add_subcommand("compare", "full variant sweep on one dataset");
    c_cmp->add_option("--data", data_path, "existing dataset manifest (default: generate)");
    c_cmp->add_option("--out", out_dir, "output directory");

    auto* c_bench = app.add_subcommand("bench", "inference complexity probe");
    c_bench->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e); // CLI11 prints usage; nonzero on error
    }

    const auto fail = [&](int code, const std::string& msg) {
        if (json_errors) {
            json j;
            j["error"] = {{"code", code}, {"message", msg}};
            std::cerr << j.dump() << "\n";
        } else {
            std::cerr << "error: " << msg << "\n";
        }
        return code;
    };

    try {
        RunConfig rc = parse_config(config_path.empty() ? fs::path() : fs::path(config_path));
        if (seed_override >= 0) rc.seed = static_cast<std::uint64_t>(seed_override);
        if (threads_override > 0) rc.threads = threads_override;

        if (c_gen->parsed()) return run_generate(rc, out_dir);
        if (c_boot->parsed()) return run_train_bootstrap(rc, data_path, out_dir);
        if (c_mi->parsed()) return run_mi_stats(rc, data_path, model_path, out_dir);
        if (c_induce->parsed()) return run_induce(rc, mistats_path, variant, out_dir);
        if (c_train->parsed()) return run_train(rc, data_path, bootstrap_path, spec_path, out_dir);
        if (c_eval->parsed()) return run_eval(rc, data_path, model_path, out_dir);
        if (c_cmp->parsed()) return run_compare(rc, data_path.empty() ? fs::path() : fs::path(data_path), out_dir);
        if (c_bench->parsed()) return run_bench(rc, out_dir);
        return fail(1, "no subcommand given");
    } catch (const NumericError& e) {
        return fail(3, e.what());
    } catch (const DataError& e) {
        return fail(2, e.what());
    } catch (const std::exception& e) {
        return fail(2, e.what());
    }
}
