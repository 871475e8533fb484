#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dbmnet/dataset.hpp"

using namespace dbmnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dbmnet_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SequenceDataset small_dataset(int per_class, int t, int d, std::uint64_t seed) {
    SequenceDataset ds;
    ds.classes = {"a", "b"};
    ds.dim = d;
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& label : ds.classes) {
        for (int k = 0; k < per_class; ++k) {
            Sequence s;
            s.label = label;
            s.frames = Matrix(t, d);
            for (double& v : s.frames.data) v = normal(eng);
            ds.sequences.push_back(std::move(s));
        }
    }
    return ds;
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("manifest load round-trips shapes and labels") {
    const fs::path dir = temp_dir("load");
    {
        std::ofstream f(dir / "s0.csv");
        f << "1,2,3\n4,5,6\n7,8,9\n0.5,0.25,0.125\n-1,-2,-3\n";
        std::ofstream g(dir / "s1.csv");
        g << "1,0,0\n0,1,0\n0,0,1\n2,2,2\n3,3,3\n";
        std::ofstream m(dir / "manifest.json");
        m << R"({"classes":["a","b"],"sequences":[{"path":"s0.csv","label":"a"},{"path":"s1.csv","label":"b"}]})";
    }
    const SequenceDataset ds = load_dataset(dir / "manifest.json");
    CHECK(ds.dim == 3);
    CHECK(ds.classes.size() == 2);
    CHECK(ds.sequences.size() == 2);
    CHECK(ds.sequences[0].frames.rows == 5);
    CHECK(ds.sequences[0].frames(0, 1) == 2.0);
    CHECK(ds.sequences[1].label == "b");
}

TEST_CASE("dimension mismatch names the offending file") {
    const fs::path dir = temp_dir("dim");
    {
        std::ofstream f(dir / "s0.csv");
        f << "1,2,3\n4,5,6\n";
        std::ofstream g(dir / "s1.csv");
        g << "1,2\n3,4\n";
        std::ofstream m(dir / "manifest.json");
        m << R"({"classes":["a"],"sequences":[{"path":"s0.csv","label":"a"},{"path":"s1.csv","label":"a"}]})";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir / "manifest.json"), doctest::Contains("s1.csv"), DataError);
}

TEST_CASE("empty manifest is an error") {
    const fs::path dir = temp_dir("empty");
    {
        std::ofstream m(dir / "manifest.json");
        m << R"({"classes":["a"],"sequences":[]})";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir / "manifest.json"), doctest::Contains("empty dataset"),
                         DataError);
}

TEST_CASE("missing file / unknown label / non-finite value all fail") {
    const fs::path dir = temp_dir("errors");
    {
        std::ofstream f(dir / "ok.csv");
        f << "1,2\n";
        std::ofstream g(dir / "nan.csv");
        g << "1,nan\n";
    }
    {
        std::ofstream m(dir / "m1.json");
        m << R"({"classes":["a"],"sequences":[{"path":"gone.csv","label":"a"}]})";
    }
    CHECK_THROWS_AS(load_dataset(dir / "m1.json"), DataError);
    {
        std::ofstream m(dir / "m2.json");
        m << R"({"classes":["a"],"sequences":[{"path":"ok.csv","label":"zz"}]})";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir / "m2.json"), doctest::Contains("zz"), DataError);
    {
        std::ofstream m(dir / "m3.json");
        m << R"({"classes":["a"],"sequences":[{"path":"nan.csv","label":"a"}]})";
    }
    CHECK_THROWS_AS(load_dataset(dir / "m3.json"), DataError);
}

TEST_CASE("save/load reproduces frames bit-exactly") {
    const fs::path dir = temp_dir("roundtrip");
    SequenceDataset ds = small_dataset(3, 17, 4, 99);
    ds.sequences[0].frames(0, 0) = 0.1 + 0.2; // no short decimal form
    ds.sequences[1].frames(2, 3) = 1e-307;
    save_dataset(ds, dir / "manifest.json");
    const SequenceDataset back = load_dataset(dir / "manifest.json");
    REQUIRE(back.sequences.size() == ds.sequences.size());
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        REQUIRE(back.sequences[k].frames.data.size() == ds.sequences[k].frames.data.size());
        for (std::size_t v = 0; v < ds.sequences[k].frames.data.size(); ++v) {
            CHECK(back.sequences[k].frames.data[v] == ds.sequences[k].frames.data[v]);
        }
    }
}

TEST_CASE("standardizer: {1,3} feature gives mean 2, population scale 1") {
    SequenceDataset ds;
    ds.classes = {"a"};
    ds.dim = 1;
    Sequence s;
    s.label = "a";
    s.frames = Matrix(2, 1);
    s.frames(0, 0) = 1.0;
    s.frames(1, 0) = 3.0;
    ds.sequences.push_back(s);
    const Standardizer st = fit_standardizer(ds);
    CHECK(st.mean[0] == doctest::Approx(2.0));
    CHECK(st.scale[0] == doctest::Approx(1.0)); // population std of {1,3}
}

TEST_CASE("already-standardized data: refit is identity within 1e-12") {
    SequenceDataset ds = small_dataset(4, 50, 3, 7);
    const SequenceDataset z = apply_standardizer(ds, fit_standardizer(ds));
    const Standardizer st1 = fit_standardizer(z);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(st1.mean[i]) < 1e-12);
        CHECK(st1.scale[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
    const SequenceDataset z2 = apply_standardizer(z, st1);
    for (std::size_t k = 0; k < z.sequences.size(); ++k) {
        for (std::size_t v = 0; v < z.sequences[k].frames.data.size(); ++v) {
            CHECK(std::abs(z2.sequences[k].frames.data[v] - z.sequences[k].frames.data[v]) < 1e-12);
        }
    }
}

TEST_CASE("constant feature: scale floored, transformed feature all zeros") {
    SequenceDataset ds;
    ds.classes = {"a"};
    ds.dim = 2;
    Sequence s;
    s.label = "a";
    s.frames = Matrix(5, 2);
    for (int t = 0; t < 5; ++t) {
        s.frames(t, 0) = 7.0;
        s.frames(t, 1) = t;
    }
    ds.sequences.push_back(s);
    const Standardizer st = fit_standardizer(ds);
    CHECK(st.scale[0] == doctest::Approx(1e-8));
    const SequenceDataset z = apply_standardizer(ds, st);
    for (int t = 0; t < 5; ++t) CHECK(z.sequences[0].frames(t, 0) == doctest::Approx(0.0));
}

TEST_CASE("standardize then invert reproduces frames within 1e-10 relative") {
    SequenceDataset ds = small_dataset(3, 40, 5, 11);
    const Standardizer st = fit_standardizer(ds);
    const SequenceDataset back = invert_standardizer(apply_standardizer(ds, st), st);
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        for (std::size_t v = 0; v < ds.sequences[k].frames.data.size(); ++v) {
            CHECK(back.sequences[k].frames.data[v] ==
                  doctest::Approx(ds.sequences[k].frames.data[v]).epsilon(1e-10));
        }
    }
}

TEST_CASE("split is stratified, deterministic, and a partition") {
    const SequenceDataset ds = small_dataset(10, 8, 2, 3);
    auto [tr, te] = split(ds, 0.2, 42);
    CHECK(tr.sequences.size() + te.sequences.size() == ds.sequences.size());
    for (const auto& cls : ds.classes) {
        int n_te = 0;
        for (const auto& s : te.sequences) n_te += s.label == cls;
        CHECK(n_te == 2); // 10 per class at fraction 0.2 -> 8/2
    }
    auto [tr2, te2] = split(ds, 0.2, 42);
    REQUIRE(te2.sequences.size() == te.sequences.size());
    for (std::size_t k = 0; k < te.sequences.size(); ++k) {
        CHECK(te.sequences[k].frames.data == te2.sequences[k].frames.data);
    }

    std::size_t frames = 0;
    for (const auto& s : tr.sequences) frames += s.frames.data.size();
    for (const auto& s : te.sequences) frames += s.frames.data.size();
    std::size_t orig = 0;
    for (const auto& s : ds.sequences) orig += s.frames.data.size();
    CHECK(frames == orig);
}

TEST_CASE("split: 4 classes x 4 sequences at fraction 0.5 gives 2/2 per class") {
    SequenceDataset ds;
    ds.classes = {"c0", "c1", "c2", "c3"};
    ds.dim = 1;
    std::mt19937_64 eng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& label : ds.classes) {
        for (int k = 0; k < 4; ++k) {
            Sequence s;
            s.label = label;
            s.frames = Matrix(3, 1);
            for (double& v : s.frames.data) v = normal(eng);
            ds.sequences.push_back(std::move(s));
        }
    }
    auto [tr, te] = split(ds, 0.5, 1);
    for (const auto& cls : ds.classes) {
        int n_tr = 0, n_te = 0;
        for (const auto& s : tr.sequences) n_tr += s.label == cls;
        for (const auto& s : te.sequences) n_te += s.label == cls;
        CHECK(n_tr == 2);
        CHECK(n_te == 2);
    }
}

TEST_CASE("split rejects a class with a single sequence") {
    SequenceDataset ds;
    ds.classes = {"a", "b"};
    ds.dim = 1;
    for (int k = 0; k < 3; ++k) {
        Sequence s;
        s.label = k < 2 ? "a" : "b";
        s.frames = Matrix(2, 1);
        ds.sequences.push_back(s);
    }
    CHECK_THROWS_WITH_AS(split(ds, 0.3, 1), doctest::Contains("fewer than 2"), DataError);
}

} // TEST_SUITE
