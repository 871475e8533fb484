#include "dbmnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dbmnet {

int SequenceDataset::class_index(const std::string& label) const {
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw DataError("unknown class label: " + label);
    return static_cast<int>(it - classes.begin());
}

std::size_t SequenceDataset::total_frames() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += static_cast<std::size_t>(s.frames.rows);
    return n;
}

Standardizer Standardizer::identity(int dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    return s;
}

namespace {

Matrix load_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sequence file: " + path.string());
    std::vector<double> values;
    int cols = -1;
    int row = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        int c = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v = 0.0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) {
                throw DataError("bad number in " + path.string() + " row " + std::to_string(row));
            }
            if (!std::isfinite(v)) {
                throw DataError("non-finite value in " + path.string() + " row " + std::to_string(row));
            }
            values.push_back(v);
            ++c;
            p = next;
            if (p < end && *p == ',') ++p;
        }
        if (cols < 0) cols = c;
        else if (c != cols) {
            throw DataError("ragged row in " + path.string() + " row " + std::to_string(row));
        }
    }
    if (row == 0 || cols <= 0) throw DataError("empty sequence file: " + path.string());
    Matrix m(row, cols);
    m.data = std::move(values);
    return m;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

} // namespace

SequenceDataset load_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    SequenceDataset ds;
    if (!j.contains("classes") || !j.contains("sequences")) {
        throw DataError("manifest missing 'classes' or 'sequences': " + manifest_path.string());
    }
    ds.classes = j.at("classes").get<std::vector<std::string>>();
    if (ds.classes.empty()) throw DataError("manifest has empty class list: " + manifest_path.string());
    const fs::path base = manifest_path.parent_path();
    for (const auto& rec : j.at("sequences")) {
        Sequence s;
        s.label = rec.at("label").get<std::string>();
        if (std::find(ds.classes.begin(), ds.classes.end(), s.label) == ds.classes.end()) {
            throw DataError("sequence label '" + s.label + "' not in manifest classes");
        }
        const fs::path p = base / rec.at("path").get<std::string>();
        s.frames = load_csv_matrix(p);
        if (ds.dim == 0) ds.dim = s.frames.cols;
        else if (s.frames.cols != ds.dim) {
            throw DataError("dimension mismatch in " + p.string() + ": expected " +
                            std::to_string(ds.dim) + " columns, got " + std::to_string(s.frames.cols));
        }
        ds.sequences.push_back(std::move(s));
    }
    if (ds.sequences.empty()) throw DataError("empty dataset: " + manifest_path.string());
    return ds;
}

void save_dataset(const SequenceDataset& ds, const fs::path& manifest_path,
                  const std::string& file_prefix) {
    const fs::path base = manifest_path.parent_path();
    if (!base.empty()) fs::create_directories(base);
    json j;
    j["schema_version"] = "dbmnet-dataset-1";
    j["classes"] = ds.classes;
    j["sequences"] = json::array();
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        const auto& s = ds.sequences[k];
        const std::string name = file_prefix + "_" + std::to_string(k) + ".csv";
        std::ofstream out(base / name);
        if (!out) throw DataError("cannot write sequence file: " + (base / name).string());
        for (int t = 0; t < s.frames.rows; ++t) {
            for (int i = 0; i < s.frames.cols; ++i) {
                if (i) out << ',';
                out << format_double(s.frames(t, i));
            }
            out << '\n';
        }
        j["sequences"].push_back({{"path", name}, {"label", s.label}});
    }
    std::ofstream out(manifest_path);
    if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
    out << j.dump(2) << '\n';
}

Standardizer fit_standardizer(const SequenceDataset& ds, double scale_floor) {
    if (ds.sequences.empty()) throw DataError("fit_standardizer: empty dataset");
    const int d = ds.dim;
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    std::size_t n = 0;
    for (const auto& seq : ds.sequences) {
        for (int t = 0; t < seq.frames.rows; ++t)
            for (int i = 0; i < d; ++i) s.mean[i] += seq.frames(t, i);
        n += static_cast<std::size_t>(seq.frames.rows);
    }
    for (int i = 0; i < d; ++i) s.mean[i] /= static_cast<double>(n);
    for (const auto& seq : ds.sequences) {
        for (int t = 0; t < seq.frames.rows; ++t)
            for (int i = 0; i < d; ++i) {
                const double c = seq.frames(t, i) - s.mean[i];
                s.scale[i] += c * c;
            }
    }
    for (int i = 0; i < d; ++i) {
        // population std, floored
        double sd = std::sqrt(s.scale[i] / static_cast<double>(n));
        if (sd < scale_floor) {
            warn("feature " + std::to_string(i) + " is (near-)constant; flooring scale");
            sd = scale_floor;
        }
        s.scale[i] = sd;
    }
    return s;
}

SequenceDataset apply_standardizer(const SequenceDataset& ds, const Standardizer& s) {
    SequenceDataset out = ds;
    for (auto& seq : out.sequences)
        for (int t = 0; t < seq.frames.rows; ++t)
            for (int i = 0; i < seq.frames.cols; ++i) seq.frames(t, i) = s.forward(seq.frames(t, i), i);
    return out;
}

SequenceDataset invert_standardizer(const SequenceDataset& ds, const Standardizer& s) {
    SequenceDataset out = ds;
    for (auto& seq : out.sequences)
        for (int t = 0; t < seq.frames.rows; ++t)
            for (int i = 0; i < seq.frames.cols; ++i) seq.frames(t, i) = s.inverse(seq.frames(t, i), i);
    return out;
}

std::pair<SequenceDataset, SequenceDataset> split(const SequenceDataset& ds, double test_fraction,
                                                  std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw DataError("split: test_fraction must be in (0,1)");
    }
    std::vector<char> is_test(ds.sequences.size(), 0);
    for (std::size_t c = 0; c < ds.classes.size(); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < ds.sequences.size(); ++k)
            if (ds.sequences[k].label == ds.classes[c]) idx.push_back(k);
        if (idx.size() < 2) {
            throw DataError("split: class '" + ds.classes[c] + "' has fewer than 2 sequences");
        }
        auto eng = substream(seed, "split/" + ds.classes[c]);
        deterministic_shuffle(idx, eng);
        std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        for (std::size_t k = 0; k < n_test; ++k) is_test[idx[k]] = 1;
    }
    SequenceDataset train, test;
    train.classes = test.classes = ds.classes;
    train.dim = test.dim = ds.dim;
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        (is_test[k] ? test : train).sequences.push_back(ds.sequences[k]);
    }
    return {std::move(train), std::move(test)};
}

} // namespace dbmnet
