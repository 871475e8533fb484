#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dbmnet/common.hpp"

namespace dbmnet {

/// One labeled observation sequence. frames(t, i) is element i of the
/// observation vector at time t.
struct Sequence {
    Matrix frames;
    std::string label;
};

struct SequenceDataset {
    std::vector<Sequence> sequences;
    std::vector<std::string> classes; // ordered, distinct
    int dim = 0;

    int class_index(const std::string& label) const;
    std::size_t total_frames() const;
};

/// Per-feature affine transform to pooled mean 0 / std 1. With standardized
/// data, zero-padding a missing lagged parent pads with the feature mean.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale; // floored population std

    static Standardizer identity(int dim);
    double forward(double x, int i) const { return (x - mean[i]) / scale[i]; }
    double inverse(double y, int i) const { return y * scale[i] + mean[i]; }
};

SequenceDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest + one CSV per sequence next to it. Values are emitted in
/// shortest round-trip form so load(save(d)) is bit-exact.
void save_dataset(const SequenceDataset& ds, const std::filesystem::path& manifest_path,
                  const std::string& file_prefix = "seq");

Standardizer fit_standardizer(const SequenceDataset& ds, double scale_floor = 1e-8);
SequenceDataset apply_standardizer(const SequenceDataset& ds, const Standardizer& s);
SequenceDataset invert_standardizer(const SequenceDataset& ds, const Standardizer& s);

/// Stratified, seed-deterministic split. Every class needs >= 2 sequences.
std::pair<SequenceDataset, SequenceDataset> split(const SequenceDataset& ds, double test_fraction,
                                                  std::uint64_t seed);

} // namespace dbmnet
