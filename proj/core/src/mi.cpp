#include "dbmnet/mi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace dbmnet {

namespace {

// Equal-frequency bin assignment: edges at the k/B quantiles of the sample
// itself, so the binning is deterministic given the data and robust to
// heavy tails. Duplicated values may merge bins; that only lowers the
// estimate, never breaks symmetry.
std::vector<int> equal_frequency_bins(std::span<const double> v, int bins) {
    const std::size_t n = v.size();
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    edges.reserve(bins - 1);
    for (int k = 1; k < bins; ++k) {
        edges.push_back(sorted[n * static_cast<std::size_t>(k) / bins]);
    }
    std::vector<int> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        out[t] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v[t]) - edges.begin());
    }
    return out;
}

double histogram_mi(std::span<const double> x, std::span<const double> z, int bins) {
    const std::size_t n = x.size();
    const std::vector<int> bx = equal_frequency_bins(x, bins);
    const std::vector<int> bz = equal_frequency_bins(z, bins);
    std::vector<long long> joint(static_cast<std::size_t>(bins) * bins, 0);
    std::vector<long long> cx(bins, 0), cz(bins, 0);
    for (std::size_t t = 0; t < n; ++t) {
        ++joint[static_cast<std::size_t>(bx[t]) * bins + bz[t]];
        ++cx[bx[t]];
        ++cz[bz[t]];
    }
    const double dn = static_cast<double>(n);
    double mi = 0.0;
    for (int a = 0; a < bins; ++a) {
        for (int b = 0; b < bins; ++b) {
            const long long c = joint[static_cast<std::size_t>(a) * bins + b];
            if (c == 0) continue;
            mi += (c / dn) * std::log(c * dn / (static_cast<double>(cx[a]) * cz[b]));
        }
    }
    return mi;
}

double gaussian_mi(std::span<const double> x, std::span<const double> z) {
    const std::size_t n = x.size();
    double mx = 0.0, mz = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        mx += x[t];
        mz += z[t];
    }
    mx /= static_cast<double>(n);
    mz /= static_cast<double>(n);
    double sxx = 0.0, szz = 0.0, sxz = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double a = x[t] - mx, b = z[t] - mz;
        sxx += a * a;
        szz += b * b;
        sxz += a * b;
    }
    if (sxx <= 0.0 || szz <= 0.0) {
        warn("gaussian MI estimator saw a zero-variance input");
        return 0.0;
    }
    double rho = sxz / std::sqrt(sxx * szz);
    const double lim = 1.0 - 1e-12;
    rho = std::clamp(rho, -lim, lim);
    // (1-rho)(1+rho) keeps precision when |rho| is at the clip
    return -0.5 * std::log((1.0 - rho) * (1.0 + rho));
}

} // namespace

MiValue pairwise_mi(std::span<const double> x, std::span<const double> z, MiEstimator est, int bins,
                    long long min_count) {
    if (x.size() != z.size()) throw DataError("pairwise_mi: sample vectors differ in length");
    if (static_cast<long long>(x.size()) < min_count) return {0.0, false};
    double v;
    if (est == MiEstimator::histogram) {
        const double first = x.empty() ? 0.0 : x.front();
        bool const_x = true, const_z = true;
        for (double e : x) const_x &= (e == first);
        const double firstz = z.empty() ? 0.0 : z.front();
        for (double e : z) const_z &= (e == firstz);
        if (const_x || const_z) {
            warn("histogram MI estimator saw a zero-variance input");
            return {0.0, true};
        }
        v = histogram_mi(x, z, bins);
    } else {
        v = gaussian_mi(x, z);
    }
    return {std::max(v, 0.0), true};
}

MiValue MIStats::marg(int i, int lag, int j) const {
    const std::size_t k = cell(i, lag, j);
    return {marginal[k], marg_count[k] >= min_count};
}

MiValue MIStats::cond(int i, int lag, int j, int q) const {
    const std::size_t k = cond_cell(i, lag, j, q);
    return {conditional[k], cond_count[k] >= min_count};
}

MiValue MIStats::pooled_cond(int i, int lag, int j) const {
    double acc = 0.0;
    long long total = 0;
    for (int q = 0; q < num_states; ++q) {
        const std::size_t k = cond_cell(i, lag, j, q);
        if (cond_count[k] >= min_count) {
            acc += conditional[k] * static_cast<double>(cond_count[k]);
            total += cond_count[k];
        }
    }
    if (total == 0) return {0.0, false};
    return {acc / static_cast<double>(total), true};
}

MIStats compute_mistats(const SequenceDataset& ds, const Alignment& alignment, const StateSpace& space,
                        const MiConfig& cfg, int threads) {
    if (alignment.size() != ds.sequences.size()) {
        throw DataError("compute_mistats: alignment does not cover the dataset");
    }
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        if (static_cast<int>(alignment[k].size()) != ds.sequences[k].frames.rows) {
            throw DataError("compute_mistats: alignment length mismatch at sequence " + std::to_string(k));
        }
    }
    MIStats out;
    out.dim = ds.dim;
    out.max_lag = cfg.max_past_lag;
    out.num_states = space.total();
    out.min_count = cfg.min_count;
    out.estimator = cfg.estimator;
    out.bins = cfg.bins;
    for (int s = 0; s < out.num_states; ++s) out.state_names.push_back(space.name(s));

    const std::size_t n_cells = static_cast<std::size_t>(out.max_lag + 1) * out.dim * out.dim;
    out.marginal.assign(n_cells, 0.0);
    out.marg_count.assign(n_cells, 0);
    out.conditional.assign(n_cells * out.num_states, 0.0);
    out.cond_count.assign(n_cells * out.num_states, 0);

    // One work item per (lag, target, source) cell; each fills its own slots,
    // so the result is identical for any thread count.
    parallel_for(n_cells, threads, [&](std::size_t c) {
        const int j = static_cast<int>(c % out.dim);
        const int i = static_cast<int>((c / out.dim) % out.dim);
        const int lag = static_cast<int>(c / (static_cast<std::size_t>(out.dim) * out.dim));

        std::vector<double> xs, zs;
        std::vector<int> states;
        for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
            const Matrix& f = ds.sequences[k].frames;
            for (int t = lag; t < f.rows; ++t) {
                xs.push_back(f(t, i));
                zs.push_back(f(t - lag, j));
                states.push_back(alignment[k][t]);
            }
        }
        const MiValue m = pairwise_mi(xs, zs, cfg.estimator, cfg.bins, cfg.min_count);
        out.marginal[c] = m.value;
        out.marg_count[c] = static_cast<long long>(xs.size());

        std::vector<double> xq, zq;
        for (int q = 0; q < out.num_states; ++q) {
            xq.clear();
            zq.clear();
            for (std::size_t t = 0; t < xs.size(); ++t) {
                if (states[t] == q) {
                    xq.push_back(xs[t]);
                    zq.push_back(zs[t]);
                }
            }
            const MiValue mv = pairwise_mi(xq, zq, cfg.estimator, cfg.bins, cfg.min_count);
            out.conditional[c * out.num_states + q] = mv.value;
            out.cond_count[c * out.num_states + q] = static_cast<long long>(xq.size());
        }
    });
    return out;
}

EarTable ear_table(const MIStats& stats, int q) {
    EarTable t;
    t.dim = stats.dim;
    t.max_lag = stats.max_lag;
    const std::size_t n = static_cast<std::size_t>(stats.max_lag + 1) * stats.dim * stats.dim;
    t.value.assign(n, 0.0);
    t.valid.assign(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        const bool ok = stats.marg_count[c] >= stats.min_count &&
                        stats.cond_count[c * stats.num_states + q] >= stats.min_count;
        if (ok) {
            t.value[c] = stats.conditional[c * stats.num_states + q] - stats.marginal[c];
            t.valid[c] = 1;
        }
    }
    return t;
}

void save_mistats(const MIStats& s, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = "dbmnet-mistats-1";
    j["dim"] = s.dim;
    j["max_lag"] = s.max_lag;
    j["num_states"] = s.num_states;
    j["state_names"] = s.state_names;
    j["min_count"] = s.min_count;
    j["estimator"] = s.estimator == MiEstimator::histogram ? "histogram" : "gaussian";
    j["bins"] = s.bins;
    j["marginal"] = s.marginal;
    j["marg_count"] = s.marg_count;
    j["conditional"] = s.conditional;
    j["cond_count"] = s.cond_count;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write MI stats: " + path.string());
    f << j.dump() << '\n';
}

MIStats load_mistats(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open MI stats: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed MI stats " + path.string() + ": " + e.what());
    }
    MIStats s;
    s.dim = j.at("dim").get<int>();
    s.max_lag = j.at("max_lag").get<int>();
    s.num_states = j.at("num_states").get<int>();
    s.state_names = j.at("state_names").get<std::vector<std::string>>();
    s.min_count = j.at("min_count").get<long long>();
    s.estimator = j.at("estimator").get<std::string>() == "gaussian" ? MiEstimator::gaussian
                                                                     : MiEstimator::histogram;
    s.bins = j.at("bins").get<int>();
    s.marginal = j.at("marginal").get<std::vector<double>>();
    s.marg_count = j.at("marg_count").get<std::vector<long long>>();
    s.conditional = j.at("conditional").get<std::vector<double>>();
    s.cond_count = j.at("cond_count").get<std::vector<long long>>();
    const std::size_t n = static_cast<std::size_t>(s.max_lag + 1) * s.dim * s.dim;
    if (s.marginal.size() != n || s.conditional.size() != n * s.num_states) {
        throw DataError("MI stats table sizes inconsistent: " + path.string());
    }
    return s;
}

} // namespace dbmnet
