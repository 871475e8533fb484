#pragma once

// Exhaustive path-sum oracle for toy chains (N^T small): likelihood, state
// and transition posteriors, and the best path score, all by brute force over
// every hidden path. The dynamic programs under test must reproduce these.

#include <cmath>
#include <vector>

#include "dbmnet/model.hpp"

namespace testsupport {

struct EnumResult {
    double loglik = 0.0;
    dbmnet::Matrix gamma;   // T x N
    std::vector<double> xi; // (T-1) x N x N
    double best_score = -std::numeric_limits<double>::infinity();
};

inline EnumResult enumerate_paths(const dbmnet::DBMModel& m, int class_idx,
                                  const dbmnet::Matrix& frames) {
    const dbmnet::ChainTopology& ch = m.chains[class_idx];
    const int n = ch.num_states;
    const int T = frames.rows;
    const int off = dbmnet::flat_state_offset(m, class_idx);

    dbmnet::Matrix lb(T, n);
    for (int t = 0; t < T; ++t)
        for (int s = 0; s < n; ++s) lb(t, s) = dbmnet::emission_logprob_flat(m, off + s, t, frames);

    std::vector<int> path(T, 0);
    std::vector<double> scores;
    std::vector<std::vector<int>> paths;
    while (true) {
        double sc = ch.init[path[0]] > 0.0 ? std::log(ch.init[path[0]]) : dbmnet::kNegInf;
        sc += lb(0, path[0]);
        for (int t = 1; t < T; ++t) {
            const double a = ch.trans[static_cast<std::size_t>(path[t - 1]) * n + path[t]];
            sc += a > 0.0 ? std::log(a) : dbmnet::kNegInf;
            sc += lb(t, path[t]);
        }
        scores.push_back(sc);
        paths.push_back(path);
        int pos = T - 1;
        while (pos >= 0 && ++path[pos] == n) path[pos--] = 0;
        if (pos < 0) break;
    }

    EnumResult r;
    double mx = dbmnet::kNegInf;
    for (double s : scores) mx = std::max(mx, s);
    double acc = 0.0;
    for (double s : scores)
        if (s != dbmnet::kNegInf) acc += std::exp(s - mx);
    r.loglik = mx + std::log(acc);
    r.best_score = mx;

    r.gamma = dbmnet::Matrix(T, n, 0.0);
    r.xi.assign(static_cast<std::size_t>(std::max(T - 1, 0)) * n * n, 0.0);
    for (std::size_t k = 0; k < paths.size(); ++k) {
        if (scores[k] == dbmnet::kNegInf) continue;
        const double w = std::exp(scores[k] - r.loglik);
        for (int t = 0; t < T; ++t) r.gamma(t, paths[k][t]) += w;
        for (int t = 0; t + 1 < T; ++t) {
            r.xi[(static_cast<std::size_t>(t) * n + paths[k][t]) * n + paths[k][t + 1]] += w;
        }
    }
    return r;
}

} // namespace testsupport
