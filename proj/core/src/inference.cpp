#include "dbmnet/inference.hpp"

#include <algorithm>
#include <cmath>

namespace dbmnet {

namespace {

struct LogChain {
    int n = 0;
    std::vector<double> ltrans;
    std::vector<double> linit;
};

LogChain log_chain(const ChainTopology& ch) {
    LogChain lc;
    lc.n = ch.num_states;
    lc.ltrans.resize(ch.trans.size());
    lc.linit.resize(ch.init.size());
    for (std::size_t k = 0; k < ch.trans.size(); ++k) {
        lc.ltrans[k] = ch.trans[k] > 0.0 ? std::log(ch.trans[k]) : kNegInf;
    }
    for (std::size_t k = 0; k < ch.init.size(); ++k) {
        lc.linit[k] = ch.init[k] > 0.0 ? std::log(ch.init[k]) : kNegInf;
    }
    return lc;
}

Matrix emission_table(const DBMModel& m, int class_idx, const Matrix& frames) {
    const int n = m.chains[class_idx].num_states;
    const int off = flat_state_offset(m, class_idx);
    Matrix lb(frames.rows, n);
    for (int t = 0; t < frames.rows; ++t)
        for (int s = 0; s < n; ++s) lb(t, s) = emission_logprob_flat(m, off + s, t, frames);
    return lb;
}

Matrix forward_lattice(const LogChain& lc, const Matrix& lb) {
    const int T = lb.rows, n = lc.n;
    Matrix alpha(T, n, kNegInf);
    for (int s = 0; s < n; ++s) alpha(0, s) = lc.linit[s] + lb(0, s);
    std::vector<double> terms(n);
    for (int t = 1; t < T; ++t) {
        for (int s = 0; s < n; ++s) {
            for (int p = 0; p < n; ++p) {
                terms[p] = alpha(t - 1, p) + lc.ltrans[static_cast<std::size_t>(p) * n + s];
            }
            alpha(t, s) = logsumexp(terms) + lb(t, s);
        }
    }
    return alpha;
}

} // namespace

double forward_loglik(const DBMModel& m, int class_idx, const Matrix& frames) {
    const LogChain lc = log_chain(m.chains[class_idx]);
    const Matrix lb = emission_table(m, class_idx, frames);
    const Matrix alpha = forward_lattice(lc, lb);
    return logsumexp(alpha.row(frames.rows - 1));
}

PosteriorSet forward_backward(const DBMModel& m, int class_idx, const Matrix& frames) {
    const LogChain lc = log_chain(m.chains[class_idx]);
    const Matrix lb = emission_table(m, class_idx, frames);
    const int T = frames.rows, n = lc.n, n_mix = m.mixtures();
    const int off = flat_state_offset(m, class_idx);

    const Matrix alpha = forward_lattice(lc, lb);
    Matrix beta(T, n, 0.0);
    std::vector<double> terms(n);
    for (int t = T - 2; t >= 0; --t) {
        for (int s = 0; s < n; ++s) {
            for (int q = 0; q < n; ++q) {
                terms[q] = lc.ltrans[static_cast<std::size_t>(s) * n + q] + lb(t + 1, q) + beta(t + 1, q);
            }
            beta(t, s) = logsumexp(terms);
        }
    }

    PosteriorSet ps;
    ps.loglik = logsumexp(alpha.row(T - 1));
    if (!std::isfinite(ps.loglik)) throw NumericError("forward_backward: non-finite sequence log-likelihood");

    ps.gamma = Matrix(T, n, 0.0);
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < n; ++s) {
            const double lg = alpha(t, s) + beta(t, s) - ps.loglik;
            ps.gamma(t, s) = lg == kNegInf ? 0.0 : std::exp(lg);
        }
    }

    ps.xi.assign(static_cast<std::size_t>(std::max(T - 1, 0)) * n * n, 0.0);
    for (int t = 0; t + 1 < T; ++t) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                const double lt = lc.ltrans[static_cast<std::size_t>(a) * n + b];
                if (lt == kNegInf) continue;
                const double lx = alpha(t, a) + lt + lb(t + 1, b) + beta(t + 1, b) - ps.loglik;
                ps.xi[(static_cast<std::size_t>(t) * n + a) * n + b] = lx == kNegInf ? 0.0 : std::exp(lx);
            }
        }
    }

    // mixture responsibilities: gamma(t,s) shared out by per-component mass
    ps.gamma_m.assign(static_cast<std::size_t>(T) * n * n_mix, 0.0);
    std::vector<double> comp(n_mix);
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < n; ++s) {
            const double g = ps.gamma(t, s);
            if (g == 0.0) continue;
            emission_component_logprobs_flat(m, off + s, t, frames, comp);
            const double denom = lb(t, s);
            for (int k = 0; k < n_mix; ++k) {
                const double w = comp[k] == kNegInf ? 0.0 : std::exp(comp[k] - denom);
                ps.gamma_m[(static_cast<std::size_t>(t) * n + s) * n_mix + k] = g * w;
            }
        }
    }
    return ps;
}

std::pair<std::vector<int>, double> viterbi(const DBMModel& m, int class_idx, const Matrix& frames) {
    const LogChain lc = log_chain(m.chains[class_idx]);
    const Matrix lb = emission_table(m, class_idx, frames);
    const int T = frames.rows, n = lc.n;

    Matrix score(T, n, kNegInf);
    std::vector<int> back(static_cast<std::size_t>(T) * n, 0);
    for (int s = 0; s < n; ++s) score(0, s) = lc.linit[s] + lb(0, s);
    for (int t = 1; t < T; ++t) {
        for (int s = 0; s < n; ++s) {
            double best = kNegInf;
            int arg = 0;
            for (int p = 0; p < n; ++p) {
                const double v = score(t - 1, p) + lc.ltrans[static_cast<std::size_t>(p) * n + s];
                if (v > best) { // strict: ties keep the lower predecessor index
                    best = v;
                    arg = p;
                }
            }
            score(t, s) = best + lb(t, s);
            back[static_cast<std::size_t>(t) * n + s] = arg;
        }
    }
    double best = kNegInf;
    int arg = 0;
    for (int s = 0; s < n; ++s) {
        if (score(T - 1, s) > best) {
            best = score(T - 1, s);
            arg = s;
        }
    }
    std::vector<int> path(T);
    path[T - 1] = arg;
    for (int t = T - 1; t > 0; --t) path[t - 1] = back[static_cast<std::size_t>(t) * n + path[t]];
    return {std::move(path), best};
}

Classification classify(const DBMModel& m, const Matrix& raw_frames) {
    if (raw_frames.cols != m.dim) {
        throw DataError("classify: sequence has " + std::to_string(raw_frames.cols) +
                        " features, model expects " + std::to_string(m.dim));
    }
    Matrix frames = raw_frames;
    for (int t = 0; t < frames.rows; ++t)
        for (int i = 0; i < frames.cols; ++i) frames(t, i) = m.standardizer.forward(frames(t, i), i);

    Classification out;
    const double log_prior = -std::log(static_cast<double>(m.classes.size()));
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        out.logliks.emplace_back(m.classes[c], forward_loglik(m, static_cast<int>(c), frames) + log_prior);
    }
    const auto better = [](const std::pair<std::string, double>& a, const std::pair<std::string, double>& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first; // tie: lexicographically first label
    };
    out.label = std::min_element(out.logliks.begin(), out.logliks.end(),
                                 [&](const auto& a, const auto& b) { return better(a, b); })
                    ->first;
    return out;
}

} // namespace dbmnet
