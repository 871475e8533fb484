#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dbmnet {

/// Raised on malformed inputs: files, configs, contract violations.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a computation produces non-finite values it cannot recover from.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

void warn(const std::string& msg);

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Dense row-major T x D matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    std::span<const double> row(int r) const { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
};

inline double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// ---- seeded randomness -------------------------------------------------
//
// All randomness in the artifact flows from one experiment seed, fanned out
// into named substreams so stages can be re-run independently with
// reproducible results. The hash is pinned (FNV-1a + splitmix64) rather than
// std::hash so artifacts are stable across standard library versions.

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
    return std::mt19937_64(splitmix64(seed ^ fnv1a(name)));
}

/// Fisher-Yates with a pinned index draw (std::shuffle is
/// implementation-defined and would break cross-build reproducibility).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& eng) {
    for (size_t i = v.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(eng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

/// Runs fn(i) for i in [0, n). Each index must write only its own output
/// slot; results are then independent of the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace dbmnet
