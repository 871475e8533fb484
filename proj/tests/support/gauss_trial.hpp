#pragma once

// Gaussian-triple likelihood trial: sample (x, z_a, z_b) with fixed
// correlations, fit a one-dimensional linear-Gaussian predictor of x from
// each candidate on a training half, and compare mean held-out conditional
// log-likelihoods. Entirely independent of the library estimators.

#include <cmath>
#include <numbers>
#include <random>

namespace testsupport {

struct TripleTrial {
    double heldout_a = 0.0;
    double heldout_b = 0.0;
};

inline TripleTrial gaussian_triple_trial(double rho_a, double rho_b, int n, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double resid = std::sqrt(1.0 - rho_a * rho_a - rho_b * rho_b);

    const int total = 2 * n;
    std::vector<double> x(total), za(total), zb(total);
    for (int k = 0; k < total; ++k) {
        za[k] = normal(eng);
        zb[k] = normal(eng);
        x[k] = rho_a * za[k] + rho_b * zb[k] + resid * normal(eng);
    }

    const auto fit_eval = [&](const std::vector<double>& z) {
        double sz = 0.0, sx = 0.0, szz = 0.0, szx = 0.0;
        for (int k = 0; k < n; ++k) {
            sz += z[k];
            sx += x[k];
            szz += z[k] * z[k];
            szx += z[k] * x[k];
        }
        const double mz = sz / n, mx = sx / n;
        const double cov = szx / n - mz * mx;
        const double vz = szz / n - mz * mz;
        const double slope = cov / vz;
        const double intercept = mx - slope * mz;
        double vres = 0.0;
        for (int k = 0; k < n; ++k) {
            const double r = x[k] - slope * z[k] - intercept;
            vres += r * r;
        }
        vres /= n;
        double held = 0.0;
        for (int k = n; k < total; ++k) {
            const double r = x[k] - slope * z[k] - intercept;
            held += -0.5 * std::log(2.0 * std::numbers::pi * vres) - r * r / (2.0 * vres);
        }
        return held / n;
    };

    return {fit_eval(za), fit_eval(zb)};
}

} // namespace testsupport
