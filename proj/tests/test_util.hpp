#pragma once

// Shared helpers for the test suites: synthetic series generation and small
// scenario builders. Test-only code, independent of the fitting internals it
// is used to check.

#include <vector>

#include "bctap/critique.hpp"
#include "bctap/rng.hpp"

namespace testutil {

struct SarimaTruth {
    double c = 0.0;
    std::vector<double> phi, theta, sphi, stheta;
    double sigma = 1.0;
};

// Simulates the stationary SARMA recursion (no differencing) and discards a
// burn-in prefix.
inline std::vector<double> simulate_sarma(const bctap::SarimaOrder& o, const SarimaTruth& g,
                                          int n, bctap::RngStream& rng, int burn = 200) {
    const int total = n + burn;
    std::vector<double> z(total, 0.0), eps(total, 0.0);
    for (int t = 0; t < total; ++t) {
        double v = g.c;
        for (int k = 1; k <= o.p; ++k)
            if (t - k >= 0) v += g.phi[k - 1] * z[t - k];
        for (int K = 1; K <= o.P; ++K)
            if (t - K * o.s >= 0) {
                v += g.sphi[K - 1] * z[t - K * o.s];
                for (int k = 1; k <= o.p; ++k)
                    if (t - k - K * o.s >= 0) v -= g.phi[k - 1] * g.sphi[K - 1] * z[t - k - K * o.s];
            }
        const double e = rng.normal(0.0, g.sigma);
        v += e;
        for (int j = 1; j <= o.q; ++j)
            if (t - j >= 0) v += g.theta[j - 1] * eps[t - j];
        for (int J = 1; J <= o.Q; ++J)
            if (t - J * o.s >= 0) {
                v += g.stheta[J - 1] * eps[t - J * o.s];
                for (int j = 1; j <= o.q; ++j)
                    if (t - j - J * o.s >= 0) v += g.theta[j - 1] * g.stheta[J - 1] * eps[t - j - J * o.s];
            }
        eps[t] = e;
        z[t] = v;
    }
    return {z.begin() + burn, z.end()};
}

inline std::vector<double> simulate_ar1(double phi, double c, double sigma, int n,
                                        bctap::RngStream& rng) {
    bctap::SarimaOrder o;
    o.p = 1;
    SarimaTruth g;
    g.c = c;
    g.phi = {phi};
    g.sigma = sigma;
    return simulate_sarma(o, g, n, rng);
}

} // namespace testutil
