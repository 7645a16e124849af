#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace bctap {

// Deterministic RNG wrapper. All distributions are implemented here rather
// than taken from <random> so that a given seed produces the same stream on
// every standard library. Independent components of a run derive their own
// substreams via derive(), keyed by a label, so adding a consumer to one
// component never shifts the draws seen by another.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0)
        : engine_(seed ^ 0x9e3779b97f4a7c15ull), seed_base_(seed) {}

    RngStream derive(const std::string& label, std::uint64_t index = 0) const {
        std::uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char ch : label) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
        h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return RngStream(seed_base_ ^ h);
    }

    // uniform in [0,1)
    double uniform() {
        return (engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    // standard normal, Box-Muller (no cached spare: one call, two uniforms)
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mu, double sd) { return mu + sd * normal(); }

    // Laplace(mu, b) via inverse CDF
    double laplace(double mu, double b) {
        const double u = uniform() - 0.5;
        return mu - b * std::copysign(std::log(1.0 - 2.0 * std::fabs(u)), u);
    }

    // Gamma(shape a >= 1, scale 1), Marsaglia-Tsang
    double gamma(double a) {
        if (a < 1.0) {
            const double u = std::max(uniform(), 1e-300);
            return gamma(a + 1.0) * std::pow(u, 1.0 / a);
        }
        const double d = a - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // InverseGamma(shape a, scale b): X = b / Gamma(a, 1)
    double inverse_gamma(double a, double b) { return b / std::max(gamma(a), 1e-300); }

    // TruncatedNormal(mu, sd, lo, hi) via inverse-CDF on the truncated range
    double truncated_normal(double mu, double sd, double lo, double hi) {
        const double alpha = normal_cdf((lo - mu) / sd);
        const double beta = normal_cdf((hi - mu) / sd);
        double u = alpha + (beta - alpha) * uniform();
        u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
        return mu + sd * normal_quantile(u);
    }

    std::uint64_t raw() { return engine_(); }

    static double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

    // Acklam's rational approximation of the standard normal quantile,
    // refined by one Halley step; |error| < 1e-13 on (1e-12, 1-1e-12).
    static double normal_quantile(double p) {
        static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
        static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
        static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
        static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
        const double plow = 0.02425;
        double x;
        if (p < plow) {
            const double q = std::sqrt(-2.0 * std::log(p));
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        } else if (p <= 1.0 - plow) {
            const double q = p - 0.5, r = q * q;
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
        } else {
            const double q = std::sqrt(-2.0 * std::log(1.0 - p));
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        const double e = normal_cdf(x) - p;
        const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);
        return x - u / (1.0 + 0.5 * x * u);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_base_ = 0;
};

} // namespace bctap
