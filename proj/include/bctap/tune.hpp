#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "bctap/errors.hpp"
#include "bctap/stats.hpp"

namespace bctap {

inline constexpr int kTunePhases = 8;

struct TuneConfig {
    double sigma2_cur = 0.25;    // confidence in the current Q-value
    int grid_size = 2048;
    double bw_floor = 1e-3;
    std::size_t history_window = 0; // most recent values per phase; 0 = all

    void validate() const {
        if (sigma2_cur <= 0) throw ConfigError("sigma2_cur must be positive");
        if (grid_size < 256) throw ConfigError("grid_size must be >= 256");
        if (bw_floor <= 0) throw ConfigError("bw_floor must be positive");
    }
};

// Uniform evaluation grid shared by prior, likelihood and posterior.
struct Grid {
    double lo = 0.0, hi = 1.0;
    int n = 2;

    double dx() const { return (hi - lo) / (n - 1); }
    double point(int i) const { return lo + dx() * i; }
};

struct KdeDensity {
    Grid grid;
    std::vector<double> values; // normalized: trapezoid integral == 1
    double bandwidth = 0.0;
};

struct PosteriorDensity {
    Grid grid;
    std::vector<double> values; // normalized
    bool fell_back_to_prior = false;
};

// Silverman's rule, floored.
inline double silverman_bandwidth(std::span<const double> history, double floor_at = 1e-3) {
    const double sd = stats::stddev(history);
    const double bw = 1.06 * sd * std::pow(static_cast<double>(std::max<std::size_t>(history.size(), 1)), -0.2);
    return std::max(bw, floor_at);
}

// Gaussian-kernel density estimate of the history on the given grid,
// renormalized so the trapezoid integral is exactly 1.
inline KdeDensity kde_prior(std::span<const double> history, double bw, const Grid& grid) {
    if (history.empty()) throw EmptyHistory("KDE needs at least one observation");
    if (bw <= 0.0) throw NonPositiveBandwidth("bandwidth must be positive");
    KdeDensity out;
    out.grid = grid;
    out.bandwidth = bw;
    out.values.assign(grid.n, 0.0);
    const double norm = 1.0 / (static_cast<double>(history.size()) * bw * std::sqrt(6.283185307179586));
    for (int i = 0; i < grid.n; ++i) {
        const double x = grid.point(i);
        double acc = 0.0;
        for (double h : history) {
            const double u = (x - h) / bw;
            acc += std::exp(-0.5 * u * u);
        }
        out.values[i] = acc * norm;
    }
    const double mass = stats::trapezoid(out.values, grid.dx());
    if (mass <= 0.0) throw EmptyHistory("KDE mass vanished on the grid");
    for (double& v : out.values) v /= mass;
    return out;
}

// Default grid from the history support: [min - 3 bw, max + 3 bw].
inline KdeDensity kde_prior(std::span<const double> history, double bw, int grid_size = 2048) {
    if (history.empty()) throw EmptyHistory("KDE needs at least one observation");
    if (bw <= 0.0) throw NonPositiveBandwidth("bandwidth must be positive");
    const auto [lo, hi] = std::minmax_element(history.begin(), history.end());
    Grid g{*lo - 3.0 * bw, *hi + 3.0 * bw, grid_size};
    return kde_prior(history, bw, g);
}

// Overall likelihood on the grid: the weighted current-Q Gaussian times the
// product of per-history-point Gaussian kernels, evaluated in log space and
// exponentiated after subtracting the maximum. The result is scale-free.
inline std::vector<double> likelihood(const Grid& grid, double q_cur,
                                      std::span<const double> history, double bw,
                                      double sigma2_cur) {
    if (sigma2_cur <= 0.0) throw ConfigError("sigma2_cur must be positive");
    if (!history.empty() && bw <= 0.0) throw NonPositiveBandwidth("bandwidth must be positive");
    std::vector<double> logv(grid.n);
    const double bw2 = bw * bw;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.n; ++i) {
        const double x = grid.point(i);
        double lv = stats::normal_logpdf(x, q_cur, sigma2_cur);
        for (double h : history) lv += stats::normal_logpdf(x, h, bw2);
        logv[i] = lv;
        mx = std::max(mx, lv);
    }
    if (!std::isfinite(mx)) throw ArgumentError("likelihood is zero everywhere on the grid");
    std::vector<double> out(grid.n);
    for (int i = 0; i < grid.n; ++i) out[i] = std::exp(logv[i] - mx);
    return out;
}

// Pointwise product of prior and likelihood, renormalized. A product that
// vanishes numerically falls back to the prior and reports it.
inline PosteriorDensity posterior(const KdeDensity& prior, std::span<const double> lik) {
    if (static_cast<int>(lik.size()) != prior.grid.n)
        throw ShapeMismatch("likelihood and prior grids differ");
    PosteriorDensity out;
    out.grid = prior.grid;
    out.values.assign(prior.grid.n, 0.0);
    for (int i = 0; i < prior.grid.n; ++i) out.values[i] = prior.values[i] * lik[i];
    const double mass = stats::trapezoid(out.values, prior.grid.dx());
    if (mass <= 1e-300) {
        out.values = prior.values;
        out.fell_back_to_prior = true;
        return out;
    }
    for (double& v : out.values) v /= mass;
    return out;
}

// Expected squared loss of acting with q_cur under the posterior,
// trapezoid-quadrature of (q_cur - Q)^2 against the density.
inline double posterior_risk(const PosteriorDensity& post, double q_cur) {
    std::vector<double> f(post.grid.n);
    for (int i = 0; i < post.grid.n; ++i) {
        const double d = q_cur - post.grid.point(i);
        f[i] = d * d * post.values[i];
    }
    return stats::trapezoid(f, post.grid.dx());
}

inline double posterior_mean(const PosteriorDensity& post) {
    std::vector<double> f(post.grid.n);
    for (int i = 0; i < post.grid.n; ++i) f[i] = post.grid.point(i) * post.values[i];
    return stats::trapezoid(f, post.grid.dx());
}

struct TuneDecision {
    int phase = 1;                         // 1..8, lowest-index tie-break
    std::array<double, kTunePhases> risk{};
};

// Per-phase posterior risk from the KDE prior over that phase's Q history and
// the weighted current-Q likelihood; picks the minimum-risk phase. Phases
// with no history score (q_cur - pooled mean)^2 + pooled variance; if no
// phase has history the first phase is returned with zero risks.
inline TuneDecision tune(std::span<const double> q_cur,
                         const std::array<std::vector<double>, kTunePhases>& q_hist,
                         const TuneConfig& cfg) {
    cfg.validate();
    TuneDecision out;

    auto windowed = [&](const std::vector<double>& h) {
        const std::size_t n = (cfg.history_window > 0 && h.size() > cfg.history_window)
                                  ? cfg.history_window
                                  : h.size();
        return std::span<const double>(h.data() + (h.size() - n), n);
    };

    std::vector<double> pooled;
    for (const auto& h : q_hist) {
        const auto w = windowed(h);
        pooled.insert(pooled.end(), w.begin(), w.end());
    }
    if (pooled.empty()) {
        out.phase = 1;
        return out;
    }
    const double pooled_mean = stats::mean(pooled);
    const double pooled_var = stats::variance(pooled);

    for (int j = 0; j < kTunePhases; ++j) {
        const auto hist = windowed(q_hist[j]);
        if (hist.empty()) {
            const double bias = q_cur[j] - pooled_mean;
            out.risk[j] = bias * bias + pooled_var;
            continue;
        }
        const double bw = silverman_bandwidth(hist, cfg.bw_floor);
        const double lo = std::min(*std::min_element(hist.begin(), hist.end()), q_cur[j]);
        const double hi = std::max(*std::max_element(hist.begin(), hist.end()), q_cur[j]);
        const Grid grid{lo - 3.0 * bw, hi + 3.0 * bw, cfg.grid_size};
        const KdeDensity prior = kde_prior(hist, bw, grid);
        const auto lik = likelihood(grid, q_cur[j], hist, bw, cfg.sigma2_cur);
        const PosteriorDensity post = posterior(prior, lik);
        out.risk[j] = posterior_risk(post, q_cur[j]);
    }
    int best = 0;
    for (int j = 1; j < kTunePhases; ++j)
        if (out.risk[j] < out.risk[best]) best = j;
    out.phase = best + 1;
    return out;
}

} // namespace bctap
