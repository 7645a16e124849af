#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bctap/errors.hpp"

namespace bctap::stats {

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// unbiased sample variance (n-1); 0 for n < 2
inline double variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

inline double stddev(std::span<const double> v) { return std::sqrt(variance(v)); }

// quantile with linear interpolation between order statistics (type 7)
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw TooFewSamples("quantile of empty sample");
    std::sort(v.begin(), v.end());
    p = std::clamp(p, 0.0, 1.0);
    const double h = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double normal_pdf(double x, double mu, double var) {
    const double z = x - mu;
    return std::exp(-0.5 * z * z / var) / std::sqrt(6.283185307179586 * var);
}

inline double normal_logpdf(double x, double mu, double var) {
    const double z = x - mu;
    return -0.5 * (std::log(6.283185307179586 * var) + z * z / var);
}

// trapezoid quadrature on a uniform grid with spacing dx
inline double trapezoid(std::span<const double> f, double dx) {
    if (f.size() < 2) return 0.0;
    double acc = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) acc += f[i];
    return acc * dx;
}

// Solve A x = b in place by Gaussian elimination with partial pivoting.
// A is n x n row-major. Throws FitFailure on a (near-)singular system.
inline std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(A[r * n + col]) > std::fabs(A[piv * n + col])) piv = r;
        if (std::fabs(A[piv * n + col]) < 1e-12)
            throw FitFailure("singular linear system");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A[piv * n + c], A[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        const double diag = A[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / diag;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= A[ri * n + c] * x[c];
        x[ri] = acc / A[ri * n + ri];
    }
    return x;
}

struct OlsResult {
    std::vector<double> beta;
    std::vector<double> se;       // standard errors
    std::vector<double> resid;
    double sigma2 = 0.0;          // residual variance (n - k)
};

// OLS via normal equations; X row-major (n x k)
inline OlsResult ols(const std::vector<double>& X, const std::vector<double>& y, std::size_t k) {
    const std::size_t n = y.size();
    if (n < k + 1) throw SeriesTooShort("not enough rows for OLS");
    std::vector<double> XtX(k * k, 0.0), Xty(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < k; ++a) {
            Xty[a] += X[i * k + a] * y[i];
            for (std::size_t b2 = 0; b2 <= a; ++b2) XtX[a * k + b2] += X[i * k + a] * X[i * k + b2];
        }
    }
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b2 = a + 1; b2 < k; ++b2) XtX[a * k + b2] = XtX[b2 * k + a];

    OlsResult r;
    std::vector<double> XtX_copy = XtX;
    r.beta = solve_linear(XtX, Xty);
    r.resid.resize(n);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fit = 0.0;
        for (std::size_t a = 0; a < k; ++a) fit += X[i * k + a] * r.beta[a];
        r.resid[i] = y[i] - fit;
        sse += r.resid[i] * r.resid[i];
    }
    r.sigma2 = sse / static_cast<double>(n - k);

    // standard errors: sigma2 * diag((X'X)^-1), column-by-column solve
    r.se.resize(k);
    for (std::size_t a = 0; a < k; ++a) {
        std::vector<double> e(k, 0.0);
        e[a] = 1.0;
        std::vector<double> col = solve_linear(XtX_copy, e);
        r.se[a] = std::sqrt(std::max(0.0, r.sigma2 * col[a]));
    }
    return r;
}

// Nelder-Mead simplex minimizer; returns the best point found.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step = 0.1,
                                       int max_eval = 2000, double ftol = 1e-10) {
    const std::size_t n = x0.size();
    if (n == 0) return x0;
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    int evals = 0;
    for (std::size_t i = 0; i <= n; ++i) { fv[i] = f(pts[i]); ++evals; }

    while (evals < max_eval) {
        // order
        std::vector<std::size_t> idx(n + 1);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> p2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) { p2[i] = pts[idx[i]]; f2[i] = fv[idx[i]]; }
        pts.swap(p2);
        fv.swap(f2);
        if (std::fabs(fv[n] - fv[0]) <= ftol * (std::fabs(fv[0]) + ftol)) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + coef * (pts[n][j] - centroid[j]);
            return p;
        };
        std::vector<double> xr = blend(-1.0);
        double fr = f(xr); ++evals;
        if (fr < fv[0]) {
            std::vector<double> xe = blend(-2.0);
            double fe = f(xe); ++evals;
            if (fe < fr) { pts[n] = xe; fv[n] = fe; }
            else { pts[n] = xr; fv[n] = fr; }
        } else if (fr < fv[n - 1]) {
            pts[n] = xr; fv[n] = fr;
        } else {
            std::vector<double> xc = blend(fr < fv[n] ? -0.5 : 0.5);
            double fc = f(xc); ++evals;
            if (fc < std::min(fr, fv[n])) { pts[n] = xc; fv[n] = fc; }
            else { // shrink toward best
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j)
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    fv[i] = f(pts[i]); ++evals;
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    return pts[best];
}

// Stability of the lag polynomial 1 - a1 B - ... - ap B^p: all roots outside
// the unit circle. Checked through the Schur-Cohn recursion on the reversed
// polynomial (roots inside the unit circle).
inline bool lag_polynomial_stable(std::span<const double> a) {
    std::size_t p = a.size();
    while (p > 0 && std::fabs(a[p - 1]) < 1e-14) --p;
    if (p == 0) return true;
    // reversed polynomial coefficients: z^p - a1 z^(p-1) - ... - ap
    std::vector<double> c(p + 1);
    c[0] = 1.0;
    for (std::size_t i = 0; i < p; ++i) c[i + 1] = -a[i];
    // Schur-Cohn: iteratively reduce degree, require |c[deg]/c[0]| < 1
    for (std::size_t deg = p; deg >= 1; --deg) {
        const double k = c[deg] / c[0];
        if (std::fabs(k) >= 1.0 - 1e-12) return false;
        std::vector<double> next(deg);
        for (std::size_t i = 0; i < deg; ++i) next[i] = (c[i] - k * c[deg - i]) / (1.0 - k * k);
        c = std::move(next);
    }
    return true;
}

// MA polynomial 1 + m1 B + ... + mq B^q is invertible iff the lag polynomial
// with coefficients -m is stable.
inline bool ma_polynomial_invertible(std::span<const double> m) {
    std::vector<double> neg(m.begin(), m.end());
    for (double& x : neg) x = -x;
    return lag_polynomial_stable(neg);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace bctap::stats
