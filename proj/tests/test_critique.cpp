#include <catch2/catch_amalgamated.hpp>

#include "bctap/critique.hpp"
#include "test_util.hpp"

using namespace bctap;

TEST_CASE("differencing") {
    SECTION("first differences") {
        const std::vector<double> s = {1, 3, 6, 10};
        CHECK(difference(s, 1) == std::vector<double>{2, 3, 4});
    }
    SECTION("identity") {
        const std::vector<double> s = {4, 2, 0, 5};
        CHECK(difference(s, 0, 0, 0) == s);
    }
    SECTION("seasonal lag-3 differences") {
        const std::vector<double> s = {1, 2, 3, 4, 5, 6};
        CHECK(difference(s, 0, 3, 1) == std::vector<double>{3, 3, 3});
    }
    SECTION("too short") {
        const std::vector<double> s = {1.0};
        CHECK_THROWS_AS(difference(s, 1), SeriesTooShort);
    }
    SECTION("difference then undifference reconstructs exactly") {
        RngStream rng(1);
        for (auto [d, s, D] : {std::tuple{1, 0, 0}, {0, 4, 1}, {1, 4, 1}}) {
            std::vector<double> series(40);
            for (double& v : series) v = std::floor(rng.uniform(-50, 50));
            const auto z = difference(series, d, s, D);
            const std::size_t m = static_cast<std::size_t>(d) + static_cast<std::size_t>(D) * s;
            const std::vector<double> prefix(series.begin(), series.begin() + m);
            CHECK(undifference(z, prefix, d, s, D) == series);
        }
    }
}

TEST_CASE("ADF test behavior on known processes") {
    SECTION("iid noise is usually stationary") {
        int hits = 0;
        for (int seed = 0; seed < 20; ++seed) {
            RngStream rng(100 + seed);
            std::vector<double> s(300);
            for (double& v : s) v = rng.normal();
            if (adf_test(s) == Stationarity::stationary) ++hits;
        }
        CHECK(hits >= 18);
    }
    SECTION("random walk is usually non-stationary") {
        int hits = 0;
        const int seeds = 50;
        for (int seed = 0; seed < seeds; ++seed) {
            RngStream rng(200 + seed);
            std::vector<double> s(300);
            double acc = 0.0;
            for (double& v : s) {
                acc += rng.normal();
                v = acc;
            }
            if (adf_test(s) == Stationarity::non_stationary) ++hits;
        }
        CHECK(hits >= 45); // >= 90% rate
    }
    SECTION("constant series takes the differencing path") {
        const std::vector<double> s(50, 3.25);
        CHECK(adf_test(s) == Stationarity::non_stationary);
    }
    SECTION("too short") {
        const std::vector<double> s(10, 0.0);
        CHECK_THROWS_AS(adf_test(s), SeriesTooShort);
    }
}

TEST_CASE("BIC arithmetic") {
    CHECK(bic_value(-100.0, 3, 360) == Catch::Approx(200.0 + 3.0 * std::log(360.0)).epsilon(1e-12));
    CHECK(bic_value(-100.0, 3, 360) == Catch::Approx(217.66).margin(0.01));
}

TEST_CASE("conditional ML fit recovers an AR(1)") {
    RngStream rng(11);
    const auto series = testutil::simulate_ar1(0.6, 0.5, 1.0, 600, rng);
    SarimaOrder o;
    o.p = 1;
    const auto m = fit_sarima(series, o);
    CHECK(m.phi[0] == Catch::Approx(0.6).margin(0.1));
    CHECK(m.sigma2 == Catch::Approx(1.0).margin(0.25));
}

TEST_CASE("order selection") {
    SECTION("AR(1) data selects p=1, q=0 most of the time") {
        int hits = 0;
        const int seeds = 15;
        for (int seed = 0; seed < seeds; ++seed) {
            RngStream rng(300 + seed);
            const auto series = testutil::simulate_ar1(0.6, 0.0, 1.0, 500, rng);
            const auto o = select_order(series, 0);
            if (o.p == 1 && o.q == 0 && o.d == 0) ++hits;
        }
        CHECK(hits >= static_cast<int>(0.8 * seeds));
    }
    SECTION("white noise prefers p=q=0") {
        int hits = 0;
        const int seeds = 15;
        for (int seed = 0; seed < seeds; ++seed) {
            RngStream rng(400 + seed);
            std::vector<double> s(400);
            for (double& v : s) v = rng.normal();
            const auto o = select_order(s, 0);
            if (o.p == 0 && o.q == 0) ++hits;
        }
        CHECK(hits >= static_cast<int>(0.8 * seeds));
    }
}

TEST_CASE("zero-mean transform leaves coefficient estimates unchanged") {
    // fit on a differenced series vs the mean-centered differenced series
    RngStream rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        SarimaOrder gen;
        gen.p = 1;
        gen.q = 1;
        testutil::SarimaTruth g;
        g.c = rng.uniform(-1.0, 1.0);
        g.phi = {rng.uniform(-0.6, 0.6)};
        g.theta = {rng.uniform(-0.5, 0.5)};
        g.sigma = 1.0;
        auto w = testutil::simulate_sarma(gen, g, 300, rng);

        std::vector<double> centered = w;
        const double mu = stats::mean(w);
        for (double& v : centered) v -= mu;

        SarimaOrder o;
        o.p = 1;
        o.q = 1;
        const auto a = fit_sarima(w, o);
        const auto b = fit_sarima(centered, o);
        CHECK(a.phi[0] == Catch::Approx(b.phi[0]).margin(1e-6));
        CHECK(a.theta[0] == Catch::Approx(b.theta[0]).margin(1e-6));
    }
}

TEST_CASE("posterior sampling") {
    SECTION("posterior concentrates near the true AR coefficient") {
        RngStream rng(31);
        const auto series = testutil::simulate_ar1(0.6, 0.0, 1.0, 300, rng);
        SarimaOrder o;
        o.p = 1;
        PriorSpec priors = default_priors(series, 1.0);
        RngStream mcmc(32);
        const auto set = sample_posterior_forecasts(series, o, priors, 800, 1, mcmc, 500);
        double mean_phi = 0.0;
        for (const auto& d : set.draws) mean_phi += d.phi[0];
        mean_phi /= set.draws.size();
        CHECK(mean_phi == Catch::Approx(0.6).margin(0.15));
        CHECK(set.forecasts.size() == 800);
    }
    SECTION("small Laplace scale concentrates draws at the prior mean") {
        RngStream rng(41);
        const auto series = testutil::simulate_ar1(0.5, 0.0, 1.0, 200, rng);
        SarimaOrder o;
        o.p = 1;
        double prev_spread = std::numeric_limits<double>::infinity();
        for (double b : {0.5, 0.05, 0.005}) {
            PriorSpec priors = default_priors(series, 1.0);
            priors.ar_b = b;
            RngStream mcmc(42);
            const auto set = sample_posterior_forecasts(series, o, priors, 600, 1, mcmc, 400);
            std::vector<double> phis;
            for (const auto& d : set.draws) phis.push_back(d.phi[0]);
            const double spread = stats::stddev(phis);
            const double center = std::fabs(stats::mean(phis));
            CHECK(spread < prev_spread + 1e-9);
            prev_spread = spread;
            if (b <= 0.005) CHECK(center < 0.15); // pulled toward mu_phi = 0
        }
    }
    SECTION("sigma^2 draws respect the InverseGamma support") {
        RngStream rng(51);
        const auto series = testutil::simulate_ar1(0.3, 0.0, 0.7, 150, rng);
        SarimaOrder o;
        o.p = 1;
        RngStream mcmc(52);
        const auto set =
            sample_posterior_forecasts(series, o, default_priors(series, 0.5), 300, 1, mcmc, 200);
        for (const auto& d : set.draws) CHECK(d.sigma2 > 0.0);
    }
    SECTION("appending observations advances the forecast recursion") {
        RngStream rng(61);
        const double phi = 0.8;
        auto series = testutil::simulate_ar1(phi, 0.0, 0.5, 400, rng);
        SarimaOrder o;
        o.p = 1;
        PriorSpec priors = default_priors(series, 0.25);
        RngStream mcmc(62);
        PosteriorSampler sampler(series, o, priors, 500, 400, mcmc);

        const double jump = 8.0; // far from the recent values
        sampler.append(jump);
        RngStream frng(63);
        const auto f = sampler.forecast_samples(1, frng);
        const double mean_f = stats::mean(f);
        // 1-step mean should track c + phi * (new last value)
        CHECK(mean_f == Catch::Approx(phi * jump).margin(1.0));
    }
}

TEST_CASE("credible interval") {
    SECTION("matches normal quantiles") {
        RngStream rng(71);
        std::vector<double> draws(10000);
        for (double& v : draws) v = rng.normal();
        const auto ci = credible_interval(draws);
        CHECK(ci.lower == Catch::Approx(-1.96).margin(0.08));
        CHECK(ci.upper == Catch::Approx(1.96).margin(0.08));
    }
    SECTION("degenerate samples collapse the interval") {
        const std::vector<double> draws(50, 2.5);
        const auto ci = credible_interval(draws);
        CHECK(ci.lower == 2.5);
        CHECK(ci.upper == 2.5);
    }
    SECTION("contains the sample median") {
        RngStream rng(81);
        std::vector<double> draws(500);
        for (double& v : draws) v = rng.uniform(-3.0, 9.0);
        const auto ci = credible_interval(draws);
        const double median = stats::quantile(draws, 0.5);
        CHECK(ci.lower <= median);
        CHECK(median <= ci.upper);
    }
    SECTION("too few samples") {
        const std::vector<double> draws(39, 0.0);
        CHECK_THROWS_AS(credible_interval(draws), TooFewSamples);
    }
}

TEST_CASE("critique verdicts") {
    const CredibleInterval ci{-1.96, 1.96};
    CHECK(critique(0.0, ci) == CritiqueVerdict::accept);
    CHECK(critique(5.0, ci) == CritiqueVerdict::reject);
    CHECK(critique(1.96, ci) == CritiqueVerdict::accept);  // closed upper bound
    CHECK(critique(-1.96, ci) == CritiqueVerdict::accept); // closed lower bound
    CHECK(critique(-1.9601, ci) == CritiqueVerdict::reject);
}

TEST_CASE("credible interval width grows with the forecast horizon") {
    RngStream rng(91);
    const auto series = testutil::simulate_ar1(0.7, 0.0, 1.0, 300, rng);
    SarimaOrder o;
    o.p = 1;
    RngStream mcmc(92);
    PosteriorSampler sampler(series, o, default_priors(series, 1.0), 2000, 600, mcmc);
    RngStream frng1(93), frng8(94);
    const auto ci1 = credible_interval(sampler.forecast_samples(1, frng1));
    const auto ci8 = credible_interval(sampler.forecast_samples(8, frng8));
    // AR(1): predictive variance grows by the factor sum phi^(2i); Monte-Carlo
    // quantile noise stays well below the expected gap at 2000 draws
    CHECK(ci8.upper - ci8.lower > ci1.upper - ci1.lower);
}
