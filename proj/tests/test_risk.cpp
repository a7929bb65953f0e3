#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "riskmpc/errors.hpp"
#include "riskmpc/risk.hpp"
#include "riskmpc/rng.hpp"

using namespace riskmpc;

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Independent inverse-normal oracle: bisection on the CDF.
double quantile_oracle(double p) {
    double lo = -12.0, hi = 12.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (phi_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> iota_samples(int n) {
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = i + 1.0;
    return xs;
}

}  // namespace

TEST_CASE("normal quantile against bisection oracle") {
    for (double p : {1e-6, 1e-3, 0.01, 0.1, 0.25, 0.5, 0.6, 0.9, 0.99, 0.999, 1.0 - 1e-6}) {
        CHECK(normal_quantile(p) == doctest::Approx(quantile_oracle(p)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), ConfigError);
    CHECK_THROWS_AS(normal_quantile(1.0), ConfigError);
}

TEST_CASE("risk coefficients at alpha = 0.4") {
    const double alpha = 0.4;
    CHECK(risk_coefficient({RiskKind::Expectation, 0.123}) == 0.0);

    const double var_oracle = quantile_oracle(0.6);
    CHECK(risk_coefficient({RiskKind::VaR, alpha}) == doctest::Approx(var_oracle).epsilon(1e-10));
    CHECK(std::abs(risk_coefficient({RiskKind::VaR, alpha}) - 0.253347) <= 2.5e-6);

    const double cvar_oracle = normal_pdf(var_oracle) / alpha;
    CHECK(risk_coefficient({RiskKind::CVaR, alpha}) == doctest::Approx(cvar_oracle).epsilon(1e-10));
    CHECK(std::abs(risk_coefficient({RiskKind::CVaR, alpha}) - 0.965858) <= 2.5e-6);

    CHECK(risk_coefficient({RiskKind::EVaR, alpha}) ==
          doctest::Approx(std::sqrt(-2.0 * std::log(alpha))).epsilon(1e-14));
    CHECK(std::abs(risk_coefficient({RiskKind::EVaR, alpha}) - 1.353729) <= 2.5e-6);
}

TEST_CASE("gaussian risk closed form") {
    CHECK(gaussian_risk({RiskKind::Expectation, 0.4}, {3.0, 7.0}) == 3.0);
    CHECK(std::abs(gaussian_risk({RiskKind::CVaR, 0.4}, {0.0, 1.0}) - 0.965858) <= 2.5e-6);
    CHECK(gaussian_risk({RiskKind::EVaR, 0.4}, {1.0, 2.0}) ==
          doctest::Approx(1.0 + 2.0 * std::sqrt(-2.0 * std::log(0.4))).epsilon(1e-12));
}

TEST_CASE("gaussian coefficient ordering on the alpha grid") {
    for (int i = 1; i <= 99; ++i) {
        const double alpha = i / 200.0;  // (0, 0.5]
        const double e = risk_coefficient({RiskKind::Expectation, alpha});
        const double var = risk_coefficient({RiskKind::VaR, alpha});
        const double cvar = risk_coefficient({RiskKind::CVaR, alpha});
        const double evar = risk_coefficient({RiskKind::EVaR, alpha});
        CHECK(e <= var + 1e-12);
        CHECK(var <= cvar + 1e-12);
        CHECK(cvar <= evar + 1e-12);
    }
}

TEST_CASE("empirical estimators on 1..10") {
    const auto xs = iota_samples(10);
    CHECK(empirical_risk({RiskKind::Expectation, 0.4}, xs) == doctest::Approx(5.5));
    CHECK(empirical_risk({RiskKind::VaR, 0.4}, xs) == doctest::Approx(6.0));
    CHECK(empirical_risk({RiskKind::CVaR, 0.4}, xs) == doctest::Approx(8.5));
    CHECK_THROWS_AS(empirical_risk({RiskKind::VaR, 0.4}, std::vector<double>{}), EmptySamples);
}

TEST_CASE("empirical VaR tie-breaking takes the smallest admissible order statistic") {
    const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    // CDF(2) = 0.5 >= 0.5 exactly.
    CHECK(empirical_risk({RiskKind::VaR, 0.5}, xs) == doctest::Approx(2.0));
    CHECK(empirical_risk({RiskKind::VaR, 0.49}, xs) == doctest::Approx(3.0));
}

TEST_CASE("empirical EVaR on degenerate and non-finite samples") {
    const std::vector<double> constant(100, 2.5);
    CHECK(empirical_risk({RiskKind::EVaR, 0.4}, constant) == doctest::Approx(2.5).epsilon(1e-5));

    const std::vector<double> bad = {1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(empirical_risk({RiskKind::EVaR, 0.4}, bad), EVaRSearchFailure);
}

TEST_CASE("translativity") {
    const std::vector<double> small = {0.0, 1.0};
    for (RiskKind kind : {RiskKind::Expectation, RiskKind::VaR, RiskKind::CVaR, RiskKind::EVaR}) {
        CHECK(translativity_check({kind, 0.4}, small, 5.0));
    }

    const auto xs = iota_samples(10);
    CHECK(empirical_risk({RiskKind::CVaR, 0.4}, xs) - 3.0 == doctest::Approx(5.5).epsilon(1e-12));
    CHECK(translativity_check({RiskKind::CVaR, 0.4}, xs, -3.0));

    RngStream rng(3, 0);
    std::vector<double> normals(1000000);
    for (double& x : normals) x = rng.normal();
    CHECK(translativity_check({RiskKind::EVaR, 0.4}, normals, 2.0));
}

TEST_CASE("estimator ordering over random sample sets") {
    RngStream rng(5, 0);
    // VaR <= CVaR <= EVaR and E <= CVaR hold for any sample law.
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 20 + static_cast<int>(rng.next_u64() % 400);
        std::vector<double> xs(n);
        for (double& x : xs) {
            // Skewed mixture to stress the tail estimators.
            x = rng.normal() + (rng.uniform01() < 0.2 ? 5.0 * std::abs(rng.normal()) : 0.0);
        }
        const double alpha = 0.05 + 0.9 * rng.uniform01();
        const double e = empirical_risk({RiskKind::Expectation, alpha}, xs);
        const double var = empirical_risk({RiskKind::VaR, alpha}, xs);
        const double cvar = empirical_risk({RiskKind::CVaR, alpha}, xs);
        const double evar = empirical_risk({RiskKind::EVaR, alpha}, xs);
        CHECK(var <= cvar + 1e-9);
        CHECK(e <= cvar + 1e-9);
        CHECK(cvar <= evar + 1e-6);
    }
    // Full chain E <= VaR <= CVaR <= EVaR on symmetric samples, alpha <= 0.45.
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs(10000);
        for (double& x : xs) x = rng.normal();
        const double alpha = 0.05 + 0.4 * rng.uniform01();
        const double e = empirical_risk({RiskKind::Expectation, alpha}, xs);
        const double var = empirical_risk({RiskKind::VaR, alpha}, xs);
        const double cvar = empirical_risk({RiskKind::CVaR, alpha}, xs);
        const double evar = empirical_risk({RiskKind::EVaR, alpha}, xs);
        CHECK(e <= var + 1e-9);
        CHECK(var <= cvar + 1e-9);
        CHECK(cvar <= evar + 1e-6);
    }
}

TEST_CASE("monotonicity under pointwise domination") {
    RngStream rng(9, 0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 50 + static_cast<int>(rng.next_u64() % 200);
        std::vector<double> lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            lo[i] = rng.normal();
            hi[i] = lo[i] + 2.0 * rng.uniform01();
        }
        const double alpha = 0.05 + 0.9 * rng.uniform01();
        for (RiskKind kind :
             {RiskKind::Expectation, RiskKind::VaR, RiskKind::CVaR, RiskKind::EVaR}) {
            const double tol = kind == RiskKind::EVaR ? 1e-6 : 1e-9;
            CHECK(empirical_risk({kind, alpha}, lo) <= empirical_risk({kind, alpha}, hi) + tol);
        }
    }
}

TEST_CASE("estimator consistency against Gaussian closed forms") {
    RngStream rng(21, 0);
    std::vector<double> xs(200000);
    for (double& x : xs) x = rng.normal();
    const double alpha = 0.4;
    for (RiskKind kind : {RiskKind::Expectation, RiskKind::VaR, RiskKind::CVaR}) {
        const double closed = gaussian_risk({kind, alpha}, {0.0, 1.0});
        CHECK(std::abs(empirical_risk({kind, alpha}, xs) - closed) <= 0.02);
    }
    CHECK(std::abs(empirical_risk({RiskKind::EVaR, alpha}, xs) -
                   gaussian_risk({RiskKind::EVaR, alpha}, {0.0, 1.0})) <= 0.05);
}
