#pragma once

#include <span>
#include <vector>

namespace riskmpc {

enum class RiskKind { Expectation, VaR, CVaR, EVaR };

// A risk measure selector: the tail mass alpha in (0,1); the confidence
// level is 1 - alpha. Expectation ignores alpha.
struct RiskSpec {
    RiskKind kind = RiskKind::Expectation;
    double alpha = 0.1;

    void validate() const;
};

const char* risk_kind_name(RiskKind kind);

// Standard normal density and quantile (inverse CDF). The quantile uses
// a high-accuracy rational approximation (relative error ~1e-15).
double normal_pdf(double x);
double normal_quantile(double p);

// Closed-form coefficient R(alpha) such that the risk of a Gaussian
// scalar Y ~ N(mu, sigma^2) is mu + sigma * R(alpha):
//   Expectation -> 0
//   VaR         -> Phi^{-1}(1 - alpha)
//   CVaR        -> phi(Phi^{-1}(1 - alpha)) / alpha
//   EVaR        -> sqrt(-2 ln alpha)
double risk_coefficient(const RiskSpec& spec);

struct GaussianScalar {
    double mu = 0.0;
    double sigma = 0.0;  // >= 0
};

double gaussian_risk(const RiskSpec& spec, const GaussianScalar& y);

// Empirical estimators on a finite sample set:
//   Expectation -> sample mean
//   VaR         -> smallest sample t with empirical CDF(t) >= 1 - alpha
//   CVaR        -> t + mean((Y - t)_+) / alpha with t the empirical VaR
//   EVaR        -> min_{z>0} ln(M_hat(z) / alpha) / z, 1-D search on the
//                  empirical moment generating function
// Throws EmptySamples; EVaRSearchFailure when the search bracket cannot
// be established (non-finite sample values).
double empirical_risk(const RiskSpec& spec, std::span<const double> samples);

// Variant for pre-sorted (ascending) samples; skips the internal sort.
double empirical_risk_sorted(const RiskSpec& spec, std::span<const double> sorted);

struct EvarDetail {
    double value = 0.0;
    double z = 0.0;  // minimizing MGF argument
};

// Empirical EVaR together with the minimizing z of the 1-D search.
EvarDetail empirical_evar_detail(std::span<const double> samples, double alpha);

// Translativity probe: |rho(Y + c) - rho(Y) - c| <= 1e-9 * (1 + |c|).
bool translativity_check(const RiskSpec& spec, std::span<const double> samples, double c);

}  // namespace riskmpc
