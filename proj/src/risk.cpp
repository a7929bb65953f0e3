#include "riskmpc/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "riskmpc/errors.hpp"

namespace riskmpc {

void RiskSpec::validate() const {
    if (kind == RiskKind::Expectation) return;
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("RiskSpec: alpha must lie in (0,1)");
}

const char* risk_kind_name(RiskKind kind) {
    switch (kind) {
        case RiskKind::Expectation: return "mean";
        case RiskKind::VaR: return "var";
        case RiskKind::CVaR: return "cvar";
        case RiskKind::EVaR: return "evar";
    }
    return "?";
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Wichura's PPND16 rational approximation to the normal quantile.
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0,1)");

    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) *
                        r +
                    4.5921953931549871457e4) *
                       r +
                   1.3731693765509461125e4) *
                      r +
                  1.9715909503065514427e3) *
                     r +
                 1.3314166789178437745e2) *
                    r +
                3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) *
                        r +
                    2.1213794301586595867e4) *
                       r +
                   5.3941960214247511077e3) *
                      r +
                  6.8718700749205790830e2) *
                     r +
                 4.2313330701600911252e1) *
                    r +
                1.0);
    }

    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) *
                       r +
                   1.27045825245236838258e0) *
                      r +
                  3.64784832476320460504e0) *
                     r +
                 5.76949722146069140550e0) *
                    r +
                4.63033784615654529590e0) *
                   r +
               1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) *
                       r +
                   1.48103976427480074590e-1) *
                      r +
                  6.89767334985100004550e-1) *
                     r +
                 1.67638483018380384940e0) *
                    r +
                2.05319162663775882187e0) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) *
                       r +
                   2.65321895265761230930e-2) *
                      r +
                  2.96560571828504891230e-1) *
                     r +
                 1.78482653991729133580e0) *
                    r +
                5.46378491116411436990e0) *
                   r +
               6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-6) *
                       r +
                   7.86869131145613259100e-4) *
                      r +
                  1.48753612908506148525e-2) *
                     r +
                 1.36929880922735805310e-1) *
                    r +
                5.99832206555887937690e-1) *
                   r +
               1.0);
    }
    return (q < 0.0) ? -val : val;
}

double risk_coefficient(const RiskSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case RiskKind::Expectation: return 0.0;
        case RiskKind::VaR: return normal_quantile(1.0 - spec.alpha);
        case RiskKind::CVaR: return normal_pdf(normal_quantile(1.0 - spec.alpha)) / spec.alpha;
        case RiskKind::EVaR: return std::sqrt(-2.0 * std::log(spec.alpha));
    }
    return 0.0;
}

double gaussian_risk(const RiskSpec& spec, const GaussianScalar& y) {
    if (y.sigma < 0.0) throw ConfigError("gaussian_risk: sigma must be >= 0");
    return y.mu + y.sigma * risk_coefficient(spec);
}

namespace {

double sample_mean(std::span<const double> samples) {
    double sum = 0.0;
    for (double y : samples) sum += y;
    return sum / static_cast<double>(samples.size());
}

// Smallest order statistic whose empirical CDF reaches 1 - alpha.
double sorted_var(std::span<const double> sorted, double alpha) {
    const auto n = static_cast<double>(sorted.size());
    auto idx = static_cast<std::size_t>(std::ceil(n * (1.0 - alpha) - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, sorted.size());
    return sorted[idx - 1];
}

double sorted_cvar(std::span<const double> sorted, double alpha) {
    const double t = sorted_var(sorted, alpha);
    double excess = 0.0;
    // Sorted input: only the upper tail contributes.
    for (std::size_t i = sorted.size(); i-- > 0;) {
        const double d = sorted[i] - t;
        if (d <= 0.0) break;
        excess += d;
    }
    return t + excess / (alpha * static_cast<double>(sorted.size()));
}

// ln(M_hat(z)/alpha)/z with M_hat the empirical MGF, via log-sum-exp.
double evar_objective(double z, std::span<const double> samples, double log_alpha) {
    double m = -std::numeric_limits<double>::infinity();
    for (double y : samples) m = std::max(m, z * y);
    double s = 0.0;
    for (double y : samples) s += std::exp(z * y - m);
    const double log_mgf = m + std::log(s / static_cast<double>(samples.size()));
    return (log_mgf - log_alpha) / z;
}

EvarDetail empirical_evar(std::span<const double> samples, double alpha) {
    for (double y : samples) {
        if (!std::isfinite(y)) throw EVaRSearchFailure("empirical EVaR: non-finite sample");
    }
    const double log_alpha = std::log(alpha);
    auto f = [&](double z) { return evar_objective(z, samples, log_alpha); };

    // Geometric sweep to bracket the minimizer; capped at z = 1e6.
    constexpr double kZLo = 1e-6;
    constexpr double kZCap = 1e6;
    constexpr double kGrow = 4.0;
    double z_prev = kZLo;
    double f_prev = f(z_prev);
    double lo = kZLo, hi = kZCap;
    bool bracketed = false;
    for (double z = kZLo * kGrow; z <= kZCap; z *= kGrow) {
        const double fz = f(z);
        if (!std::isfinite(fz)) throw EVaRSearchFailure("empirical EVaR: objective overflow");
        if (fz > f_prev) {
            lo = z_prev / kGrow;
            hi = z;
            bracketed = true;
            break;
        }
        z_prev = z;
        f_prev = fz;
    }
    if (!bracketed) {
        // Still descending at the cap; the minimum sits against it.
        lo = z_prev / kGrow;
        hi = kZCap;
    }
    lo = std::max(lo, kZLo);

    // Golden-section refinement.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && (b - a) > 1e-12 * (1.0 + b); ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    return (f1 <= f2) ? EvarDetail{f1, x1} : EvarDetail{f2, x2};
}

}  // namespace

EvarDetail empirical_evar_detail(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw EmptySamples("empirical_risk: no samples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("empirical_evar: alpha in (0,1)");
    return empirical_evar(samples, alpha);
}

double empirical_risk_sorted(const RiskSpec& spec, std::span<const double> sorted) {
    spec.validate();
    if (sorted.empty()) throw EmptySamples("empirical_risk: no samples");
    switch (spec.kind) {
        case RiskKind::Expectation: return sample_mean(sorted);
        case RiskKind::VaR: return sorted_var(sorted, spec.alpha);
        case RiskKind::CVaR: return sorted_cvar(sorted, spec.alpha);
        case RiskKind::EVaR: return empirical_evar(sorted, spec.alpha).value;
    }
    return 0.0;
}

double empirical_risk(const RiskSpec& spec, std::span<const double> samples) {
    spec.validate();
    if (samples.empty()) throw EmptySamples("empirical_risk: no samples");
    if (spec.kind == RiskKind::Expectation || spec.kind == RiskKind::EVaR) {
        return empirical_risk_sorted(spec, samples);
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return empirical_risk_sorted(spec, sorted);
}

bool translativity_check(const RiskSpec& spec, std::span<const double> samples, double c) {
    const double base = empirical_risk(spec, samples);
    std::vector<double> shifted(samples.begin(), samples.end());
    for (double& y : shifted) y += c;
    const double moved = empirical_risk(spec, shifted);
    return std::abs(moved - base - c) <= 1e-9 * (1.0 + std::abs(c));
}

}  // namespace riskmpc
