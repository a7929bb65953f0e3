#include "riskmpc/model.hpp"

#include <cmath>

#include "riskmpc/errors.hpp"
#include "riskmpc/lyapunov.hpp"
#include "riskmpc/riccati.hpp"

namespace riskmpc {

void LinearStochasticSystem::validate() const {
    const Eigen::Index n = state_dim();
    const Eigen::Index l = input_dim();
    if (a.cols() != n || b.rows() != n || mu_w.size() != n || sigma_w.rows() != n ||
        sigma_w.cols() != n || k.rows() != l || k.cols() != n) {
        throw DimensionMismatch("LinearStochasticSystem: inconsistent shapes");
    }
    if (l > 0 && controllability_rank(a, b) != n) {
        throw ConfigError("LinearStochasticSystem: (A,B) not controllable");
    }
    if (!is_stable(closed_loop())) {
        throw NotStable("LinearStochasticSystem: A + BK not stable");
    }
    if (symmetry_defect(sigma_w) > 1e-12) {
        throw ConfigError("LinearStochasticSystem: sigma_w not symmetric");
    }
    if (!is_psd(symmetrize(sigma_w))) {
        throw NotPSD("LinearStochasticSystem: sigma_w not PSD");
    }
}

void QuadCost::validate(Eigen::Index n, Eigen::Index l) const {
    if (q.rows() != n || q.cols() != n || r.rows() != l || r.cols() != l) {
        throw DimensionMismatch("QuadCost: inconsistent shapes");
    }
    if (!is_psd(symmetrize(q))) throw NotPSD("QuadCost: Q not PSD");
    if (l > 0 && Eigen::LLT<Mat>(symmetrize(r)).info() != Eigen::Success) {
        throw NotPSD("QuadCost: R not positive definite");
    }
}

void RiskConstraints::validate(Eigen::Index n, Eigen::Index l) const {
    spec.validate();
    for (const auto& row : state_rows) {
        if (row.c.size() != n) throw DimensionMismatch("RiskConstraints: state row dimension");
    }
    for (const auto& row : input_rows) {
        if (row.d.size() != l) throw DimensionMismatch("RiskConstraints: input row dimension");
    }
    if (v_box) {
        if (v_box->lower.size() != l || v_box->upper.size() != l) {
            throw DimensionMismatch("RiskConstraints: box dimension");
        }
        if ((v_box->lower.array() > v_box->upper.array()).any()) {
            throw ConfigError("RiskConstraints: box lower > upper");
        }
    }
}

SynthesisResult synthesize(const LinearStochasticSystem& sys, const QuadCost& cost) {
    sys.validate();
    cost.validate(sys.state_dim(), sys.input_dim());

    SynthesisResult out;
    const Mat acl = sys.closed_loop();
    const Mat stage_weight = symmetrize(cost.q + sys.k.transpose() * cost.r * sys.k);

    out.p = solve_dlyap(acl, stage_weight, LyapForm::AtXA);
    auto dare = solve_dare(sys.a, sys.b, cost.q, cost.r);
    out.pstar = dare.p;
    out.kstar = dare.gain;

    out.sigma_e_s = solve_dlyap(acl, symmetrize(sys.sigma_w), LyapForm::AXAt);
    const Mat acl_star = sys.a + sys.b * out.kstar;
    out.sigma_x_s = solve_dlyap(acl_star, symmetrize(sys.sigma_w), LyapForm::AXAt);

    out.stationary_cost = (out.pstar * sys.sigma_w).trace();
    out.c_f = ((out.p - out.pstar) * sys.sigma_w).trace();
    return out;
}

AdmissibilityReport check_stationary_admissible(const LinearStochasticSystem& sys,
                                                const RiskConstraints& constraints,
                                                const SynthesisResult& synth) {
    constraints.validate(sys.state_dim(), sys.input_dim());
    const double coeff = risk_coefficient(constraints.spec);

    AdmissibilityReport report;
    for (std::size_t i = 0; i < constraints.state_rows.size(); ++i) {
        const auto& row = constraints.state_rows[i];
        AdmissibilityRow entry;
        entry.is_state_row = true;
        entry.index = i;
        entry.bound = row.p;
        entry.stationary_risk = std::sqrt(std::max(0.0, row.c.dot(synth.sigma_x_s * row.c))) * coeff;
        entry.pass = entry.bound >= entry.stationary_risk - 1e-12;
        report.all_pass = report.all_pass && entry.pass;
        report.rows.push_back(entry);
    }
    for (std::size_t i = 0; i < constraints.input_rows.size(); ++i) {
        const auto& row = constraints.input_rows[i];
        AdmissibilityRow entry;
        entry.is_state_row = false;
        entry.index = i;
        entry.bound = row.q;
        const Vec kd = synth.kstar.transpose() * row.d;
        entry.stationary_risk = std::sqrt(std::max(0.0, kd.dot(synth.sigma_x_s * kd))) * coeff;
        entry.pass = entry.bound >= entry.stationary_risk - 1e-12;
        report.all_pass = report.all_pass && entry.pass;
        report.rows.push_back(entry);
    }
    return report;
}

double stage_cost_moments(const QuadCost& cost, const Vec& mu_x, const Mat& sigma_x, const Mat& k,
                          const Vec& v, bool exact_cross_term) {
    const Mat weight = cost.q + k.transpose() * cost.r * k;
    double value = mu_x.dot(weight * mu_x) + v.dot(cost.r * v) + (weight * sigma_x).trace();
    if (exact_cross_term) value += 2.0 * v.dot(cost.r * (k * mu_x));
    return value;
}

}  // namespace riskmpc
