#pragma once

#include <optional>
#include <vector>

#include "riskmpc/linalg.hpp"
#include "riskmpc/risk.hpp"

namespace riskmpc {

// Discrete-time plant x+ = A x + B u + w with i.i.d. disturbance moments
// (mu_w, sigma_w) and a fixed stabilizing tube gain K (u = K x + v).
struct LinearStochasticSystem {
    Mat a;
    Mat b;
    Vec mu_w;
    Mat sigma_w;
    Mat k;

    Eigen::Index state_dim() const { return a.rows(); }
    Eigen::Index input_dim() const { return b.cols(); }
    Mat closed_loop() const { return a + b * k; }

    // Checks shapes, controllability of (A,B), stability of A + BK and
    // positive semidefiniteness of sigma_w. Throws on violation.
    void validate() const;
};

struct QuadCost {
    Mat q;  // n x n, PSD
    Mat r;  // l x l, PD

    void validate(Eigen::Index n, Eigen::Index l) const;
};

struct StateConstraintRow {
    Vec c;
    double p = 0.0;
};

struct InputConstraintRow {
    Vec d;
    double q = 0.0;
};

struct InputBox {
    Vec lower;
    Vec upper;
};

struct RiskConstraints {
    std::vector<StateConstraintRow> state_rows;
    std::vector<InputConstraintRow> input_rows;
    RiskSpec spec;
    std::optional<InputBox> v_box;

    void validate(Eigen::Index n, Eigen::Index l) const;
};

// Offline synthesis products for a fixed gain K:
//   p        terminal weight, (A+BK)^T P (A+BK) - P = -(Q + K^T R K)
//   pstar    stabilizing Riccati solution, kstar the optimal gain
//   sigma_e_s   stationary error covariance under K
//   sigma_x_s   stationary state covariance under K*
//   stationary_cost = trace(P* sigma_w)
//   c_f      = trace((P - P*) sigma_w) >= 0, the performance-bound gap
struct SynthesisResult {
    Mat p;
    Mat pstar;
    Mat kstar;
    Mat sigma_e_s;
    Mat sigma_x_s;
    double stationary_cost = 0.0;
    double c_f = 0.0;
};

SynthesisResult synthesize(const LinearStochasticSystem& sys, const QuadCost& cost);

struct AdmissibilityRow {
    bool is_state_row = true;
    std::size_t index = 0;
    double bound = 0.0;          // p_i or q_i
    double stationary_risk = 0.0;  // sigma * R(alpha) under the stationary law
    bool pass = false;
};

struct AdmissibilityReport {
    std::vector<AdmissibilityRow> rows;
    bool all_pass = true;
};

// Verifies that the optimal stationary pair satisfies every risk row:
// p_i >= sqrt(c_i^T Sigma_X^s c_i) R(alpha), input rows through K*.
AdmissibilityReport check_stationary_admissible(const LinearStochasticSystem& sys,
                                                const RiskConstraints& constraints,
                                                const SynthesisResult& synth);

// Per-step open-loop cost term
//   mu^T (Q + K^T R K) mu + v^T R v + trace((Q + K^T R K) Sigma)
// with an optional exact-expectation cross term 2 v^T R K mu.
double stage_cost_moments(const QuadCost& cost, const Vec& mu_x, const Mat& sigma_x, const Mat& k,
                          const Vec& v, bool exact_cross_term = false);

}  // namespace riskmpc
