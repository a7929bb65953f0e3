#pragma once

#include <cstddef>
#include <vector>

#include "riskmpc/model.hpp"
#include "riskmpc/qp.hpp"
#include "riskmpc/tightening.hpp"

namespace riskmpc {

// One open-loop instance: optimize the stacked corrections v = (v_0, ...,
// v_{N-1}) for measured state x and nominal state z, with back-offs read
// from the schedule at absolute time schedule_offset + k and the terminal
// equality z(N) = 0.
struct OpenLoopProblem {
    const LinearStochasticSystem* sys = nullptr;
    const QuadCost* cost = nullptr;
    const RiskConstraints* constraints = nullptr;
    const TighteningSchedule* schedule = nullptr;
    Mat p;  // terminal weight
    std::size_t horizon = 0;
    Vec x;
    Vec z;
    std::size_t schedule_offset = 0;
    bool exact_cost = false;  // include the 2 v^T R K mu cross term

    void validate() const;
};

// Identifies what an inequality row encodes; used to shift active sets
// across MPC steps.
struct QpRowInfo {
    enum class Kind { State, Input, BoxLower, BoxUpper };
    Kind kind = Kind::State;
    std::size_t row = 0;  // constraint/coordinate index
    std::size_t k = 0;    // prediction step
};

// Precomputed condensation of the open-loop problem: everything that does
// not depend on (x, z, schedule offset) is built once, so the per-step
// work is filling the linear term and the bounds.
class OcpCondenser {
public:
    OcpCondenser(const LinearStochasticSystem& sys, const QuadCost& cost,
                 const RiskConstraints& constraints, const Mat& terminal_weight,
                 std::size_t horizon, bool exact_cost = false);

    // Fills a CondensedQP for the given initial pair; the schedule supplies
    // back-offs at absolute times offset..offset+N.
    CondensedQP condense(const Vec& x, const Vec& z, const TighteningSchedule& schedule,
                         std::size_t offset) const;

    const std::vector<QpRowInfo>& row_info() const { return row_info_; }

    // Null-space factorization of the (constant) terminal equality rows,
    // shareable across solve_qp calls.
    const EqualityReduction& equality_reduction() const { return eq_reduction_; }

    // Index of the row matching (kind, row, k); -1 when absent.
    Eigen::Index find_row(QpRowInfo::Kind kind, std::size_t row, std::size_t k) const;

    std::size_t horizon() const { return horizon_; }
    Eigen::Index input_dim() const { return l_; }

private:
    std::size_t horizon_;
    Eigen::Index n_, l_;
    Mat h_;         // constant Hessian
    Mat g_of_x_;    // g = g_of_x * x + g_const
    Vec g_const_;
    Mat off_xx_;    // offset = x^T off_xx x + 2 off_x . x + off_const
    Vec off_x_;
    double off_const_ = 0.0;
    Mat a_in_;
    Mat bound_z_;   // row bound = bound_base(schedule) - bound_z * z - bound_const
    Vec bound_const_;
    Mat a_eq_;
    EqualityReduction eq_reduction_;
    Mat acl_pow_n_;  // b_eq = -acl_pow_n * z - mean_drift_n
    Vec mean_drift_n_;
    std::vector<QpRowInfo> row_info_;
    std::vector<double> box_bounds_;    // per box row, constant rhs
    std::vector<double> state_bounds_;  // p_i per state row
    std::vector<double> input_bounds_;  // q_i per input row
};

// Single-shot condensation of an open-loop problem.
CondensedQP condense(const OpenLoopProblem& prob);

// Direct evaluation of the open-loop objective for a stacked input
// sequence, by forward simulation of the mean and covariance recursions.
// Equals the condensed objective (quadratic + linear + offset) for the
// same v.
double evaluate_open_loop_cost(const OpenLoopProblem& prob, const Vec& v);

}  // namespace riskmpc
