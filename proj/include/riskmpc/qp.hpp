#pragma once

#include <vector>

#include "riskmpc/linalg.hpp"

namespace riskmpc {

// Dense strictly convex QP
//   min 1/2 v^T H v + g^T v + offset
//   s.t. a_in v <= b_in,  a_eq v = b_eq.
struct CondensedQP {
    Mat h;
    Vec g;
    Mat a_in;
    Vec b_in;
    Mat a_eq;
    Vec b_eq;
    double offset = 0.0;

    Eigen::Index dim() const { return h.rows(); }
    void validate() const;
};

enum class QpStatus { Optimal, Infeasible, IterLimit };

const char* qp_status_name(QpStatus status);

struct QpSolution {
    Vec v;
    double objective = 0.0;  // includes the constant offset
    QpStatus status = QpStatus::IterLimit;
    std::vector<Eigen::Index> active_set;  // active inequality rows
    Vec multipliers;                       // inequality multipliers, zero when inactive
    int iterations = 0;
    double max_violation = 0.0;  // phase-1 optimum when Infeasible
    double kkt_residual = 0.0;
};

struct QpWarmStart {
    Vec v;                                 // feasible candidate (e.g. shifted previous solution)
    std::vector<Eigen::Index> active_set;  // working-set hint
};

// Null-space factorization of the equality rows; reusable across solves
// that share a_eq (MPC steps differ only in the right-hand sides).
struct EqualityReduction {
    Mat z;     // orthonormal basis of ker(a_eq)
    Mat pinv;  // min-norm particular solution map, vp = pinv * b_eq
};

EqualityReduction make_equality_reduction(const Mat& a_eq, Eigen::Index dim);

// Primal active-set solve. Equalities are eliminated through a null-space
// basis first; a feasible start is produced either from the warm-start
// candidate, the unconstrained minimizer, or a big-M-free phase 1 that
// minimizes the maximum constraint violation. Declares Infeasible when
// the phase-1 optimum exceeds 1e-8.
//
// max_iter = 0 selects the default cap 200 * (#constraints + dim).
QpSolution solve_qp(const CondensedQP& qp, const QpWarmStart* warm = nullptr, int max_iter = 0,
                    const EqualityReduction* eq_cache = nullptr);

// Plain-text dump (header + dense arrays) for cross-checks with external
// solvers.
void dump_qp(std::ostream& os, const CondensedQP& qp);

}  // namespace riskmpc
