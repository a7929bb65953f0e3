#pragma once

#include "riskmpc/linalg.hpp"

namespace riskmpc {

// Which discrete Lyapunov equation to solve.
enum class LyapForm {
    AXAt,  // X = A X A^T + Q   (covariance recursions)
    AtXA,  // X = A^T X A + Q   (cost-to-go / value-function weights)
};

// Stationary solution by doubling: X_{k+1} = X_k + A_k X_k A_k^T,
// A_{k+1} = A_k^2. Requires spectral radius of `a` < 1.
//
// Throws NotStable when the spectral-radius estimate is >= 1 and
// NonConvergence when the iteration cap is exceeded.
Mat solve_dlyap(const Mat& a, const Mat& q, LyapForm form = LyapForm::AXAt);

// Frobenius residual of the candidate solution, ||A X A^T + Q - X||_F.
double dlyap_residual(const Mat& a, const Mat& q, const Mat& x, LyapForm form = LyapForm::AXAt);

}  // namespace riskmpc
