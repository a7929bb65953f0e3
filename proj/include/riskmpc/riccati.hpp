#pragma once

#include "riskmpc/linalg.hpp"

namespace riskmpc {

struct DareSolution {
    Mat p;     // stabilizing solution, symmetric PSD
    Mat gain;  // k = -(R + B^T P B)^{-1} B^T P A, so A + B k is stable
};

// Stabilizing solution of
//   P = A^T P A + Q - A^T P B (R + B^T P B)^{-1} B^T P A
// by structure-preserving doubling. Q must be PSD, R PD, (A,B)
// stabilizable. With an input dimension of zero the equation reduces to
// the A^T-form Lyapunov equation and the gain is an empty 0 x n matrix.
//
// Throws NotStabilizable (diverging iterates / unstable closed loop) or
// NonConvergence (iteration cap, residual check failed).
DareSolution solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r);

// Frobenius norm of the Riccati defect for a candidate P.
double dare_residual(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p);

}  // namespace riskmpc
