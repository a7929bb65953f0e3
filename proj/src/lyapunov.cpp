#include "riskmpc/lyapunov.hpp"

#include "riskmpc/errors.hpp"

namespace riskmpc {

Mat solve_dlyap(const Mat& a, const Mat& q, LyapForm form) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || q.rows() != n || q.cols() != n) {
        throw DimensionMismatch("solve_dlyap: inconsistent shapes");
    }
    if (symmetry_defect(q) > 1e-12) throw DimensionMismatch("solve_dlyap: Q not symmetric");
    if (!is_stable(a)) throw NotStable("solve_dlyap: spectral radius >= 1");

    // The A^T-form is the A-form on the transposed matrix.
    Mat ak = (form == LyapForm::AXAt) ? a : a.transpose();
    Mat x = symmetrize(q);

    constexpr int kMaxIter = 200;
    for (int it = 0; it < kMaxIter; ++it) {
        Mat update = ak * x * ak.transpose();
        x = symmetrize(x + update);
        if (update.norm() <= 1e-15 * (1.0 + x.norm())) return x;
        ak = ak * ak;
    }
    throw NonConvergence("solve_dlyap: doubling did not converge");
}

double dlyap_residual(const Mat& a, const Mat& q, const Mat& x, LyapForm form) {
    if (form == LyapForm::AXAt) return (a * x * a.transpose() + q - x).norm();
    return (a.transpose() * x * a + q - x).norm();
}

}  // namespace riskmpc
