#include "riskmpc/riccati.hpp"

#include <cmath>

#include "riskmpc/errors.hpp"
#include "riskmpc/lyapunov.hpp"

namespace riskmpc {

namespace {

Mat riccati_gain(const Mat& a, const Mat& b, const Mat& r, const Mat& p) {
    Mat m = r + b.transpose() * p * b;
    return -m.llt().solve(b.transpose() * p * a);
}

}  // namespace

DareSolution solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r) {
    const Eigen::Index n = a.rows();
    const Eigen::Index l = b.cols();
    if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != l ||
        r.cols() != l) {
        throw DimensionMismatch("solve_dare: inconsistent shapes");
    }
    if (!is_psd(symmetrize(q))) throw NotPSD("solve_dare: Q not PSD");

    if (l == 0) {
        // No control authority; pure cost accumulation.
        DareSolution sol;
        sol.p = solve_dlyap(a, symmetrize(q), LyapForm::AtXA);
        sol.gain = Mat::Zero(0, n);
        return sol;
    }

    Eigen::LLT<Mat> r_llt(symmetrize(r));
    if (r_llt.info() != Eigen::Success) throw NotPSD("solve_dare: R not positive definite");

    // Doubling iteration: H_k converges quadratically to the stabilizing P.
    Mat ak = a;
    Mat g = b * r_llt.solve(b.transpose());
    Mat h = symmetrize(q);
    const Mat eye = Mat::Identity(n, n);
    const double divergence_cap = 1e12 * (1.0 + h.norm());

    constexpr int kMaxIter = 10000;
    bool converged = false;
    for (int it = 0; it < kMaxIter; ++it) {
        Eigen::PartialPivLU<Mat> w(eye + g * h);
        Mat wa = w.solve(ak);                      // (I + G H)^{-1} A_k
        Mat wg = w.solve(g);                       // (I + G H)^{-1} G
        Mat h_next = symmetrize(h + ak.transpose() * h * wa);
        Mat g_next = symmetrize(g + ak * wg * ak.transpose());
        Mat a_next = ak * wa;

        const double step = (h_next - h).norm();
        ak = std::move(a_next);
        g = std::move(g_next);
        h = std::move(h_next);

        if (!h.allFinite() || h.norm() > divergence_cap) {
            throw NotStabilizable("solve_dare: iterates diverged");
        }
        if (step <= 1e-13 * (1.0 + h.norm())) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NonConvergence("solve_dare: iteration cap exceeded");

    DareSolution sol;
    sol.p = h;
    sol.gain = riccati_gain(a, b, symmetrize(r), sol.p);

    if (!is_stable(a + b * sol.gain)) {
        throw NotStabilizable("solve_dare: closed loop not stable");
    }
    const double defect = dare_residual(a, b, symmetrize(q), symmetrize(r), sol.p);
    if (defect > 1e-10 * (1.0 + sol.p.norm())) {
        throw NonConvergence("solve_dare: residual check failed");
    }
    return sol;
}

double dare_residual(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p) {
    if (b.cols() == 0) return (a.transpose() * p * a + q - p).norm();
    Mat bpa = b.transpose() * p * a;
    Mat m = r + b.transpose() * p * b;
    return (a.transpose() * p * a + q - a.transpose() * p * b * m.llt().solve(bpa) - p).norm();
}

}  // namespace riskmpc
