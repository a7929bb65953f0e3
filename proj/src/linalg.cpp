#include "riskmpc/linalg.hpp"

#include <cmath>

#include "riskmpc/errors.hpp"

namespace riskmpc {

double symmetry_defect(const Mat& s) {
    return (s - s.transpose()).norm() / (1.0 + s.norm());
}

double spectral_radius(const Mat& a) {
    const Eigen::Index n = a.rows();
    if (n != a.cols()) throw DimensionMismatch("spectral_radius: matrix not square");
    if (n == 0) return 0.0;
    if (a.norm() == 0.0) return 0.0;
    Eigen::EigenSolver<Mat> es(a, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) {
        throw NonConvergence("spectral_radius: eigenvalue iteration failed");
    }
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stable(const Mat& a, double margin) { return spectral_radius(a) < margin; }

Mat chol_psd(const Mat& s) {
    const Eigen::Index n = s.rows();
    if (n != s.cols()) throw DimensionMismatch("chol_psd: matrix not square");
    const double pivot_floor = -1e-10 * std::max(1e-300, std::abs(s.trace()));
    const double zero_tol = 1e-12 * std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());

    Mat l = Mat::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = s(j, j) - l.row(j).head(j).squaredNorm();
        if (d < pivot_floor) throw NotPSD("chol_psd: negative pivot at column " + std::to_string(j));
        if (d <= zero_tol) {
            // Semidefinite direction: zero column.
            l.col(j).setZero();
            continue;
        }
        const double root = std::sqrt(d);
        l(j, j) = root;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            l(i, j) = (s(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / root;
        }
    }
    return l;
}

bool is_psd(const Mat& s) {
    try {
        chol_psd(s);
        return true;
    } catch (const NotPSD&) {
        return false;
    }
}

Eigen::Index controllability_rank(const Mat& a, const Mat& b) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || b.rows() != n) throw DimensionMismatch("controllability_rank: bad shapes");
    if (b.cols() == 0) return 0;
    Mat ctrb(n, n * b.cols());
    Mat akb = b;
    for (Eigen::Index k = 0; k < n; ++k) {
        ctrb.middleCols(k * b.cols(), b.cols()) = akb;
        akb = a * akb;
    }
    Eigen::JacobiSVD<Mat> svd(ctrb);
    const double cutoff = 1e-10 * svd.singularValues()(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
        if (svd.singularValues()(i) > cutoff) ++rank;
    }
    return rank;
}

}  // namespace riskmpc
