#pragma once

#include <Eigen/Dense>

namespace riskmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Force exact symmetry, (S + S^T)/2.
inline Mat symmetrize(const Mat& s) { return 0.5 * (s + s.transpose()); }

// Relative symmetry defect ||S - S^T|| / (1 + ||S||).
double symmetry_defect(const Mat& s);

// Spectral radius of a (possibly non-symmetric) square matrix.
double spectral_radius(const Mat& a);

bool is_stable(const Mat& a, double margin = 1.0);

// Lower-triangular semidefinite Cholesky factor, L L^T = S.
// Singular directions produce zero columns. Throws NotPSD when a pivot
// falls below -1e-10 * trace(S).
Mat chol_psd(const Mat& s);

bool is_psd(const Mat& s);

// Rank of the controllability matrix [B, AB, ..., A^{n-1}B], SVD cutoff
// 1e-10 * sigma_max.
Eigen::Index controllability_rank(const Mat& a, const Mat& b);

}  // namespace riskmpc
