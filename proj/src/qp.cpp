#include "riskmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "riskmpc/errors.hpp"

namespace riskmpc {

namespace {

constexpr double kFeasTol = 1e-9;      // feasibility slack for starting points
constexpr double kInfeasTol = 1e-8;    // phase-1 optimum above this -> Infeasible
constexpr double kMultTol = 1e-10;     // multiplier sign tolerance
constexpr double kPhase1Reg = 1e-12;   // strict-convexity regularization in phase 1

struct ActiveSetOutcome {
    Vec x;
    Vec lambda;               // per inequality row, zero when inactive
    std::vector<int> working;
    int iterations = 0;
    bool optimal = false;
};

// Minimizes 1/2 x^T H x + g^T x subject to A x <= b from a feasible x0.
// H must be positive definite. `working` holds row indices treated as
// equalities; rows are added/dropped one at a time.
ActiveSetOutcome active_set_min(const Mat& h, const Vec& g, const Mat& a, const Vec& b, Vec x0,
                                std::vector<int> working, int cap) {
    const Eigen::Index n = h.rows();
    const Eigen::Index m = a.rows();
    Eigen::LLT<Mat> h_llt(h);

    ActiveSetOutcome out;
    out.x = std::move(x0);
    out.lambda = Vec::Zero(m);
    int stalled = 0;

    for (int it = 0; it < cap; ++it) {
        out.iterations = it + 1;

        // Step within the current working set.
        Vec grad = h * out.x + g;
        Vec p;
        Mat null_basis;  // empty when the working set is empty
        if (working.empty()) {
            p = -h_llt.solve(grad);
        } else {
            Mat aw(static_cast<Eigen::Index>(working.size()), n);
            for (std::size_t i = 0; i < working.size(); ++i) aw.row(static_cast<Eigen::Index>(i)) = a.row(working[i]);
            Eigen::JacobiSVD<Mat> svd(aw, Eigen::ComputeFullV);
            const double sv_cut = 1e-12 * svd.singularValues()(0);
            Eigen::Index rank = 0;
            for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
                if (svd.singularValues()(i) > sv_cut) ++rank;
            }
            if (rank == n) {
                p = Vec::Zero(n);
            } else {
                null_basis = svd.matrixV().rightCols(n - rank);
                Mat hr = null_basis.transpose() * h * null_basis;
                Vec q = -hr.llt().solve(null_basis.transpose() * grad);
                p = null_basis * q;
            }
        }

        if (p.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + out.x.lpNorm<Eigen::Infinity>())) {
            // Stationary on the working set; inspect multipliers.
            if (working.empty()) {
                out.optimal = true;
                out.working = std::move(working);
                return out;
            }
            Mat aw(static_cast<Eigen::Index>(working.size()), n);
            for (std::size_t i = 0; i < working.size(); ++i) aw.row(static_cast<Eigen::Index>(i)) = a.row(working[i]);
            Vec lam = aw.transpose().colPivHouseholderQr().solve(-grad);

            int drop = -1;
            double most_negative = -kMultTol;
            for (std::size_t i = 0; i < working.size(); ++i) {
                const double li = lam(static_cast<Eigen::Index>(i));
                if (stalled > 50) {
                    // Bland-style lowest-index rule against cycling.
                    if (li < -kMultTol) {
                        if (drop < 0 || working[i] < working[drop]) drop = static_cast<int>(i);
                    }
                } else if (li < most_negative) {
                    most_negative = li;
                    drop = static_cast<int>(i);
                }
            }
            if (drop < 0) {
                for (std::size_t i = 0; i < working.size(); ++i) {
                    out.lambda(working[i]) = std::max(0.0, lam(static_cast<Eigen::Index>(i)));
                }
                out.optimal = true;
                out.working = std::move(working);
                return out;
            }
            working.erase(working.begin() + drop);
            ++stalled;
            continue;
        }

        // Ratio test over rows outside the working set.
        double alpha = 1.0;
        int blocking = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
            const double dir = a.row(i).dot(p);
            if (dir <= 1e-13 * (1.0 + p.lpNorm<Eigen::Infinity>())) continue;
            const double gap = std::max(0.0, b(i) - a.row(i).dot(out.x));
            const double step = gap / dir;
            if (step < alpha - 1e-15) {
                alpha = step;
                blocking = static_cast<int>(i);
            } else if (blocking >= 0 && step < alpha + 1e-15 && static_cast<int>(i) < blocking) {
                blocking = static_cast<int>(i);
            }
        }

        out.x += alpha * p;
        if (blocking >= 0) {
            working.push_back(blocking);
            stalled = (alpha <= 1e-15) ? stalled + 1 : 0;
        } else {
            stalled = 0;
        }
    }
    out.working = std::move(working);
    return out;  // optimal == false: iteration cap
}

}  // namespace

EqualityReduction make_equality_reduction(const Mat& a_eq, Eigen::Index dim) {
    EqualityReduction red;
    if (a_eq.rows() == 0) {
        red.z = Mat::Identity(dim, dim);
        red.pinv = Mat::Zero(dim, 0);
        return red;
    }
    Eigen::JacobiSVD<Mat> svd(a_eq, Eigen::ComputeFullV | Eigen::ComputeThinU);
    const double sv_cut = 1e-12 * svd.singularValues()(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
        if (svd.singularValues()(i) > sv_cut) ++rank;
    }
    red.z = svd.matrixV().rightCols(dim - rank);
    Mat inv_s = Mat::Zero(rank, rank);
    for (Eigen::Index i = 0; i < rank; ++i) inv_s(i, i) = 1.0 / svd.singularValues()(i);
    red.pinv = svd.matrixV().leftCols(rank) * inv_s * svd.matrixU().leftCols(rank).transpose();
    return red;
}

void CondensedQP::validate() const {
    const Eigen::Index n = dim();
    if (h.cols() != n || g.size() != n) throw DimensionMismatch("CondensedQP: H/g shapes");
    if (a_in.rows() != b_in.size() || (a_in.rows() > 0 && a_in.cols() != n)) {
        throw DimensionMismatch("CondensedQP: inequality shapes");
    }
    if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) {
        throw DimensionMismatch("CondensedQP: equality shapes");
    }
}

const char* qp_status_name(QpStatus status) {
    switch (status) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::IterLimit: return "iter_limit";
    }
    return "?";
}

QpSolution solve_qp(const CondensedQP& qp, const QpWarmStart* warm, int max_iter,
                    const EqualityReduction* eq_cache) {
    qp.validate();
    const Eigen::Index n = qp.dim();
    const Eigen::Index m = qp.a_in.rows();
    if (max_iter <= 0) max_iter = 200 * static_cast<int>(m + qp.a_eq.rows() + n);

    QpSolution sol;
    sol.multipliers = Vec::Zero(m);

    // Split off rows with a (numerically) zero coefficient vector: they are
    // plain feasibility facts about the constants.
    std::vector<Eigen::Index> kept;
    kept.reserve(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (qp.a_in.row(i).lpNorm<Eigen::Infinity>() <= 1e-14) {
            if (qp.b_in(i) < -kInfeasTol) {
                sol.status = QpStatus::Infeasible;
                sol.max_violation = -qp.b_in(i);
                sol.v = Vec::Zero(n);
                sol.objective = qp.offset;
                return sol;
            }
        } else {
            kept.push_back(i);
        }
    }

    EqualityReduction local_red;
    const EqualityReduction& red =
        eq_cache != nullptr ? *eq_cache : (local_red = make_equality_reduction(qp.a_eq, n));
    Vec vp = qp.a_eq.rows() == 0 ? Vec(Vec::Zero(n)) : Vec(red.pinv * qp.b_eq);
    if (qp.a_eq.rows() > 0) {
        const double eq_residual = (qp.a_eq * vp - qp.b_eq).lpNorm<Eigen::Infinity>();
        if (eq_residual > kInfeasTol * (1.0 + qp.b_eq.lpNorm<Eigen::Infinity>())) {
            sol.status = QpStatus::Infeasible;
            sol.max_violation = eq_residual;
            sol.v = vp;
            sol.objective = 0.5 * vp.dot(qp.h * vp) + qp.g.dot(vp) + qp.offset;
            return sol;
        }
    }
    const Eigen::Index nz = red.z.cols();
    const auto mk = static_cast<Eigen::Index>(kept.size());

    Mat ar(mk, nz);
    Vec br(mk);
    for (Eigen::Index i = 0; i < mk; ++i) {
        ar.row(i) = qp.a_in.row(kept[i]) * red.z;
        br(i) = qp.b_in(kept[i]) - qp.a_in.row(kept[i]).dot(vp);
    }

    auto finish = [&](const Vec& y, const Vec& lambda_reduced, int iters, QpStatus status) {
        sol.v = vp + red.z * y;
        sol.objective = 0.5 * sol.v.dot(qp.h * sol.v) + qp.g.dot(sol.v) + qp.offset;
        sol.status = status;
        sol.iterations += iters;
        Vec stat = qp.h * sol.v + qp.g;
        for (Eigen::Index i = 0; i < mk; ++i) {
            sol.multipliers(kept[i]) = lambda_reduced(i);
            stat += lambda_reduced(i) * qp.a_in.row(kept[i]).transpose();
            if (lambda_reduced(i) > kMultTol) sol.active_set.push_back(kept[i]);
        }
        sol.kkt_residual = (red.z.transpose() * stat).lpNorm<Eigen::Infinity>();
        double viol = 0.0;
        for (Eigen::Index i = 0; i < mk; ++i) {
            viol = std::max(viol, ar.row(i).dot(y) - br(i));
        }
        sol.max_violation = std::max(viol, 0.0);
        return sol;
    };

    if (nz == 0) {
        // Equalities pin the point; only feasibility remains.
        double viol = 0.0;
        for (Eigen::Index i = 0; i < mk; ++i) viol = std::max(viol, -br(i));
        Vec y(0);
        Vec lam = Vec::Zero(mk);
        QpSolution s = finish(y, lam, 0, viol <= kInfeasTol ? QpStatus::Optimal : QpStatus::Infeasible);
        s.max_violation = viol;
        return s;
    }

    Mat hr = red.z.transpose() * qp.h * red.z;
    Vec gr = red.z.transpose() * (qp.g + qp.h * vp);

    // Starting point: warm candidate, else the unconstrained minimizer.
    Vec y0;
    bool have_start = false;
    if (warm != nullptr && warm->v.size() == n) {
        if (qp.a_eq.rows() == 0 ||
            (qp.a_eq * warm->v - qp.b_eq).lpNorm<Eigen::Infinity>() <=
                kFeasTol * (1.0 + qp.b_eq.lpNorm<Eigen::Infinity>())) {
            Vec yc = red.z.transpose() * (warm->v - vp);
            if (mk == 0 || (ar * yc - br).maxCoeff() <= kFeasTol) {
                y0 = std::move(yc);
                have_start = true;
            }
        }
    }
    if (!have_start) {
        y0 = -hr.llt().solve(gr);
        have_start = mk == 0 || (ar * y0 - br).maxCoeff() <= kFeasTol;
    }

    Vec b_eff = br;
    if (!have_start) {
        // Phase 1: minimize the maximum violation s >= 0 over (y, s). The
        // s >= 0 bound keeps the problem bounded (it stops at the first
        // feasible point); a tiny quadratic term keeps the Hessian
        // positive definite without a big-M constant.
        Mat h1 = 2.0 * kPhase1Reg * Mat::Identity(nz + 1, nz + 1);
        Vec g1 = Vec::Zero(nz + 1);
        g1(nz) = 1.0;
        Mat a1(mk + 1, nz + 1);
        a1.setZero();
        a1.topLeftCorner(mk, nz) = ar;
        a1.col(nz).head(mk).setConstant(-1.0);
        a1(mk, nz) = -1.0;  // -s <= 0
        Vec b1(mk + 1);
        b1.head(mk) = br;
        b1(mk) = 0.0;

        Vec x1 = Vec::Zero(nz + 1);
        x1.head(nz) = y0;
        x1(nz) = std::max(0.0, (ar * y0 - br).maxCoeff()) + 1.0;

        auto p1 = active_set_min(h1, g1, a1, b1, std::move(x1), {}, max_iter);
        sol.iterations += p1.iterations;
        const double viol = p1.x(nz);
        if (!p1.optimal) {
            sol.status = QpStatus::IterLimit;
            sol.v = vp + red.z * p1.x.head(nz);
            sol.objective = 0.5 * sol.v.dot(qp.h * sol.v) + qp.g.dot(sol.v) + qp.offset;
            return sol;
        }
        if (viol > kInfeasTol) {
            QpSolution s = finish(p1.x.head(nz), Vec(p1.lambda.head(mk)), 0, QpStatus::Infeasible);
            s.max_violation = viol;
            return s;
        }
        y0 = p1.x.head(nz);
        // Absorb residual violations (<= 1e-8) so the phase-2 start is
        // exactly feasible for the relaxed bounds.
        for (Eigen::Index i = 0; i < mk; ++i) {
            b_eff(i) = std::max(br(i), ar.row(i).dot(y0));
        }
    }

    // Working-set hint: warm rows that are active at the start.
    std::vector<int> w0;
    if (warm != nullptr) {
        for (Eigen::Index row : warm->active_set) {
            for (Eigen::Index i = 0; i < mk; ++i) {
                if (kept[i] == row && std::abs(ar.row(i).dot(y0) - b_eff(i)) <= 1e-9) {
                    w0.push_back(static_cast<int>(i));
                }
            }
        }
    }

    auto p2 = active_set_min(hr, gr, ar, b_eff, std::move(y0), std::move(w0), max_iter);
    return finish(p2.x, p2.lambda, p2.iterations,
                  p2.optimal ? QpStatus::Optimal : QpStatus::IterLimit);
}

void dump_qp(std::ostream& os, const CondensedQP& qp) {
    os.precision(17);
    os << "riskmpc qp dump v1\n";
    os << "dim " << qp.dim() << " ineq " << qp.a_in.rows() << " eq " << qp.a_eq.rows() << "\n";
    os << "offset " << qp.offset << "\n";
    auto dump_mat = [&](const char* name, const Mat& mat) {
        os << name << " " << mat.rows() << " " << mat.cols() << "\n";
        for (Eigen::Index i = 0; i < mat.rows(); ++i) {
            for (Eigen::Index j = 0; j < mat.cols(); ++j) {
                os << mat(i, j) << (j + 1 == mat.cols() ? '\n' : ' ');
            }
        }
    };
    auto dump_vec = [&](const char* name, const Vec& vec) {
        os << name << " " << vec.size() << "\n";
        for (Eigen::Index i = 0; i < vec.size(); ++i) {
            os << vec(i) << (i + 1 == vec.size() ? '\n' : ' ');
        }
        if (vec.size() == 0) os << '\n';
    };
    dump_mat("H", qp.h);
    dump_vec("g", qp.g);
    dump_mat("A_in", qp.a_in);
    dump_vec("b_in", qp.b_in);
    dump_mat("A_eq", qp.a_eq);
    dump_vec("b_eq", qp.b_eq);
}

}  // namespace riskmpc
