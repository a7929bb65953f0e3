#include "riskmpc/ocp.hpp"

#include <cmath>

#include "riskmpc/errors.hpp"

namespace riskmpc {

void OpenLoopProblem::validate() const {
    if (sys == nullptr || cost == nullptr || constraints == nullptr || schedule == nullptr) {
        throw ConfigError("OpenLoopProblem: missing references");
    }
    if (horizon == 0) throw ConfigError("OpenLoopProblem: horizon must be >= 1");
    const Eigen::Index n = sys->state_dim();
    if (x.size() != n || z.size() != n || p.rows() != n || p.cols() != n) {
        throw DimensionMismatch("OpenLoopProblem: state dimensions");
    }
    if (schedule->horizon + 1 < horizon) {
        // Entries beyond the stored horizon fall back to the steady-state
        // bound, which is only valid once the schedule has one.
        if (schedule->steady_state.size() == 0) {
            throw ConfigError("OpenLoopProblem: schedule too short and no steady-state entries");
        }
    }
}

OcpCondenser::OcpCondenser(const LinearStochasticSystem& sys, const QuadCost& cost,
                           const RiskConstraints& constraints, const Mat& terminal_weight,
                           std::size_t horizon, bool exact_cost)
    : horizon_(horizon), n_(sys.state_dim()), l_(sys.input_dim()) {
    if (horizon == 0) throw ConfigError("OcpCondenser: horizon must be >= 1");
    constraints.validate(n_, l_);

    const Mat acl = sys.closed_loop();
    const Mat stage_weight = symmetrize(cost.q + sys.k.transpose() * cost.r * sys.k);
    const auto big_n = static_cast<Eigen::Index>(horizon);
    const Eigen::Index nv = big_n * l_;
    const Eigen::Index n_stack = (big_n + 1) * n_;

    // Powers of the closed loop and accumulated mean drift.
    std::vector<Mat> acl_pow(horizon + 1);
    acl_pow[0] = Mat::Identity(n_, n_);
    for (std::size_t k = 1; k <= horizon; ++k) acl_pow[k] = acl * acl_pow[k - 1];

    std::vector<Vec> drift(horizon + 1);
    drift[0] = Vec::Zero(n_);
    for (std::size_t k = 1; k <= horizon; ++k) drift[k] = acl * drift[k - 1] + sys.mu_w;

    // Stacked mean map: mu(k) = acl_pow[k] x + sum_t acl_pow[k-1-t] B v_t + drift[k].
    Mat g_map = Mat::Zero(n_stack, nv);
    Mat m_map(n_stack, n_);
    Vec drift_stack(n_stack);
    for (std::size_t k = 0; k <= horizon; ++k) {
        const auto rk = static_cast<Eigen::Index>(k) * n_;
        m_map.middleRows(rk, n_) = acl_pow[k];
        drift_stack.segment(rk, n_) = drift[k];
        for (std::size_t t = 0; t < k; ++t) {
            g_map.block(rk, static_cast<Eigen::Index>(t) * l_, n_, l_) = acl_pow[k - 1 - t] * sys.b;
        }
    }

    // Block-diagonal cost weight over the stacked means.
    Mat w_stack = Mat::Zero(n_stack, n_stack);
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto rk = static_cast<Eigen::Index>(k) * n_;
        w_stack.block(rk, rk, n_, n_) = stage_weight;
    }
    w_stack.block(big_n * n_, big_n * n_, n_, n_) = symmetrize(terminal_weight);

    Mat r_stack = Mat::Zero(nv, nv);
    for (Eigen::Index k = 0; k < big_n; ++k) {
        r_stack.block(k * l_, k * l_, l_, l_) = cost.r;
    }

    const Mat wg = w_stack * g_map;
    h_ = symmetrize(2.0 * (g_map.transpose() * wg + r_stack));
    Mat gt_w = 2.0 * wg.transpose();  // nv x n_stack
    g_of_x_ = gt_w * m_map;
    g_const_ = gt_w * drift_stack;
    off_xx_ = symmetrize(m_map.transpose() * w_stack * m_map);
    off_x_ = m_map.transpose() * w_stack * drift_stack;
    off_const_ = drift_stack.dot(w_stack * drift_stack);

    if (exact_cost) {
        // Cross term 2 sum_k v_k^T R K mu(k) of the exact input expectation.
        Mat cross = Mat::Zero(nv, n_stack);
        const Mat rk_gain = cost.r * sys.k;
        for (Eigen::Index k = 0; k < big_n; ++k) {
            cross.block(k * l_, k * n_, l_, n_) = rk_gain;
        }
        const Mat cg = cross * g_map;
        h_ += 2.0 * (cg + cg.transpose());
        g_of_x_ += 2.0 * cross * m_map;
        g_const_ += 2.0 * cross * drift_stack;
        if (Eigen::LLT<Mat>(h_).info() != Eigen::Success) {
            throw NotPSD("OcpCondenser: exact-cost Hessian not positive definite");
        }
    }

    // Covariance trace terms are independent of v and x; fold into the
    // constant offset.
    Mat sigma = Mat::Zero(n_, n_);
    for (std::size_t k = 0; k < horizon; ++k) {
        off_const_ += (stage_weight * sigma).trace();
        sigma = symmetrize(acl * sigma * acl.transpose() + sys.sigma_w);
    }
    off_const_ += (terminal_weight * sigma).trace();

    // Inequality rows. The nominal z(k) follows the same maps as mu(k).
    const auto m_x = constraints.state_rows.size();
    const auto m_u = constraints.input_rows.size();
    std::size_t box_rows = 0;
    if (constraints.v_box) {
        for (Eigen::Index j = 0; j < l_; ++j) {
            if (std::isfinite(constraints.v_box->lower(j))) ++box_rows;
            if (std::isfinite(constraints.v_box->upper(j))) ++box_rows;
        }
    }
    state_bounds_.clear();
    input_bounds_.clear();
    for (const auto& sr : constraints.state_rows) state_bounds_.push_back(sr.p);
    for (const auto& ir : constraints.input_rows) input_bounds_.push_back(ir.q);

    const auto n_rows =
        static_cast<Eigen::Index>(horizon * (m_x + m_u) + horizon * box_rows);
    a_in_.setZero(n_rows, nv);
    bound_z_.setZero(n_rows, n_);
    bound_const_.setZero(n_rows);
    box_bounds_.clear();
    row_info_.clear();
    row_info_.reserve(static_cast<std::size_t>(n_rows));

    Eigen::Index row = 0;
    for (std::size_t k = 0; k < horizon; ++k) {
        const auto rk = static_cast<Eigen::Index>(k) * n_;
        for (std::size_t i = 0; i < m_x; ++i) {
            const Vec& c = constraints.state_rows[i].c;
            a_in_.row(row) = c.transpose() * g_map.middleRows(rk, n_);
            bound_z_.row(row) = c.transpose() * acl_pow[k];
            bound_const_(row) = c.dot(drift[k]);
            row_info_.push_back({QpRowInfo::Kind::State, i, k});
            ++row;
        }
        for (std::size_t i = 0; i < m_u; ++i) {
            const Vec dk = sys.k.transpose() * constraints.input_rows[i].d;
            a_in_.row(row) = dk.transpose() * g_map.middleRows(rk, n_);
            a_in_.row(row).segment(static_cast<Eigen::Index>(k) * l_, l_) +=
                constraints.input_rows[i].d.transpose();
            bound_z_.row(row) = dk.transpose() * acl_pow[k];
            bound_const_(row) = dk.dot(drift[k]);
            row_info_.push_back({QpRowInfo::Kind::Input, i, k});
            ++row;
        }
        if (constraints.v_box) {
            for (Eigen::Index j = 0; j < l_; ++j) {
                if (std::isfinite(constraints.v_box->upper(j))) {
                    a_in_(row, static_cast<Eigen::Index>(k) * l_ + j) = 1.0;
                    box_bounds_.push_back(constraints.v_box->upper(j));
                    row_info_.push_back({QpRowInfo::Kind::BoxUpper, static_cast<std::size_t>(j), k});
                    ++row;
                }
                if (std::isfinite(constraints.v_box->lower(j))) {
                    a_in_(row, static_cast<Eigen::Index>(k) * l_ + j) = -1.0;
                    box_bounds_.push_back(-constraints.v_box->lower(j));
                    row_info_.push_back({QpRowInfo::Kind::BoxLower, static_cast<std::size_t>(j), k});
                    ++row;
                }
            }
        }
    }

    // Terminal equality z(N) = 0.
    a_eq_.resize(n_, nv);
    for (std::size_t t = 0; t < horizon; ++t) {
        a_eq_.middleCols(static_cast<Eigen::Index>(t) * l_, l_) = acl_pow[horizon - 1 - t] * sys.b;
    }
    acl_pow_n_ = acl_pow[horizon];
    mean_drift_n_ = drift[horizon];
    eq_reduction_ = make_equality_reduction(a_eq_, nv);
}

CondensedQP OcpCondenser::condense(const Vec& x, const Vec& z, const TighteningSchedule& schedule,
                                   std::size_t offset) const {
    if (x.size() != n_ || z.size() != n_) throw DimensionMismatch("OcpCondenser: state size");
    CondensedQP qp;
    qp.h = h_;
    qp.g = g_of_x_ * x + g_const_;
    qp.offset = x.dot(off_xx_ * x) + 2.0 * off_x_.dot(x) + off_const_;
    qp.a_in = a_in_;
    qp.b_in.resize(a_in_.rows());
    std::size_t box_idx = 0;
    for (Eigen::Index r = 0; r < a_in_.rows(); ++r) {
        const QpRowInfo& info = row_info_[static_cast<std::size_t>(r)];
        switch (info.kind) {
            case QpRowInfo::Kind::State:
                qp.b_in(r) = state_bounds_[info.row] -
                             schedule.state_backoff(info.row, offset + info.k);
                break;
            case QpRowInfo::Kind::Input:
                qp.b_in(r) = input_bounds_[info.row] -
                             schedule.input_backoff(info.row, offset + info.k);
                break;
            case QpRowInfo::Kind::BoxLower:
            case QpRowInfo::Kind::BoxUpper:
                qp.b_in(r) = box_bounds_[box_idx++];
                break;
        }
        if (info.kind == QpRowInfo::Kind::State || info.kind == QpRowInfo::Kind::Input) {
            qp.b_in(r) -= bound_z_.row(r).dot(z) + bound_const_(r);
        }
    }
    qp.a_eq = a_eq_;
    qp.b_eq = -(acl_pow_n_ * z) - mean_drift_n_;
    return qp;
}

Eigen::Index OcpCondenser::find_row(QpRowInfo::Kind kind, std::size_t row, std::size_t k) const {
    for (std::size_t r = 0; r < row_info_.size(); ++r) {
        if (row_info_[r].kind == kind && row_info_[r].row == row && row_info_[r].k == k) {
            return static_cast<Eigen::Index>(r);
        }
    }
    return -1;
}

CondensedQP condense(const OpenLoopProblem& prob) {
    prob.validate();
    OcpCondenser condenser(*prob.sys, *prob.cost, *prob.constraints, prob.p, prob.horizon,
                           prob.exact_cost);
    return condenser.condense(prob.x, prob.z, *prob.schedule, prob.schedule_offset);
}

double evaluate_open_loop_cost(const OpenLoopProblem& prob, const Vec& v) {
    prob.validate();
    const Eigen::Index l = prob.sys->input_dim();
    if (v.size() != static_cast<Eigen::Index>(prob.horizon) * l) {
        throw DimensionMismatch("evaluate_open_loop_cost: v length");
    }
    const Mat acl = prob.sys->closed_loop();
    Vec mu = prob.x;
    Mat sigma = Mat::Zero(prob.sys->state_dim(), prob.sys->state_dim());
    double total = 0.0;
    for (std::size_t k = 0; k < prob.horizon; ++k) {
        const Vec vk = v.segment(static_cast<Eigen::Index>(k) * l, l);
        total += stage_cost_moments(*prob.cost, mu, sigma, prob.sys->k, vk, prob.exact_cost);
        mu = acl * mu + prob.sys->b * vk + prob.sys->mu_w;
        sigma = symmetrize(acl * sigma * acl.transpose() + prob.sys->sigma_w);
    }
    total += mu.dot(prob.p * mu) + (prob.p * sigma).trace();
    return total;
}

}  // namespace riskmpc
