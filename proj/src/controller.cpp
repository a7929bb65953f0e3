#include "riskmpc/controller.hpp"

#include "riskmpc/errors.hpp"

namespace riskmpc {

IndirectFeedbackController::IndirectFeedbackController(const LinearStochasticSystem& sys,
                                                       const QuadCost& cost,
                                                       const RiskConstraints& constraints,
                                                       const TighteningSchedule& schedule,
                                                       const SynthesisResult& synth,
                                                       ControllerConfig config)
    : sys_(&sys),
      constraints_(&constraints),
      schedule_(&schedule),
      config_(config),
      acl_(sys.closed_loop()),
      sigma_e_stationary_(synth.sigma_e_s),
      condenser_(sys, cost, constraints, synth.p, config.horizon, config.exact_cost) {}

ControllerState IndirectFeedbackController::init(const Vec& x0, const Vec& mu_x0,
                                                 const Mat& sigma_x0) const {
    const Eigen::Index n = sys_->state_dim();
    if (x0.size() != n || mu_x0.size() != n || sigma_x0.rows() != n || sigma_x0.cols() != n) {
        throw DimensionMismatch("controller init: state dimensions");
    }
    const Mat slack = sigma_e_stationary_ - sigma_x0 + 1e-9 * Mat::Identity(n, n);
    if (!is_psd(symmetrize(slack))) {
        throw InitCovTooLarge("controller init: Sigma_X0 not dominated by Sigma_E^s");
    }

    ControllerState state;
    state.step = 0;
    state.z = mu_x0;
    state.sigma_e = symmetrize(sigma_x0);
    if (config_.sample_ensemble > 0) {
        state.ensemble_rng = RngStream(config_.ensemble_seed, 0x45u);
        GaussianSampler e0(Vec::Zero(n), state.sigma_e);
        state.ensemble.resize(n, static_cast<Eigen::Index>(config_.sample_ensemble));
        for (Eigen::Index c = 0; c < state.ensemble.cols(); ++c) {
            state.ensemble.col(c) = e0.draw(state.ensemble_rng);
        }
    }

    CondensedQP qp = condenser_.condense(x0, state.z, *schedule_, 0);
    QpSolution sol = solve_qp(qp, nullptr, 0, &condenser_.equality_reduction());
    if (sol.status != QpStatus::Optimal) {
        throw InitInfeasible("controller init: first open-loop problem is " +
                             std::string(qp_status_name(sol.status)));
    }
    state.warm = QpWarmStart{sol.v, sol.active_set};
    state.have_warm = true;
    return state;
}

StepResult IndirectFeedbackController::run_step(ControllerState& state, const Vec& x) const {
    const Eigen::Index l = sys_->input_dim();
    CondensedQP qp = condenser_.condense(x, state.z, *schedule_, state.step);
    QpSolution sol = solve_qp(qp, state.have_warm ? &state.warm : nullptr, 0, &condenser_.equality_reduction());
    state.feasibility_log.push_back(sol.status);

    StepResult result;
    result.qp_status = sol.status;
    if (sol.status != QpStatus::Optimal) {
        if (!config_.fallback_on_infeasible) {
            throw QpInfeasible("controller step " + std::to_string(state.step) + ": QP " +
                               qp_status_name(sol.status));
        }
        result.v0 = Vec::Zero(l);
        result.open_loop_objective = sol.objective;
        state.have_warm = false;
    } else {
        result.v0 = sol.v.head(l);
        result.open_loop_objective = sol.objective;

        // Warm start for the next step: shifted tail (v_1..v_{N-1}, 0) and
        // the matching shifted active rows.
        const std::size_t big_n = condenser_.horizon();
        QpWarmStart warm;
        warm.v = Vec::Zero(static_cast<Eigen::Index>(big_n) * l);
        warm.v.head(static_cast<Eigen::Index>(big_n - 1) * l) =
            sol.v.tail(static_cast<Eigen::Index>(big_n - 1) * l);
        const auto& infos = condenser_.row_info();
        for (Eigen::Index row : sol.active_set) {
            const QpRowInfo& info = infos[static_cast<std::size_t>(row)];
            if (info.k == 0) continue;
            const Eigen::Index shifted = condenser_.find_row(info.kind, info.row, info.k - 1);
            if (shifted >= 0) warm.active_set.push_back(shifted);
        }
        state.warm = std::move(warm);
        state.have_warm = true;
    }

    result.u = sys_->k * x + result.v0;
    result.z_next = acl_ * state.z + sys_->b * result.v0 + sys_->mu_w;
    state.z = result.z_next;
    state.sigma_e = symmetrize(acl_ * state.sigma_e * acl_.transpose() + sys_->sigma_w);
    ++state.step;
    return result;
}

StepResult IndirectFeedbackController::step(ControllerState& state, const Vec& x) const {
    return run_step(state, x);
}

StepResult IndirectFeedbackController::step_sample_based(ControllerState& state,
                                                         const Vec& x) const {
    StepResult result = run_step(state, x);
    if (state.ensemble.cols() > 0) {
        const GaussianSampler noise(Vec::Zero(sys_->state_dim()), sys_->sigma_w);
        for (Eigen::Index c = 0; c < state.ensemble.cols(); ++c) {
            state.ensemble.col(c) = acl_ * state.ensemble.col(c) + noise.draw(state.ensemble_rng);
        }
    }
    return result;
}

}  // namespace riskmpc
