#pragma once

#include <cstdint>
#include <vector>

#include "riskmpc/model.hpp"
#include "riskmpc/ocp.hpp"
#include "riskmpc/rng.hpp"
#include "riskmpc/tightening.hpp"

namespace riskmpc {

struct ControllerConfig {
    std::size_t horizon = 10;
    bool exact_cost = false;
    // Deployment fallback: on an infeasible QP apply u = Kx (v = 0) and
    // flag it instead of throwing. Tests and audits leave this off.
    bool fallback_on_infeasible = false;
    // Sample-path bookkeeping: size of the error ensemble advanced with
    // fresh noise on each step_sample_based call (0 disables it).
    std::size_t sample_ensemble = 0;
    std::uint64_t ensemble_seed = 0;
};

struct ControllerState {
    std::size_t step = 0;
    Vec z;
    Mat sigma_e;
    QpWarmStart warm;
    bool have_warm = false;
    std::vector<QpStatus> feasibility_log;
    Mat ensemble;  // n x sample_ensemble error samples (sample path only)
    RngStream ensemble_rng;
};

struct StepResult {
    Vec u;
    Vec v0;
    Vec z_next;
    QpStatus qp_status = QpStatus::Optimal;
    double open_loop_objective = 0.0;
};

// Indirect-feedback SMPC: the cost is optimized from the measured state
// while the tightened constraints act on the deterministic nominal state
// z, which is advanced by the optimizer's first move only - never by the
// measurement.
class IndirectFeedbackController {
public:
    IndirectFeedbackController(const LinearStochasticSystem& sys, const QuadCost& cost,
                               const RiskConstraints& constraints,
                               const TighteningSchedule& schedule, const SynthesisResult& synth,
                               ControllerConfig config);

    // Sets z_0 = mu_x0, Sigma_E0 = sigma_x0 and verifies the first
    // open-loop problem is solvable. Throws InitCovTooLarge when
    // sigma_x0 is not dominated by the stationary error covariance and
    // InitInfeasible when the initial QP has no solution.
    ControllerState init(const Vec& x0, const Vec& mu_x0, const Mat& sigma_x0) const;

    // One closed-loop step: solve the QP at (x, z_j), apply u = Kx + v0*,
    // advance (z, Sigma_E) by the deterministic recursions.
    StepResult step(ControllerState& state, const Vec& x) const;

    // As step, additionally advancing the error ensemble with fresh noise.
    StepResult step_sample_based(ControllerState& state, const Vec& x) const;

    const ControllerConfig& config() const { return config_; }
    const TighteningSchedule& schedule() const { return *schedule_; }
    const OcpCondenser& condenser() const { return condenser_; }

private:
    StepResult run_step(ControllerState& state, const Vec& x) const;

    const LinearStochasticSystem* sys_;
    const RiskConstraints* constraints_;
    const TighteningSchedule* schedule_;
    ControllerConfig config_;
    Mat acl_;
    Mat sigma_e_stationary_;
    OcpCondenser condenser_;
};

}  // namespace riskmpc
