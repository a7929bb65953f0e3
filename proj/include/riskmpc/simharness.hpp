#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "riskmpc/controller.hpp"
#include "riskmpc/model.hpp"
#include "riskmpc/qp.hpp"
#include "riskmpc/tightening.hpp"

namespace riskmpc {

// Initial condition X0 ~ N(mean, sigma); an empty/zero sigma means a
// deterministic start.
struct InitialCondition {
    Vec mean;
    Mat sigma;

    bool deterministic() const { return sigma.size() == 0 || sigma.norm() == 0.0; }
};

struct SimConfig {
    std::size_t paths = 1000;
    std::size_t steps = 50;  // closed-loop horizon L
    std::uint64_t seed = 1;
    InitialCondition init;
    std::size_t controller_horizon = 10;
    // Risk measures reported per state-constraint row; empty selects all
    // four at the constraint's alpha.
    std::vector<RiskSpec> report_measures;
    std::size_t bootstrap_resamples = 200;
    bool collect_risk = true;    // per-time risk trajectories (memory ~ paths * steps)
    bool sample_based = false;   // drive step_sample_based instead of the moment path
    bool exact_cost = false;
};

struct RiskTrajectory {
    RiskSpec spec;
    std::size_t row = 0;  // state-constraint row
    Vec value;            // length steps + 1
    Vec se;               // bootstrap standard error
};

struct FeasibilityEvent {
    std::size_t path = 0;
    std::size_t step = 0;
    QpStatus status = QpStatus::Optimal;
};

struct AuditSummary {
    bool recursive_feasibility = true;
    std::size_t infeasible_count = 0;
    double splitting_max = 0.0;
    bool splitting_ok = true;
    double nominal_min_margin = 0.0;
    bool nominal_ok = true;
    bool design_risk_ok = true;
    double design_risk_worst = 0.0;  // max_k value - (p + 3 se); <= 0 passes
    bool ordering_ok = true;
    bool performance_in_bounds = true;

    bool all_ok() const {
        return recursive_feasibility && splitting_ok && nominal_ok && design_risk_ok &&
               ordering_ok && performance_in_bounds;
    }
};

struct MonteCarloReport {
    std::string gain_label;
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::vector<RiskTrajectory> risk;  // measure-major, then constraint row
    Vec mean_stage_cost;               // length steps, cross-path mean of g(x,u)
    Vec running_average;               // length steps
    double final_average = 0.0;
    double average_se = 0.0;  // SE of the per-path time-averaged cost
    double lower_bound = 0.0;  // trace(P* Sigma_W)
    double upper_bound = 0.0;  // trace(P Sigma_W)
    std::vector<FeasibilityEvent> events;  // non-optimal QP statuses only
    AuditSummary audit;
};

// Closed-loop Monte Carlo over independent disturbance paths. Results are
// deterministic for a fixed (config, seed) regardless of worker count.
MonteCarloReport run_paths(const SimConfig& cfg, const LinearStochasticSystem& sys,
                           const QuadCost& cost, const RiskConstraints& constraints,
                           const TighteningSchedule& schedule, const SynthesisResult& synth,
                           const std::string& gain_label = "k");

struct GainOption {
    std::string label;
    Mat gain;
};

// Re-synthesizes terminal ingredients and the Gaussian schedule for each
// gain, then runs the closed loop under common random numbers (identical
// seeds and stream indices across gains).
std::vector<MonteCarloReport> compare_gains(const SimConfig& cfg,
                                            const LinearStochasticSystem& sys,
                                            const QuadCost& cost,
                                            const RiskConstraints& constraints,
                                            const std::vector<GainOption>& gains);

// (trace(P* Sigma_W), trace(P Sigma_W)): the averaged-performance sandwich.
std::pair<double, double> performance_bounds(const SynthesisResult& synth);

// CSV emission, 17 significant digits throughout.
void write_risk_csv(std::ostream& os, const MonteCarloReport& report);
void write_performance_csv(std::ostream& os, const std::vector<MonteCarloReport>& reports);
void write_feasibility_csv(std::ostream& os, const MonteCarloReport& report);
void write_risk_csv(const std::string& path, const MonteCarloReport& report);
void write_performance_csv(const std::string& path, const std::vector<MonteCarloReport>& reports);
void write_feasibility_csv(const std::string& path, const MonteCarloReport& report);

}  // namespace riskmpc
