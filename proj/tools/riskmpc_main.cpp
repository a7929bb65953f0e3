#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskmpc/controller.hpp"
#include "riskmpc/errors.hpp"
#include "riskmpc/lyapunov.hpp"
#include "riskmpc/model.hpp"
#include "riskmpc/riccati.hpp"
#include "riskmpc/scenario.hpp"
#include "riskmpc/simharness.hpp"
#include "riskmpc/tightening.hpp"

namespace {

using namespace riskmpc;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAudit = 3;
constexpr int kExitNumerical = 4;

struct CommonOptions {
    std::string scenario = "dcdc";
    std::string config_file;
    std::string out_dir = ".";
    std::string risk_override;
    std::string mode_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t paths = 0;
    std::size_t steps = 0;
};

ScenarioConfig load_with_overrides(const CommonOptions& opt) {
    ScenarioConfig cfg = load_scenario(opt.config_file.empty() ? opt.scenario : opt.config_file);
    if (!opt.risk_override.empty()) {
        cfg.constraints.spec.kind = parse_risk_kind(opt.risk_override);
    }
    if (!opt.mode_override.empty()) {
        if (opt.mode_override == "gaussian") cfg.tightening_mode = TighteningMode::GaussianExact;
        else if (opt.mode_override == "mc") cfg.tightening_mode = TighteningMode::MonteCarlo;
        else if (opt.mode_override == "user") cfg.tightening_mode = TighteningMode::UserBound;
        else throw ConfigError("--mode: expected gaussian|mc|user");
    }
    if (opt.seed_set) cfg.sim.seed = opt.seed;
    if (opt.paths > 0) cfg.sim.paths = opt.paths;
    if (opt.steps > 0) cfg.sim.steps = opt.steps;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("scenario", opt.scenario, "Built-in scenario name or config path");
    cmd->add_option("--config", opt.config_file, "Scenario JSON file");
    cmd->add_option("--seed", opt.seed, "Simulation seed")->each([&](const std::string&) {
        opt.seed_set = true;
    });
    cmd->add_option("--paths", opt.paths, "Monte-Carlo path count");
    cmd->add_option("--steps", opt.steps, "Closed-loop steps");
    cmd->add_option("--risk", opt.risk_override, "Risk measure: e|var|cvar|evar");
    cmd->add_option("--mode", opt.mode_override, "Tightening mode: gaussian|mc|user");
    cmd->add_option("--out-dir", opt.out_dir, "Output directory");
}

json mat_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
        rows.push_back(r);
    }
    return rows;
}

void print_matrix(const std::string& name, const Mat& m) {
    Eigen::IOFormat fmt(12, 0, ", ", "\n", "    [", "]");
    std::cout << "  " << name << ":\n" << m.format(fmt) << "\n";
}

TighteningSchedule build_schedule(const ScenarioConfig& cfg, const LinearStochasticSystem& sys,
                                  std::size_t horizon, const std::string& user_csv) {
    ErrorProcess ep;
    ep.acl = sys.closed_loop();
    ep.sigma_e0 = cfg.sim.init.sigma.size() == 0
                      ? Mat::Zero(sys.state_dim(), sys.state_dim())
                      : cfg.sim.init.sigma;
    ep.sigma_w = sys.sigma_w;
    ep.gaussian = cfg.gaussian_noise;

    switch (cfg.tightening_mode) {
        case TighteningMode::GaussianExact:
            return gaussian_schedule(ep, cfg.constraints, sys.k, horizon);
        case TighteningMode::MonteCarlo:
            return monte_carlo_schedule(ep, cfg.constraints, sys.k, horizon, cfg.tightening_paths,
                                        cfg.tightening_seed);
        case TighteningMode::UserBound: {
            if (user_csv.empty()) {
                throw ConfigError("user tightening mode requires --user-csv FILE");
            }
            TighteningSchedule external = read_schedule_csv(user_csv);
            if (ep.gaussian) {
                const TighteningSchedule reference =
                    gaussian_schedule(ep, cfg.constraints, sys.k, external.horizon);
                return user_bound_schedule(std::move(external), &reference);
            }
            return user_bound_schedule(std::move(external));
        }
    }
    throw ConfigError("unknown tightening mode");
}

int cmd_synthesize(const CommonOptions& opt) {
    const ScenarioConfig cfg = load_with_overrides(opt);
    const LinearStochasticSystem sys = build_system(cfg);
    const SynthesisResult synth = synthesize(sys, cfg.cost);
    const AdmissibilityReport admissible = check_stationary_admissible(sys, cfg.constraints, synth);

    std::cout.precision(12);
    std::cout << "synthesis report\n";
    print_matrix("K", sys.k);
    print_matrix("P", synth.p);
    print_matrix("P*", synth.pstar);
    print_matrix("K*", synth.kstar);
    print_matrix("Sigma_E^s", synth.sigma_e_s);
    print_matrix("Sigma_X^s", synth.sigma_x_s);
    std::cout << "  trace(P* Sigma_W) = " << synth.stationary_cost << "\n";
    std::cout << "  trace(P  Sigma_W) = " << synth.stationary_cost + synth.c_f << "\n";
    std::cout << "  C_f               = " << synth.c_f << "\n";
    std::cout << "  stationary admissibility: " << (admissible.all_pass ? "pass" : "FAIL") << "\n";
    for (const auto& row : admissible.rows) {
        std::cout << "    " << (row.is_state_row ? "state" : "input") << " row " << row.index
                  << ": bound " << row.bound << " vs stationary risk " << row.stationary_risk
                  << (row.pass ? "  ok" : "  VIOLATED") << "\n";
    }

    json out;
    out["K"] = mat_json(sys.k);
    out["P"] = mat_json(synth.p);
    out["P_star"] = mat_json(synth.pstar);
    out["K_star"] = mat_json(synth.kstar);
    out["sigma_e_stationary"] = mat_json(synth.sigma_e_s);
    out["sigma_x_stationary"] = mat_json(synth.sigma_x_s);
    out["stationary_cost"] = synth.stationary_cost;
    out["upper_bound"] = synth.stationary_cost + synth.c_f;
    out["c_f"] = synth.c_f;
    out["stationary_admissible"] = admissible.all_pass;
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream os(std::filesystem::path(opt.out_dir) / "synthesis.json");
    os << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_tighten(const CommonOptions& opt, const std::string& out_file,
                const std::string& user_csv) {
    const ScenarioConfig cfg = load_with_overrides(opt);
    const LinearStochasticSystem sys = build_system(cfg);
    const TighteningSchedule schedule = build_schedule(cfg, sys, cfg.horizon, user_csv);

    std::filesystem::create_directories(opt.out_dir);
    const std::string path =
        out_file.empty() ? (std::filesystem::path(opt.out_dir) / "schedule.csv").string()
                         : out_file;
    write_schedule_csv(path, schedule);

    const TerminalSetReport terminal = validate_terminal_set(cfg.constraints, schedule, sys);
    std::cout << "schedule written to " << path << "\n";
    std::cout << "terminal set: " << (terminal.valid ? "valid" : "INVALID") << "\n";
    for (const auto& row : terminal.rows) {
        std::cout << "  " << (row.is_state_row ? "state" : "input") << " row " << row.index
                  << ": bound " << row.bound << " vs steady back-off " << row.steady_backoff
                  << (row.pass ? "  ok" : "  VIOLATED") << "\n";
    }
    if (!terminal.origin_invariant) {
        std::cout << "  origin not invariant (E[W] != 0)\n";
    }
    return terminal.valid ? kExitOk : kExitAudit;
}

json audit_json(const MonteCarloReport& report) {
    json a;
    a["gain"] = report.gain_label;
    a["paths"] = report.paths;
    a["steps"] = report.steps;
    a["recursive_feasibility"] = report.audit.recursive_feasibility;
    a["infeasible_count"] = report.audit.infeasible_count;
    a["splitting_max"] = report.audit.splitting_max;
    a["splitting_ok"] = report.audit.splitting_ok;
    a["nominal_min_margin"] = report.audit.nominal_min_margin;
    a["nominal_ok"] = report.audit.nominal_ok;
    a["design_risk_ok"] = report.audit.design_risk_ok;
    a["design_risk_worst"] = report.audit.design_risk_worst;
    a["ordering_ok"] = report.audit.ordering_ok;
    a["performance_in_bounds"] = report.audit.performance_in_bounds;
    a["final_average"] = report.final_average;
    a["average_se"] = report.average_se;
    a["lower_bound"] = report.lower_bound;
    a["upper_bound"] = report.upper_bound;
    a["all_ok"] = report.audit.all_ok();
    return a;
}

// Feasibility of the initial open-loop problem depends on z0 (and the
// schedule) only, not on the measured state, so probing once at the mean
// decides it for every realization.
bool initial_qp_feasible(const ScenarioConfig& cfg, const LinearStochasticSystem& sys,
                         const SynthesisResult& synth, const TighteningSchedule& schedule,
                         std::size_t horizon) {
    OcpCondenser condenser(sys, cfg.cost, cfg.constraints, synth.p, horizon);
    const CondensedQP qp =
        condenser.condense(cfg.sim.init.mean, cfg.sim.init.mean, schedule, 0);
    return solve_qp(qp).status == QpStatus::Optimal;
}

int cmd_simulate(const CommonOptions& opt, const std::string& gain_label,
                 const std::string& user_csv) {
    ScenarioConfig cfg = load_with_overrides(opt);
    LinearStochasticSystem sys = build_system(cfg);

    std::string label = gain_label.empty() ? (cfg.riccati_gain ? "kstar" : "k") : gain_label;
    if (label == "ktilde") {
        // Detuned comparison gain from a cheap-control Riccati design.
        sys.k = solve_dare(cfg.a, cfg.b, Mat(0.01 * cfg.cost.q), Mat(200.0 * cfg.cost.r)).gain;
    } else if (label == "kstar" || label == "riccati") {
        sys.k = solve_dare(cfg.a, cfg.b, cfg.cost.q, cfg.cost.r).gain;
    } else if (label != "k") {
        throw ConfigError("--gain: expected k|kstar|riccati|ktilde");
    }
    sys.validate();

    const SynthesisResult synth = synthesize(sys, cfg.cost);
    const std::size_t sched_horizon =
        cfg.tightening_mode == TighteningMode::GaussianExact
            ? cfg.horizon + cfg.sim.steps
            : cfg.horizon + std::min<std::size_t>(cfg.sim.steps, 50);
    const TighteningSchedule schedule = build_schedule(cfg, sys, sched_horizon, user_csv);
    const TerminalSetReport terminal = validate_terminal_set(cfg.constraints, schedule, sys);
    if (!terminal.valid) {
        std::cerr << "terminal set invalid; refusing to simulate\n";
        return kExitAudit;
    }
    if (!initial_qp_feasible(cfg, sys, synth, schedule, cfg.horizon)) {
        std::cerr << "initial open-loop problem infeasible at horizon " << cfg.horizon
                  << "; increase the horizon in the config\n";
        return kExitAudit;
    }

    cfg.sim.sample_based = cfg.tightening_mode != TighteningMode::GaussianExact;
    const MonteCarloReport report =
        run_paths(cfg.sim, sys, cfg.cost, cfg.constraints, schedule, synth, label);

    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path dir(opt.out_dir);
    write_risk_csv((dir / "risk_trajectories.csv").string(), report);
    write_performance_csv((dir / "performance.csv").string(), {report});
    write_feasibility_csv((dir / "feasibility.csv").string(), report);

    const json a = audit_json(report);
    std::cout << a.dump(2) << "\n";
    return report.audit.all_ok() ? kExitOk : kExitAudit;
}

int cmd_reproduce(const CommonOptions& opt, std::size_t perf_steps) {
    CommonOptions base = opt;
    base.scenario = "dcdc";
    ScenarioConfig cfg = load_with_overrides(base);
    const LinearStochasticSystem sys = build_system(cfg);
    const SynthesisResult synth = synthesize(sys, cfg.cost);

    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path dir(opt.out_dir);

    json summary;
    summary["seed"] = cfg.sim.seed;
    bool all_ok = true;

    // Constraint-trajectory runs, one per risk measure.
    const RiskKind kinds[] = {RiskKind::Expectation, RiskKind::VaR, RiskKind::CVaR,
                              RiskKind::EVaR};
    for (RiskKind kind : kinds) {
        ScenarioConfig variant = cfg;
        variant.constraints.spec.kind = kind;
        // The tightest measures can render the configured horizon
        // infeasible from the canonical start; grow it until the initial
        // problem admits a solution.
        TighteningSchedule schedule;
        bool feasible = false;
        for (std::size_t n = variant.horizon; n <= variant.horizon + 30; ++n) {
            variant.horizon = n;
            variant.sim.controller_horizon = n;
            schedule = build_schedule(variant, sys, n + variant.sim.steps, "");
            if (initial_qp_feasible(variant, sys, synth, schedule, n)) {
                feasible = true;
                break;
            }
        }
        const std::string name = risk_kind_name(kind);
        if (!feasible) {
            std::cerr << "no feasible horizon found for " << name << "\n";
            return kExitAudit;
        }
        if (variant.horizon != cfg.horizon) {
            std::cout << "note: " << name << " run uses horizon " << variant.horizon << "\n";
        }
        const TerminalSetReport terminal =
            validate_terminal_set(variant.constraints, schedule, sys);
        if (!terminal.valid) {
            std::cerr << "terminal set invalid for " << name << "\n";
            return kExitAudit;
        }
        const MonteCarloReport report = run_paths(variant.sim, sys, variant.cost,
                                                  variant.constraints, schedule, synth, "kstar");
        write_risk_csv((dir / ("risk_trajectories_" + name + ".csv")).string(), report);
        write_feasibility_csv((dir / ("feasibility_" + name + ".csv")).string(), report);
        summary["constraint_runs"][name] = audit_json(report);
        all_ok = all_ok && report.audit.all_ok();
    }

    // Averaged-performance comparison under common random numbers.
    ScenarioConfig perf = cfg;
    perf.constraints.spec.kind = RiskKind::CVaR;
    perf.sim.steps = perf_steps;
    perf.sim.collect_risk = false;
    const Mat ktilde =
        solve_dare(cfg.a, cfg.b, Mat(0.01 * cfg.cost.q), Mat(200.0 * cfg.cost.r)).gain;
    const std::vector<GainOption> gains = {{"kstar", sys.k}, {"ktilde", ktilde}};
    const std::vector<MonteCarloReport> reports =
        compare_gains(perf.sim, sys, perf.cost, perf.constraints, gains);
    write_performance_csv((dir / "performance.csv").string(), reports);
    for (const auto& report : reports) {
        write_feasibility_csv((dir / ("feasibility_perf_" + report.gain_label + ".csv")).string(),
                              report);
        summary["performance_runs"][report.gain_label] = audit_json(report);
        all_ok = all_ok && report.audit.all_ok();
    }

    summary["all_ok"] = all_ok;
    std::ofstream os(dir / "summary.json");
    os << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return all_ok ? kExitOk : kExitAudit;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-averse indirect-feedback stochastic MPC"};
    app.require_subcommand(1);

    CommonOptions synth_opt, tighten_opt, sim_opt, repro_opt;
    std::string tighten_out, tighten_user, sim_gain, sim_user;
    std::size_t perf_steps = 1000;

    auto* synth_cmd = app.add_subcommand("synthesize", "Offline synthesis report");
    add_common(synth_cmd, synth_opt);

    auto* tighten_cmd = app.add_subcommand("tighten", "Compute a constraint back-off schedule");
    add_common(tighten_cmd, tighten_opt);
    tighten_cmd->add_option("--out", tighten_out, "Schedule CSV path");
    tighten_cmd->add_option("--user-csv", tighten_user, "External bound schedule (user mode)");

    auto* sim_cmd = app.add_subcommand("simulate", "Closed-loop Monte-Carlo run");
    add_common(sim_cmd, sim_opt);
    sim_cmd->add_option("--gain", sim_gain, "Feedback gain: k|kstar|riccati|ktilde");
    sim_cmd->add_option("--user-csv", sim_user, "External bound schedule (user mode)");

    auto* repro_cmd = app.add_subcommand("reproduce-dcdc", "Full DC-DC artifact set");
    add_common(repro_cmd, repro_opt);
    repro_cmd->add_option("--perf-steps", perf_steps, "Steps for the performance comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synthesize(synth_opt);
        if (tighten_cmd->parsed()) return cmd_tighten(tighten_opt, tighten_out, tighten_user);
        if (sim_cmd->parsed()) return cmd_simulate(sim_opt, sim_gain, sim_user);
        if (repro_cmd->parsed()) return cmd_reproduce(repro_opt, perf_steps);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DimensionMismatch& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}
