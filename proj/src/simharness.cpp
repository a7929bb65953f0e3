#include "riskmpc/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include "riskmpc/errors.hpp"
#include "riskmpc/parallel.hpp"
#include "riskmpc/rng.hpp"

namespace riskmpc {

namespace {

constexpr std::uint64_t kStreamTagX0 = 1ULL << 58;
constexpr std::uint64_t kStreamTagPlant = 1ULL << 59;
constexpr std::uint64_t kStreamTagBootstrap = 1ULL << 57;
constexpr std::size_t kPathBlock = 256;

std::uint64_t plant_stream(std::size_t path, std::size_t step) {
    return kStreamTagPlant | (static_cast<std::uint64_t>(path) << 20) |
           static_cast<std::uint64_t>(step);
}

struct BlockResult {
    Vec stage_cost_sum;  // per step, summed over the block's paths
    std::vector<FeasibilityEvent> events;
    double split_max = 0.0;
    double nominal_min = std::numeric_limits<double>::infinity();
    double initial_value_sum = 0.0;  // step-0 open-loop optima
};

std::vector<RiskSpec> default_measures(const RiskSpec& constraint_spec) {
    const double a = constraint_spec.alpha;
    return {RiskSpec{RiskKind::Expectation, a}, RiskSpec{RiskKind::VaR, a},
            RiskSpec{RiskKind::CVaR, a}, RiskSpec{RiskKind::EVaR, a}};
}

// Multinomial bootstrap counts, one row of `paths` draws per resample.
std::vector<std::uint32_t> bootstrap_counts(std::size_t resamples, std::size_t paths,
                                            std::uint64_t seed) {
    std::vector<std::uint32_t> counts(resamples * paths, 0);
    parallel_chunks(resamples, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            RngStream rng(seed, kStreamTagBootstrap | r);
            std::uint32_t* row = counts.data() + r * paths;
            for (std::size_t d = 0; d < paths; ++d) {
                row[rng.next_u64() % paths] += 1;
            }
        }
    });
    return counts;
}

double stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (xs.size() - 1));
}

void format17(std::ostream& os) { os.precision(17); }

}  // namespace

MonteCarloReport run_paths(const SimConfig& cfg, const LinearStochasticSystem& sys,
                           const QuadCost& cost, const RiskConstraints& constraints,
                           const TighteningSchedule& schedule, const SynthesisResult& synth,
                           const std::string& gain_label) {
    if (cfg.paths == 0 || cfg.steps == 0) throw ConfigError("run_paths: paths and steps >= 1");
    const Eigen::Index n = sys.state_dim();
    if (cfg.init.mean.size() != n) throw ConfigError("run_paths: initial mean dimension");
    const Mat sigma0 = cfg.init.sigma.size() == 0 ? Mat::Zero(n, n) : cfg.init.sigma;

    ControllerConfig ctrl_cfg;
    ctrl_cfg.horizon = cfg.controller_horizon;
    ctrl_cfg.exact_cost = cfg.exact_cost;
    ctrl_cfg.fallback_on_infeasible = true;  // audits record, paths continue
    const IndirectFeedbackController controller(sys, cost, constraints, schedule, synth, ctrl_cfg);

    const std::size_t paths = cfg.paths;
    const std::size_t steps = cfg.steps;
    const Mat acl = sys.closed_loop();
    const GaussianSampler noise(sys.mu_w, sys.sigma_w);
    const bool random_init = !cfg.init.deterministic();
    const GaussianSampler init_draw(cfg.init.mean, sigma0);

    const auto m_x = constraints.state_rows.size();
    std::vector<Mat> row_values;
    if (cfg.collect_risk) {
        row_values.assign(m_x, Mat(static_cast<Eigen::Index>(paths),
                                   static_cast<Eigen::Index>(steps + 1)));
    }
    std::vector<double> path_avg_cost(paths, 0.0);

    const std::size_t n_blocks = (paths + kPathBlock - 1) / kPathBlock;
    std::vector<BlockResult> blocks(n_blocks);

    parallel_chunks(n_blocks, [&](std::size_t block_begin, std::size_t block_end) {
        for (std::size_t blk = block_begin; blk < block_end; ++blk) {
            BlockResult& res = blocks[blk];
            res.stage_cost_sum = Vec::Zero(static_cast<Eigen::Index>(steps));
            const std::size_t p_begin = blk * kPathBlock;
            const std::size_t p_end = std::min(paths, p_begin + kPathBlock);

            for (std::size_t p = p_begin; p < p_end; ++p) {
                Vec x = cfg.init.mean;
                if (random_init) {
                    RngStream rng0(cfg.seed, kStreamTagX0 | p);
                    x = init_draw.draw(rng0);
                }

                ControllerState state;
                bool alive = true;
                try {
                    state = controller.init(x, cfg.init.mean, sigma0);
                } catch (const Error&) {
                    alive = false;
                    res.events.push_back({p, 0, QpStatus::Infeasible});
                    state.step = 0;
                    state.z = cfg.init.mean;
                    state.sigma_e = sigma0;
                }
                Vec err = x - state.z;

                auto record_row_values = [&](std::size_t k) {
                    if (!cfg.collect_risk) return;
                    for (std::size_t i = 0; i < m_x; ++i) {
                        row_values[i](static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
                            constraints.state_rows[i].c.dot(x);
                    }
                };
                record_row_values(0);

                double cost_sum = 0.0;
                for (std::size_t j = 0; j < steps; ++j) {
                    for (std::size_t i = 0; i < m_x; ++i) {
                        const double margin = constraints.state_rows[i].p -
                                              schedule.state_backoff(i, j) -
                                              constraints.state_rows[i].c.dot(state.z);
                        res.nominal_min = std::min(res.nominal_min, margin);
                    }

                    Vec u;
                    if (alive) {
                        StepResult r = cfg.sample_based ? controller.step_sample_based(state, x)
                                                        : controller.step(state, x);
                        if (r.qp_status != QpStatus::Optimal) {
                            res.events.push_back({p, j, r.qp_status});
                        }
                        if (j == 0) res.initial_value_sum += r.open_loop_objective;
                        u = r.u;
                    } else {
                        u = sys.k * x;
                        state.z = acl * state.z + sys.mu_w;
                        ++state.step;
                    }

                    const double g = x.dot(cost.q * x) + u.dot(cost.r * u);
                    res.stage_cost_sum(static_cast<Eigen::Index>(j)) += g;
                    cost_sum += g;

                    RngStream rng(cfg.seed, plant_stream(p, j));
                    const Vec w = noise.draw(rng);
                    x = sys.a * x + sys.b * u + w;
                    err = acl * err + (w - sys.mu_w);

                    const double split = (x - state.z - err).lpNorm<Eigen::Infinity>();
                    res.split_max = std::max(res.split_max, split);
                    record_row_values(j + 1);
                }
                for (std::size_t i = 0; i < m_x; ++i) {
                    const double margin = constraints.state_rows[i].p -
                                          schedule.state_backoff(i, steps) -
                                          constraints.state_rows[i].c.dot(state.z);
                    res.nominal_min = std::min(res.nominal_min, margin);
                }
                path_avg_cost[p] = cost_sum / static_cast<double>(steps);
            }
        }
    });

    MonteCarloReport report;
    report.gain_label = gain_label;
    report.paths = paths;
    report.steps = steps;
    report.seed = cfg.seed;
    report.lower_bound = synth.stationary_cost;
    report.upper_bound = synth.stationary_cost + synth.c_f;

    // Deterministic block-ordered reduction.
    Vec stage_sum = Vec::Zero(static_cast<Eigen::Index>(steps));
    double split_max = 0.0;
    double nominal_min = std::numeric_limits<double>::infinity();
    double initial_value_mean = 0.0;
    for (const BlockResult& res : blocks) {
        stage_sum += res.stage_cost_sum;
        split_max = std::max(split_max, res.split_max);
        nominal_min = std::min(nominal_min, res.nominal_min);
        initial_value_mean += res.initial_value_sum;
        report.events.insert(report.events.end(), res.events.begin(), res.events.end());
    }
    initial_value_mean /= static_cast<double>(paths);
    report.mean_stage_cost = stage_sum / static_cast<double>(paths);
    report.running_average.resize(static_cast<Eigen::Index>(steps));
    double acc = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
        acc += report.mean_stage_cost(static_cast<Eigen::Index>(j));
        report.running_average(static_cast<Eigen::Index>(j)) = acc / static_cast<double>(j + 1);
    }
    report.final_average = report.running_average(static_cast<Eigen::Index>(steps - 1));
    report.average_se = stddev(path_avg_cost) / std::sqrt(static_cast<double>(paths));

    // Per-time empirical risk with bootstrap standard errors.
    const std::vector<RiskSpec> measures =
        cfg.report_measures.empty() ? default_measures(constraints.spec) : cfg.report_measures;
    if (cfg.collect_risk && m_x > 0) {
        const std::size_t resamples = cfg.bootstrap_resamples;
        const std::vector<std::uint32_t> counts = bootstrap_counts(resamples, paths, cfg.seed);

        report.risk.resize(measures.size() * m_x);
        for (std::size_t m = 0; m < measures.size(); ++m) {
            for (std::size_t i = 0; i < m_x; ++i) {
                auto& traj = report.risk[m * m_x + i];
                traj.spec = measures[m];
                traj.row = i;
                traj.value.resize(static_cast<Eigen::Index>(steps + 1));
                traj.se.resize(static_cast<Eigen::Index>(steps + 1));
            }
        }

        bool need_evar = false;
        for (const auto& m : measures) need_evar |= m.kind == RiskKind::EVaR;

        for (std::size_t i = 0; i < m_x; ++i) {
            const Mat& values = row_values[i];
            parallel_chunks(steps + 1, [&](std::size_t k_begin, std::size_t k_end) {
                std::vector<double> col(paths), sv(paths);
                std::vector<std::size_t> order(paths);
                std::vector<std::uint32_t> cnt(paths);
                std::vector<double> replicate(resamples);

                for (std::size_t k = k_begin; k < k_end; ++k) {
                    for (std::size_t p = 0; p < paths; ++p) {
                        col[p] = values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
                    }
                    std::iota(order.begin(), order.end(), std::size_t{0});
                    std::sort(order.begin(), order.end(),
                              [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
                    for (std::size_t q = 0; q < paths; ++q) sv[q] = col[order[q]];

                    for (std::size_t m = 0; m < measures.size(); ++m) {
                        report.risk[m * m_x + i].value(static_cast<Eigen::Index>(k)) =
                            empirical_risk_sorted(measures[m], sv);
                    }

                    // EVaR bootstrap reuses a z-grid around the full-sample
                    // minimizer so the exp table is shared across resamples.
                    EvarDetail evar_full{};
                    std::vector<double> zgrid;
                    std::vector<std::vector<double>> etab;
                    double evar_alpha = 0.0;
                    if (need_evar) {
                        for (const auto& m : measures) {
                            if (m.kind == RiskKind::EVaR) evar_alpha = m.alpha;
                        }
                        evar_full = empirical_evar_detail(sv, evar_alpha);
                        const int n_grid = 21;
                        zgrid.resize(n_grid);
                        etab.assign(n_grid, std::vector<double>(paths));
                        for (int zi = 0; zi < n_grid; ++zi) {
                            const double t = -std::log(4.0) +
                                             2.0 * std::log(4.0) * zi / (n_grid - 1);
                            const double z = evar_full.z * std::exp(t);
                            zgrid[zi] = z;
                            const double shift = z * sv[paths - 1];
                            for (std::size_t q = 0; q < paths; ++q) {
                                etab[zi][q] = std::exp(z * sv[q] - shift);
                            }
                        }
                    }

                    for (std::size_t m = 0; m < measures.size(); ++m) {
                        const RiskSpec& spec = measures[m];
                        auto& traj = report.risk[m * m_x + i];
                        for (std::size_t r = 0; r < resamples; ++r) {
                            const std::uint32_t* row = counts.data() + r * paths;
                            for (std::size_t q = 0; q < paths; ++q) cnt[q] = row[order[q]];

                            double rep = 0.0;
                            switch (spec.kind) {
                                case RiskKind::Expectation: {
                                    double s = 0.0;
                                    for (std::size_t q = 0; q < paths; ++q) s += cnt[q] * sv[q];
                                    rep = s / static_cast<double>(paths);
                                    break;
                                }
                                case RiskKind::VaR:
                                case RiskKind::CVaR: {
                                    const auto thresh = static_cast<std::uint64_t>(std::ceil(
                                        static_cast<double>(paths) * (1.0 - spec.alpha) - 1e-9));
                                    std::uint64_t cum = 0;
                                    std::size_t vq = paths - 1;
                                    for (std::size_t q = 0; q < paths; ++q) {
                                        cum += cnt[q];
                                        if (cum >= std::max<std::uint64_t>(thresh, 1)) {
                                            vq = q;
                                            break;
                                        }
                                    }
                                    const double t = sv[vq];
                                    if (spec.kind == RiskKind::VaR) {
                                        rep = t;
                                    } else {
                                        double tail = 0.0;
                                        for (std::size_t q = paths; q-- > 0;) {
                                            if (sv[q] <= t) break;
                                            tail += cnt[q] * (sv[q] - t);
                                        }
                                        rep = t + tail / (spec.alpha * static_cast<double>(paths));
                                    }
                                    break;
                                }
                                case RiskKind::EVaR: {
                                    double best = std::numeric_limits<double>::infinity();
                                    for (std::size_t zi = 0; zi < zgrid.size(); ++zi) {
                                        double s = 0.0;
                                        const auto& e = etab[zi];
                                        for (std::size_t q = 0; q < paths; ++q) s += cnt[q] * e[q];
                                        const double z = zgrid[zi];
                                        const double f =
                                            (z * sv[paths - 1] +
                                             std::log(s / static_cast<double>(paths)) -
                                             std::log(spec.alpha)) /
                                            z;
                                        best = std::min(best, f);
                                    }
                                    rep = best;
                                    break;
                                }
                            }
                            replicate[r] = rep;
                        }
                        traj.se(static_cast<Eigen::Index>(k)) = stddev(replicate);
                    }
                }
            });
        }
    }

    // Audits.
    auto& audit = report.audit;
    audit.infeasible_count = report.events.size();
    audit.recursive_feasibility = report.events.empty();
    audit.splitting_max = split_max;
    audit.splitting_ok = split_max <= 1e-9;
    audit.nominal_min_margin = nominal_min;
    audit.nominal_ok = nominal_min >= -1e-8;

    audit.design_risk_worst = -std::numeric_limits<double>::infinity();
    if (cfg.collect_risk) {
        for (const auto& traj : report.risk) {
            const bool same_kind = traj.spec.kind == constraints.spec.kind;
            const bool same_alpha = traj.spec.kind == RiskKind::Expectation ||
                                    std::abs(traj.spec.alpha - constraints.spec.alpha) <= 1e-12;
            if (!same_kind || !same_alpha) continue;
            const double bound = constraints.state_rows[traj.row].p;
            for (Eigen::Index k = 0; k < traj.value.size(); ++k) {
                const double slack = traj.value(k) - (bound + 3.0 * traj.se(k));
                audit.design_risk_worst = std::max(audit.design_risk_worst, slack);
            }
        }
        audit.design_risk_ok = audit.design_risk_worst <= 0.0 ||
                               !std::isfinite(audit.design_risk_worst);

        // Ordering E <= VaR <= CVaR <= EVaR per time step, within
        // estimator tolerance.
        auto find_traj = [&](RiskKind kind, std::size_t row) -> const RiskTrajectory* {
            for (const auto& traj : report.risk) {
                if (traj.spec.kind == kind && traj.row == row) return &traj;
            }
            return nullptr;
        };
        for (std::size_t i = 0; i < m_x && audit.ordering_ok; ++i) {
            const auto* te = find_traj(RiskKind::Expectation, i);
            const auto* tv = find_traj(RiskKind::VaR, i);
            const auto* tc = find_traj(RiskKind::CVaR, i);
            const auto* tx = find_traj(RiskKind::EVaR, i);
            for (std::size_t k = 0; k <= steps && audit.ordering_ok; ++k) {
                const auto ki = static_cast<Eigen::Index>(k);
                if (te && tv) {
                    const double tol = 3.0 * (te->se(ki) + tv->se(ki)) + 1e-9;
                    audit.ordering_ok = te->value(ki) <= tv->value(ki) + tol;
                }
                if (audit.ordering_ok && tv && tc) {
                    audit.ordering_ok = tv->value(ki) <= tc->value(ki) + 1e-9;
                }
                if (audit.ordering_ok && tc && tx) {
                    audit.ordering_ok = tc->value(ki) <= tx->value(ki) + 1e-6;
                }
            }
        }
    }

    // Averaged performance must land in the sandwich up to the Monte-Carlo
    // margin and the O(1/L) transient; the telescoping argument leaves a
    // slack of (initial open-loop value)/L.
    const double transient = initial_value_mean / static_cast<double>(steps);
    const double margin = 3.0 * report.average_se + transient;
    audit.performance_in_bounds =
        report.final_average >= report.lower_bound - margin &&
        report.final_average <= report.upper_bound + margin;

    return report;
}

std::vector<MonteCarloReport> compare_gains(const SimConfig& cfg,
                                            const LinearStochasticSystem& sys,
                                            const QuadCost& cost,
                                            const RiskConstraints& constraints,
                                            const std::vector<GainOption>& gains) {
    std::vector<MonteCarloReport> reports;
    reports.reserve(gains.size());
    for (const auto& option : gains) {
        LinearStochasticSystem tuned = sys;
        tuned.k = option.gain;
        tuned.validate();
        const SynthesisResult synth = synthesize(tuned, cost);

        ErrorProcess ep;
        ep.acl = tuned.closed_loop();
        ep.sigma_e0 = cfg.init.sigma.size() == 0
                          ? Mat::Zero(tuned.state_dim(), tuned.state_dim())
                          : cfg.init.sigma;
        ep.sigma_w = tuned.sigma_w;
        const TighteningSchedule schedule = gaussian_schedule(
            ep, constraints, tuned.k, cfg.controller_horizon + cfg.steps);

        const TerminalSetReport terminal = validate_terminal_set(constraints, schedule, tuned);
        if (!terminal.valid) {
            throw ConfigError("compare_gains: terminal set invalid for gain " + option.label);
        }
        reports.push_back(run_paths(cfg, tuned, cost, constraints, schedule, synth, option.label));
    }
    return reports;
}

std::pair<double, double> performance_bounds(const SynthesisResult& synth) {
    return {synth.stationary_cost, synth.stationary_cost + synth.c_f};
}

void write_risk_csv(std::ostream& os, const MonteCarloReport& report) {
    format17(os);
    os << "k,measure,value,se\n";
    const std::size_t rows =
        report.risk.empty() ? 0 : (*std::max_element(report.risk.begin(), report.risk.end(),
                                                     [](const auto& a, const auto& b) {
                                                         return a.row < b.row;
                                                     })).row +
                                      1;
    for (std::size_t k = 0; k <= report.steps; ++k) {
        for (const auto& traj : report.risk) {
            os << k << ',' << risk_kind_name(traj.spec.kind);
            if (rows > 1) os << "_r" << traj.row;
            os << ',' << traj.value(static_cast<Eigen::Index>(k)) << ','
               << traj.se(static_cast<Eigen::Index>(k)) << '\n';
        }
    }
}

void write_performance_csv(std::ostream& os, const std::vector<MonteCarloReport>& reports) {
    format17(os);
    os << "L,running_average,lower_bound,upper_bound,gain_label\n";
    for (const auto& report : reports) {
        for (std::size_t j = 0; j < report.steps; ++j) {
            os << (j + 1) << ',' << report.running_average(static_cast<Eigen::Index>(j)) << ','
               << report.lower_bound << ',' << report.upper_bound << ',' << report.gain_label
               << '\n';
        }
    }
}

void write_feasibility_csv(std::ostream& os, const MonteCarloReport& report) {
    os << "path,step,status\n";
    for (const auto& event : report.events) {
        os << event.path << ',' << event.step << ',' << qp_status_name(event.status) << '\n';
    }
}

namespace {
std::ofstream open_or_throw(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open output file " + path);
    return os;
}
}  // namespace

void write_risk_csv(const std::string& path, const MonteCarloReport& report) {
    auto os = open_or_throw(path);
    write_risk_csv(os, report);
}

void write_performance_csv(const std::string& path, const std::vector<MonteCarloReport>& reports) {
    auto os = open_or_throw(path);
    write_performance_csv(os, reports);
}

void write_feasibility_csv(const std::string& path, const MonteCarloReport& report) {
    auto os = open_or_throw(path);
    write_feasibility_csv(os, report);
}

}  // namespace riskmpc
