#include "riskmpc/tightening.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "riskmpc/errors.hpp"
#include "riskmpc/lyapunov.hpp"
#include "riskmpc/parallel.hpp"

namespace riskmpc {

namespace {

constexpr std::uint64_t kStreamTagInitial = 1ULL << 62;
constexpr std::uint64_t kStreamTagNoise = 1ULL << 61;

std::uint64_t noise_stream(std::size_t path, std::size_t step) {
    return kStreamTagNoise | (static_cast<std::uint64_t>(path) << 20) |
           static_cast<std::uint64_t>(step);
}

}  // namespace

void ErrorProcess::validate() const {
    const Eigen::Index n = acl.rows();
    if (acl.cols() != n || sigma_e0.rows() != n || sigma_e0.cols() != n || sigma_w.rows() != n ||
        sigma_w.cols() != n) {
        throw DimensionMismatch("ErrorProcess: inconsistent shapes");
    }
    if (!is_stable(acl)) throw NotStable("ErrorProcess: closed loop not stable");
    if (!is_psd(symmetrize(sigma_e0))) throw NotPSD("ErrorProcess: sigma_e0 not PSD");
    if (!is_psd(symmetrize(sigma_w))) throw NotPSD("ErrorProcess: sigma_w not PSD");
}

const char* tightening_mode_name(TighteningMode mode) {
    switch (mode) {
        case TighteningMode::GaussianExact: return "gaussian_exact";
        case TighteningMode::MonteCarlo: return "monte_carlo";
        case TighteningMode::UserBound: return "user_bound";
    }
    return "?";
}

std::vector<Mat> propagate_error_cov(const ErrorProcess& ep, std::size_t n_steps) {
    ep.validate();
    std::vector<Mat> covs;
    covs.reserve(n_steps + 1);
    covs.push_back(symmetrize(ep.sigma_e0));
    for (std::size_t k = 0; k < n_steps; ++k) {
        covs.push_back(symmetrize(ep.acl * covs.back() * ep.acl.transpose() + ep.sigma_w));
    }
    return covs;
}

TighteningSchedule gaussian_schedule(const ErrorProcess& ep, const RiskConstraints& constraints,
                                     const Mat& k_gain, std::size_t horizon) {
    if (!ep.gaussian) {
        throw ConfigError("gaussian_schedule: error process not declared Gaussian");
    }
    const auto covs = propagate_error_cov(ep, horizon);
    const Mat sigma_ss = solve_dlyap(ep.acl, symmetrize(ep.sigma_w), LyapForm::AXAt);
    const double coeff = risk_coefficient(constraints.spec);

    const auto m_x = constraints.state_rows.size();
    const auto m_u = constraints.input_rows.size();

    TighteningSchedule sched;
    sched.horizon = horizon;
    sched.mode = TighteningMode::GaussianExact;
    sched.state_backoffs.resize(m_x, static_cast<Eigen::Index>(horizon + 1));
    sched.input_backoffs.resize(m_u, static_cast<Eigen::Index>(horizon));
    sched.steady_state.resize(static_cast<Eigen::Index>(m_x + m_u));

    auto backoff = [&](const Vec& row, const Mat& cov) {
        return std::sqrt(std::max(0.0, row.dot(cov * row))) * coeff;
    };

    for (std::size_t i = 0; i < m_x; ++i) {
        const Vec& c = constraints.state_rows[i].c;
        for (std::size_t k = 0; k <= horizon; ++k) {
            sched.state_backoffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                backoff(c, covs[k]);
        }
        sched.steady_state(static_cast<Eigen::Index>(i)) = backoff(c, sigma_ss);
    }
    for (std::size_t i = 0; i < m_u; ++i) {
        const Vec dk = k_gain.transpose() * constraints.input_rows[i].d;
        for (std::size_t k = 0; k < horizon; ++k) {
            sched.input_backoffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                backoff(dk, covs[k]);
        }
        sched.steady_state(static_cast<Eigen::Index>(m_x + i)) = backoff(dk, sigma_ss);
    }
    return sched;
}

TighteningSchedule monte_carlo_schedule(const ErrorProcess& ep, const RiskConstraints& constraints,
                                        const Mat& k_gain, std::size_t horizon, std::size_t paths,
                                        std::uint64_t seed, const DisturbanceSampler& noise,
                                        const DisturbanceSampler& initial_error) {
    ep.validate();
    constraints.spec.validate();
    if (paths == 0) throw ConfigError("monte_carlo_schedule: paths must be >= 1");

    const Eigen::Index n = ep.acl.rows();
    const Vec zero = Vec::Zero(n);
    const GaussianSampler default_noise(zero, ep.sigma_w);
    const GaussianSampler default_initial(zero, ep.sigma_e0);
    const DisturbanceSampler& w_draw =
        noise ? noise : DisturbanceSampler([&](RngStream& rng) { return default_noise.draw(rng); });
    const DisturbanceSampler& e0_draw =
        initial_error
            ? initial_error
            : DisturbanceSampler([&](RngStream& rng) { return default_initial.draw(rng); });

    // Burn-in horizon for the steady-state estimate: run until the
    // covariance contraction factor has decayed to ~1e-4.
    const double sr = spectral_radius(ep.acl);
    std::size_t k_ss = horizon + 1;
    if (sr > 1e-8) {
        const double needed = std::log(1e-4) / (2.0 * std::log(sr));
        k_ss = std::max<std::size_t>(horizon + 1,
                                     static_cast<std::size_t>(std::min(5000.0, std::ceil(needed))));
    }

    const auto m_x = constraints.state_rows.size();
    const auto m_u = constraints.input_rows.size();
    std::vector<Vec> state_dirs(m_x);
    std::vector<Vec> input_dirs(m_u);
    for (std::size_t i = 0; i < m_x; ++i) state_dirs[i] = constraints.state_rows[i].c;
    for (std::size_t i = 0; i < m_u; ++i) input_dirs[i] = k_gain.transpose() * constraints.input_rows[i].d;

    Mat ensemble(n, static_cast<Eigen::Index>(paths));
    parallel_chunks(paths, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            RngStream rng(seed, kStreamTagInitial | p);
            ensemble.col(static_cast<Eigen::Index>(p)) = e0_draw(rng);
        }
    });

    TighteningSchedule sched;
    sched.horizon = horizon;
    sched.mode = TighteningMode::MonteCarlo;
    sched.state_backoffs.resize(m_x, static_cast<Eigen::Index>(horizon + 1));
    sched.input_backoffs.resize(m_u, static_cast<Eigen::Index>(horizon));
    sched.steady_state.resize(static_cast<Eigen::Index>(m_x + m_u));

    std::vector<double> samples(paths);
    std::vector<double> sorted(paths);
    auto risk_of_direction = [&](const Vec& dir) {
        parallel_chunks(paths, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                samples[p] = dir.dot(ensemble.col(static_cast<Eigen::Index>(p)));
            }
        });
        if (constraints.spec.kind == RiskKind::VaR || constraints.spec.kind == RiskKind::CVaR) {
            sorted.assign(samples.begin(), samples.end());
            std::sort(sorted.begin(), sorted.end());
            return empirical_risk_sorted(constraints.spec, sorted);
        }
        return empirical_risk(constraints.spec, samples);
    };

    for (std::size_t k = 0; k <= k_ss; ++k) {
        if (k <= horizon) {
            for (std::size_t i = 0; i < m_x; ++i) {
                sched.state_backoffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    risk_of_direction(state_dirs[i]);
            }
            if (k < horizon) {
                for (std::size_t i = 0; i < m_u; ++i) {
                    sched.input_backoffs(static_cast<Eigen::Index>(i),
                                         static_cast<Eigen::Index>(k)) =
                        risk_of_direction(input_dirs[i]);
                }
            }
        }
        if (k == k_ss) {
            for (std::size_t i = 0; i < m_x; ++i) {
                sched.steady_state(static_cast<Eigen::Index>(i)) = risk_of_direction(state_dirs[i]);
            }
            for (std::size_t i = 0; i < m_u; ++i) {
                sched.steady_state(static_cast<Eigen::Index>(m_x + i)) =
                    risk_of_direction(input_dirs[i]);
            }
            break;
        }
        parallel_chunks(paths, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                RngStream rng(seed, noise_stream(p, k));
                ensemble.col(static_cast<Eigen::Index>(p)) =
                    ep.acl * ensemble.col(static_cast<Eigen::Index>(p)) + w_draw(rng);
            }
        });
    }
    return sched;
}

TighteningSchedule user_bound_schedule(TighteningSchedule external,
                                       const TighteningSchedule* reference) {
    external.mode = TighteningMode::UserBound;
    if (reference != nullptr) {
        if (reference->state_backoffs.rows() != external.state_backoffs.rows() ||
            reference->input_backoffs.rows() != external.input_backoffs.rows() ||
            reference->horizon != external.horizon) {
            throw ConfigError("user_bound_schedule: shape mismatch with reference schedule");
        }
        const double tol = 1e-12;
        if (((external.state_backoffs - reference->state_backoffs).array() < -tol).any() ||
            ((external.input_backoffs - reference->input_backoffs).array() < -tol).any() ||
            ((external.steady_state - reference->steady_state).array() < -tol).any()) {
            throw ConfigError("user_bound_schedule: bounds do not dominate the exact schedule");
        }
    }
    return external;
}

TerminalSetReport validate_terminal_set(const RiskConstraints& constraints,
                                        const TighteningSchedule& schedule,
                                        const LinearStochasticSystem& sys) {
    TerminalSetReport report;
    for (std::size_t i = 0; i < constraints.state_rows.size(); ++i) {
        TerminalSetRow row;
        row.is_state_row = true;
        row.index = i;
        row.bound = constraints.state_rows[i].p;
        row.steady_backoff = schedule.steady_state_state(i);
        row.pass = row.bound >= row.steady_backoff - 1e-12;
        report.valid = report.valid && row.pass;
        report.rows.push_back(row);
    }
    for (std::size_t i = 0; i < constraints.input_rows.size(); ++i) {
        TerminalSetRow row;
        row.is_state_row = false;
        row.index = i;
        row.bound = constraints.input_rows[i].q;
        row.steady_backoff = schedule.steady_state_input(i);
        row.pass = row.bound >= row.steady_backoff - 1e-12;
        report.valid = report.valid && row.pass;
        report.rows.push_back(row);
    }
    if (constraints.v_box) {
        report.zero_input_admissible = (constraints.v_box->lower.array() <= 0.0).all() &&
                                       (constraints.v_box->upper.array() >= 0.0).all();
    }
    report.origin_invariant = sys.mu_w.lpNorm<Eigen::Infinity>() <= 1e-12;
    report.valid = report.valid && report.zero_input_admissible && report.origin_invariant;
    return report;
}

namespace {

void write_row(std::ostream& os, const char* kind, std::size_t index, double steady,
               const Mat& table, Eigen::Index row) {
    os << kind << ',' << index;
    const int prec = 17;
    os.precision(prec);
    os << ',' << steady;
    for (Eigen::Index k = 0; k < table.cols(); ++k) os << ',' << table(row, k);
    os << '\n';
}

}  // namespace

void write_schedule_csv(std::ostream& os, const TighteningSchedule& schedule) {
    os << "# riskmpc tightening schedule v1\n";
    os << "mode," << tightening_mode_name(schedule.mode) << '\n';
    os << "horizon," << schedule.horizon << '\n';
    os.precision(17);
    for (Eigen::Index i = 0; i < schedule.state_backoffs.rows(); ++i) {
        write_row(os, "state", static_cast<std::size_t>(i),
                  schedule.steady_state(i), schedule.state_backoffs, i);
    }
    for (Eigen::Index i = 0; i < schedule.input_backoffs.rows(); ++i) {
        write_row(os, "input", static_cast<std::size_t>(i),
                  schedule.steady_state(schedule.state_backoffs.rows() + i),
                  schedule.input_backoffs, i);
    }
}

void write_schedule_csv(const std::string& path, const TighteningSchedule& schedule) {
    std::ofstream os(path);
    if (!os) throw ConfigError("write_schedule_csv: cannot open " + path);
    write_schedule_csv(os, schedule);
}

TighteningSchedule read_schedule_csv(std::istream& is) {
    std::string line;
    TighteningSchedule sched;
    std::vector<std::vector<double>> state_rows, input_rows;
    std::vector<double> state_ss, input_ss;
    bool have_mode = false, have_horizon = false;

    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        if (field == "mode") {
            std::getline(ss, field, ',');
            if (field == "gaussian_exact") sched.mode = TighteningMode::GaussianExact;
            else if (field == "monte_carlo") sched.mode = TighteningMode::MonteCarlo;
            else if (field == "user_bound") sched.mode = TighteningMode::UserBound;
            else throw ConfigError("read_schedule_csv: unknown mode " + field);
            have_mode = true;
        } else if (field == "horizon") {
            std::getline(ss, field, ',');
            sched.horizon = static_cast<std::size_t>(std::stoull(field));
            have_horizon = true;
        } else if (field == "state" || field == "input") {
            const bool is_state = field == "state";
            std::getline(ss, field, ',');  // row index (positional, ignored)
            std::vector<double> values;
            while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
            if (values.empty()) throw ConfigError("read_schedule_csv: empty row");
            if (is_state) {
                state_ss.push_back(values.front());
                state_rows.emplace_back(values.begin() + 1, values.end());
            } else {
                input_ss.push_back(values.front());
                input_rows.emplace_back(values.begin() + 1, values.end());
            }
        } else {
            throw ConfigError("read_schedule_csv: unexpected row kind " + field);
        }
    }
    if (!have_mode || !have_horizon) throw ConfigError("read_schedule_csv: missing header");

    sched.state_backoffs.resize(static_cast<Eigen::Index>(state_rows.size()),
                                static_cast<Eigen::Index>(sched.horizon + 1));
    for (std::size_t i = 0; i < state_rows.size(); ++i) {
        if (state_rows[i].size() != sched.horizon + 1) {
            throw ConfigError("read_schedule_csv: state row length mismatch");
        }
        for (std::size_t k = 0; k < state_rows[i].size(); ++k) {
            sched.state_backoffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                state_rows[i][k];
        }
    }
    sched.input_backoffs.resize(static_cast<Eigen::Index>(input_rows.size()),
                                static_cast<Eigen::Index>(sched.horizon));
    for (std::size_t i = 0; i < input_rows.size(); ++i) {
        if (input_rows[i].size() != sched.horizon) {
            throw ConfigError("read_schedule_csv: input row length mismatch");
        }
        for (std::size_t k = 0; k < input_rows[i].size(); ++k) {
            sched.input_backoffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                input_rows[i][k];
        }
    }
    sched.steady_state.resize(static_cast<Eigen::Index>(state_ss.size() + input_ss.size()));
    for (std::size_t i = 0; i < state_ss.size(); ++i) {
        sched.steady_state(static_cast<Eigen::Index>(i)) = state_ss[i];
    }
    for (std::size_t i = 0; i < input_ss.size(); ++i) {
        sched.steady_state(static_cast<Eigen::Index>(state_ss.size() + i)) = input_ss[i];
    }
    return sched;
}

TighteningSchedule read_schedule_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("read_schedule_csv: cannot open " + path);
    return read_schedule_csv(is);
}

}  // namespace riskmpc
