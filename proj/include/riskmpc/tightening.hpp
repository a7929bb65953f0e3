#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "riskmpc/linalg.hpp"
#include "riskmpc/model.hpp"
#include "riskmpc/rng.hpp"

namespace riskmpc {

// Control-independent error dynamics E+ = Acl E + (W - E[W]).
struct ErrorProcess {
    Mat acl;
    Mat sigma_e0;
    Mat sigma_w;
    bool gaussian = true;  // noise and E0 declared Gaussian

    void validate() const;
};

enum class TighteningMode { GaussianExact, MonteCarlo, UserBound };

const char* tightening_mode_name(TighteningMode mode);

// Per-step constraint back-offs. State rows carry N+1 entries (k = 0..N),
// input rows N entries (k = 0..N-1); queries beyond the stored horizon
// return the steady-state bound, which dominates every step whenever
// Sigma_E0 <= Sigma_E^s.
struct TighteningSchedule {
    std::size_t horizon = 0;
    Mat state_backoffs;   // m_x x (N+1)
    Mat input_backoffs;   // m_u x N
    Vec steady_state;     // length m_x + m_u, state rows first
    TighteningMode mode = TighteningMode::GaussianExact;

    std::size_t state_rows() const { return static_cast<std::size_t>(state_backoffs.rows()); }
    std::size_t input_rows() const { return static_cast<std::size_t>(input_backoffs.rows()); }

    double state_backoff(std::size_t row, std::size_t k) const {
        if (k <= horizon) return state_backoffs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k));
        return steady_state(static_cast<Eigen::Index>(row));
    }

    double input_backoff(std::size_t row, std::size_t k) const {
        if (horizon > 0 && k < horizon) {
            return input_backoffs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k));
        }
        return steady_state(static_cast<Eigen::Index>(state_rows() + row));
    }

    double steady_state_state(std::size_t row) const {
        return steady_state(static_cast<Eigen::Index>(row));
    }
    double steady_state_input(std::size_t row) const {
        return steady_state(static_cast<Eigen::Index>(state_rows() + row));
    }
};

// Error covariances Sigma_E(0..N) under the recursion
// Sigma+ = Acl Sigma Acl^T + Sigma_W.
std::vector<Mat> propagate_error_cov(const ErrorProcess& ep, std::size_t n_steps);

// Exact Gaussian back-offs sqrt(c^T Sigma_E(k) c) * R(alpha); input rows
// through d^T K. Steady-state entries use the stationary covariance.
TighteningSchedule gaussian_schedule(const ErrorProcess& ep, const RiskConstraints& constraints,
                                     const Mat& k_gain, std::size_t horizon);

// Draws one centered disturbance realization W - E[W].
using DisturbanceSampler = std::function<Vec(RngStream&)>;

// Sample-based back-offs: empirical risk over simulated error paths.
// The default samplers draw Gaussian noise from sigma_w / sigma_e0.
// Deterministic for a fixed seed regardless of thread count.
TighteningSchedule monte_carlo_schedule(const ErrorProcess& ep, const RiskConstraints& constraints,
                                        const Mat& k_gain, std::size_t horizon, std::size_t paths,
                                        std::uint64_t seed,
                                        const DisturbanceSampler& noise = nullptr,
                                        const DisturbanceSampler& initial_error = nullptr);

// Wraps externally supplied bound sequences; `reference` (typically the
// Gaussian schedule) must be dominated entry-wise when provided.
TighteningSchedule user_bound_schedule(TighteningSchedule external,
                                       const TighteningSchedule* reference = nullptr);

struct TerminalSetRow {
    bool is_state_row = true;
    std::size_t index = 0;
    double bound = 0.0;
    double steady_backoff = 0.0;
    bool pass = false;
};

struct TerminalSetReport {
    std::vector<TerminalSetRow> rows;
    bool zero_input_admissible = true;  // 0 in V
    bool origin_invariant = true;       // z = 0, v = 0 fixed point (needs E[W] = 0)
    bool valid = true;
};

// Checks the zero-terminal-set conditions: every bound dominates its
// steady-state back-off, 0 lies in the input box and the origin is an
// equilibrium of the nominal dynamics.
TerminalSetReport validate_terminal_set(const RiskConstraints& constraints,
                                        const TighteningSchedule& schedule,
                                        const LinearStochasticSystem& sys);

void write_schedule_csv(std::ostream& os, const TighteningSchedule& schedule);
void write_schedule_csv(const std::string& path, const TighteningSchedule& schedule);
TighteningSchedule read_schedule_csv(std::istream& is);
TighteningSchedule read_schedule_csv(const std::string& path);

}  // namespace riskmpc
