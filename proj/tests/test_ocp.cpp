#include <doctest.h>

#include <cmath>

#include "riskmpc/errors.hpp"
#include "riskmpc/lyapunov.hpp"
#include "riskmpc/ocp.hpp"
#include "riskmpc/riccati.hpp"
#include "riskmpc/rng.hpp"

using namespace riskmpc;

namespace {

struct Fixture {
    LinearStochasticSystem sys;
    QuadCost cost;
    RiskConstraints cons;
    SynthesisResult synth;
    TighteningSchedule schedule;

    explicit Fixture(std::size_t schedule_horizon = 30) {
        sys.a.resize(2, 2);
        sys.a << 1.0, 0.0075, -0.143, 0.996;
        sys.b.resize(2, 1);
        sys.b << 4.798, 0.115;
        sys.mu_w = Vec::Zero(2);
        sys.sigma_w = 0.1 * Mat::Identity(2, 2);
        cost.q.resize(2, 2);
        cost.q << 1, 0, 0, 10;
        cost.r.resize(1, 1);
        cost.r << 5;
        sys.k = solve_dare(sys.a, sys.b, cost.q, cost.r).gain;
        cons.spec = {RiskKind::CVaR, 0.4};
        Vec c(2);
        c << 1.0, 0.0;
        cons.state_rows.push_back({c, 2.0});
        synth = synthesize(sys, cost);
        ErrorProcess ep{sys.closed_loop(), Mat::Zero(2, 2), sys.sigma_w};
        schedule = gaussian_schedule(ep, cons, sys.k, schedule_horizon);
    }

    OpenLoopProblem problem(const Vec& x, const Vec& z, std::size_t horizon,
                            std::size_t offset = 0) const {
        OpenLoopProblem prob;
        prob.sys = &sys;
        prob.cost = &cost;
        prob.constraints = &cons;
        prob.schedule = &schedule;
        prob.p = synth.p;
        prob.horizon = horizon;
        prob.x = x;
        prob.z = z;
        prob.schedule_offset = offset;
        return prob;
    }
};

}  // namespace

TEST_CASE("N = 1 scalar condensation against the hand expansion") {
    LinearStochasticSystem sys;
    sys.a.resize(1, 1);
    sys.a << 0.8;
    sys.b.resize(1, 1);
    sys.b << 1.3;
    sys.mu_w = Vec::Zero(1);
    sys.sigma_w.resize(1, 1);
    sys.sigma_w << 0.2;
    QuadCost cost;
    cost.q.resize(1, 1);
    cost.q << 1.0;
    cost.r.resize(1, 1);
    cost.r << 0.5;
    sys.k = solve_dare(sys.a, sys.b, cost.q, cost.r).gain;
    const SynthesisResult synth = synthesize(sys, cost);

    RiskConstraints cons;
    cons.spec = {RiskKind::Expectation, 0.4};
    ErrorProcess ep{sys.closed_loop(), Mat::Zero(1, 1), sys.sigma_w};
    const auto schedule = gaussian_schedule(ep, cons, sys.k, 2);

    OpenLoopProblem prob;
    prob.sys = &sys;
    prob.cost = &cost;
    prob.constraints = &cons;
    prob.schedule = &schedule;
    prob.p = synth.p;
    prob.horizon = 1;
    prob.x = Vec::Constant(1, 1.7);
    prob.z = Vec::Constant(1, 1.7);

    const CondensedQP qp = condense(prob);
    const double p = synth.p(0, 0);
    const double b = sys.b(0, 0);
    const double r = cost.r(0, 0);
    // J(v) = s*x^2 + r v^2 + p (acl x + b v)^2 + traces.
    CHECK(qp.h(0, 0) == doctest::Approx(2.0 * (r + b * p * b)).epsilon(1e-12));
    const double acl = sys.closed_loop()(0, 0);
    CHECK(qp.g(0) == doctest::Approx(2.0 * b * p * acl * prob.x(0)).epsilon(1e-12));
    const double s = (cost.q + sys.k.transpose() * cost.r * sys.k)(0, 0);
    const double expected_offset =
        s * prob.x(0) * prob.x(0) + p * acl * acl * prob.x(0) * prob.x(0) +
        p * sys.sigma_w(0, 0);
    CHECK(qp.offset == doctest::Approx(expected_offset).epsilon(1e-12));

    // The terminal equality pins v: acl z + b v = 0.
    CHECK(qp.a_eq.rows() == 1);
    const auto sol = solve_qp(qp);
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.v(0) == doctest::Approx(-acl * prob.z(0) / b).epsilon(1e-12));
}

TEST_CASE("origin is optimal with zero state and nominal") {
    Fixture f;
    const auto prob = f.problem(Vec::Zero(2), Vec::Zero(2), 8);
    const CondensedQP qp = condense(prob);
    const auto sol = solve_qp(qp);
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.v.lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(sol.objective == doctest::Approx(qp.offset).epsilon(1e-12));
}

TEST_CASE("converter problem at the canonical start is feasible") {
    Fixture f;
    Vec x0(2);
    x0 << 1.8, 1.5;
    const auto prob = f.problem(x0, x0, 10);
    const auto sol = solve_qp(condense(prob));
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.v.allFinite());
}

TEST_CASE("direct cost evaluation matches the condensed objective") {
    Fixture f;
    RngStream rng(51, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n_steps = 1 + rng.next_u64() % 8;
        Vec x = rng.normal_vector(2);
        Vec z = rng.normal_vector(2);
        for (bool exact : {false, true}) {
            auto prob = f.problem(x, z, n_steps, trial % 3);
            prob.exact_cost = exact;
            const CondensedQP qp = condense(prob);
            const Vec v = rng.normal_vector(qp.dim());
            const double direct = evaluate_open_loop_cost(prob, v);
            const double condensed = 0.5 * v.dot(qp.h * v) + qp.g.dot(v) + qp.offset;
            CHECK(direct == doctest::Approx(condensed).epsilon(1e-9));
        }
    }
}

TEST_CASE("objective is invariant to covariance bookkeeping") {
    // Same problem, different sigma_w: minimizers coincide (trace terms are
    // v-independent) while offsets differ.
    Fixture f;
    LinearStochasticSystem noisier = f.sys;
    noisier.sigma_w = 0.5 * Mat::Identity(2, 2);
    Vec x0(2);
    x0 << 1.0, -0.5;

    auto prob1 = f.problem(x0, x0, 6);
    OpenLoopProblem prob2 = prob1;
    prob2.sys = &noisier;

    const CondensedQP qp1 = condense(prob1);
    const CondensedQP qp2 = condense(prob2);
    CHECK((qp1.h - qp2.h).norm() <= 1e-12);
    CHECK((qp1.g - qp2.g).norm() <= 1e-12);
    CHECK(qp1.offset < qp2.offset);
    const auto s1 = solve_qp(qp1);
    const auto s2 = solve_qp(qp2);
    CHECK((s1.v - s2.v).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("input box rows restrict the correction") {
    Fixture f;
    InputBox box;
    box.lower = Vec::Constant(1, -0.05);
    box.upper = Vec::Constant(1, 0.05);
    f.cons.v_box = box;
    Vec x0(2);
    x0 << 0.5, 0.2;
    const auto prob = f.problem(x0, x0, 12);
    const auto sol = solve_qp(condense(prob));
    // Steering z(N) to zero within the box may or may not be possible; if
    // optimal, every correction respects the box.
    if (sol.status == QpStatus::Optimal) {
        CHECK(sol.v.maxCoeff() <= 0.05 + 1e-9);
        CHECK(sol.v.minCoeff() >= -0.05 - 1e-9);
    }
}

TEST_CASE("shift feasibility: the tail of a solution remains admissible") {
    Fixture f(60);
    RngStream rng(53, 0);
    const std::size_t n_steps = 8;
    const Eigen::Index l = 1;

    int verified = 0;
    for (int trial = 0; trial < 15; ++trial) {
        Vec x = 0.8 * rng.normal_vector(2);
        Vec z = x;
        const std::size_t offset = trial % 4;
        const auto prob = f.problem(x, z, n_steps, offset);
        const auto sol = solve_qp(condense(prob));
        if (sol.status != QpStatus::Optimal) continue;

        // Successor nominal state and shifted candidate (v_1..v_{N-1}, 0).
        const Vec z_next = f.sys.closed_loop() * z + f.sys.b * sol.v.head(l) + f.sys.mu_w;
        Vec cand = Vec::Zero(sol.v.size());
        cand.head((n_steps - 1) * l) = sol.v.tail((n_steps - 1) * l);

        const Vec x_any = rng.normal_vector(2);  // feasibility must not depend on x
        const auto next = f.problem(x_any, z_next, n_steps, offset + 1);
        const CondensedQP qp = condense(next);
        if (qp.a_in.rows() > 0) {
            CHECK((qp.a_in * cand - qp.b_in).maxCoeff() <= 1e-8);
        }
        CHECK((qp.a_eq * cand - qp.b_eq).lpNorm<Eigen::Infinity>() <= 1e-8);
        ++verified;
    }
    CHECK(verified >= 10);
}

TEST_CASE("rejects malformed problems") {
    Fixture f;
    auto prob = f.problem(Vec::Zero(2), Vec::Zero(2), 0);
    CHECK_THROWS_AS(condense(prob), ConfigError);

    auto bad = f.problem(Vec::Zero(3), Vec::Zero(2), 5);
    CHECK_THROWS_AS(condense(bad), DimensionMismatch);
}
