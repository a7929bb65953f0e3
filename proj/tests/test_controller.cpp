#include <doctest.h>

#include <cmath>

#include "riskmpc/controller.hpp"
#include "riskmpc/errors.hpp"
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
    ControllerConfig cfg;

    explicit Fixture(double noise = 0.1, std::size_t sched_horizon = 80) {
        sys.a.resize(2, 2);
        sys.a << 1.0, 0.0075, -0.143, 0.996;
        sys.b.resize(2, 1);
        sys.b << 4.798, 0.115;
        sys.mu_w = Vec::Zero(2);
        sys.sigma_w = noise * Mat::Identity(2, 2);
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
        schedule = gaussian_schedule(ep, cons, sys.k, sched_horizon);
        cfg.horizon = 10;
    }
};

}  // namespace

TEST_CASE("noiseless loop tracks the nominal trajectory exactly") {
    Fixture f(0.0);
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    Vec x(2);
    x << 1.8, 1.5;
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    for (int j = 0; j < 60; ++j) {
        const StepResult r = ctrl.step(state, x);
        CHECK(r.qp_status == QpStatus::Optimal);
        CHECK((r.u - (f.sys.k * x + r.v0)).lpNorm<Eigen::Infinity>() == 0.0);
        x = f.sys.a * x + f.sys.b * r.u;  // no disturbance
        CHECK((x - state.z).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
    CHECK(x.lpNorm<Eigen::Infinity>() <= 1e-6);  // regulated to the origin
}

TEST_CASE("origin hold with zero initial state and no noise") {
    Fixture f(0.0);
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    Vec x = Vec::Zero(2);
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    for (int j = 0; j < 5; ++j) {
        const StepResult r = ctrl.step(state, x);
        CHECK(r.v0.lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK(r.u.lpNorm<Eigen::Infinity>() <= 1e-10);
        x = f.sys.a * x + f.sys.b * r.u;
    }
}

TEST_CASE("initial covariance must be dominated by the stationary one") {
    Fixture f;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    const Mat too_big = 2.0 * f.synth.sigma_e_s;
    CHECK_THROWS_AS(ctrl.init(Vec::Zero(2), Vec::Zero(2), too_big), InitCovTooLarge);
    CHECK_NOTHROW(ctrl.init(Vec::Zero(2), Vec::Zero(2), Mat(0.5 * f.synth.sigma_e_s)));
}

TEST_CASE("infeasible start is reported at init") {
    Fixture f;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    Vec far(2);
    far << 1e6, 0.0;  // nominal start far outside the constraint
    CHECK_THROWS_AS(ctrl.init(far, far, Mat::Zero(2, 2)), InitInfeasible);
}

TEST_CASE("first converter step is optimal and matches a cold solve") {
    Fixture f;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    Vec x0(2);
    x0 << 1.8, 1.5;
    ControllerState state = ctrl.init(x0, x0, Mat::Zero(2, 2));
    const StepResult r = ctrl.step(state, x0);
    CHECK(r.qp_status == QpStatus::Optimal);
    CHECK(r.u.allFinite());

    const CondensedQP qp = ctrl.condenser().condense(x0, x0, f.schedule, 0);
    const auto cold = solve_qp(qp);
    CHECK((cold.v.head(1) - r.v0).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(r.open_loop_objective == doctest::Approx(cold.objective).epsilon(1e-9));
}

TEST_CASE("splitting identity and recursive feasibility under noise") {
    Fixture f;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    const GaussianSampler noise(f.sys.mu_w, f.sys.sigma_w);
    const Mat acl = f.sys.closed_loop();

    RngStream rng(61, 5);
    Vec x(2);
    x << 1.8, 1.5;
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    Vec err = x - state.z;

    double worst_split = 0.0;
    for (int j = 0; j < 60; ++j) {
        const StepResult r = ctrl.step(state, x);
        REQUIRE(r.qp_status == QpStatus::Optimal);
        const Vec w = noise.draw(rng);
        x = f.sys.a * x + f.sys.b * r.u + w;
        err = acl * err + (w - f.sys.mu_w);
        worst_split = std::max(worst_split, (x - state.z - err).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst_split <= 1e-9);
}

TEST_CASE("warm-started steps agree with cold solves along a noisy run") {
    Fixture f;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    const GaussianSampler noise(f.sys.mu_w, f.sys.sigma_w);

    RngStream rng(67, 1);
    Vec x(2);
    x << 1.8, 1.5;
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    for (int j = 0; j < 25; ++j) {
        const CondensedQP qp = ctrl.condenser().condense(x, state.z, f.schedule, state.step);
        const auto cold = solve_qp(qp);
        const StepResult r = ctrl.step(state, x);
        REQUIRE(cold.status == QpStatus::Optimal);
        CHECK((cold.v.head(1) - r.v0).lpNorm<Eigen::Infinity>() <= 1e-7);
        x = f.sys.a * x + f.sys.b * r.u + noise.draw(rng);
    }
}

TEST_CASE("sample-based stepping advances the bookkeeping ensemble") {
    Fixture f;
    ControllerConfig cfg = f.cfg;
    cfg.sample_ensemble = 64;
    cfg.ensemble_seed = 9;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, cfg);
    Vec x(2);
    x << 1.8, 1.5;
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    CHECK(state.ensemble.cols() == 64);
    const Mat before = state.ensemble;
    const StepResult r = ctrl.step_sample_based(state, x);
    CHECK(r.qp_status == QpStatus::Optimal);
    CHECK((state.ensemble - before).norm() > 0.0);

    // Identical seeds give identical ensembles.
    ControllerState s2 = ctrl.init(x, x, Mat::Zero(2, 2));
    ctrl.step_sample_based(s2, x);
    ControllerState s3 = ctrl.init(x, x, Mat::Zero(2, 2));
    ctrl.step_sample_based(s3, x);
    CHECK((s2.ensemble - s3.ensemble).norm() == 0.0);
}

TEST_CASE("fallback mode applies the pure feedback on infeasible problems") {
    Fixture f;
    ControllerConfig cfg = f.cfg;
    cfg.fallback_on_infeasible = true;
    const IndirectFeedbackController ctrl(f.sys, f.cost, f.cons, f.schedule, f.synth, cfg);
    Vec x(2);
    x << 1.8, 1.5;
    ControllerState state = ctrl.init(x, x, Mat::Zero(2, 2));
    state.z << 1e7, 0.0;  // corrupt the nominal state to force infeasibility
    state.have_warm = false;
    const StepResult r = ctrl.step(state, x);
    CHECK(r.qp_status != QpStatus::Optimal);
    CHECK((r.u - f.sys.k * x).lpNorm<Eigen::Infinity>() == 0.0);

    // Test mode (default) throws instead.
    const IndirectFeedbackController strict(f.sys, f.cost, f.cons, f.schedule, f.synth, f.cfg);
    ControllerState bad = strict.init(x, x, Mat::Zero(2, 2));
    bad.z << 1e7, 0.0;
    bad.have_warm = false;
    CHECK_THROWS_AS(strict.step(bad, x), QpInfeasible);
}
