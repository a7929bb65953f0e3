#include <doctest.h>

#include <cmath>

#include "riskmpc/errors.hpp"
#include "riskmpc/riccati.hpp"
#include "riskmpc/scenario.hpp"

using namespace riskmpc;
using nlohmann::json;

TEST_CASE("built-in converter scenario parses and resolves its gain") {
    const ScenarioConfig cfg = load_scenario("dcdc");
    CHECK(cfg.a.rows() == 2);
    CHECK(cfg.b.cols() == 1);
    CHECK(cfg.constraints.spec.kind == RiskKind::CVaR);
    CHECK(cfg.constraints.spec.alpha == 0.4);
    CHECK(cfg.constraints.state_rows.size() == 1);
    CHECK(cfg.constraints.state_rows[0].p == 2.0);
    CHECK(cfg.sim.paths == 15000);
    CHECK(cfg.sim.steps == 50);
    CHECK(cfg.horizon == 10);
    CHECK(cfg.sim.init.deterministic());

    const LinearStochasticSystem sys = build_system(cfg);
    const Mat kstar = solve_dare(cfg.a, cfg.b, cfg.cost.q, cfg.cost.r).gain;
    CHECK((sys.k - kstar).norm() <= 1e-14);
}

TEST_CASE("config round trip is stable") {
    const ScenarioConfig cfg = load_scenario("dcdc");
    const json first = scenario_to_json(cfg);
    const ScenarioConfig reparsed = parse_scenario(first);
    const json second = scenario_to_json(reparsed);
    CHECK(first.dump() == second.dump());
}

TEST_CASE("round trip preserves explicit gains and random initial laws") {
    ScenarioConfig cfg = load_scenario("dcdc");
    cfg.riccati_gain = false;
    cfg.k.resize(1, 2);
    cfg.k << -0.2, 0.3;
    cfg.sim.init.sigma = 0.05 * Mat::Identity(2, 2);
    const ScenarioConfig back = parse_scenario(scenario_to_json(cfg));
    CHECK_FALSE(back.riccati_gain);
    CHECK((back.k - cfg.k).norm() == 0.0);
    CHECK_FALSE(back.sim.init.deterministic());
    CHECK(scenario_to_json(back).dump() == scenario_to_json(cfg).dump());
}

TEST_CASE("scalar toy config synthesizes the golden Riccati value") {
    const char* toy = R"({
      "version": 1,
      "system": {
        "A": [[1.0]], "B": [[1.0]],
        "mu_w": [0.0], "sigma_w": [[1.0]],
        "K": "riccati"
      },
      "cost": { "Q": [[1.0]], "R": [[1.0]] },
      "constraints": { "risk": { "kind": "cvar", "alpha": 0.4 }, "state": [], "input": [] },
      "horizon": 5,
      "tightening": { "mode": "gaussian", "paths": 1000, "seed": 1 },
      "sim": { "paths": 10, "steps": 5, "seed": 1, "x0": [0.0] }
    })";
    const ScenarioConfig cfg = parse_scenario(json::parse(toy));
    const LinearStochasticSystem sys = build_system(cfg);
    const SynthesisResult synth = synthesize(sys, cfg.cost);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    CHECK(synth.pstar(0, 0) == doctest::Approx(golden).epsilon(1e-12));
    CHECK(synth.stationary_cost == doctest::Approx(golden).epsilon(1e-11));
    CHECK(std::abs(synth.c_f) <= 1e-9);
}

TEST_CASE("malformed configs are rejected with ConfigError") {
    json j = json::parse(dcdc_scenario_json());

    json missing = j;
    missing.erase("version");
    CHECK_THROWS_AS(parse_scenario(missing), ConfigError);

    json ragged = j;
    ragged["system"]["A"] = json::array({json::array({1.0, 0.0}), json::array({0.0})});
    CHECK_THROWS_AS(parse_scenario(ragged), ConfigError);

    json bad_dim = j;
    bad_dim["system"]["B"] = json::array({json::array({1.0})});
    CHECK_THROWS_AS(parse_scenario(bad_dim), ConfigError);

    json bad_alpha = j;
    bad_alpha["constraints"]["risk"]["alpha"] = 1.5;
    CHECK_THROWS_AS(parse_scenario(bad_alpha), ConfigError);

    json bad_kind = j;
    bad_kind["constraints"]["risk"]["kind"] = "cvar99";
    CHECK_THROWS_AS(parse_scenario(bad_kind), ConfigError);

    CHECK_THROWS_AS(load_scenario("/nonexistent/path.json"), ConfigError);
}

TEST_CASE("risk kind aliases") {
    CHECK(parse_risk_kind("e") == RiskKind::Expectation);
    CHECK(parse_risk_kind("mean") == RiskKind::Expectation);
    CHECK(parse_risk_kind("expectation") == RiskKind::Expectation);
    CHECK(parse_risk_kind("var") == RiskKind::VaR);
    CHECK(parse_risk_kind("cvar") == RiskKind::CVaR);
    CHECK(parse_risk_kind("evar") == RiskKind::EVaR);
    CHECK_THROWS_AS(parse_risk_kind("tvar"), ConfigError);
}
