#pragma once

#include <string>

#include <json.hpp>

#include "riskmpc/model.hpp"
#include "riskmpc/simharness.hpp"
#include "riskmpc/tightening.hpp"

namespace riskmpc {

// A complete scenario: plant, cost, risk constraints, horizon, tightening
// options and simulation defaults. Mirrors the versioned JSON config
// schema one-to-one.
struct ScenarioConfig {
    int version = 1;
    Mat a;
    Mat b;
    Vec mu_w;
    Mat sigma_w;
    bool riccati_gain = true;  // K = "riccati": use K* from the cost
    Mat k;                     // explicit gain when riccati_gain is false
    QuadCost cost;
    RiskConstraints constraints;
    std::size_t horizon = 10;
    TighteningMode tightening_mode = TighteningMode::GaussianExact;
    std::size_t tightening_paths = 100000;
    std::uint64_t tightening_seed = 1;
    bool gaussian_noise = true;
    SimConfig sim;
};

ScenarioConfig parse_scenario(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

// Loads a scenario by name ("dcdc") or from a JSON file path.
ScenarioConfig load_scenario(const std::string& name_or_path);

// The built-in DC-DC converter regulation scenario (golden config).
const char* dcdc_scenario_json();

// Resolves the plant, substituting K* for a "riccati" gain request.
LinearStochasticSystem build_system(const ScenarioConfig& cfg);

RiskKind parse_risk_kind(const std::string& name);

}  // namespace riskmpc
