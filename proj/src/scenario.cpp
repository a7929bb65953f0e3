#include "riskmpc/scenario.hpp"

#include <fstream>

#include "riskmpc/errors.hpp"
#include "riskmpc/riccati.hpp"

namespace riskmpc {

namespace {

using nlohmann::json;

Mat json_to_mat(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ConfigError(where + ": expected an array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) {
            throw ConfigError(where + ": ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(i, c) = j[i][c].get<double>();
        }
    }
    return m;
}

Vec json_to_vec(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

const char* risk_kind_canonical(RiskKind kind) {
    switch (kind) {
        case RiskKind::Expectation: return "expectation";
        case RiskKind::VaR: return "var";
        case RiskKind::CVaR: return "cvar";
        case RiskKind::EVaR: return "evar";
    }
    return "?";
}

}  // namespace

RiskKind parse_risk_kind(const std::string& name) {
    if (name == "e" || name == "mean" || name == "expectation") return RiskKind::Expectation;
    if (name == "var") return RiskKind::VaR;
    if (name == "cvar") return RiskKind::CVaR;
    if (name == "evar") return RiskKind::EVaR;
    throw ConfigError("unknown risk measure '" + name + "' (expected e|var|cvar|evar)");
}

ScenarioConfig parse_scenario(const json& j) {
    ScenarioConfig cfg;
    try {
        if (!j.contains("version")) throw ConfigError("config: missing 'version'");
        cfg.version = j.at("version").get<int>();
        if (cfg.version != 1) throw ConfigError("config: unsupported version");

        const json& sys = j.at("system");
        cfg.a = json_to_mat(sys.at("A"), "system.A");
        cfg.b = json_to_mat(sys.at("B"), "system.B");
        cfg.mu_w = json_to_vec(sys.at("mu_w"), "system.mu_w");
        cfg.sigma_w = json_to_mat(sys.at("sigma_w"), "system.sigma_w");
        if (sys.at("K").is_string()) {
            if (sys.at("K").get<std::string>() != "riccati") {
                throw ConfigError("system.K: expected a matrix or \"riccati\"");
            }
            cfg.riccati_gain = true;
        } else {
            cfg.riccati_gain = false;
            cfg.k = json_to_mat(sys.at("K"), "system.K");
        }
        cfg.gaussian_noise = sys.value("gaussian", true);

        const json& cost = j.at("cost");
        cfg.cost.q = json_to_mat(cost.at("Q"), "cost.Q");
        cfg.cost.r = json_to_mat(cost.at("R"), "cost.R");

        const json& cons = j.at("constraints");
        cfg.constraints.spec.kind = parse_risk_kind(cons.at("risk").at("kind").get<std::string>());
        cfg.constraints.spec.alpha = cons.at("risk").at("alpha").get<double>();
        cfg.constraints.spec.validate();
        for (const json& row : cons.value("state", json::array())) {
            cfg.constraints.state_rows.push_back(
                {json_to_vec(row.at("c"), "constraints.state.c"), row.at("p").get<double>()});
        }
        for (const json& row : cons.value("input", json::array())) {
            cfg.constraints.input_rows.push_back(
                {json_to_vec(row.at("d"), "constraints.input.d"), row.at("q").get<double>()});
        }
        if (cons.contains("v_box") && !cons.at("v_box").is_null()) {
            InputBox box;
            box.lower = json_to_vec(cons.at("v_box").at("lower"), "constraints.v_box.lower");
            box.upper = json_to_vec(cons.at("v_box").at("upper"), "constraints.v_box.upper");
            cfg.constraints.v_box = box;
        }

        cfg.horizon = j.at("horizon").get<std::size_t>();
        if (cfg.horizon == 0) throw ConfigError("horizon: must be >= 1");

        const json& tight = j.at("tightening");
        const std::string mode = tight.at("mode").get<std::string>();
        if (mode == "gaussian") cfg.tightening_mode = TighteningMode::GaussianExact;
        else if (mode == "mc") cfg.tightening_mode = TighteningMode::MonteCarlo;
        else if (mode == "user") cfg.tightening_mode = TighteningMode::UserBound;
        else throw ConfigError("tightening.mode: expected gaussian|mc|user");
        cfg.tightening_paths = tight.value("paths", std::size_t{100000});
        cfg.tightening_seed = tight.value("seed", std::uint64_t{1});

        const json& sim = j.at("sim");
        cfg.sim.paths = sim.at("paths").get<std::size_t>();
        cfg.sim.steps = sim.at("steps").get<std::size_t>();
        cfg.sim.seed = sim.at("seed").get<std::uint64_t>();
        cfg.sim.controller_horizon = cfg.horizon;
        if (sim.contains("x0")) {
            cfg.sim.init.mean = json_to_vec(sim.at("x0"), "sim.x0");
            cfg.sim.init.sigma = Mat::Zero(cfg.sim.init.mean.size(), cfg.sim.init.mean.size());
        } else {
            cfg.sim.init.mean = json_to_vec(sim.at("init").at("mean"), "sim.init.mean");
            cfg.sim.init.sigma = json_to_mat(sim.at("init").at("sigma"), "sim.init.sigma");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    const Eigen::Index n = cfg.a.rows();
    const Eigen::Index l = cfg.b.cols();
    if (cfg.a.cols() != n || cfg.b.rows() != n || cfg.mu_w.size() != n ||
        cfg.sigma_w.rows() != n || cfg.sigma_w.cols() != n) {
        throw ConfigError("config: system dimensions inconsistent");
    }
    cfg.cost.validate(n, l);
    cfg.constraints.validate(n, l);
    if (cfg.sim.init.mean.size() != n) throw ConfigError("config: sim initial state dimension");
    return cfg;
}

json scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["system"]["A"] = mat_to_json(cfg.a);
    j["system"]["B"] = mat_to_json(cfg.b);
    j["system"]["mu_w"] = vec_to_json(cfg.mu_w);
    j["system"]["sigma_w"] = mat_to_json(cfg.sigma_w);
    if (cfg.riccati_gain) j["system"]["K"] = "riccati";
    else j["system"]["K"] = mat_to_json(cfg.k);
    j["system"]["gaussian"] = cfg.gaussian_noise;
    j["cost"]["Q"] = mat_to_json(cfg.cost.q);
    j["cost"]["R"] = mat_to_json(cfg.cost.r);
    j["constraints"]["risk"]["kind"] = risk_kind_canonical(cfg.constraints.spec.kind);
    j["constraints"]["risk"]["alpha"] = cfg.constraints.spec.alpha;
    j["constraints"]["state"] = json::array();
    for (const auto& row : cfg.constraints.state_rows) {
        j["constraints"]["state"].push_back({{"c", vec_to_json(row.c)}, {"p", row.p}});
    }
    j["constraints"]["input"] = json::array();
    for (const auto& row : cfg.constraints.input_rows) {
        j["constraints"]["input"].push_back({{"d", vec_to_json(row.d)}, {"q", row.q}});
    }
    if (cfg.constraints.v_box) {
        j["constraints"]["v_box"]["lower"] = vec_to_json(cfg.constraints.v_box->lower);
        j["constraints"]["v_box"]["upper"] = vec_to_json(cfg.constraints.v_box->upper);
    } else {
        j["constraints"]["v_box"] = nullptr;
    }
    j["horizon"] = cfg.horizon;
    switch (cfg.tightening_mode) {
        case TighteningMode::GaussianExact: j["tightening"]["mode"] = "gaussian"; break;
        case TighteningMode::MonteCarlo: j["tightening"]["mode"] = "mc"; break;
        case TighteningMode::UserBound: j["tightening"]["mode"] = "user"; break;
    }
    j["tightening"]["paths"] = cfg.tightening_paths;
    j["tightening"]["seed"] = cfg.tightening_seed;
    j["sim"]["paths"] = cfg.sim.paths;
    j["sim"]["steps"] = cfg.sim.steps;
    j["sim"]["seed"] = cfg.sim.seed;
    if (cfg.sim.init.deterministic()) {
        j["sim"]["x0"] = vec_to_json(cfg.sim.init.mean);
    } else {
        j["sim"]["init"]["mean"] = vec_to_json(cfg.sim.init.mean);
        j["sim"]["init"]["sigma"] = mat_to_json(cfg.sim.init.sigma);
    }
    return j;
}

const char* dcdc_scenario_json() {
    return R"JSON({
  "version": 1,
  "system": {
    "A": [[1.0, 0.0075], [-0.143, 0.996]],
    "B": [[4.798], [0.115]],
    "mu_w": [0.0, 0.0],
    "sigma_w": [[0.1, 0.0], [0.0, 0.1]],
    "K": "riccati",
    "gaussian": true
  },
  "cost": {
    "Q": [[1.0, 0.0], [0.0, 10.0]],
    "R": [[5.0]]
  },
  "constraints": {
    "risk": { "kind": "cvar", "alpha": 0.4 },
    "state": [ { "c": [1.0, 0.0], "p": 2.0 } ],
    "input": [],
    "v_box": null
  },
  "horizon": 10,
  "tightening": { "mode": "gaussian", "paths": 1000000, "seed": 1 },
  "sim": { "paths": 15000, "steps": 50, "seed": 42, "x0": [1.8, 1.5] }
})JSON";
}

ScenarioConfig load_scenario(const std::string& name_or_path) {
    if (name_or_path == "dcdc") {
        return parse_scenario(nlohmann::json::parse(dcdc_scenario_json()));
    }
    std::ifstream is(name_or_path);
    if (!is) throw ConfigError("cannot open scenario file " + name_or_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return parse_scenario(j);
}

LinearStochasticSystem build_system(const ScenarioConfig& cfg) {
    LinearStochasticSystem sys;
    sys.a = cfg.a;
    sys.b = cfg.b;
    sys.mu_w = cfg.mu_w;
    sys.sigma_w = cfg.sigma_w;
    if (cfg.riccati_gain) {
        sys.k = solve_dare(cfg.a, cfg.b, cfg.cost.q, cfg.cost.r).gain;
    } else {
        sys.k = cfg.k;
    }
    sys.validate();
    return sys;
}

}  // namespace riskmpc
