#pragma once

#include "coulomb_mpc/simulation.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace coulomb_mpc {

class ConfigError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

namespace detail {

using json = nlohmann::json;

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline double as_number(const std::string& key, const json& v) {
    if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
    return v.get<double>();
}

inline int as_int(const std::string& key, const json& v) {
    if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    return v.get<int>();
}

inline bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) throw ConfigError("'" + key + "' must be true or false");
    return v.get<bool>();
}

/// Scalar broadcasts to `size` entries; arrays must have exactly `size`.
inline VectorXd as_vector(const std::string& key, const json& v, int size) {
    if (v.is_number()) return VectorXd::Constant(size, v.get<double>());
    if (!v.is_array()) throw ConfigError("'" + key + "' must be a number or an array");
    if (static_cast<int>(v.size()) != size)
        throw ConfigError("'" + key + "' must have " + std::to_string(size) + " entries, got " +
                          std::to_string(v.size()));
    VectorXd out(size);
    for (int i = 0; i < size; ++i) out(i) = as_number(key, v[static_cast<std::size_t>(i)]);
    return out;
}

/// Scalar -> s I, flat array -> diagonal, nested array -> full matrix.
inline MatrixXd as_matrix(const std::string& key, const json& v, int size) {
    if (v.is_number()) return v.get<double>() * MatrixXd::Identity(size, size);
    if (v.is_array() && !v.empty() && v[0].is_array()) {
        if (static_cast<int>(v.size()) != size) throw ConfigError("'" + key + "' must have " + std::to_string(size) + " rows");
        MatrixXd out(size, size);
        for (int r = 0; r < size; ++r) out.row(r) = as_vector(key, v[static_cast<std::size_t>(r)], size).transpose();
        return out;
    }
    return as_vector(key, v, size).asDiagonal();
}

}  // namespace detail

/**
 * @brief Reads a scenario from `key = value` text.
 *
 * Values are numbers, booleans, strings, or bracketed array literals
 * (`[1, 2, 3]`, `[[1, 0], [0, 1]]`). `#` starts a comment. Keys not given keep
 * the four-spacecraft defaults; for other spacecraft counts, `xi_des` and
 * `initial_state` are required. State bounds default to the desired state
 * plus/minus `state_margin` (10).
 */
inline ScenarioConfig parse_scenario(std::istream& in) {
    using detail::json;
    std::map<std::string, json> values;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string text = detail::trim(line.substr(eq + 1));
        if (key.empty() || text.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error&) {
            if (text.front() == '[' || text.front() == '{')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed array literal for '" + key + "'");
            value = text;  // bare string
        }
        if (!values.emplace(key, std::move(value)).second)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }

    static const std::set<std::string> known = {
        "num_spacecraft", "masses", "coulomb_constant", "min_separation", "xi_des", "initial_state",
        "state_margin", "state_min", "state_max", "charge_limit", "charge_min", "charge_max",
        "product_min", "product_max", "horizon", "Q", "R", "R_delta", "trace_penalty",
        "sample_period", "steps", "substeps", "saturation_limit", "max_consecutive_faults",
        "eps_abs", "eps_rel", "max_iters", "rho", "adaptive_rho", "warm_start", "output"};
    for (const auto& [key, _] : values)
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "'");

    const auto has = [&](const char* key) { return values.count(key) > 0; };
    const auto get = [&](const char* key) -> const json& { return values.at(key); };

    int ns = 4;
    if (has("num_spacecraft")) ns = detail::as_int("num_spacecraft", get("num_spacecraft"));
    if (ns < 2) throw ConfigError("'num_spacecraft' must be at least 2");
    ScenarioConfig cfg = four_craft_scenario();
    const int n = 2 * (ns - 1);
    const int m = pair_count(ns);
    if (ns != 4) {
        cfg.formation = FormationConfig::uniform(ns, 600.0, 0.1);
        VectorXd q_diag(n);
        q_diag << VectorXd::Ones(ns - 1), VectorXd::Constant(ns - 1, 400.0);
        cfg.mpc.Q = q_diag.asDiagonal();
        cfg.mpc.R = MatrixXd::Zero(m, m);
        cfg.mpc.R_delta = 1e8 * MatrixXd::Identity(m, m);
        if (!has("xi_des") || !has("initial_state"))
            throw ConfigError("'xi_des' and 'initial_state' are required when num_spacecraft != 4");
    }

    FormationConfig& f = cfg.formation;
    if (has("masses")) f.masses = detail::as_vector("masses", get("masses"), ns);
    if (has("coulomb_constant")) f.coulomb_constant = detail::as_number("coulomb_constant", get("coulomb_constant"));
    if (has("min_separation")) f.min_separation = detail::as_number("min_separation", get("min_separation"));
    if (has("charge_limit")) {
        const double limit = detail::as_number("charge_limit", get("charge_limit"));
        f.charge_min = VectorXd::Constant(ns, -limit);
        f.charge_max = VectorXd::Constant(ns, limit);
    }
    if (has("charge_min")) f.charge_min = detail::as_vector("charge_min", get("charge_min"), ns);
    if (has("charge_max")) f.charge_max = detail::as_vector("charge_max", get("charge_max"), ns);
    if (has("product_min") != has("product_max")) throw ConfigError("'product_min' and 'product_max' go together");
    if (has("product_min")) {
        f.product_min = detail::as_vector("product_min", get("product_min"), m);
        f.product_max = detail::as_vector("product_max", get("product_max"), m);
    }

    MpcParams& p = cfg.mpc;
    if (has("xi_des")) p.xi_des = detail::as_vector("xi_des", get("xi_des"), ns - 1);
    if (has("horizon")) p.horizon = detail::as_int("horizon", get("horizon"));
    if (has("Q")) p.Q = detail::as_matrix("Q", get("Q"), n);
    if (has("R")) p.R = detail::as_matrix("R", get("R"), m);
    if (has("R_delta")) p.R_delta = detail::as_matrix("R_delta", get("R_delta"), m);
    if (has("trace_penalty")) p.trace_penalty = detail::as_number("trace_penalty", get("trace_penalty"));

    const VectorXd margin = has("state_margin") ? detail::as_vector("state_margin", get("state_margin"), n)
                                                : VectorXd::Constant(n, 10.0);
    f.state_min = p.desired_state() - margin;
    f.state_max = p.desired_state() + margin;
    if (has("state_min")) f.state_min = detail::as_vector("state_min", get("state_min"), n);
    if (has("state_max")) f.state_max = detail::as_vector("state_max", get("state_max"), n);

    if (has("initial_state")) cfg.initial_state = detail::as_vector("initial_state", get("initial_state"), n);
    if (has("sample_period")) cfg.sample_period = detail::as_number("sample_period", get("sample_period"));
    if (has("steps")) cfg.steps = detail::as_int("steps", get("steps"));
    if (has("substeps")) cfg.substeps = detail::as_int("substeps", get("substeps"));
    if (has("saturation_limit")) cfg.saturation_limit = detail::as_number("saturation_limit", get("saturation_limit"));
    if (has("max_consecutive_faults"))
        cfg.max_consecutive_faults = detail::as_int("max_consecutive_faults", get("max_consecutive_faults"));

    SolverSettings& s = cfg.solver;
    if (has("eps_abs")) s.eps_abs = detail::as_number("eps_abs", get("eps_abs"));
    if (has("eps_rel")) s.eps_rel = detail::as_number("eps_rel", get("eps_rel"));
    if (has("max_iters")) s.max_iters = detail::as_int("max_iters", get("max_iters"));
    if (has("rho")) s.rho = detail::as_number("rho", get("rho"));
    if (has("adaptive_rho")) s.adaptive_rho = detail::as_bool("adaptive_rho", get("adaptive_rho"));
    if (has("warm_start")) s.warm_start = detail::as_bool("warm_start", get("warm_start"));

    if (has("output")) {
        if (!get("output").is_string()) throw ConfigError("'output' must be a path");
        cfg.output = get("output").get<std::string>();
    }

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const SingularityError& e) {
        throw ConfigError(std::string("initial state: ") + e.what());
    }
    return cfg;
}

inline ScenarioConfig parse_scenario_string(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_scenario(in);
}

}  // namespace coulomb_mpc
