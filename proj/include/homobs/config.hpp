#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "homobs/sim.hpp"
#include "homobs/toml.hpp"

namespace homobs::config {

struct ConfigError : Error {
    using Error::Error;
};

struct ObserverParams {
    design::ObserverKind kind = design::ObserverKind::Filtering;
    double nu = 0.0;
    double rho = 0.0;
    double gamma = 0.0;
};

/// Everything a run file can describe: the plant, the observer parameters and
/// the simulation scenario. Commands consume the parts they need.
struct RunConfig {
    std::optional<design::Plant> plant;
    std::optional<ObserverParams> observer;
    std::optional<sim::SimConfig> simulation;
    std::optional<Matrix> luenberger;
    double prescribed_xi0 = 1.0;
    std::string scenario_tag;
    std::string output_dir;
};

namespace detail {

inline void reject_unknown(const toml::Table& t, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (const auto& [key, value] : t)
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Matrix matrix_from_value(const toml::Value& v, const std::string& where) {
    if (v.is_string()) {
        // path to a JSON file holding a nested array
        const std::string text = slurp(v.string());
        return lmi::matrix_from_json(nlohmann::json::parse(text));
    }
    if (!v.is_array() || v.array().empty())
        throw ConfigError(where + ": expected a matrix (nested array) or a file path");
    const auto& rows = v.array();
    if (rows[0].is_array()) {
        const std::size_t cols = rows[0].array().size();
        Matrix m(rows.size(), cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].is_array() || rows[i].array().size() != cols)
                throw ConfigError(where + ": ragged matrix rows");
            for (std::size_t j = 0; j < cols; ++j) {
                if (!rows[i].array()[j].is_number())
                    throw ConfigError(where + ": matrix entries must be numbers");
                m(i, j) = rows[i].array()[j].number();
            }
        }
        return m;
    }
    Matrix m(rows.size(), 1);  // flat array becomes a column
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_number()) throw ConfigError(where + ": matrix entries must be numbers");
        m(i, 0) = rows[i].number();
    }
    return m;
}

inline Vector vector_from_value(const toml::Value& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    Vector out(v.array().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!v.array()[i].is_number()) throw ConfigError(where + ": entries must be numbers");
        out[i] = v.array()[i].number();
    }
    return out;
}

inline double number_at(const toml::Table& t, const std::string& key, const std::string& where) {
    auto it = t.find(key);
    if (it == t.end() || !it->second.is_number())
        throw ConfigError(where + ": missing numeric key '" + key + "'");
    return it->second.number();
}

inline design::Plant parse_plant(const toml::Table& t) {
    reject_unknown(t, {"A", "B", "C", "E", "q_bound"}, "[plant]");
    design::Plant p;
    auto need = [&](const char* key) {
        auto it = t.find(key);
        if (it == t.end()) throw ConfigError(std::string("[plant]: missing '") + key + "'");
        return matrix_from_value(it->second, std::string("[plant].") + key);
    };
    p.A = need("A");
    p.B = need("B");
    p.C = need("C");
    if (auto it = t.find("E"); it != t.end()) p.E = matrix_from_value(it->second, "[plant].E");
    if (auto it = t.find("q_bound"); it != t.end()) {
        if (!it->second.is_number()) throw ConfigError("[plant].q_bound must be a number");
        p.q_bound = it->second.number();
    }
    p.validate();
    return p;
}

inline ObserverParams parse_observer(const toml::Table& t) {
    reject_unknown(t, {"kind", "nu", "rho", "gamma"}, "[observer]");
    ObserverParams o;
    auto it = t.find("kind");
    if (it == t.end() || !it->second.is_string())
        throw ConfigError("[observer]: missing string key 'kind'");
    if (it->second.string() == "filtering")
        o.kind = design::ObserverKind::Filtering;
    else if (it->second.string() == "prescribed_time")
        o.kind = design::ObserverKind::PrescribedTime;
    else
        throw ConfigError("[observer].kind must be 'filtering' or 'prescribed_time'");
    o.nu = number_at(t, "nu", "[observer]");
    o.rho = number_at(t, "rho", "[observer]");
    if (o.kind == design::ObserverKind::Filtering)
        o.gamma = number_at(t, "gamma", "[observer]");
    else if (t.count("gamma"))
        o.gamma = number_at(t, "gamma", "[observer]");
    return o;
}

inline sim::SimConfig parse_simulation(const toml::Table& t, double& prescribed_xi0,
                                       std::optional<Matrix>& luenberger) {
    reject_unknown(t,
                   {"dt", "t_end", "x0", "z0", "psi0", "xi0", "feedback_gain", "method", "seed",
                    "sigma_floor", "perturbation", "noise", "luenberger", "prescribed_xi0"},
                   "[simulation]");
    sim::SimConfig c;
    c.dt = number_at(t, "dt", "[simulation]");
    c.t_end = number_at(t, "t_end", "[simulation]");
    auto it = t.find("x0");
    if (it == t.end()) throw ConfigError("[simulation]: missing 'x0'");
    c.x0 = vector_from_value(it->second, "[simulation].x0");
    if (auto i2 = t.find("z0"); i2 != t.end())
        c.z0 = vector_from_value(i2->second, "[simulation].z0");
    if (auto i2 = t.find("psi0"); i2 != t.end())
        c.psi0 = vector_from_value(i2->second, "[simulation].psi0");
    if (t.count("xi0")) c.xi0 = number_at(t, "xi0", "[simulation]");
    if (auto i2 = t.find("feedback_gain"); i2 != t.end())
        c.feedback_gain = matrix_from_value(i2->second, "[simulation].feedback_gain");
    if (auto i2 = t.find("method"); i2 != t.end()) {
        if (!i2->second.is_string()) throw ConfigError("[simulation].method must be a string");
        if (i2->second.string() == "euler")
            c.method = sim::Method::Euler;
        else if (i2->second.string() == "rk4")
            c.method = sim::Method::Rk4;
        else
            throw ConfigError("[simulation].method must be 'euler' or 'rk4'");
    }
    if (auto i2 = t.find("seed"); i2 != t.end()) {
        if (!i2->second.is_integer() || i2->second.integer() < 0)
            throw ConfigError("[simulation].seed must be a nonnegative integer");
        c.seed = static_cast<std::uint64_t>(i2->second.integer());
    }
    if (t.count("sigma_floor")) {
        c.sigma_floor = number_at(t, "sigma_floor", "[simulation]");
        if (!(c.sigma_floor > 0.0)) throw ConfigError("[simulation].sigma_floor must be positive");
    }
    if (auto i2 = t.find("perturbation"); i2 != t.end()) {
        if (!i2->second.is_table()) throw ConfigError("[simulation.perturbation] must be a table");
        const auto& pt = i2->second.table();
        reject_unknown(pt, {"type", "amplitude", "angular_frequency", "through", "samples"},
                       "[simulation.perturbation]");
        auto ty = pt.find("type");
        if (ty == pt.end() || !ty->second.is_string())
            throw ConfigError("[simulation.perturbation]: missing string 'type'");
        if (ty->second.string() == "none") {
            c.perturbation.kind = sim::Perturbation::Kind::None;
        } else if (ty->second.string() == "sinusoid") {
            c.perturbation.kind = sim::Perturbation::Kind::Sinusoid;
            c.perturbation.amplitude = number_at(pt, "amplitude", "[simulation.perturbation]");
            c.perturbation.angular_frequency =
                number_at(pt, "angular_frequency", "[simulation.perturbation]");
        } else if (ty->second.string() == "custom") {
            c.perturbation.kind = sim::Perturbation::Kind::Custom;
            auto sm = pt.find("samples");
            if (sm == pt.end() || !sm->second.is_array())
                throw ConfigError("[simulation.perturbation]: custom type needs 'samples'");
            for (const auto& s : sm->second.array()) {
                if (!s.is_number())
                    throw ConfigError("[simulation.perturbation].samples must be numbers");
                c.perturbation.samples.push_back(s.number());
            }
        } else {
            throw ConfigError("[simulation.perturbation].type must be none|sinusoid|custom");
        }
        if (auto th = pt.find("through"); th != pt.end()) {
            if (!th->second.is_string() ||
                (th->second.string() != "E" && th->second.string() != "B"))
                throw ConfigError("[simulation.perturbation].through must be 'E' or 'B'");
            c.perturbation.through_E = th->second.string() == "E";
        }
    }
    if (auto i2 = t.find("noise"); i2 != t.end()) {
        if (!i2->second.is_table()) throw ConfigError("[simulation.noise] must be a table");
        const auto& nt = i2->second.table();
        reject_unknown(nt, {"type", "magnitude"}, "[simulation.noise]");
        auto ty = nt.find("type");
        if (ty == nt.end() || !ty->second.is_string())
            throw ConfigError("[simulation.noise]: missing string 'type'");
        if (ty->second.string() == "none") {
            c.noise.kind = sim::Noise::Kind::None;
        } else if (ty->second.string() == "uniform") {
            c.noise.kind = sim::Noise::Kind::Uniform;
            c.noise.magnitude = number_at(nt, "magnitude", "[simulation.noise]");
        } else {
            throw ConfigError("[simulation.noise].type must be none|uniform");
        }
    }
    if (auto i2 = t.find("luenberger"); i2 != t.end()) {
        if (!i2->second.is_table()) throw ConfigError("[simulation.luenberger] must be a table");
        const auto& lt = i2->second.table();
        reject_unknown(lt, {"L"}, "[simulation.luenberger]");
        auto lm = lt.find("L");
        if (lm == lt.end()) throw ConfigError("[simulation.luenberger]: missing 'L'");
        luenberger = matrix_from_value(lm->second, "[simulation.luenberger].L");
    }
    if (t.count("prescribed_xi0"))
        prescribed_xi0 = number_at(t, "prescribed_xi0", "[simulation]");
    return c;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    toml::Table root;
    try {
        root = toml::parse(text);
    } catch (const toml::ParseError& e) {
        throw ConfigError(e.what());
    }
    detail::reject_unknown(root, {"plant", "observer", "simulation", "scenario", "output_dir"},
                           "top level");
    RunConfig rc;
    if (auto it = root.find("scenario"); it != root.end()) {
        if (!it->second.is_string()) throw ConfigError("'scenario' must be a string");
        rc.scenario_tag = it->second.string();
    }
    if (auto it = root.find("output_dir"); it != root.end()) {
        if (!it->second.is_string()) throw ConfigError("'output_dir' must be a string");
        rc.output_dir = it->second.string();
    }
    if (auto it = root.find("plant"); it != root.end()) {
        if (!it->second.is_table()) throw ConfigError("[plant] must be a table");
        rc.plant = detail::parse_plant(it->second.table());
    }
    if (auto it = root.find("observer"); it != root.end()) {
        if (!it->second.is_table()) throw ConfigError("[observer] must be a table");
        rc.observer = detail::parse_observer(it->second.table());
    }
    if (auto it = root.find("simulation"); it != root.end()) {
        if (!it->second.is_table()) throw ConfigError("[simulation] must be a table");
        rc.simulation =
            detail::parse_simulation(it->second.table(), rc.prescribed_xi0, rc.luenberger);
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    return parse_run_config(detail::slurp(path));
}

/// Tolerance overrides from a flat TOML file.
inline Tolerances parse_tolerances(const std::string& text) {
    toml::Table root;
    try {
        root = toml::parse(text);
    } catch (const toml::ParseError& e) {
        throw ConfigError(e.what());
    }
    detail::reject_unknown(root,
                           {"residual", "symmetry", "pd_margin", "condition_limit", "rank_rel",
                            "hom_norm_residual"},
                           "tolerances");
    Tolerances t;
    auto grab = [&](const char* key, double& slot) {
        if (auto it = root.find(key); it != root.end()) {
            if (!it->second.is_number()) throw ConfigError(std::string(key) + " must be a number");
            slot = it->second.number();
        }
    };
    grab("residual", t.residual);
    grab("symmetry", t.symmetry);
    grab("pd_margin", t.pd_margin);
    grab("condition_limit", t.condition_limit);
    grab("rank_rel", t.rank_rel);
    grab("hom_norm_residual", t.hom_norm_residual);
    return t;
}

}  // namespace homobs::config
