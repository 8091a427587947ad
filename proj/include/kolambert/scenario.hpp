#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/lambert_solver.hpp"
#include "kolambert/ode.hpp"
#include "kolambert/orbital_elements.hpp"

namespace kolambert {

// ---------------------------------------------------------------------------
// Scenario configuration: a single key-value file with [sections], overridable
// by command-line flags. Every field has a default except r0, rf and tof.
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    GravityModel gravity;
    std::optional<Vector3d> r0;
    std::optional<Vector3d> rf;
    std::optional<double> tof;
    int revolutions = 0;
    bool prograde = true;

    std::optional<int> basis_order;  // default depends on the J2 flag
    std::optional<VectorXd> domain_lower;
    std::optional<VectorXd> domain_upper;
    double domain_inflation = 1.5;
    DomainFloors domain_floors;
    std::int64_t basis_cap = 20000;
    bool allow_large_model = false;

    SolverConfig solver;
    bool solver_tolerances_explicit = false;
    IntegratorConfig integrator;

    double scan_tof_min = 0.0;
    double scan_tof_max = 0.0;
    int scan_steps = 0;

    int stress_max_revolutions = 100;

    std::string output_directory = "out";

    int effective_order() const {
        if (basis_order) return *basis_order;
        return gravity.j2_enabled ? 3 : 1;
    }

    // Effective tolerances: exact models resolve to machine-level residuals,
    // truncated ones stall at their least-squares floor.
    SolverConfig effective_solver() const {
        SolverConfig cfg = solver;
        if (!solver_tolerances_explicit && gravity.j2_enabled && effective_order() >= 2) {
            cfg.lm_tolerance_position = 0.25;  // km
            cfg.lm_tolerance_time = 0.05;      // s
        }
        return cfg;
    }

    LambertProblem problem() const {
        if (!r0) throw UsageError("missing required field: problem.r0");
        if (!rf) throw UsageError("missing required field: problem.rf");
        if (!tof) throw UsageError("missing required field: problem.tof");
        LambertProblem p;
        p.r0 = *r0;
        p.rf = *rf;
        p.tof = *tof;
        p.revolutions = revolutions;
        p.gravity = gravity;
        p.prograde = prograde;
        return p;
    }

    DomainBox domain_box() const {
        if (domain_lower && domain_upper) return DomainBox(*domain_lower, *domain_upper);
        return auto_domain_box(problem(), domain_inflation, domain_floors);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "on" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "off" || value == "0" || value == "no") return false;
    throw UsageError("invalid boolean for " + key + ": " + value);
}

inline double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("invalid number for " + key + ": " + value);
    }
}

inline VectorXd parse_vector(const std::string& value, const std::string& key,
                             Eigen::Index expected) {
    std::istringstream in(value);
    std::vector<double> entries;
    double x = 0.0;
    while (in >> x) entries.push_back(x);
    if (expected >= 0 && static_cast<Eigen::Index>(entries.size()) != expected)
        throw UsageError("field " + key + " needs " + std::to_string(expected) + " numbers");
    VectorXd out(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) out[static_cast<Eigen::Index>(i)] = entries[i];
    return out;
}

}  // namespace detail

// Parses the declarative scenario file. Unknown keys are rejected so typos
// surface as usage errors rather than silently-ignored settings.
inline void apply_config_entry(ScenarioConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_vector;
    const std::string full = section.empty() ? key : section + "." + key;
    if (full == "gravity.mu") cfg.gravity.mu = parse_double(value, full);
    else if (full == "gravity.earth_radius") cfg.gravity.earth_radius = parse_double(value, full);
    else if (full == "gravity.j2") cfg.gravity.j2 = parse_double(value, full);
    else if (full == "gravity.j2_enabled") cfg.gravity.j2_enabled = parse_bool(value, full);
    else if (full == "problem.r0") cfg.r0 = Vector3d(parse_vector(value, full, 3));
    else if (full == "problem.rf") cfg.rf = Vector3d(parse_vector(value, full, 3));
    else if (full == "problem.tof") cfg.tof = parse_double(value, full);
    else if (full == "problem.revolutions") cfg.revolutions = static_cast<int>(parse_double(value, full));
    else if (full == "problem.prograde") cfg.prograde = parse_bool(value, full);
    else if (full == "basis.order") cfg.basis_order = static_cast<int>(parse_double(value, full));
    else if (full == "basis.domain_lower") cfg.domain_lower = parse_vector(value, full, 8);
    else if (full == "basis.domain_upper") cfg.domain_upper = parse_vector(value, full, 8);
    else if (full == "basis.domain_inflation") cfg.domain_inflation = parse_double(value, full);
    else if (full == "basis.cap") cfg.basis_cap = static_cast<std::int64_t>(parse_double(value, full));
    else if (full == "solver.lm_initial_damping") cfg.solver.lm_initial_damping = parse_double(value, full);
    else if (full == "solver.lm_tolerance_position") {
        cfg.solver.lm_tolerance_position = parse_double(value, full);
        cfg.solver_tolerances_explicit = true;
    } else if (full == "solver.lm_tolerance_time") {
        cfg.solver.lm_tolerance_time = parse_double(value, full);
        cfg.solver_tolerances_explicit = true;
    } else if (full == "solver.max_iterations") {
        cfg.solver.max_iterations = static_cast<int>(parse_double(value, full));
    } else if (full == "solver.jacobian") {
        if (value == "spectral-stm") cfg.solver.jacobian_mode = JacobianMode::spectral_stm;
        else if (value == "finite-difference") cfg.solver.jacobian_mode = JacobianMode::finite_difference;
        else throw UsageError("solver.jacobian must be spectral-stm or finite-difference");
    } else if (full == "solver.time_weight") {
        cfg.solver.time_weight = parse_double(value, full);
    } else if (full == "solver.step_clamp") {
        cfg.solver.step_clamp = parse_double(value, full);
    } else if (full == "solver.prescale") {
        cfg.solver.prescale_magnitude = parse_bool(value, full);
    } else if (full == "integrator.method") {
        if (value == "adaptive-rk") cfg.integrator.method = IntegratorMethod::adaptive_rk;
        else if (value == "multistep") cfg.integrator.method = IntegratorMethod::multistep_pece;
        else throw UsageError("integrator.method must be adaptive-rk or multistep");
    } else if (full == "integrator.rel_tolerance") {
        cfg.integrator.rel_tolerance = parse_double(value, full);
    } else if (full == "integrator.abs_tolerance") {
        cfg.integrator.abs_tolerance = parse_double(value, full);
    } else if (full == "integrator.max_step") {
        cfg.integrator.max_step = parse_double(value, full);
    } else if (full == "scan.tof_min") {
        cfg.scan_tof_min = parse_double(value, full);
    } else if (full == "scan.tof_max") {
        cfg.scan_tof_max = parse_double(value, full);
    } else if (full == "scan.steps") {
        cfg.scan_steps = static_cast<int>(parse_double(value, full));
    } else if (full == "stress.max_revolutions") {
        cfg.stress_max_revolutions = static_cast<int>(parse_double(value, full));
    } else if (full == "output.directory") {
        cfg.output_directory = value;
    } else {
        throw UsageError("unknown configuration key: " + full);
    }
}

inline ScenarioConfig parse_config_text(const std::string& text) {
    ScenarioConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw UsageError("config line " + std::to_string(line_no) + ": unterminated section");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        apply_config_entry(cfg, section, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Canonical serialization and hashing of the effective configuration; the
// hash keys the model cache and stamps every CSV.
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", x);
    return buf;
}

namespace detail {

inline void put(std::map<std::string, std::string>& kv, const std::string& key, double v) {
    kv[key] = format_double(v);
}

}  // namespace detail

inline std::string canonical_config_text(const ScenarioConfig& cfg) {
    std::map<std::string, std::string> kv;
    detail::put(kv, "gravity.mu", cfg.gravity.mu);
    detail::put(kv, "gravity.earth_radius", cfg.gravity.earth_radius);
    detail::put(kv, "gravity.j2", cfg.gravity.j2);
    kv["gravity.j2_enabled"] = cfg.gravity.j2_enabled ? "1" : "0";
    if (cfg.r0)
        kv["problem.r0"] = format_double((*cfg.r0)[0]) + " " + format_double((*cfg.r0)[1]) + " " +
                           format_double((*cfg.r0)[2]);
    if (cfg.rf)
        kv["problem.rf"] = format_double((*cfg.rf)[0]) + " " + format_double((*cfg.rf)[1]) + " " +
                           format_double((*cfg.rf)[2]);
    if (cfg.tof) detail::put(kv, "problem.tof", *cfg.tof);
    kv["problem.revolutions"] = std::to_string(cfg.revolutions);
    kv["problem.prograde"] = cfg.prograde ? "1" : "0";
    kv["basis.order"] = std::to_string(cfg.effective_order());
    if (cfg.domain_lower && cfg.domain_upper) {
        std::string lo, hi;
        for (int j = 0; j < 8; ++j) {
            lo += format_double((*cfg.domain_lower)[j]) + " ";
            hi += format_double((*cfg.domain_upper)[j]) + " ";
        }
        kv["basis.domain_lower"] = lo;
        kv["basis.domain_upper"] = hi;
    }
    detail::put(kv, "basis.domain_inflation", cfg.domain_inflation);
    kv["basis.cap"] = std::to_string(cfg.basis_cap);
    const SolverConfig sol = cfg.effective_solver();
    detail::put(kv, "solver.lm_initial_damping", sol.lm_initial_damping);
    detail::put(kv, "solver.lm_tolerance_position", sol.lm_tolerance_position);
    detail::put(kv, "solver.lm_tolerance_time", sol.lm_tolerance_time);
    kv["solver.max_iterations"] = std::to_string(sol.max_iterations);
    kv["solver.jacobian"] =
        sol.jacobian_mode == JacobianMode::spectral_stm ? "spectral-stm" : "finite-difference";
    detail::put(kv, "solver.time_weight", sol.time_weight);
    detail::put(kv, "solver.step_clamp", sol.step_clamp);
    kv["solver.prescale"] = sol.prescale_magnitude ? "1" : "0";
    kv["integrator.method"] =
        cfg.integrator.method == IntegratorMethod::adaptive_rk ? "adaptive-rk" : "multistep";
    detail::put(kv, "integrator.rel_tolerance", cfg.integrator.rel_tolerance);
    detail::put(kv, "integrator.abs_tolerance", cfg.integrator.abs_tolerance);
    detail::put(kv, "integrator.max_step", cfg.integrator.max_step);
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

inline std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t config_hash(const ScenarioConfig& cfg) {
    return fnv1a_hash(canonical_config_text(cfg));
}

// Key of the Koopman model implied by the configuration: gravity, order and
// the resolved domain box (solver and problem timing do not enter).
inline std::uint64_t model_cache_key(const ScenarioConfig& cfg, const DomainBox& box) {
    std::string text;
    text += format_double(cfg.gravity.mu) + "|" + format_double(cfg.gravity.earth_radius) + "|" +
            format_double(cfg.gravity.j2) + "|" + (cfg.gravity.j2_enabled ? "1" : "0") + "|" +
            std::to_string(cfg.effective_order()) + "|";
    for (int j = 0; j < box.dimension(); ++j)
        text += format_double(box.lower[j]) + "," + format_double(box.upper[j]) + ";";
    return fnv1a_hash(text);
}

}  // namespace kolambert
