#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kolambert/csv_report.hpp"
#include "kolambert/lambert_solver.hpp"
#include "kolambert/model_cache.hpp"
#include "kolambert/numeric_propagation.hpp"
#include "kolambert/scenario.hpp"
#include "kolambert/svg_plot.hpp"
#include "kolambert/universal_lambert.hpp"
#include "kolambert/version.hpp"

namespace kolambert {

// Exit codes: 0 success, 2 usage, 3 non-convergence, 4 resource cap.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNoConvergence = 3;
inline constexpr int kExitResourceCap = 4;

namespace cli {

struct Overrides {
    std::optional<std::string> j2;
    std::optional<int> order;
    std::optional<int> revolutions;
    std::optional<std::string> out;
    std::optional<double> tof;
    bool allow_large_model = false;
};

inline void apply(ScenarioConfig& cfg, const Overrides& ov) {
    if (ov.j2) {
        if (*ov.j2 == "on") cfg.gravity.j2_enabled = true;
        else if (*ov.j2 == "off") cfg.gravity.j2_enabled = false;
        else throw UsageError("--j2 expects on or off");
    }
    if (ov.order) cfg.basis_order = *ov.order;
    if (ov.revolutions) cfg.revolutions = *ov.revolutions;
    if (ov.out) cfg.output_directory = *ov.out;
    if (ov.tof) cfg.tof = *ov.tof;
    if (ov.allow_large_model) cfg.allow_large_model = true;
}

struct PreparedModel {
    KoopmanModel model;
    std::uint64_t model_key = 0;
    bool from_cache = false;
    double build_seconds = 0.0;
};

inline std::int64_t basis_count(int dimension, int order) {
    return detail::binomial(dimension + order, order);
}

// Large models sit behind an explicit flag; the refusal carries a cost
// estimate so the caller can decide.
inline void check_model_size(const ScenarioConfig& cfg) {
    const int order = cfg.effective_order();
    const std::int64_t m = basis_count(ElementState::dimension, order);
    if ((order >= 6 || m > 2000) && !cfg.allow_large_model) {
        const double gib = static_cast<double>(m) * m * 56.0 / (1024.0 * 1024.0 * 1024.0);
        char est[192];
        std::snprintf(est, sizeof(est),
                      "order %d gives %lld basis functions (~%.2f GiB of matrices, dense "
                      "eigensolve O(m^3)); pass --allow-large-model to proceed",
                      order, static_cast<long long>(m), gib);
        throw ResourceCapError(est);
    }
}

inline PreparedModel prepare_model(const ScenarioConfig& cfg, const DomainBox& box,
                                   bool verbose = true) {
    check_model_size(cfg);
    PreparedModel out;
    out.model_key = model_cache_key(cfg, box);
    std::filesystem::create_directories(cfg.output_directory);
    const std::string dir = cache_directory(cfg.output_directory);
    std::filesystem::create_directories(dir);
    const std::string path = cache_path(dir, out.model_key);
    if (std::filesystem::exists(path)) {
        try {
            out.model = load_model(out.model_key, path);
            out.from_cache = true;
            return out;
        } catch (const CacheError& e) {
            if (verbose) std::cerr << "warning: " << e.what() << "; rebuilding\n";
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    out.model = build_element_model(cfg.gravity, cfg.effective_order(), box, cfg.basis_cap);
    out.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        save_model(out.model, out.model_key, path);
    } catch (const CacheError& e) {
        if (verbose) std::cerr << "warning: " << e.what() << "\n";
    }
    return out;
}

inline void write_eigenvalue_csv(const ScenarioConfig& cfg, const PreparedModel& pm) {
    CsvTable table;
    table.header = {"real", "imag", "magnitude"};
    std::vector<std::complex<double>> sorted(
        pm.model.eigenvalues.data(), pm.model.eigenvalues.data() + pm.model.eigenvalues.size());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    for (const auto& lam : sorted)
        table.rows.push_back(
            {format_double(lam.real()), format_double(lam.imag()), format_double(std::abs(lam))});
    write_csv(cfg.output_directory + "/eigenvalues.csv", table,
              provenance_line(config_hash(cfg), pm.model_key));
}

inline int cmd_build_model(ScenarioConfig cfg) {
    const DomainBox box = cfg.domain_box();
    const PreparedModel pm = prepare_model(cfg, box);
    write_eigenvalue_csv(cfg, pm);
    int real_count = 0;
    double max_mag = 0.0;
    for (Eigen::Index i = 0; i < pm.model.eigenvalues.size(); ++i) {
        const auto lam = pm.model.eigenvalues[i];
        if (std::abs(lam.imag()) < 1e-12) ++real_count;
        max_mag = std::max(max_mag, std::abs(lam));
    }
    const int pairs = (pm.model.basis.size() - real_count) / 2;
    std::cout << "model: m=" << pm.model.basis.size() << " order=" << cfg.effective_order()
              << " j2=" << (cfg.gravity.j2_enabled ? "on" : "off")
              << (pm.from_cache ? " (cache hit)" : "") << "\n";
    if (!pm.from_cache) std::cout << "build time: " << format_double(pm.build_seconds) << " s\n";
    std::cout << "eigenvalues: " << real_count << " real, " << pairs
              << " conjugate pairs, max |lambda| = " << format_double(max_mag)
              << ", diagonalizable = " << (pm.model.diagonalizable ? "yes" : "no")
              << " (cond P = " << format_double(pm.model.condition_P) << ")\n";
    std::cout << "wrote " << cfg.output_directory << "/eigenvalues.csv\n";
    return kExitOk;
}

inline const std::vector<std::string>& solution_header() {
    static const std::vector<std::string> header = {
        "tof_s",        "revolutions",        "v0x_km_s",       "v0y_km_s",
        "v0z_km_s",     "energy_kj_kg",       "semi_major_axis_km", "position_residual_km",
        "tof_residual_s", "iterations",       "converged"};
    return header;
}

inline void append_solution_row(CsvTable& table, double tof, int revolutions,
                                const TransferSolution& sol) {
    table.rows.push_back({format_double(tof), std::to_string(revolutions),
                          format_double(sol.v0.x()), format_double(sol.v0.y()),
                          format_double(sol.v0.z()), format_double(sol.specific_energy),
                          format_double(sol.semi_major_axis),
                          format_double(sol.position_residual), format_double(sol.tof_residual),
                          std::to_string(sol.iterations), sol.converged ? "1" : "0"});
}

inline void write_trajectory_csv(const ScenarioConfig& cfg, const PreparedModel& pm,
                                 const TransferSolution& sol, const LambertProblem& problem) {
    const ElementState x0 =
        cartesian_to_elements(CartesianState{problem.r0, sol.v0}, problem.gravity);
    const SpectralPropagator prop(pm.model, x0.to_vector());
    const double theta_f = sol.delta_theta;
    const int samples = std::max(128, static_cast<int>(std::ceil(theta_f / (2.0 * M_PI) * 256)));
    CsvTable table;
    table.header = {"theta_rad", "t_s", "x_km", "y_km", "z_km", "vx_km_s", "vy_km_s", "vz_km_s"};
    for (int i = 0; i <= samples; ++i) {
        const double theta = theta_f * i / samples;
        const VectorXd x = prop.observables(theta);
        const CartesianState cart =
            elements_to_cartesian(ElementState::from_vector(x), problem.gravity);
        const double t = time_of_flight(pm.model, x0.to_vector(), theta, problem.gravity);
        table.rows.push_back({format_double(theta), format_double(t),
                              format_double(cart.position.x()), format_double(cart.position.y()),
                              format_double(cart.position.z()), format_double(cart.velocity.x()),
                              format_double(cart.velocity.y()), format_double(cart.velocity.z())});
    }
    write_csv(cfg.output_directory + "/trajectory.csv", table,
              provenance_line(config_hash(cfg), pm.model_key));
}

inline int cmd_solve(ScenarioConfig cfg) {
    const LambertProblem problem = cfg.problem();
    const DomainBox box = cfg.domain_box();
    const PreparedModel pm = prepare_model(cfg, box);
    const auto t0 = std::chrono::steady_clock::now();
    const TransferSolution sol = solve(problem, pm.model, cfg.effective_solver());
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CsvTable table;
    table.header = solution_header();
    append_solution_row(table, problem.tof, problem.revolutions, sol);
    write_csv(cfg.output_directory + "/solution.csv", table,
              provenance_line(config_hash(cfg), pm.model_key));
    write_trajectory_csv(cfg, pm, sol, problem);
    std::cout << "solve: tof=" << format_double(problem.tof) << " s, N=" << problem.revolutions
              << ", converged=" << (sol.converged ? "yes" : "no") << "\n";
    std::cout << "  v0 = [" << format_double(sol.v0.x()) << ", " << format_double(sol.v0.y())
              << ", " << format_double(sol.v0.z()) << "] km/s\n";
    std::cout << "  E = " << format_double(sol.specific_energy)
              << " kJ/kg, a = " << format_double(sol.semi_major_axis) << " km\n";
    std::cout << "  residuals: " << format_double(sol.position_residual) << " km, "
              << format_double(sol.tof_residual) << " s after " << sol.iterations
              << " iterations (" << format_double(wall) << " s wall)\n";
    if (!sol.converged) {
        std::cerr << "solve did not converge: position residual "
                  << format_double(sol.position_residual) << " km, time residual "
                  << format_double(sol.tof_residual) << " s\n";
        return kExitNoConvergence;
    }
    return kExitOk;
}

inline int cmd_scan(ScenarioConfig cfg, double tof_min, double tof_max, int steps) {
    if (cfg.scan_tof_min > 0 && tof_min <= 0) tof_min = cfg.scan_tof_min;
    if (cfg.scan_tof_max > 0 && tof_max <= 0) tof_max = cfg.scan_tof_max;
    if (cfg.scan_steps > 0 && steps <= 0) steps = cfg.scan_steps;
    if (!(tof_min > 0) || !(tof_max > tof_min) || steps < 2)
        throw UsageError("scan needs tof_min < tof_max and steps >= 2");
    if (!cfg.tof) cfg.tof = tof_min;
    LambertProblem problem = cfg.problem();
    // one model serves the whole grid: size the box over both grid ends
    ScenarioConfig lo_cfg = cfg, hi_cfg = cfg;
    lo_cfg.tof = tof_min;
    hi_cfg.tof = tof_max;
    const DomainBox box = (cfg.domain_lower && cfg.domain_upper)
                              ? cfg.domain_box()
                              : merge_boxes(lo_cfg.domain_box(), hi_cfg.domain_box());
    const PreparedModel pm = prepare_model(cfg, box);
    std::vector<double> grid;
    for (int i = 0; i < steps; ++i)
        grid.push_back(tof_min + (tof_max - tof_min) * i / (steps - 1));
    const EnergyScanResult scan = energy_scan(problem, grid, pm.model, cfg.effective_solver(), true);

    CsvTable table;
    table.header = solution_header();
    PlotSeries series;
    series.label = "specific energy";
    for (const auto& point : scan.points) {
        append_solution_row(table, point.tof, problem.revolutions, point.solution);
        if (!point.failed && point.solution.converged) {
            series.x.push_back(point.tof);
            series.y.push_back(point.solution.specific_energy);
        }
    }
    write_csv(cfg.output_directory + "/scan.csv", table,
              provenance_line(config_hash(cfg), pm.model_key));
    PlotSpec plot;
    plot.title = "Transfer specific energy vs time of flight";
    plot.x_label = "time of flight [s]";
    plot.y_label = "specific energy [kJ/kg]";
    if (scan.argmin) {
        const auto& best = scan.points[*scan.argmin];
        plot.marker = std::pair<double, double>{best.tof, best.solution.specific_energy};
    }
    plot.series.push_back(std::move(series));
    write_svg_plot(cfg.output_directory + "/scan.svg", plot);
    if (!scan.argmin) {
        std::cerr << "scan: no grid point converged\n";
        return kExitNoConvergence;
    }
    const auto& best = scan.points[*scan.argmin];
    std::cout << "scan: " << steps << " points in [" << format_double(tof_min) << ", "
              << format_double(tof_max) << "] s\n";
    std::cout << "  minimum energy at tof=" << format_double(best.tof)
              << " s: E=" << format_double(best.solution.specific_energy)
              << " kJ/kg, a=" << format_double(best.solution.semi_major_axis) << " km\n";
    std::cout << "wrote " << cfg.output_directory << "/scan.csv and scan.svg\n";
    return kExitOk;
}

inline int cmd_compare(ScenarioConfig cfg) {
    const LambertProblem base = cfg.problem();
    GravityModel off = cfg.gravity;
    off.j2_enabled = false;
    GravityModel on = cfg.gravity;
    on.j2_enabled = true;

    const auto bmw =
        universal_lambert(base.r0, base.rf, base.tof, base.revolutions, base.prograde, off);
    ScenarioConfig cfg_off = cfg;
    cfg_off.gravity.j2_enabled = false;
    ScenarioConfig cfg_on = cfg;
    cfg_on.gravity.j2_enabled = true;
    LambertProblem p_off = base;
    p_off.gravity = off;
    LambertProblem p_on = base;
    p_on.gravity = on;
    const PreparedModel pm_off = prepare_model(cfg_off, cfg_off.domain_box());
    const PreparedModel pm_on = prepare_model(cfg_on, cfg_on.domain_box());
    const TransferSolution ko_off = solve(p_off, pm_off.model, cfg_off.effective_solver());
    const TransferSolution ko_on = solve(p_on, pm_on.model, cfg_on.effective_solver());

    auto miss = [&](const Vector3d& v0, const GravityModel& world) {
        const PropagationResult res =
            propagate_numeric(CartesianState{base.r0, v0}, base.tof, world, cfg.integrator);
        return (res.final_state.position - base.rf).norm();
    };
    CsvTable table;
    table.header = {"velocity_source", "world", "miss_km", "v0x_km_s", "v0y_km_s", "v0z_km_s"};
    auto row = [&](const std::string& source, const std::string& world, const Vector3d& v0,
                   const GravityModel& g) {
        table.rows.push_back({source, world, format_double(miss(v0, g)), format_double(v0.x()),
                              format_double(v0.y()), format_double(v0.z())});
    };
    row("universal", "two-body", bmw.v0, off);
    row("universal", "j2", bmw.v0, on);
    row("spectral-two-body", "two-body", ko_off.v0, off);
    row("spectral-j2", "j2", ko_on.v0, on);
    write_csv(cfg.output_directory + "/compare.csv", table,
              provenance_line(config_hash(cfg), pm_on.model_key));
    for (const auto& r : table.rows)
        std::cout << "  " << r[0] << " in " << r[1] << " world: miss = " << r[2] << " km\n";
    std::cout << "wrote " << cfg.output_directory << "/compare.csv\n";
    if (!ko_off.converged || !ko_on.converged) return kExitNoConvergence;
    return kExitOk;
}

// Long-arc accuracy report: spectral propagation against the integrated
// element dynamics, revolution by revolution.
inline int cmd_stress(ScenarioConfig cfg, int max_revolutions) {
    if (max_revolutions <= 0) max_revolutions = cfg.stress_max_revolutions;
    const LambertProblem problem = cfg.problem();
    const Vector3d v0 = universal_lambert(problem.r0, problem.rf, problem.tof,
                                          problem.revolutions, problem.prograde, problem.gravity)
                            .v0;
    const VectorXd x0 =
        cartesian_to_elements(CartesianState{problem.r0, v0}, problem.gravity).to_vector();
    // size the box over the whole arc so the secular drift stays inside
    IntegratorConfig icfg = cfg.integrator;
    const double theta_end = 2.0 * M_PI * max_revolutions;
    const ElementTrajectory traj =
        propagate_elements_numeric(x0, theta_end, problem.gravity, icfg);
    VectorXd lo = traj.states.front(), hi = traj.states.front();
    for (const auto& x : traj.states) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    const VectorXd center = 0.5 * (lo + hi);
    const VectorXd half = (0.625 * (hi - lo)).cwiseMax(VectorXd::Constant(8, 1e-4));
    ScenarioConfig boxed = cfg;
    boxed.domain_lower = center - half;
    boxed.domain_upper = center + half;
    const PreparedModel pm = prepare_model(boxed, boxed.domain_box());

    CsvTable table;
    table.header = {"revolution", "element_error_rel", "position_error_km"};
    VectorXd y = x0;
    const SpectralPropagator prop(pm.model, x0);
    for (int rev = 1; rev <= max_revolutions; ++rev) {
        y = integrate(
            [&](double, const VectorXd& x) { return element_dynamics(x, problem.gravity); },
            2.0 * M_PI * (rev - 1), 2.0 * M_PI * rev, y, icfg);
        const VectorXd spectral = prop.observables(2.0 * M_PI * rev);
        double rel = 0.0;
        for (int j = 0; j < 8; ++j)
            rel = std::max(rel, std::abs(spectral[j] - y[j]) / (1.0 + std::abs(y[j])));
        double pos_err = std::numeric_limits<double>::quiet_NaN();
        try {
            const CartesianState a =
                elements_to_cartesian(ElementState::from_vector(spectral), problem.gravity);
            const CartesianState b =
                elements_to_cartesian(ElementState::from_vector(y), problem.gravity);
            pos_err = (a.position - b.position).norm();
        } catch (const Error&) {
        }
        table.rows.push_back({std::to_string(rev), format_double(rel), format_double(pos_err)});
    }
    std::filesystem::create_directories(cfg.output_directory);
    write_csv(cfg.output_directory + "/stress.csv", table,
              provenance_line(config_hash(cfg), pm.model_key));
    std::cout << "stress: " << max_revolutions << " revolutions, final element error "
              << table.rows.back()[1] << ", final position error " << table.rows.back()[2]
              << " km\n";
    std::cout << "wrote " << cfg.output_directory << "/stress.csv\n";
    return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, char** argv) {
    CLI::App app{"Spectral Lambert toolkit: Koopman-lifted orbital transfers with and without "
                 "Earth oblateness"};
    app.set_version_flag("--version", std::string("kolambert ") + kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string j2_flag;
    int order_flag = -1, revs_flag = -1;
    std::string out_flag;
    double tof_flag = 0.0;
    bool allow_large = false;
    double tof_min = 0, tof_max = 0;
    int steps = 0, max_revs = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "scenario configuration file")->required();
        sub->add_option("--j2", j2_flag, "override oblateness: on|off");
        sub->add_option("--order", order_flag, "override basis order");
        sub->add_option("--revs", revs_flag, "override revolution count");
        sub->add_option("--out", out_flag, "override output directory");
        sub->add_option("--tof", tof_flag, "override time of flight [s]");
        sub->add_flag("--allow-large-model", allow_large,
                      "permit basis orders with very large matrices");
    };

    CLI::App* build = app.add_subcommand("build-model", "assemble and cache the spectral model");
    add_common(build);
    CLI::App* solve_cmd = app.add_subcommand("solve", "solve the configured transfer");
    add_common(solve_cmd);
    CLI::App* scan = app.add_subcommand("scan", "sweep time of flight and report energies");
    add_common(scan);
    scan->add_option("--tof-min", tof_min, "grid start [s]");
    scan->add_option("--tof-max", tof_max, "grid end [s]");
    scan->add_option("--steps", steps, "grid point count");
    CLI::App* compare = app.add_subcommand(
        "compare", "four-way miss-distance comparison against the classical solver");
    add_common(compare);
    CLI::App* stress = app.add_subcommand("stress", "long-arc spectral accuracy report");
    add_common(stress);
    stress->add_option("--max-revs", max_revs, "revolutions to sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    cli::Overrides ov;
    if (!j2_flag.empty()) ov.j2 = j2_flag;
    if (order_flag >= 0) ov.order = order_flag;
    if (revs_flag >= 0) ov.revolutions = revs_flag;
    if (!out_flag.empty()) ov.out = out_flag;
    if (tof_flag > 0) ov.tof = tof_flag;
    ov.allow_large_model = allow_large;

    try {
        ScenarioConfig cfg = load_config_file(config_path);
        cli::apply(cfg, ov);
        cfg.gravity.validate();
        if (build->parsed()) return cli::cmd_build_model(std::move(cfg));
        if (solve_cmd->parsed()) return cli::cmd_solve(std::move(cfg));
        if (scan->parsed()) return cli::cmd_scan(std::move(cfg), tof_min, tof_max, steps);
        if (compare->parsed()) return cli::cmd_compare(std::move(cfg));
        if (stress->parsed()) return cli::cmd_stress(std::move(cfg), max_revs);
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ResourceCapError& e) {
        std::cerr << "resource cap: " << e.what() << "\n";
        return kExitResourceCap;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    }
}

}  // namespace kolambert
