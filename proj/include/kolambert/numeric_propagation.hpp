#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "kolambert/ode.hpp"
#include "kolambert/orbital_elements.hpp"

namespace kolambert {

// Two-body acceleration with the optional J2 oblateness term.
inline Vector3d gravity_acceleration(const Vector3d& r, const GravityModel& gravity) {
    const double rn2 = r.squaredNorm();
    const double rn = std::sqrt(rn2);
    Vector3d a = -gravity.mu / (rn2 * rn) * r;
    const double j2 = gravity.effective_j2();
    if (j2 != 0.0) {
        const double z2_r2 = r.z() * r.z() / rn2;
        const double fac = 1.5 * j2 * gravity.mu * gravity.earth_radius * gravity.earth_radius /
                           (rn2 * rn2 * rn);
        a -= fac * Vector3d(r.x() * (1.0 - 5.0 * z2_r2), r.y() * (1.0 - 5.0 * z2_r2),
                            r.z() * (3.0 - 5.0 * z2_r2));
    }
    return a;
}

// Specific orbital energy, J2-corrected when enabled; conserved along exact
// trajectories of the same gravity model.
inline double orbital_energy(const CartesianState& state, const GravityModel& gravity) {
    const double rn = state.position.norm();
    double e = 0.5 * state.velocity.squaredNorm() - gravity.mu / rn;
    const double j2 = gravity.effective_j2();
    if (j2 != 0.0) {
        const double s2 = state.position.z() * state.position.z() / (rn * rn);
        e += 0.5 * gravity.mu * gravity.earth_radius * gravity.earth_radius * j2 / (rn * rn * rn) *
             (3.0 * s2 - 1.0);
    }
    return e;
}

struct TrajectorySample {
    double t = 0.0;
    CartesianState state;
};

struct PropagationResult {
    CartesianState final_state;
    std::vector<TrajectorySample> samples;
    double energy_drift = 0.0;  // relative, against the matching potential
};

// High-accuracy Cartesian propagation used as ground truth everywhere.
inline PropagationResult propagate_numeric(const CartesianState& state0, double tof,
                                           const GravityModel& gravity,
                                           const IntegratorConfig& config = {},
                                           bool keep_samples = false) {
    if (tof < 0) throw ArgumentError("propagate_numeric: tof must be >= 0");
    gravity.validate();
    Eigen::VectorXd y(6);
    y << state0.position, state0.velocity;
    auto rhs = [&gravity](double, const Eigen::VectorXd& s) {
        Eigen::VectorXd d(6);
        d.head<3>() = s.tail<3>();
        d.tail<3>() = gravity_acceleration(s.head<3>(), gravity);
        return d;
    };
    PropagationResult result;
    const double e0 = orbital_energy(state0, gravity);
    double max_drift = 0.0;
    auto observe = [&](double t, const Eigen::VectorXd& s) {
        const CartesianState cs{s.head<3>(), s.tail<3>()};
        max_drift = std::max(max_drift, std::abs(orbital_energy(cs, gravity) - e0) /
                                            std::max(std::abs(e0), 1e-300));
        if (keep_samples) result.samples.push_back({t, cs});
    };
    const Eigen::VectorXd yf = integrate(rhs, 0.0, tof, y, config, observe);
    result.final_state = {yf.head<3>(), yf.tail<3>()};
    result.energy_drift = max_drift;
    return result;
}

struct ElementTrajectory {
    std::vector<double> thetas;
    std::vector<Eigen::VectorXd> states;

    const Eigen::VectorXd& final_state() const { return states.back(); }
};

// Integrates the element-space Hamilton equations in theta directly; the
// independent oracle for the spectral propagation.
inline ElementTrajectory propagate_elements_numeric(const Eigen::VectorXd& x0, double theta_span,
                                                    const GravityModel& gravity,
                                                    const IntegratorConfig& config = {}) {
    auto rhs = [&gravity](double, const Eigen::VectorXd& x) { return element_dynamics(x, gravity); };
    ElementTrajectory traj;
    auto observe = [&](double th, const Eigen::VectorXd& x) {
        traj.thetas.push_back(th);
        traj.states.push_back(x);
    };
    integrate(rhs, 0.0, theta_span, x0, config, observe);
    return traj;
}

}  // namespace kolambert
