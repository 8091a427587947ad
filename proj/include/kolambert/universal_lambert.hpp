#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/lambert_geometry.hpp"
#include "kolambert/numeric_propagation.hpp"
#include "kolambert/orbital_elements.hpp"

namespace kolambert {

// Classical universal-variables Lambert solver (Bate-Mueller-White family):
// Stumpff functions and a bracketed iteration on the universal variable z.
// Serves as ground truth for the spectral solver.

inline double stumpff_c(double z) {
    if (z > 1e-7) return (1.0 - std::cos(std::sqrt(z))) / z;
    if (z < -1e-7) return (std::cosh(std::sqrt(-z)) - 1.0) / (-z);
    return 0.5 - z / 24.0 + z * z / 720.0;
}

inline double stumpff_s(double z) {
    if (z > 1e-7) {
        const double sz = std::sqrt(z);
        return (sz - std::sin(sz)) / (sz * sz * sz);
    }
    if (z < -1e-7) {
        const double sz = std::sqrt(-z);
        return (std::sinh(sz) - sz) / (sz * sz * sz);
    }
    return 1.0 / 6.0 - z / 120.0 + z * z / 5040.0;
}

enum class MultiRevBranch { low_z, high_z };

struct UniversalLambertSolution {
    Vector3d v0;       // departure velocity, km/s
    Vector3d v_final;  // arrival velocity, km/s
    double z = 0.0;
    int iterations = 0;
};

namespace detail {

struct LambertGeometry {
    double r1 = 0.0, r2 = 0.0, A = 0.0;
};

inline LambertGeometry lambert_geometry(const Vector3d& r0, const Vector3d& rf, bool prograde) {
    LambertGeometry g;
    g.r1 = r0.norm();
    g.r2 = rf.norm();
    const double dth = delta_theta(r0, rf, 0, prograde);
    if (dth <= 1e-12 || std::abs(2.0 * M_PI - dth) <= 1e-12)
        throw DegenerateGeometryError("universal_lambert: zero transfer angle");
    g.A = std::sin(dth) * std::sqrt(g.r1 * g.r2 / (1.0 - std::cos(dth)));
    return g;
}

inline double lambert_y(const LambertGeometry& g, double z) {
    return g.r1 + g.r2 + g.A * (z * stumpff_s(z) - 1.0) / std::sqrt(stumpff_c(z));
}

// sqrt(mu) * (time of flight at z); NaN when y < 0 (no orbit there).
inline double lambert_tof_times_sqrt_mu(const LambertGeometry& g, double z) {
    const double c = stumpff_c(z);
    if (!(c > 0)) return std::numeric_limits<double>::quiet_NaN();
    const double y = lambert_y(g, z);
    if (!(y >= 0)) return std::numeric_limits<double>::quiet_NaN();
    const double s = stumpff_s(z);
    return std::pow(y / c, 1.5) * s + g.A * std::sqrt(y);
}

}  // namespace detail

inline std::vector<UniversalLambertSolution> universal_lambert_all(
    const Vector3d& r0, const Vector3d& rf, double tof, int revolutions, bool prograde,
    const GravityModel& gravity) {
    if (!(tof > 0)) throw ArgumentError("universal_lambert: tof must be positive");
    if (revolutions < 0) throw ArgumentError("universal_lambert: revolutions must be >= 0");
    const auto g = detail::lambert_geometry(r0, rf, prograde);
    const double target = std::sqrt(gravity.mu) * tof;

    auto F = [&](double z) { return detail::lambert_tof_times_sqrt_mu(g, z) - target; };

    std::vector<double> roots;
    std::vector<int> iters;
    if (revolutions == 0) {
        // t(z) is monotone increasing on the single-revolution range
        double zhi = 4.0 * M_PI * M_PI - 1e-9;
        double zlo = -16.0 * M_PI * M_PI;
        double flo = F(zlo);
        int guard = 0;
        while (std::isnan(flo) && guard++ < 200) {
            zlo *= 0.5;
            flo = F(zlo);
        }
        if (std::isnan(flo) || flo > 0)
            throw SolverError("universal_lambert: failed to bracket the single-rev solution");
        int it = 0;
        for (; it < 220; ++it) {
            const double zm = 0.5 * (zlo + zhi);
            const double fm = F(zm);
            if (std::isnan(fm) || fm < 0)
                zlo = zm;
            else
                zhi = zm;
        }
        roots.push_back(0.5 * (zlo + zhi));
        iters.push_back(it);
    } else {
        const double zl = std::pow(2.0 * M_PI * revolutions, 2) + 1e-8;
        const double zr = std::pow(2.0 * M_PI * (revolutions + 1), 2) - 1e-8;
        // locate the time-of-flight minimum by golden section
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = zl, b = zr;
        double c1 = b - gr * (b - a), d1 = a + gr * (b - a);
        auto safe = [&](double z) {
            const double v = F(z);
            return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
        };
        for (int i = 0; i < 200; ++i) {
            if (safe(c1) < safe(d1))
                b = d1;
            else
                a = c1;
            c1 = b - gr * (b - a);
            d1 = a + gr * (b - a);
        }
        const double zmin = 0.5 * (a + b);
        if (!(F(zmin) <= 0))
            throw NoSolutionError("universal_lambert: tof below the " +
                                  std::to_string(revolutions) + "-revolution minimum");
        // low-z branch: F decreases from +inf to F(zmin) <= 0
        {
            double lo = zl, hi = zmin;
            int it = 0;
            for (; it < 220; ++it) {
                const double zm = 0.5 * (lo + hi);
                const double fm = F(zm);
                if (std::isnan(fm) || fm > 0)
                    lo = zm;
                else
                    hi = zm;
            }
            roots.push_back(0.5 * (lo + hi));
            iters.push_back(it);
        }
        // high-z branch: F increases from F(zmin) <= 0 to +inf
        {
            double lo = zmin, hi = zr;
            int it = 0;
            for (; it < 220; ++it) {
                const double zm = 0.5 * (lo + hi);
                const double fm = F(zm);
                if (std::isnan(fm) || fm > 0)
                    hi = zm;
                else
                    lo = zm;
            }
            roots.push_back(0.5 * (lo + hi));
            iters.push_back(it);
        }
    }

    std::vector<UniversalLambertSolution> out;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double z = roots[i];
        const double y = detail::lambert_y(g, z);
        if (!(y > 0)) throw SolverError("universal_lambert: converged to y <= 0");
        UniversalLambertSolution sol;
        sol.z = z;
        sol.iterations = iters[i];
        const double f = 1.0 - y / g.r1;
        const double gg = g.A * std::sqrt(y / gravity.mu);
        const double gdot = 1.0 - y / g.r2;
        sol.v0 = (rf - f * r0) / gg;
        sol.v_final = (gdot * rf - r0) / gg;

        // targeting polish: a couple of Newton corrections against the
        // high-accuracy propagator remove the last few hundred ulps
        GravityModel two_body = gravity;
        two_body.j2_enabled = false;
        IntegratorConfig icfg;
        icfg.rel_tolerance = 1e-13;
        icfg.abs_tolerance = 1e-13;
        for (int polish = 0; polish < 2; ++polish) {
            const PropagationResult base =
                propagate_numeric(CartesianState{r0, sol.v0}, tof, two_body, icfg);
            const Vector3d miss = base.final_state.position - rf;
            if (miss.norm() < 1e-11) break;
            Eigen::Matrix3d J;
            const double h = 1e-6;
            for (int k = 0; k < 3; ++k) {
                Vector3d vp = sol.v0;
                vp[k] += h;
                const PropagationResult rp =
                    propagate_numeric(CartesianState{r0, vp}, tof, two_body, icfg);
                J.col(k) = (rp.final_state.position - base.final_state.position) / h;
            }
            const Vector3d dv = J.partialPivLu().solve(miss);
            if (!dv.allFinite()) break;
            sol.v0 -= dv;
        }
        sol.v_final =
            propagate_numeric(CartesianState{r0, sol.v0}, tof, two_body, icfg).final_state.velocity;
        out.push_back(sol);
    }
    return out;
}

// Branch-selected solution; the low-z branch is the default (it is the branch
// whose energies the spectral solver reproduces from the circular seed).
inline UniversalLambertSolution universal_lambert(const Vector3d& r0, const Vector3d& rf,
                                                  double tof, int revolutions, bool prograde,
                                                  const GravityModel& gravity,
                                                  MultiRevBranch branch = MultiRevBranch::low_z) {
    auto all = universal_lambert_all(r0, rf, tof, revolutions, prograde, gravity);
    if (all.size() == 1 || branch == MultiRevBranch::low_z) return all.front();
    return all.back();
}

}  // namespace kolambert
