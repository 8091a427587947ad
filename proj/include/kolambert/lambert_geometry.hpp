#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/orbital_elements.hpp"

namespace kolambert {

// In-plane transfer angle from r0 to rf, quadrant-resolved against the
// requested motion sense by the z-component of r0 x rf, plus 2*pi per
// completed revolution.
inline double delta_theta(const Vector3d& r0, const Vector3d& rf, int revolutions = 0,
                          bool prograde = true) {
    const double n0 = r0.norm(), nf = rf.norm();
    if (!(n0 > 0) || !(nf > 0)) throw ArgumentError("delta_theta: zero position vector");
    if (revolutions < 0) throw ArgumentError("delta_theta: revolutions must be >= 0");
    const Vector3d cross = r0.cross(rf);
    const double cosv = std::clamp(r0.dot(rf) / (n0 * nf), -1.0, 1.0);
    if (cross.norm() <= 1e-12 * n0 * nf && cosv < 0)
        throw DegenerateGeometryError("delta_theta: anti-parallel vectors leave the plane undefined");
    double dth = std::acos(cosv);
    const bool short_way = prograde ? (cross.z() >= 0) : (cross.z() < 0);
    if (!short_way) dth = 2.0 * M_PI - dth;
    return dth + 2.0 * M_PI * revolutions;
}

// Orbit-plane unit normal consistent with the motion sense; falls back to the
// equatorial normal when r0 and rf do not span a plane.
inline Vector3d transfer_plane_normal(const Vector3d& r0, const Vector3d& rf, bool prograde = true) {
    Vector3d n = r0.cross(rf);
    if (n.norm() <= 1e-12 * r0.norm() * rf.norm()) {
        n = Vector3d::UnitZ();
        return prograde ? n : Vector3d(-n);
    }
    n.normalize();
    const bool flip = prograde ? (n.z() < 0) : (n.z() > 0);
    return flip ? Vector3d(-n) : n;
}

// Circular-speed seed velocity: magnitude sqrt(mu/|r0|), perpendicular to r0,
// in the transfer plane, directed toward rf.
inline Vector3d circular_velocity_guess(const Vector3d& r0, const Vector3d& rf,
                                        const GravityModel& gravity, bool prograde = true) {
    const double n0 = r0.norm();
    if (!(n0 > 0)) throw ArgumentError("circular_velocity_guess: zero position vector");
    const Vector3d normal = transfer_plane_normal(r0, rf, prograde);
    Vector3d dir = normal.cross(r0);
    dir.normalize();
    return std::sqrt(gravity.mu / n0) * dir;
}

// ---------------------------------------------------------------------------
// The geometric family of transfer orbits through both endpoints, swept by
// the semilatus rectum p via the Lagrange coefficients. Used for seeding and
// for sizing the basis domain around the expected solution.
// ---------------------------------------------------------------------------

// Departure velocity of the family member with semilatus rectum p.
inline Vector3d family_member_velocity(const Vector3d& r0, const Vector3d& rf, double dth,
                                       double p, double mu) {
    const double r1 = r0.norm(), r2 = rf.norm();
    const double f = 1.0 - r2 / p * (1.0 - std::cos(dth));
    const double g = r1 * r2 * std::sin(dth) / std::sqrt(mu * p);
    return (rf - f * r0) / g;
}

// Keplerian time of flight of the elliptic family member with semilatus
// rectum p (including complete revolutions); no value when the member is not
// a bound ellipse.
inline std::optional<double> family_member_time(const Vector3d& r0, const Vector3d& rf,
                                                double dth_base, int revolutions, double p,
                                                double mu) {
    const double r1 = r0.norm(), r2 = rf.norm();
    const double cosd = std::cos(dth_base), sind = std::sin(dth_base);
    if (std::abs(sind) < 1e-12) return std::nullopt;
    const double ecos0 = p / r1 - 1.0;
    const double esin0 = (ecos0 * cosd - (p / r2 - 1.0)) / sind;
    const double e2 = ecos0 * ecos0 + esin0 * esin0;
    if (e2 >= 1.0) return std::nullopt;
    const double e = std::sqrt(e2);
    const double a = p / (1.0 - e2);
    const double nu0 = std::atan2(esin0, ecos0);
    const double nu1 = nu0 + dth_base;
    auto ecc_anomaly = [e](double nu) {
        return 2.0 * std::atan2(std::sqrt(1.0 - e) * std::sin(0.5 * nu),
                                std::sqrt(1.0 + e) * std::cos(0.5 * nu));
    };
    double E0 = ecc_anomaly(nu0);
    double E1 = ecc_anomaly(nu1);
    while (E1 <= E0) E1 += 2.0 * M_PI;
    const double M0 = E0 - e * std::sin(E0);
    const double M1 = E1 - e * std::sin(E1);
    return std::sqrt(a * a * a / mu) * (M1 - M0 + 2.0 * M_PI * revolutions);
}

struct FamilyBounds {
    double p_low = 0.0;   // slow parabolic boundary
    double p_high = 0.0;  // fast parabolic boundary
};

inline FamilyBounds family_parameter_bounds(const Vector3d& r0, const Vector3d& rf,
                                            double dth_base) {
    const double r1 = r0.norm(), r2 = rf.norm();
    const double cosd = std::cos(dth_base);
    const double k = r1 * r2 * (1.0 - cosd);
    const double l = r1 + r2;
    const double m = r1 * r2 * (1.0 + cosd);
    return {k / (l + std::sqrt(2.0 * m)), k / (l - std::sqrt(2.0 * m))};
}

// Semilatus rectum values of the elliptic family members matching the
// requested time of flight (up to two for multi-revolution transfers).
inline std::vector<double> family_parameters_for_time(const Vector3d& r0, const Vector3d& rf,
                                                      double tof, int revolutions, bool prograde,
                                                      double mu) {
    const double dth_base = delta_theta(r0, rf, 0, prograde);
    const FamilyBounds b = family_parameter_bounds(r0, rf, dth_base);
    const double eps = 1e-7 * (b.p_high - b.p_low);
    auto time_at = [&](double p) {
        return family_member_time(r0, rf, dth_base, revolutions, p, mu);
    };
    std::vector<double> roots;
    auto bisect = [&](double lo, double hi, bool decreasing) {
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            const auto t = time_at(mid);
            const bool slow = t ? (*t > tof) : (mid - b.p_low < b.p_high - mid);
            if (slow == decreasing)
                lo = mid;
            else
                hi = mid;
        }
        const double p = 0.5 * (lo + hi);
        const auto t = time_at(p);
        if (t && std::abs(*t - tof) <= 1e-3 * tof) roots.push_back(p);
    };
    if (revolutions == 0) {
        const auto t_fast = time_at(b.p_high - eps);
        if (t_fast && *t_fast > tof) return roots;  // faster than parabolic
        bisect(b.p_low + eps, b.p_high - eps, true);
        return roots;
    }
    // multi-revolution: the time is U-shaped over the elliptic range
    double a = b.p_low + eps, c = b.p_high - eps;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = c - gr * (c - a), x2 = a + gr * (c - a);
    auto safe = [&](double p) {
        const auto t = time_at(p);
        return t ? *t : std::numeric_limits<double>::infinity();
    };
    for (int i = 0; i < 200; ++i) {
        if (safe(x1) < safe(x2))
            c = x2;
        else
            a = x1;
        x1 = c - gr * (c - a);
        x2 = a + gr * (c - a);
    }
    const double p_min = 0.5 * (a + c);
    if (safe(p_min) > tof) return roots;  // below the multi-rev minimum
    bisect(b.p_low + eps, p_min, true);
    bisect(p_min, b.p_high - eps, false);
    return roots;
}

}  // namespace kolambert
