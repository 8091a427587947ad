#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>

#include "kolambert/errors.hpp"
#include "kolambert/polynomial.hpp"

namespace kolambert {

using Eigen::Vector3d;

struct GravityModel {
    double mu = 398600.4418;        // km^3/s^2
    double earth_radius = 6378.137; // km
    double j2 = 1.08262668e-3;
    bool j2_enabled = false;

    double effective_j2() const { return j2_enabled ? j2 : 0.0; }

    void validate() const {
        if (!(mu > 0)) throw ArgumentError("GravityModel: mu must be positive");
        if (!(earth_radius > 0)) throw ArgumentError("GravityModel: earth_radius must be positive");
        if (j2 < 0) throw ArgumentError("GravityModel: J2 must be >= 0");
    }
};

struct CartesianState {
    Vector3d position;  // km
    Vector3d velocity;  // km/s
};

struct SphericalState {
    double r = 0.0;         // km
    double latitude = 0.0;  // rad
    double longitude = 0.0; // rad
    double p_r = 0.0;       // km/s
    double p_phi = 0.0;     // km^2/s
    double p_lambda = 0.0;  // km^2/s

    double p_theta() const {
        const double c = std::cos(latitude);
        return std::sqrt(p_phi * p_phi + p_lambda * p_lambda / (c * c));
    }
};

// The eight orbital elements in which unperturbed two-body motion is linear
// in the in-plane angle theta. Layout matches ElementState::to_vector().
struct ElementState {
    double lambda_e = 0.0;  // radial-momentum-like, dimensionless
    double eta = 0.0;       // scaled radial velocity
    double s = 0.0;         // sin(latitude)
    double gamma = 0.0;     // latitude rate component
    double kappa = 0.0;     // inverse angular momentum, scaled
    double beta = 0.0;      // node-like angle, rad
    double chi = 0.0;       // mixed momentum ratio
    double rho = 0.0;       // cos(inclination)

    static constexpr int dimension = 8;

    Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(8);
        v << lambda_e, eta, s, gamma, kappa, beta, chi, rho;
        return v;
    }

    static ElementState from_vector(const Eigen::VectorXd& v) {
        if (v.size() != 8) throw ArgumentError("ElementState::from_vector: need 8 entries");
        return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    }
};

inline const std::array<const char*, 8>& element_names() {
    static const std::array<const char*, 8> names = {"lambda_e", "eta",  "s",   "gamma",
                                                     "kappa",    "beta", "chi", "rho"};
    return names;
}

namespace detail {

// In-plane angle between the node and the position, recovered from the
// beta arcsine with the descending-pass branch selected by sign(gamma).
inline double node_phase(double s, double gamma, double rho, bool* equatorial = nullptr) {
    const double one_m_rho2 = 1.0 - rho * rho;
    const double cos_phi2 = 1.0 - s * s;
    if (equatorial) *equatorial = false;
    if (one_m_rho2 <= 1e-12) {
        if (std::abs(s) <= 1e-9) {
            if (equatorial) *equatorial = true;
            return 0.0;  // equatorial convention: beta coincides with longitude
        }
        throw SingularGeometryError("node phase undefined: p_theta^2 == p_lambda^2 off the equator");
    }
    if (cos_phi2 <= 0.0)
        throw SingularGeometryError("node phase undefined at the poles");
    const double xi = (s / std::sqrt(cos_phi2)) * rho / std::sqrt(one_m_rho2);
    const double alpha = std::asin(std::clamp(xi, -1.0, 1.0));
    return gamma >= 0.0 ? alpha : M_PI - alpha;
}

}  // namespace detail

inline SphericalState cartesian_to_spherical(const CartesianState& state) {
    const Vector3d& p = state.position;
    const Vector3d& v = state.velocity;
    const double r = p.norm();
    if (!(r > 0)) throw ArgumentError("cartesian_to_spherical: zero position");
    const double rho_xy2 = p.x() * p.x() + p.y() * p.y();
    if (rho_xy2 <= 1e-18 * r * r)
        throw SingularGeometryError("cartesian_to_spherical: position on the polar axis");
    SphericalState s;
    s.r = r;
    s.latitude = std::asin(p.z() / r);
    s.longitude = std::atan2(p.y(), p.x());
    const double cphi = std::cos(s.latitude);
    const double rdot = p.dot(v) / r;
    const double phidot = (v.z() - rdot * std::sin(s.latitude)) / (r * cphi);
    const double lamdot = (p.x() * v.y() - p.y() * v.x()) / rho_xy2;
    s.p_r = rdot;
    s.p_phi = r * r * phidot;
    s.p_lambda = r * r * cphi * cphi * lamdot;
    return s;
}

inline CartesianState spherical_to_cartesian(const SphericalState& s) {
    const double cp = std::cos(s.latitude), sp = std::sin(s.latitude);
    const double cl = std::cos(s.longitude), sl = std::sin(s.longitude);
    CartesianState out;
    out.position = s.r * Vector3d(cp * cl, cp * sl, sp);
    const double rdot = s.p_r;
    const double phidot = s.p_phi / (s.r * s.r);
    const double lamdot = s.p_lambda / (s.r * s.r * cp * cp);
    out.velocity = Vector3d(
        rdot * cp * cl - s.r * sp * cl * phidot - s.r * cp * sl * lamdot,
        rdot * cp * sl - s.r * sp * sl * phidot + s.r * cp * cl * lamdot,
        rdot * sp + s.r * cp * phidot);
    return out;
}

inline ElementState spherical_to_elements(const SphericalState& s, const GravityModel& gravity) {
    const double ptheta = s.p_theta();
    if (!(ptheta > 0)) throw SingularGeometryError("spherical_to_elements: p_theta must be positive");
    const double mu = gravity.mu, re = gravity.earth_radius;
    const double s_rmu = std::sqrt(re / mu);
    ElementState e;
    e.lambda_e = s_rmu * (ptheta / s.r - mu / ptheta);
    e.eta = s.p_r * s_rmu;
    e.s = std::sin(s.latitude);
    const double cphi = std::cos(s.latitude);
    e.gamma = s.p_phi / ptheta * cphi;
    e.kappa = std::sqrt(mu * re) / ptheta;
    e.rho = s.p_lambda / ptheta;
    if (std::abs(e.rho) <= 1e-12)
        throw SingularGeometryError("spherical_to_elements: polar orbit (p_lambda = 0)");
    const double denom = e.s * e.s + e.gamma * e.gamma;
    bool equatorial = false;
    const double alpha = detail::node_phase(e.s, e.gamma, e.rho, &equatorial);
    if (equatorial) {
        if (e.rho < 0)
            throw SingularGeometryError("spherical_to_elements: retrograde equatorial orbit");
        e.chi = 0.0;  // chi diverges toward the equator; fixed finite convention
        e.beta = s.longitude;
        return e;
    }
    e.chi = s.p_lambda / std::pow(ptheta, 4) * std::pow(mu * re, 1.5) / denom;
    e.beta = s.longitude - alpha;
    if (e.beta > M_PI) e.beta -= 2.0 * M_PI;
    if (e.beta < -M_PI) e.beta += 2.0 * M_PI;
    return e;
}

inline SphericalState elements_to_spherical(const ElementState& e, const GravityModel& gravity) {
    if (!(e.kappa > 0)) throw InversionError("elements_to_spherical: kappa must be positive");
    const double mu = gravity.mu, re = gravity.earth_radius;
    const double ptheta = std::sqrt(mu * re) / e.kappa;
    const double denom = std::sqrt(mu / re) * e.lambda_e + mu / ptheta;
    if (!(denom > 0)) throw InversionError("elements_to_spherical: non-positive radius");
    SphericalState s;
    s.r = ptheta / denom;
    s.p_r = e.eta * std::sqrt(mu / re);
    double sv = e.s;
    if (std::abs(sv) > 1.0) {
        if (std::abs(sv) > 1.0 + 1e-9)
            throw InversionError("elements_to_spherical: |s| > 1");
        sv = std::clamp(sv, -1.0, 1.0);
    }
    s.latitude = std::asin(sv);
    const double cphi = std::sqrt(std::max(0.0, 1.0 - sv * sv));
    if (cphi <= 1e-12) throw InversionError("elements_to_spherical: polar latitude");
    s.p_phi = e.gamma * ptheta / cphi;
    s.p_lambda = e.rho * ptheta;
    const double alpha = detail::node_phase(sv, e.gamma, e.rho);
    s.longitude = e.beta + alpha;
    return s;
}

inline CartesianState elements_to_cartesian(const ElementState& e, const GravityModel& gravity) {
    return spherical_to_cartesian(elements_to_spherical(e, gravity));
}

inline ElementState cartesian_to_elements(const CartesianState& c, const GravityModel& gravity) {
    return spherical_to_elements(cartesian_to_spherical(c), gravity);
}

// Energy per unit mass in spherical coordinates, including the oblateness
// potential when enabled.
inline double hamiltonian(const SphericalState& s, const GravityModel& gravity) {
    const double cphi = std::cos(s.latitude);
    const double kinetic = 0.5 * (s.p_r * s.p_r + s.p_phi * s.p_phi / (s.r * s.r) +
                                  s.p_lambda * s.p_lambda / (s.r * s.r * cphi * cphi));
    double h = kinetic - gravity.mu / s.r;
    const double j2 = gravity.effective_j2();
    if (j2 != 0.0) {
        const double sphi = std::sin(s.latitude);
        h += 0.5 * gravity.mu * gravity.earth_radius * gravity.earth_radius * j2 /
             (s.r * s.r * s.r) * (3.0 * sphi * sphi - 1.0);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Element-space dynamics: derivatives with respect to the in-plane angle
// theta (radians). With J2 disabled the system is the exact linear rotation
// of (lambda_e, eta) and (s, gamma); the J2 terms are polynomial, degree 7.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd element_dynamics(const Eigen::VectorXd& x, const GravityModel& gravity) {
    if (x.size() != 8) throw ArgumentError("element_dynamics: state must have 8 entries");
    const double L = x[0], eta = x[1], s = x[2], g = x[3], k = x[4], chi = x[6], rho = x[7];
    const double J2 = gravity.effective_j2();
    Eigen::VectorXd d(8);
    const double k3 = k * k * k;
    const double lpk = L + k;
    d[0] = -eta - 3.0 * J2 * s * g * k3 * lpk * (L + 2.0 * k);
    d[1] = L + 1.5 * J2 * k3 * lpk * lpk * (3.0 * s * s - 1.0);
    d[2] = g;
    d[3] = -s - 3.0 * J2 * s * rho * rho * k3 * lpk;
    d[4] = 3.0 * J2 * s * g * k3 * k * lpk;
    d[5] = -3.0 * J2 * s * s * chi * lpk;
    d[6] = 12.0 * J2 * s * g * chi * k3 * lpk + 6.0 * J2 * s * rho * chi * chi * lpk;
    d[7] = 3.0 * J2 * s * g * rho * k3 * lpk;
    return d;
}

// The same field in expanded monomial form (degree <= 7), used by the exact
// factorized Galerkin assembly. Variable order matches ElementState.
inline std::vector<Polynomial> element_dynamics_polynomial(const GravityModel& gravity) {
    const double J2 = gravity.effective_j2();
    enum { L = 0, ETA = 1, S = 2, G = 3, K = 4, B = 5, X = 6, RHO = 7 };
    std::vector<Polynomial> f(8, Polynomial(8));
    auto mono = [](std::initializer_list<std::pair<int, int>> powers) {
        std::vector<int> e(8, 0);
        for (auto [var, p] : powers) e[static_cast<std::size_t>(var)] = p;
        return e;
    };
    // d lambda_e = -eta - 3 J2 s g k^3 (L^2 + 3 L k + 2 k^2)
    f[0].add_term(-1.0, mono({{ETA, 1}}));
    f[0].add_term(-3.0 * J2, mono({{S, 1}, {G, 1}, {K, 3}, {L, 2}}));
    f[0].add_term(-9.0 * J2, mono({{S, 1}, {G, 1}, {K, 4}, {L, 1}}));
    f[0].add_term(-6.0 * J2, mono({{S, 1}, {G, 1}, {K, 5}}));
    // d eta = L + 1.5 J2 k^3 (L+k)^2 (3 s^2 - 1)
    f[1].add_term(1.0, mono({{L, 1}}));
    const double c15 = 1.5 * J2;
    const std::array<std::array<int, 3>, 3> sq = {{{1, 2, 3}, {2, 1, 4}, {1, 0, 5}}};
    for (const auto& [cf, el, ek] : sq) {
        f[1].add_term(3.0 * c15 * cf, mono({{S, 2}, {L, el}, {K, ek}}));
        f[1].add_term(-c15 * cf, mono({{L, el}, {K, ek}}));
    }
    // d s = g
    f[2].add_term(1.0, mono({{G, 1}}));
    // d gamma = -s - 3 J2 s rho^2 k^3 (L + k)
    f[3].add_term(-1.0, mono({{S, 1}}));
    f[3].add_term(-3.0 * J2, mono({{S, 1}, {RHO, 2}, {K, 3}, {L, 1}}));
    f[3].add_term(-3.0 * J2, mono({{S, 1}, {RHO, 2}, {K, 4}}));
    // d kappa = 3 J2 s g k^4 (L + k)
    f[4].add_term(3.0 * J2, mono({{S, 1}, {G, 1}, {K, 4}, {L, 1}}));
    f[4].add_term(3.0 * J2, mono({{S, 1}, {G, 1}, {K, 5}}));
    // d beta = -3 J2 s^2 chi (L + k)
    f[5].add_term(-3.0 * J2, mono({{S, 2}, {X, 1}, {L, 1}}));
    f[5].add_term(-3.0 * J2, mono({{S, 2}, {X, 1}, {K, 1}}));
    // d chi = 12 J2 s g chi k^3 (L + k) + 6 J2 s rho chi^2 (L + k)
    f[6].add_term(12.0 * J2, mono({{S, 1}, {G, 1}, {X, 1}, {K, 3}, {L, 1}}));
    f[6].add_term(12.0 * J2, mono({{S, 1}, {G, 1}, {X, 1}, {K, 4}}));
    f[6].add_term(6.0 * J2, mono({{S, 1}, {RHO, 1}, {X, 2}, {L, 1}}));
    f[6].add_term(6.0 * J2, mono({{S, 1}, {RHO, 1}, {X, 2}, {K, 1}}));
    // d rho = 3 J2 s g rho k^3 (L + k)
    f[7].add_term(3.0 * J2, mono({{S, 1}, {G, 1}, {RHO, 1}, {K, 3}, {L, 1}}));
    f[7].add_term(3.0 * J2, mono({{S, 1}, {G, 1}, {RHO, 1}, {K, 4}}));
    return f;
}

inline constexpr int kElementDynamicsDegree = 7;

}  // namespace kolambert
