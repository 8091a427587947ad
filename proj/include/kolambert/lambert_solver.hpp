#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/koopman.hpp"
#include "kolambert/lambert_geometry.hpp"
#include "kolambert/numeric_propagation.hpp"
#include "kolambert/orbital_elements.hpp"

namespace kolambert {

struct LambertProblem {
    Vector3d r0;       // km
    Vector3d rf;       // km
    double tof = 0.0;  // s
    int revolutions = 0;
    GravityModel gravity;
    bool prograde = true;

    void validate() const {
        gravity.validate();
        if (!(tof > 0)) throw ArgumentError("LambertProblem: tof must be positive");
        if (revolutions < 0) throw ArgumentError("LambertProblem: revolutions must be >= 0");
        if (revolutions == 0 && r0.cross(rf).norm() <= 1e-12 * r0.norm() * rf.norm() &&
            r0.dot(rf) < 0)
            throw DegenerateGeometryError("LambertProblem: anti-parallel geometry");
    }
};

enum class JacobianMode { spectral_stm, finite_difference };

struct SolverConfig {
    double lm_initial_damping = 1e-3;
    double lm_tolerance_position = 1e-8;  // km
    double lm_tolerance_time = 1e-6;      // s
    int max_iterations = 200;
    JacobianMode jacobian_mode = JacobianMode::spectral_stm;
    double time_weight = 1.0;   // km of position residual per second of time error
    double step_clamp = 1.0;    // km/s, largest velocity update per LM step
    bool prescale_magnitude = true;

    void validate() const {
        if (!(lm_initial_damping > 0) || !(lm_tolerance_position > 0) ||
            !(lm_tolerance_time > 0) || !(time_weight > 0) || !(step_clamp > 0))
            throw ArgumentError("SolverConfig: all scales must be positive");
        if (max_iterations < 1) throw ArgumentError("SolverConfig: max_iterations must be >= 1");
    }
};

struct TransferSolution {
    Vector3d v0 = Vector3d::Zero();   // km/s
    double delta_theta = 0.0;         // rad, including 2*pi*N
    double position_residual = 0.0;   // km
    double tof_residual = 0.0;        // s
    double specific_energy = 0.0;     // kJ/kg
    double semi_major_axis = 0.0;     // km
    int iterations = 0;
    long evaluations = 0;  // residual evaluations, including seed conditioning
    bool converged = false;
};

// ---------------------------------------------------------------------------
// Model construction for the element dynamics
// ---------------------------------------------------------------------------

inline KoopmanModel build_element_model(const GravityModel& gravity, int max_order,
                                        const DomainBox& domain,
                                        std::int64_t basis_cap = 20000) {
    gravity.validate();
    DynamicsField dynamics;
    dynamics.dimension = ElementState::dimension;
    dynamics.evaluate = [gravity](const VectorXd& x) { return element_dynamics(x, gravity); };
    dynamics.polynomial_degree = kElementDynamicsDegree;
    dynamics.polynomial = element_dynamics_polynomial(gravity);
    const BasisSet basis = build_basis(ElementState::dimension, max_order, domain, basis_cap);
    return build_koopman_model(dynamics, basis);
}

// Default per-element half-width floors for the automatic domain box. The
// envelope of the circular seed trajectory is degenerate in several elements
// (it is a single orbit), so the floors keep the box wide enough to contain
// the solver's search path.
struct DomainFloors {
    double lambda_eta = 0.6;
    double s_gamma = 0.15;
    double kappa_rel = 0.35;   // relative to the seed kappa
    double beta = 0.35;
    double chi_rel = 0.8;      // relative to the seed chi; chi scales like kappa^3
    double chi_abs = 0.05;
    double rho = 0.15;
};

// Domain box sized from two sources: the circular-seed trajectory over the
// full transfer angle, and the Keplerian family members matching the
// requested time of flight (so the box contains the expected solution).
// The per-element envelope of both is inflated and floored.
inline DomainBox auto_domain_box(const LambertProblem& problem, double inflate = 1.5,
                                 const DomainFloors& floors = {}) {
    problem.validate();
    const double theta_f =
        delta_theta(problem.r0, problem.rf, problem.revolutions, problem.prograde);
    const Vector3d seed =
        circular_velocity_guess(problem.r0, problem.rf, problem.gravity, problem.prograde);
    const ElementState x0 =
        cartesian_to_elements(CartesianState{problem.r0, seed}, problem.gravity);
    IntegratorConfig cfg;
    cfg.rel_tolerance = 1e-10;
    cfg.abs_tolerance = 1e-12;
    const ElementTrajectory traj =
        propagate_elements_numeric(x0.to_vector(), theta_f, problem.gravity, cfg);
    VectorXd lo = traj.states.front(), hi = traj.states.front();
    for (const auto& x : traj.states) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    const double dth_base = delta_theta(problem.r0, problem.rf, 0, problem.prograde);
    for (double p : family_parameters_for_time(problem.r0, problem.rf, problem.tof,
                                               problem.revolutions, problem.prograde,
                                               problem.gravity.mu)) {
        try {
            const Vector3d v_fam =
                family_member_velocity(problem.r0, problem.rf, dth_base, p, problem.gravity.mu);
            const ElementState xf =
                cartesian_to_elements(CartesianState{problem.r0, v_fam}, problem.gravity);
            const ElementTrajectory ft =
                propagate_elements_numeric(xf.to_vector(), theta_f, problem.gravity, cfg);
            for (const auto& x : ft.states) {
                lo = lo.cwiseMin(x);
                hi = hi.cwiseMax(x);
            }
        } catch (const Error&) {
            // singular family member; the floors still apply
        }
    }
    const VectorXd center = 0.5 * (lo + hi);
    const VectorXd half = 0.5 * (hi - lo) * inflate;
    VectorXd box_lo = center - half;
    VectorXd box_hi = center + half;
    // the floors guarantee LM room around the circular seed regardless of how
    // far the envelope wandered
    const VectorXd seed_vec = x0.to_vector();
    const double floor[8] = {floors.lambda_eta,
                             floors.lambda_eta,
                             floors.s_gamma,
                             floors.s_gamma,
                             floors.kappa_rel * std::abs(seed_vec[4]),
                             floors.beta,
                             std::max(floors.chi_rel * std::abs(seed_vec[6]), floors.chi_abs),
                             floors.rho};
    for (int j = 0; j < 8; ++j) {
        box_lo[j] = std::min(box_lo[j], seed_vec[j] - floor[j]);
        box_hi[j] = std::max(box_hi[j], seed_vec[j] + floor[j]);
    }
    return DomainBox(box_lo, box_hi);
}

// Smallest box containing both arguments, dimension by dimension.
inline DomainBox merge_boxes(const DomainBox& a, const DomainBox& b) {
    return DomainBox(a.lower.cwiseMin(b.lower), a.upper.cwiseMax(b.upper));
}

// ---------------------------------------------------------------------------
// Residual machinery
// ---------------------------------------------------------------------------

namespace detail {

struct TofQuadrature {
    std::vector<double> thetas;
    std::vector<double> weights;
};

inline TofQuadrature tof_quadrature(double theta_span, int points_per_panel = 24) {
    const int panels = std::max(2, static_cast<int>(std::ceil(theta_span / (0.5 * M_PI))));
    const GaussLegendreRule rule = gauss_legendre_rule(points_per_panel);
    TofQuadrature q;
    const double step = theta_span / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * step;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            q.thetas.push_back(mid + 0.5 * step * rule.nodes[i]);
            q.weights.push_back(0.5 * step * rule.weights[i]);
        }
    }
    return q;
}

// dt/dtheta = r^2 / p_theta expressed through (lambda_e, kappa).
inline double tof_integrand(const VectorXd& x, const GravityModel& gravity) {
    const double ptheta = std::sqrt(gravity.mu * gravity.earth_radius) / x[4];
    const double denom = std::sqrt(gravity.mu / gravity.earth_radius) * x[0] + gravity.mu / ptheta;
    if (!(denom > 0) || !(ptheta > 0))
        throw PropagationError("time_of_flight: radius inversion failed along the trajectory");
    const double r = ptheta / denom;
    return r * r / ptheta;
}

// gradient of the integrand with respect to the element state (only the
// lambda_e and kappa entries are nonzero)
inline void tof_integrand_gradient(const VectorXd& x, const GravityModel& gravity, VectorXd& out) {
    const double mu = gravity.mu, re = gravity.earth_radius;
    const double ptheta = std::sqrt(mu * re) / x[4];
    const double G = std::sqrt(mu / re) * x[0] + mu / ptheta;
    out.setZero();
    out[0] = -2.0 * std::sqrt(mu / re) * ptheta / (G * G * G);
    out[4] = -ptheta / (x[4] * G * G) - 2.0 * mu / (x[4] * G * G * G);
}

}  // namespace detail

// Time of flight along the spectrally propagated trajectory, by composite
// Gauss-Legendre quadrature of r^2 / p_theta in theta.
inline double time_of_flight(const KoopmanModel& model, const VectorXd& x0, double theta_span,
                             const GravityModel& gravity) {
    if (theta_span < 0) throw ArgumentError("time_of_flight: theta_span must be >= 0");
    if (theta_span == 0) return 0.0;
    const SpectralPropagator prop(model, x0);
    const auto quad = detail::tof_quadrature(theta_span);
    double total = 0.0;
    for (std::size_t i = 0; i < quad.thetas.size(); ++i)
        total += quad.weights[i] * detail::tof_integrand(prop.observables(quad.thetas[i]), gravity);
    return total;
}

class ShootingContext {
  public:
    ShootingContext(const LambertProblem& problem, const KoopmanModel& model,
                    const SolverConfig& config)
        : problem_(problem),
          model_(&model),
          config_(config),
          theta_f_(delta_theta(problem.r0, problem.rf, problem.revolutions, problem.prograde)),
          quad_(detail::tof_quadrature(theta_f_)) {}

    double transfer_angle() const { return theta_f_; }

    // 4-residual: three position components (km) and the weighted time error.
    Eigen::Vector4d residual(const Vector3d& v0) const {
        const ElementState x0 =
            cartesian_to_elements(CartesianState{problem_.r0, v0}, problem_.gravity);
        const SpectralPropagator prop(*model_, x0.to_vector());
        const VectorXd xf = prop.observables(theta_f_);
        const CartesianState endpoint =
            elements_to_cartesian(ElementState::from_vector(xf), problem_.gravity);
        double tof = 0.0;
        for (std::size_t i = 0; i < quad_.thetas.size(); ++i)
            tof += quad_.weights[i] *
                   detail::tof_integrand(prop.observables(quad_.thetas[i]), problem_.gravity);
        Eigen::Vector4d r;
        r.head<3>() = endpoint.position - problem_.rf;
        r[3] = config_.time_weight * (tof - problem_.tof);
        return r;
    }

    std::optional<Eigen::Vector4d> residual_checked(const Vector3d& v0) const {
        ++evaluation_count_;
        try {
            Eigen::Vector4d r = residual(v0);
            if (!r.allFinite()) return std::nullopt;
            return r;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    // Jacobian of the residual with respect to v0, via the spectral state
    // transition matrices chained with finite-differenced coordinate
    // transforms, or by full finite differences of the residual.
    std::optional<Eigen::Matrix<double, 4, 3>> jacobian(const Vector3d& v0,
                                                        const Eigen::Vector4d& base) const {
        if (config_.jacobian_mode == JacobianMode::finite_difference) {
            Eigen::Matrix<double, 4, 3> J;
            const double h = 1e-7;
            for (int k = 0; k < 3; ++k) {
                Vector3d vp = v0, vm = v0;
                vp[k] += h;
                vm[k] -= h;
                const auto rp = residual_checked(vp);
                const auto rm = residual_checked(vm);
                if (rp && rm) {
                    J.col(k) = (*rp - *rm) / (2.0 * h);
                } else if (rp) {
                    J.col(k) = (*rp - base) / h;
                } else if (rm) {
                    J.col(k) = (base - *rm) / h;
                } else {
                    return std::nullopt;
                }
            }
            return J;
        }
        return spectral_jacobian(v0);
    }

  private:
    std::optional<Eigen::Matrix<double, 4, 3>> spectral_jacobian(const Vector3d& v0) const {
        try {
            const GravityModel& grav = problem_.gravity;
            const ElementState x0 = cartesian_to_elements(CartesianState{problem_.r0, v0}, grav);
            const VectorXd x0v = x0.to_vector();
            // d(elements)/d(v0), central differences on the forward transform
            Eigen::Matrix<double, 8, 3> dx0_dv;
            const double hv = 1e-6;
            for (int k = 0; k < 3; ++k) {
                Vector3d vp = v0, vm = v0;
                vp[k] += hv;
                vm[k] -= hv;
                const VectorXd ep =
                    cartesian_to_elements(CartesianState{problem_.r0, vp}, grav).to_vector();
                const VectorXd em =
                    cartesian_to_elements(CartesianState{problem_.r0, vm}, grav).to_vector();
                dx0_dv.col(k) = (ep - em) / (2.0 * hv);
            }
            const SpectralPropagator prop(*model_, x0v);
            // position block
            const VectorXd xf = prop.observables(theta_f_);
            const MatrixXd stm_f = prop.state_transition(theta_f_);
            Eigen::Matrix<double, 3, 8> dpos_dxf;
            for (int j = 0; j < 8; ++j) {
                const double hx = 1e-7 * (1.0 + std::abs(xf[j]));
                VectorXd xp = xf, xm = xf;
                xp[j] += hx;
                xm[j] -= hx;
                const Vector3d pp =
                    elements_to_cartesian(ElementState::from_vector(xp), grav).position;
                const Vector3d pm =
                    elements_to_cartesian(ElementState::from_vector(xm), grav).position;
                dpos_dxf.col(j) = (pp - pm) / (2.0 * hx);
            }
            // time block, accumulated over the quadrature nodes
            Eigen::RowVector<double, 8> dtof_dx0 = Eigen::RowVector<double, 8>::Zero();
            VectorXd grad(8);
            for (std::size_t i = 0; i < quad_.thetas.size(); ++i) {
                const VectorXd xi = prop.observables(quad_.thetas[i]);
                detail::tof_integrand_gradient(xi, grav, grad);
                dtof_dx0 += quad_.weights[i] * grad.transpose() *
                            prop.state_transition(quad_.thetas[i]);
            }
            Eigen::Matrix<double, 4, 3> J;
            J.topRows<3>() = dpos_dxf * stm_f * dx0_dv;
            J.row(3) = config_.time_weight * dtof_dx0 * dx0_dv;
            if (!J.allFinite()) return std::nullopt;
            return J;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

  public:
    long evaluations() const { return evaluation_count_; }

  private:
    LambertProblem problem_;
    const KoopmanModel* model_;
    SolverConfig config_;
    double theta_f_;
    detail::TofQuadrature quad_;
    mutable long evaluation_count_ = 0;
};

namespace detail {

// Single-revolution seed from the geometric transfer family: the member
// whose Keplerian time matches the request, validated against the model.
inline std::optional<Vector3d> family_time_seed(const ShootingContext& ctx,
                                                const LambertProblem& problem) {
    const auto roots = family_parameters_for_time(problem.r0, problem.rf, problem.tof,
                                                  problem.revolutions, problem.prograde,
                                                  problem.gravity.mu);
    const double dth_base = delta_theta(problem.r0, problem.rf, 0, problem.prograde);
    for (double p : roots) {
        const Vector3d v =
            family_member_velocity(problem.r0, problem.rf, dth_base, p, problem.gravity.mu);
        if (ctx.residual_checked(v)) return v;
    }
    return std::nullopt;
}

// Pre-conditioning of the circular seed. Stage one marches and bisects the
// speed along the guess direction until the time-of-flight residual changes
// sign. When the perpendicular ray cannot reach the requested time, the
// single-revolution path re-seeds from the geometric transfer family and the
// multi-revolution path tilts the launch direction toward radial instead.
inline Vector3d prescale_seed(const ShootingContext& ctx, const LambertProblem& problem,
                              const Vector3d& guess, double time_weight) {
    const Vector3d r0 = problem.r0;
    const double mu = problem.gravity.mu;
    const double m0 = guess.norm();
    const Vector3d dir = guess / m0;
    const Vector3d radial = r0.normalized();
    const double v_escape = std::sqrt(2.0 * mu / r0.norm());
    auto tres_at = [&](const Vector3d& v) -> std::optional<double> {
        const auto r = ctx.residual_checked(v);
        if (!r) return std::nullopt;
        return (*r)[3] / time_weight;
    };
    auto tres = [&](double m) { return tres_at(m * dir); };
    const auto t0 = tres(m0);
    if (!t0) return guess;
    double lo = m0, hi = m0;
    bool bracketed = false;
    if (*t0 == 0.0) return guess;
    if (*t0 < 0) {  // arriving early: slow down along a larger orbit
        double last_valid = m0;
        for (int i = 0; i < 160; ++i) {
            hi *= 1.04;
            const auto t = tres(hi);
            if (!t) {
                hi = last_valid;
                break;
            }
            last_valid = hi;
            if (*t >= 0) {
                bracketed = true;
                break;
            }
        }
    } else {
        double last_valid = m0;
        for (int i = 0; i < 160; ++i) {
            lo *= 0.96;
            const auto t = tres(lo);
            if (!t) {
                lo = last_valid;
                break;
            }
            last_valid = lo;
            if (*t <= 0) {
                bracketed = true;
                break;
            }
        }
    }
    if (bracketed) {
        for (int i = 0; i < 90; ++i) {
            const double mid = 0.5 * (lo + hi);
            const auto t = tres(mid);
            if (!t || *t > 0)
                hi = mid;
            else
                lo = mid;
        }
        const double m = 0.5 * (lo + hi);
        if (tres(m)) return m * dir;
        return guess;
    }
    {
        const auto family = family_time_seed(ctx, problem);
        if (family) return *family;
    }
    // tilt the launch direction; stay on the elliptic side of escape so the
    // seed remains a bound orbit
    const double m_edge = (*t0 < 0) ? std::min(hi, 0.95 * v_escape) : lo;
    const double sign = (*t0 < 0) ? 1.0 : -1.0;  // outward tilt slows the arc down
    auto tilted = [&](double psi) {
        return (m_edge * (std::cos(psi) * dir + std::sin(psi) * radial)).eval();
    };
    double psi_lo = 0.0, psi_hi = 0.0, last_valid = 0.0;
    bool tilt_bracketed = false;
    for (int i = 1; i <= 17; ++i) {
        const double psi = sign * (i * 5.0) * M_PI / 180.0;
        const auto t = tres_at(tilted(psi));
        if (!t) break;
        last_valid = psi;
        if ((*t >= 0) == (*t0 < 0)) {
            psi_hi = psi;
            tilt_bracketed = true;
            break;
        }
        psi_lo = psi;
    }
    if (!tilt_bracketed) {
        const auto t = tres_at(tilted(last_valid));
        return t ? tilted(last_valid) : m_edge * dir;
    }
    for (int i = 0; i < 70; ++i) {
        const double mid = 0.5 * (psi_lo + psi_hi);
        const auto t = tres_at(tilted(mid));
        const bool crossed = t ? ((*t >= 0) == (*t0 < 0)) : true;
        if (crossed)
            psi_hi = mid;
        else
            psi_lo = mid;
    }
    const double psi = 0.5 * (psi_lo + psi_hi);
    const auto t = tres_at(tilted(psi));
    return t ? tilted(psi) : m_edge * dir;
}

}  // namespace detail

namespace detail {

struct LmState {
    Vector3d v = Vector3d::Zero();
    Eigen::Vector4d residual = Eigen::Vector4d::Zero();
    int iterations = 0;
    bool converged = false;
};

inline bool meets_tolerances(const Eigen::Vector4d& r, const SolverConfig& cfg) {
    return r.head<3>().norm() <= cfg.lm_tolerance_position &&
           std::abs(r[3]) / cfg.time_weight <= cfg.lm_tolerance_time;
}

// Damped Levenberg-Marquardt descent on the full 4-residual.
inline void lm_minimize(const ShootingContext& ctx, const SolverConfig& cfg, LmState& st,
                        int budget) {
    double damping = cfg.lm_initial_damping;
    double cost = st.residual.squaredNorm();
    st.converged = meets_tolerances(st.residual, cfg);
    int used = 0;
    while (!st.converged && used < budget) {
        ++used;
        ++st.iterations;
        const auto J = ctx.jacobian(st.v, st.residual);
        if (!J) break;
        const Eigen::Matrix3d JtJ = J->transpose() * (*J);
        const Eigen::Vector3d g = J->transpose() * st.residual;
        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::Matrix3d M = JtJ;
            for (int d = 0; d < 3; ++d) M(d, d) += damping * std::max(JtJ(d, d), 1e-12);
            Eigen::Vector3d step = M.ldlt().solve(-g);
            if (!step.allFinite()) {
                damping *= 10.0;
                continue;
            }
            if (step.norm() > cfg.step_clamp) step *= cfg.step_clamp / step.norm();
            const Vector3d trial = st.v + step;
            const auto rt = ctx.residual_checked(trial);
            if (rt && rt->squaredNorm() < cost) {
                st.v = trial;
                st.residual = *rt;
                cost = rt->squaredNorm();
                damping = std::max(damping * 0.3, 1e-14);
                accepted = true;
                break;
            }
            damping *= 8.0;
        }
        if (!accepted) break;
        st.converged = meets_tolerances(st.residual, cfg);
    }
}

// Project the current iterate onto the family of orbits through both
// endpoints: pseudo-inverse Gauss-Newton on the position block, moving
// transversally to the family tangent.
inline bool project_to_position_family(const ShootingContext& ctx, const SolverConfig& cfg,
                                       LmState& st, double target) {
    for (int iter = 0; iter < 60; ++iter) {
        if (st.residual.head<3>().norm() <= target) return true;
        const auto J = ctx.jacobian(st.v, st.residual);
        if (!J) return false;
        const Eigen::Matrix3d J3 = J->topRows<3>();
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(J3, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Eigen::Vector3d& sig = svd.singularValues();
        Eigen::Vector3d step = Eigen::Vector3d::Zero();
        for (int k = 0; k < 3; ++k) {
            if (sig[k] <= 1e-6 * sig[0]) continue;
            step -= (svd.matrixU().col(k).dot(st.residual.head<3>()) / sig[k]) *
                    svd.matrixV().col(k);
        }
        bool accepted = false;
        for (int half = 0; half < 25; ++half) {
            Eigen::Vector3d trial_step = step;
            if (trial_step.norm() > cfg.step_clamp)
                trial_step *= cfg.step_clamp / trial_step.norm();
            const auto rt = ctx.residual_checked(st.v + trial_step);
            ++st.iterations;
            if (rt && rt->head<3>().norm() < st.residual.head<3>().norm()) {
                st.v += trial_step;
                st.residual = *rt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) return st.residual.head<3>().norm() <= target;
    }
    return st.residual.head<3>().norm() <= target;
}

// Predictor-corrector walk along the position family until the time residual
// crosses zero. The family tangent is the null direction of the position
// Jacobian; the Jacobian time row gives the time slope along it.
inline void walk_family_in_time(const ShootingContext& ctx, const SolverConfig& cfg,
                                LmState& st) {
    const double pos_loose = std::max(1e-3, cfg.lm_tolerance_position);
    if (!project_to_position_family(ctx, cfg, st, pos_loose)) return;
    Eigen::Vector3d previous_tangent = Eigen::Vector3d::Zero();
    for (int iter = 0; iter < 300; ++iter) {
        if (meets_tolerances(st.residual, cfg)) {
            st.converged = true;
            return;
        }
        const auto J = ctx.jacobian(st.v, st.residual);
        if (!J) return;
        const Eigen::Matrix3d J3 = J->topRows<3>();
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(J3, Eigen::ComputeFullV);
        Eigen::Vector3d tangent = svd.matrixV().col(2);
        if (previous_tangent.norm() > 0 && tangent.dot(previous_tangent) < 0)
            tangent = -tangent;
        const double time_slope = J->row(3).dot(tangent) / cfg.time_weight;
        if (std::abs(time_slope) < 1e-12) return;
        const double t_res = st.residual[3] / cfg.time_weight;
        double s = std::clamp(-t_res / time_slope, -cfg.step_clamp, cfg.step_clamp);
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            LmState trial = st;
            trial.v = st.v + s * tangent;
            const auto rt = ctx.residual_checked(trial.v);
            ++st.iterations;
            if (rt) {
                trial.residual = *rt;
                trial.iterations = st.iterations;
                if (project_to_position_family(ctx, cfg, trial, pos_loose) &&
                    std::abs(trial.residual[3]) < std::abs(st.residual[3])) {
                    st = trial;
                    previous_tangent = tangent;
                    accepted = true;
                    break;
                }
                st.iterations = trial.iterations;
            }
            s *= 0.5;
        }
        if (!accepted) return;
    }
}

}  // namespace detail

// Levenberg-Marquardt shooting: minimizes the 4-residual over the three
// components of the departure velocity. When plain descent stalls far from
// the solution (long coasting transfers), the solver walks the
// position-matched orbit family until the time constraint is met, then
// polishes with the same Levenberg-Marquardt loop.
inline TransferSolution solve_seeded(const LambertProblem& problem, const KoopmanModel& model,
                                     const SolverConfig& config,
                                     std::optional<Vector3d> seed = std::nullopt) {
    problem.validate();
    config.validate();
    const ShootingContext ctx(problem, model, config);

    Vector3d v = seed ? *seed
                      : circular_velocity_guess(problem.r0, problem.rf, problem.gravity,
                                                problem.prograde);
    if (!seed && config.prescale_magnitude)
        v = detail::prescale_seed(ctx, problem, v, config.time_weight);

    auto res = ctx.residual_checked(v);
    if (!res)
        throw SolverError(
            "solve: residual undefined at the initial guess; widen the domain box or supply a "
            "different seed");

    detail::LmState st;
    st.v = v;
    st.residual = *res;
    detail::lm_minimize(ctx, config, st, config.max_iterations);
    if (!st.converged) {
        // restart from the conditioned seed: the stalled iterate may sit on a
        // spurious family branch pinned against the domain wall
        detail::LmState walk;
        walk.v = v;
        walk.residual = *res;
        walk.iterations = st.iterations;
        detail::walk_family_in_time(ctx, config, walk);
        if (walk.converged || walk.residual.squaredNorm() < st.residual.squaredNorm()) st = walk;
        if (!st.converged) detail::lm_minimize(ctx, config, st, config.max_iterations);
    }

    TransferSolution sol;
    sol.delta_theta = ctx.transfer_angle();
    sol.v0 = st.v;
    sol.position_residual = st.residual.head<3>().norm();
    sol.tof_residual = st.residual[3] / config.time_weight;
    sol.iterations = st.iterations;
    sol.evaluations = ctx.evaluations();
    sol.converged = st.converged;
    const double r0n = problem.r0.norm();
    sol.semi_major_axis = 1.0 / (2.0 / r0n - st.v.squaredNorm() / problem.gravity.mu);
    sol.specific_energy = -problem.gravity.mu / (2.0 * sol.semi_major_axis);
    return sol;
}

inline TransferSolution solve(const LambertProblem& problem, const KoopmanModel& model,
                              const SolverConfig& config = {}) {
    return solve_seeded(problem, model, config);
}

// ---------------------------------------------------------------------------
// Energy scan over a time-of-flight grid
// ---------------------------------------------------------------------------

struct ScanPoint {
    double tof = 0.0;
    TransferSolution solution;
    bool failed = false;  // residual machinery threw; solution holds defaults
};

struct EnergyScanResult {
    std::vector<ScanPoint> points;
    std::optional<std::size_t> argmin;  // grid argmin of specific energy among converged points
    long total_iterations = 0;
    long total_evaluations = 0;
};

inline EnergyScanResult energy_scan(LambertProblem problem, const std::vector<double>& tof_grid,
                                    const KoopmanModel& model, const SolverConfig& config,
                                    bool warm_start = true) {
    if (tof_grid.empty()) throw ArgumentError("energy_scan: empty grid");
    EnergyScanResult out;
    std::optional<Vector3d> seed;
    for (double tof : tof_grid) {
        problem.tof = tof;
        ScanPoint point;
        point.tof = tof;
        try {
            point.solution = solve_seeded(problem, model, config, seed);
            if (warm_start && point.solution.converged) seed = point.solution.v0;
        } catch (const Error&) {
            point.failed = true;
        }
        out.total_iterations += point.solution.iterations;
        out.total_evaluations += point.solution.evaluations;
        out.points.push_back(point);
    }
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        const auto& p = out.points[i];
        if (p.failed || !p.solution.converged) continue;
        if (!out.argmin || p.solution.specific_energy <
                               out.points[*out.argmin].solution.specific_energy)
            out.argmin = i;
    }
    return out;
}

}  // namespace kolambert
