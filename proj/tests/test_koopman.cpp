#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <random>

#include "kolambert/koopman.hpp"
#include "kolambert/lambert_solver.hpp"
#include "kolambert/numeric_propagation.hpp"
#include "kolambert/orbital_elements.hpp"

using namespace kolambert;

namespace {

DynamicsField harmonic_rotation() {
    DynamicsField f;
    f.dimension = 2;
    f.polynomial_degree = 1;
    f.evaluate = [](const VectorXd& x) {
        VectorXd d(2);
        d << -x[1], x[0];
        return d;
    };
    std::vector<Polynomial> poly(2, Polynomial(2));
    poly[0].add_term(-1.0, {0, 1});
    poly[1].add_term(1.0, {1, 0});
    f.polynomial = poly;
    return f;
}

GravityModel gravity_j2(bool enabled) {
    GravityModel g;
    g.j2_enabled = enabled;
    return g;
}

DynamicsField element_field(const GravityModel& g) {
    DynamicsField f;
    f.dimension = 8;
    f.polynomial_degree = kElementDynamicsDegree;
    f.evaluate = [g](const VectorXd& x) { return element_dynamics(x, g); };
    f.polynomial = element_dynamics_polynomial(g);
    return f;
}

// A representative inclined elliptical state in element coordinates.
VectorXd sample_elements() {
    const GravityModel g = gravity_j2(false);
    const CartesianState cart{Vector3d(5000.0, 10000.0, 2100.0),
                              Vector3d(-5.9924950, 1.9253667, 3.2456380)};
    return cartesian_to_elements(cart, g).to_vector();
}

DomainBox element_box(const VectorXd& x0, double pad) {
    VectorXd lo = x0.array() - pad;
    VectorXd hi = x0.array() + pad;
    return DomainBox(lo, hi);
}

}  // namespace

TEST_CASE("zero dynamics gives a zero Koopman matrix") {
    DynamicsField f;
    f.dimension = 2;
    f.polynomial_degree = 0;
    f.evaluate = [](const VectorXd& x) { return VectorXd::Zero(x.size()).eval(); };
    const BasisSet basis = build_basis(2, 2, DomainBox::unit_cube(2));
    const MatrixXd K = build_koopman_matrix(f, basis);
    CHECK(K.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("harmonic rotation projects onto the rotation generator") {
    const BasisSet basis = build_basis(2, 1, DomainBox::unit_cube(2));
    const MatrixXd K = build_koopman_matrix(harmonic_rotation(), basis);
    // index 1 is the degree-1 function of x_2, index 2 of x_1
    CHECK(K(1, 2) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(K(2, 1) == doctest::Approx(-1.0).epsilon(1e-13));
    CHECK(K.row(0).norm() <= 1e-14);
    CHECK(K(1, 1) == doctest::Approx(0.0));
    CHECK(K(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("factorized and grid assemblies agree") {
    SUBCASE("synthetic cubic dynamics, d = 2") {
        DynamicsField f;
        f.dimension = 2;
        f.polynomial_degree = 3;
        std::vector<Polynomial> poly(2, Polynomial(2));
        poly[0].add_term(-1.0, {0, 1}).add_term(0.25, {2, 1});
        poly[1].add_term(1.0, {1, 0}).add_term(-0.125, {0, 3}).add_term(0.5, {1, 1});
        f.polynomial = poly;
        f.evaluate = [poly](const VectorXd& x) {
            VectorXd d(2);
            d << poly[0].evaluate(x), poly[1].evaluate(x);
            return d;
        };
        VectorXd lo(2), hi(2);
        lo << -1.3, -0.2;
        hi << 0.9, 1.7;
        const BasisSet basis = build_basis(2, 3, DomainBox(lo, hi));
        const MatrixXd Kf = build_koopman_matrix(f, basis);
        AssemblyOptions grid_opts;
        grid_opts.force_grid = true;
        const MatrixXd Kg = build_koopman_matrix(f, basis, grid_opts);
        CHECK((Kf - Kg).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("element dynamics with J2, d = 8, order 1") {
        const DynamicsField f = element_field(gravity_j2(true));
        const VectorXd x0 = sample_elements();
        const BasisSet basis = build_basis(8, 1, element_box(x0, 0.8));
        const MatrixXd Kf = build_koopman_matrix(f, basis);
        AssemblyOptions grid_opts;
        grid_opts.force_grid = true;
        const MatrixXd Kg = build_koopman_matrix(f, basis, grid_opts);
        CHECK((Kf - Kg).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("grid assembly is reproducible across worker counts") {
    const DynamicsField f = harmonic_rotation();
    const BasisSet basis = build_basis(2, 4, DomainBox::unit_cube(2));
    AssemblyOptions one, four;
    one.force_grid = true;
    four.force_grid = true;
    four.workers = 4;
    const MatrixXd K1 = build_koopman_matrix(f, basis, one);
    const MatrixXd K4 = build_koopman_matrix(f, basis, four);
    CHECK((K1 - K4).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("assembly reports non-finite dynamics with the node") {
    DynamicsField f;
    f.dimension = 1;
    f.polynomial_degree = 1;
    f.evaluate = [](const VectorXd& x) {
        VectorXd d(1);
        d << (x[0] > 0 ? std::numeric_limits<double>::quiet_NaN() : 0.0);
        return d;
    };
    const BasisSet basis = build_basis(1, 2, DomainBox::unit_cube(1));
    try {
        build_koopman_matrix(f, basis);
        FAIL("expected AssemblyError");
    } catch (const AssemblyError& e) {
        CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
}

TEST_CASE("eigendecompose basics") {
    SUBCASE("zero matrix") {
        const auto eig = eigendecompose(MatrixXd::Zero(4, 4));
        for (int i = 0; i < 4; ++i) CHECK(std::abs(eig.eigenvalues[i]) <= 1e-14);
        CHECK((eig.P * eig.P_inverse - MatrixXcd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(eig.diagnostics.diagonalizable);
    }
    SUBCASE("rotation generator") {
        MatrixXd K(2, 2);
        K << 0.0, -1.0, 1.0, 0.0;
        const auto eig = eigendecompose(K);
        double im0 = eig.eigenvalues[0].imag(), im1 = eig.eigenvalues[1].imag();
        CHECK(std::abs(std::abs(im0) - 1.0) <= 1e-14);
        CHECK(std::abs(std::abs(im1) - 1.0) <= 1e-14);
        CHECK(im0 * im1 < 0);
        CHECK(std::abs(eig.eigenvalues[0].real()) <= 1e-14);
    }
    SUBCASE("left-eigenvector residual on random matrices") {
        std::mt19937 rng(11);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int rep = 0; rep < 3; ++rep) {
            MatrixXd K(50, 50);
            for (int i = 0; i < 50; ++i)
                for (int j = 0; j < 50; ++j) K(i, j) = gauss(rng);
            const auto eig = eigendecompose(K);
            const MatrixXcd R = eig.P * K.cast<std::complex<double>>() -
                                eig.eigenvalues.asDiagonal() * eig.P;
            CHECK(R.norm() <= 1e-10 * K.norm());
            CHECK(eig.diagnostics.diagonalizable);
        }
    }
}

TEST_CASE("unperturbed element spectrum at order 1 is {0^5, +-i, +-i}") {
    const VectorXd x0 = sample_elements();
    const BasisSet basis = build_basis(8, 1, element_box(x0, 0.8));
    const MatrixXd K = build_koopman_matrix(element_field(gravity_j2(false)), basis);
    const auto eig = eigendecompose(K);
    int zeros = 0, plus_i = 0, minus_i = 0;
    for (int i = 0; i < 9; ++i) {
        const auto lam = eig.eigenvalues[i];
        if (std::abs(lam) <= 1e-10)
            ++zeros;
        else if (std::abs(lam - std::complex<double>(0, 1)) <= 1e-10)
            ++plus_i;
        else if (std::abs(lam - std::complex<double>(0, -1)) <= 1e-10)
            ++minus_i;
    }
    CHECK(zeros == 5);
    CHECK(plus_i == 2);
    CHECK(minus_i == 2);
    CHECK(eig.diagnostics.diagonalizable);
}

TEST_CASE("project_observables") {
    VectorXd lo(2), hi(2);
    lo << -1.0, -1.0;
    hi << 1.0, 1.0;
    const BasisSet basis = build_basis(2, 2, DomainBox(lo, hi));
    SUBCASE("constant observable hits the constant basis entry") {
        const MatrixXd A = project_observables({[](const VectorXd&) { return 1.0; }}, basis);
        CHECK(A(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(A.row(0).tail(A.cols() - 1).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("identity observable on the canonical cube") {
        const MatrixXd A = project_observables({[](const VectorXd& x) { return x[0]; }}, basis, 4);
        // single nonzero coefficient 1/sqrt(3) on the degree-1 index of dim 0
        double expected = 1.0 / std::sqrt(3.0);
        int nonzeros = 0;
        for (int j = 0; j < basis.size(); ++j) {
            if (std::abs(A(0, j)) > 1e-12) {
                ++nonzeros;
                CHECK(A(0, j) == doctest::Approx(expected).epsilon(1e-12));
                CHECK(basis.indices[static_cast<std::size_t>(j)].orders == std::vector<int>{1, 0});
            }
        }
        CHECK(nonzeros == 1);
        // matches the closed-form identity projection
        const MatrixXd AI = identity_projection(basis);
        CHECK((A.row(0) - AI.row(0)).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("quadratic observable reconstructs on the grid") {
        const MatrixXd A =
            project_observables({[](const VectorXd& x) { return x[1] * x[1]; }}, basis, 5);
        const QuadratureGrid grid = quadrature_grid(basis, 5);
        for (Eigen::Index n = 0; n < grid.size(); ++n) {
            const VectorXd L = eval_basis(basis, grid.nodes.row(n).transpose());
            const double got = A.row(0).dot(L);
            const double want = grid.nodes(n, 1) * grid.nodes(n, 1);
            CHECK(std::abs(got - want) <= 1e-12);
        }
    }
}

TEST_CASE("propagation on the harmonic oscillator is spectral and exact") {
    const BasisSet basis = build_basis(2, 1, DomainBox::unit_cube(2));
    const KoopmanModel model = build_koopman_model(harmonic_rotation(), basis);
    CHECK(model.diagonalizable);
    VectorXd x0(2);
    x0 << 0.4, -0.3;
    SUBCASE("theta = 0 reproduces the state") {
        const VectorXd g0 = propagate(model, x0, 0.0);
        CHECK((g0 - x0).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("matches the rotation for all theta in [0, 4pi]") {
        for (double theta = 0.0; theta <= 4.0 * M_PI; theta += 0.37) {
            const VectorXd g = propagate(model, x0, theta);
            CHECK(g[0] == doctest::Approx(x0[0] * std::cos(theta) - x0[1] * std::sin(theta))
                              .epsilon(1e-10));
            CHECK(g[1] == doctest::Approx(x0[1] * std::cos(theta) + x0[0] * std::sin(theta))
                              .epsilon(1e-10));
        }
    }
}

TEST_CASE("exactness on random linear dynamics at order 1") {
    std::mt19937 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int d = 4;
    // skew generator keeps trajectories bounded on a sphere inside the box
    MatrixXd M = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            M(i, j) = 0.4 * gauss(rng);
            M(j, i) = -M(i, j);
        }
    DynamicsField f;
    f.dimension = d;
    f.polynomial_degree = 1;
    f.evaluate = [M](const VectorXd& x) { return (M * x).eval(); };
    std::vector<Polynomial> poly(d, Polynomial(d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (M(i, j) != 0.0) {
                std::vector<int> e(d, 0);
                e[static_cast<std::size_t>(j)] = 1;
                poly[static_cast<std::size_t>(i)].add_term(M(i, j), e);
            }
    f.polynomial = poly;
    const BasisSet basis = build_basis(d, 1, DomainBox::unit_cube(d));
    const KoopmanModel model = build_koopman_model(f, basis);
    VectorXd x0(d);
    x0 << 0.3, -0.2, 0.1, 0.25;
    for (double theta = 0.0; theta <= 4.0 * M_PI; theta += 1.1) {
        const MatrixXd flow = (M * theta).exp();  // independent closed form
        const VectorXd want = flow * x0;
        const VectorXd got = propagate(model, x0, theta);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("unperturbed element model: closed-form rotation and constants") {
    const VectorXd x0 = sample_elements();
    const KoopmanModel model =
        build_element_model(gravity_j2(false), 1, element_box(x0, 0.9));
    CHECK(model.diagonalizable);
    for (double theta = 0.0; theta <= 4.0 * M_PI; theta += 0.523) {
        const VectorXd g = propagate(model, x0, theta);
        const double c = std::cos(theta), s = std::sin(theta);
        CHECK(g[0] == doctest::Approx(x0[0] * c - x0[1] * s).epsilon(1e-10));
        CHECK(g[1] == doctest::Approx(x0[1] * c + x0[0] * s).epsilon(1e-10));
        CHECK(g[2] == doctest::Approx(x0[2] * c + x0[3] * s).epsilon(1e-10));
        CHECK(g[3] == doctest::Approx(x0[3] * c - x0[2] * s).epsilon(1e-10));
        for (int j = 4; j < 8; ++j) CHECK(g[j] == doctest::Approx(x0[j]).epsilon(1e-10));
    }
}

TEST_CASE("propagate rejects states outside the domain") {
    const VectorXd x0 = sample_elements();
    const KoopmanModel model = build_element_model(gravity_j2(false), 1, element_box(x0, 0.5));
    VectorXd far = x0;
    far[0] += 2.0;
    CHECK_THROWS_AS(propagate(model, far, 0.3), DomainError);
}

TEST_CASE("expm fallback path agrees with the spectral path") {
    const VectorXd x0 = sample_elements();
    KoopmanModel model = build_element_model(gravity_j2(false), 1, element_box(x0, 0.9));
    KoopmanModel forced = model;
    forced.diagonalizable = false;  // exercise the scaling-and-squaring route
    for (double theta : {0.3, 2.1, 7.9}) {
        const VectorXd a = propagate(model, x0, theta);
        const VectorXd b = propagate(forced, x0, theta);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("J2 element model at order 3 tracks the integrated dynamics over one revolution") {
    const GravityModel g = gravity_j2(true);
    const VectorXd x0 = sample_elements();
    IntegratorConfig icfg;
    icfg.rel_tolerance = 1e-13;
    icfg.abs_tolerance = 1e-14;
    const ElementTrajectory traj = propagate_elements_numeric(x0, 2.0 * M_PI, g, icfg);
    VectorXd lo = traj.states.front(), hi = traj.states.front();
    for (const auto& x : traj.states) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    const VectorXd center = 0.5 * (lo + hi);
    const VectorXd half = 1.25 * 0.5 * (hi - lo) + VectorXd::Constant(8, 1e-6);
    const KoopmanModel model =
        build_element_model(g, 3, DomainBox(center - half, center + half));
    const VectorXd want = traj.final_state();
    const VectorXd got = propagate(model, x0, 2.0 * M_PI);
    double rel = 0.0;
    for (int j = 0; j < 8; ++j)
        rel = std::max(rel, std::abs(got[j] - want[j]) / (1.0 + std::abs(want[j])));
    CHECK(rel <= 1e-5);
}

TEST_CASE("spectral reconstruction round trip") {
    const VectorXd x0 = sample_elements();
    const KoopmanModel model = build_element_model(gravity_j2(false), 1, element_box(x0, 0.9));
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (int rep = 0; rep < 20; ++rep) {
        VectorXd x = x0;
        for (int j = 0; j < 8; ++j) x[j] += unif(rng);
        const VectorXd L = eval_basis(model.basis, x);
        const VectorXd direct = model.A * L;
        const VectorXd round =
            (model.B * (model.P * L.cast<std::complex<double>>())).real();
        CHECK((direct - round).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("semigroup property on the exact unperturbed model") {
    const VectorXd x0 = sample_elements();
    const KoopmanModel model = build_element_model(gravity_j2(false), 1, element_box(x0, 0.9));
    const double t1 = 0.7, t2 = 1.3;
    const VectorXd mid = propagate(model, x0, t1);
    const VectorXd two_step = propagate(model, mid, t2);
    const VectorXd one_step = propagate(model, x0, t1 + t2);
    CHECK((two_step - one_step).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("complex eigenvalues close into conjugate pairs") {
    const GravityModel g = gravity_j2(true);
    const VectorXd x0 = sample_elements();
    const KoopmanModel model = build_element_model(g, 2, element_box(x0, 0.4));
    std::vector<bool> used(static_cast<std::size_t>(model.eigenvalues.size()), false);
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
        if (used[static_cast<std::size_t>(i)] || std::abs(model.eigenvalues[i].imag()) <= 1e-10)
            continue;
        bool matched = false;
        for (Eigen::Index j = 0; j < model.eigenvalues.size(); ++j) {
            if (j == i || used[static_cast<std::size_t>(j)]) continue;
            if (std::abs(model.eigenvalues[j] - std::conj(model.eigenvalues[i])) <= 1e-10) {
                used[static_cast<std::size_t>(i)] = used[static_cast<std::size_t>(j)] = true;
                matched = true;
                break;
            }
        }
        CHECK(matched);
    }
}

TEST_CASE("state transition matrix") {
    const VectorXd x0 = sample_elements();
    const GravityModel goff = gravity_j2(false);
    const KoopmanModel model = build_element_model(goff, 1, element_box(x0, 0.9));
    SUBCASE("identity at theta = 0") {
        const MatrixXd stm = state_transition_matrix(model, x0, 0.0);
        CHECK((stm - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("block rotation structure in the unperturbed case") {
        const double theta = 1.234;
        const MatrixXd stm = state_transition_matrix(model, x0, theta);
        MatrixXd want = MatrixXd::Identity(8, 8);
        const double c = std::cos(theta), s = std::sin(theta);
        want(0, 0) = c; want(0, 1) = -s; want(1, 0) = s; want(1, 1) = c;
        want(2, 2) = c; want(2, 3) = s;  want(3, 2) = -s; want(3, 3) = c;
        CHECK((stm - want).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("finite differences of propagate, J2 on, order 3") {
        const GravityModel gon = gravity_j2(true);
        IntegratorConfig icfg;
        const ElementTrajectory traj = propagate_elements_numeric(x0, 2.2, gon, icfg);
        VectorXd lo = traj.states.front(), hi = traj.states.front();
        for (const auto& x : traj.states) {
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
        }
        const VectorXd center = 0.5 * (lo + hi);
        const VectorXd half = (0.5 * (hi - lo) * 1.5).cwiseMax(VectorXd::Constant(8, 0.05));
        const KoopmanModel m3 = build_element_model(gon, 3, DomainBox(center - half, center + half));
        const double theta = 2.2;
        const MatrixXd stm = state_transition_matrix(m3, x0, theta);
        for (int j = 0; j < 8; ++j) {
            const double h = 1e-5 * (1.0 + std::abs(x0[j]));
            VectorXd xp = x0, xm = x0;
            xp[j] += h;
            xm[j] -= h;
            const VectorXd fd = (propagate(m3, xp, theta) - propagate(m3, xm, theta)) / (2.0 * h);
            for (int i = 0; i < 8; ++i) {
                const double scale = std::max({1.0, std::abs(fd[i]), std::abs(stm(i, j))});
                CHECK(std::abs(stm(i, j) - fd[i]) / scale <= 1e-4);
            }
        }
    }
}

TEST_CASE("build counter increments once per assembly") {
    const auto before = koopman_build_counter().load();
    const BasisSet basis = build_basis(2, 1, DomainBox::unit_cube(2));
    (void)build_koopman_matrix(harmonic_rotation(), basis);
    CHECK(koopman_build_counter().load() == before + 1);
}
