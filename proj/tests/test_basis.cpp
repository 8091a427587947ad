#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "kolambert/legendre_basis.hpp"

using namespace kolambert;

TEST_CASE("basis counts follow C(d + c, c)") {
    CHECK(build_basis(1, 2, DomainBox::unit_cube(1)).size() == 3);
    CHECK(build_basis(8, 1, DomainBox::unit_cube(8)).size() == 9);
    CHECK(build_basis(2, 7, DomainBox::unit_cube(2)).size() == 36);
    CHECK(build_basis(8, 3, DomainBox::unit_cube(8)).size() == 165);
    // entry 0 is the constant function
    const BasisSet b = build_basis(3, 2, DomainBox::unit_cube(3));
    CHECK(b.indices.front().total_order() == 0);
}

TEST_CASE("basis cap rejects combinatorial blowup") {
    CHECK_THROWS_AS(build_basis(8, 7, DomainBox::unit_cube(8), 1000), ResourceCapError);
}

TEST_CASE("orthonormal Legendre values") {
    CHECK(eval_orthonormal_legendre(0, 0.3) == doctest::Approx(1.0));
    CHECK(eval_orthonormal_legendre(0, -0.9) == doctest::Approx(1.0));
    CHECK(eval_orthonormal_legendre(1, 1.0) == doctest::Approx(std::sqrt(3.0)));
    CHECK(eval_orthonormal_legendre(2, 0.5) ==
          doctest::Approx(std::sqrt(5.0) * (3.0 * 0.25 - 1.0) / 2.0).epsilon(1e-12));
    CHECK(eval_orthonormal_legendre(2, 0.5) == doctest::Approx(-0.2795084971874737).epsilon(1e-12));
    // clamps within tolerance, rejects beyond
    CHECK_NOTHROW(eval_orthonormal_legendre(3, 1.0 + 1e-9));
    CHECK_THROWS_AS(eval_orthonormal_legendre(3, 1.1), DomainError);
}

TEST_CASE("eval_basis products and ordering") {
    const BasisSet b1 = build_basis(1, 1, DomainBox::unit_cube(1));
    const VectorXd v1 = eval_basis(b1, VectorXd::Zero(1));
    CHECK(v1[0] == doctest::Approx(1.0));
    CHECK(v1[1] == doctest::Approx(0.0));

    const BasisSet b2 = build_basis(2, 1, DomainBox::unit_cube(2));
    VectorXd p(2);
    p << 1.0, 1.0;
    const VectorXd v2 = eval_basis(b2, p);
    CHECK(v2[0] == doctest::Approx(1.0));
    CHECK(v2[1] == doctest::Approx(std::sqrt(3.0)));
    CHECK(v2[2] == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("eval_basis names the offending dimension") {
    const BasisSet b = build_basis(3, 1, DomainBox::unit_cube(3));
    VectorXd p(3);
    p << 0.0, 1.5, 0.0;
    try {
        eval_basis(b, p);
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
    }
}

TEST_CASE("gradient: constant row zero, linear row constant, FD agreement") {
    VectorXd lo(2), hi(2);
    lo << -2.0, 0.5;
    hi << 3.0, 4.5;
    const BasisSet b = build_basis(2, 3, DomainBox(lo, hi));
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> unif(-0.9, 0.9);
    for (int rep = 0; rep < 25; ++rep) {
        VectorXd x(2);
        for (int j = 0; j < 2; ++j) x[j] = b.domain.from_canonical(j, unif(rng));
        const MatrixXd G = eval_basis_gradient(b, x);
        CHECK(G.row(0).norm() == doctest::Approx(0.0));
        const double h = 1e-6;
        for (int j = 0; j < 2; ++j) {
            VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const VectorXd fd = (eval_basis(b, xp) - eval_basis(b, xm)) / (2.0 * h);
            for (int i = 0; i < b.size(); ++i) {
                CHECK(G(i, j) == doctest::Approx(fd[i]).epsilon(1e-6));
            }
        }
    }
    // 1-D linear basis has constant derivative sqrt(3)/halfwidth
    const BasisSet b1 = build_basis(1, 1, DomainBox::unit_cube(1));
    const MatrixXd g1 = eval_basis_gradient(b1, VectorXd::Constant(1, 0.37));
    CHECK(g1(1, 0) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("quadrature: normalized measure and analytic moments") {
    const BasisSet b = build_basis(1, 3, DomainBox::unit_cube(1));
    const QuadratureGrid grid = quadrature_grid(b, 6);
    CHECK(grid.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    double second_moment = 0.0;
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        second_moment += grid.weights[i] * grid.nodes(i, 0) * grid.nodes(i, 0);
    CHECK(second_moment == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("quadrature grid cap") {
    const BasisSet b = build_basis(8, 1, DomainBox::unit_cube(8));
    CHECK_THROWS_AS(quadrature_grid(b, 12, 1000000), ResourceCapError);
}

TEST_CASE("Gram matrix is the identity") {
    VectorXd lo(3), hi(3);
    lo << -0.4, 2.0, -7.0;
    hi << 1.1, 3.5, -1.0;
    const BasisSet b = build_basis(3, 5, DomainBox(lo, hi));
    const QuadratureGrid grid = quadrature_grid(b, b.max_order + 1);
    MatrixXd gram = MatrixXd::Zero(b.size(), b.size());
    for (Eigen::Index n = 0; n < grid.size(); ++n) {
        const VectorXd L = eval_basis(b, grid.nodes.row(n).transpose());
        gram += grid.weights[n] * L * L.transpose();
    }
    CHECK((gram - MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("inner products of sampled functions") {
    const BasisSet b1 = build_basis(1, 4, DomainBox::unit_cube(1));
    const QuadratureGrid g1 = quadrature_grid(b1, 8);
    VectorXd p1(g1.size()), p2(g1.size()), p3(g1.size());
    for (Eigen::Index i = 0; i < g1.size(); ++i) {
        const double u = g1.nodes(i, 0);
        p1[i] = eval_orthonormal_legendre(1, u);
        p2[i] = eval_orthonormal_legendre(2, u);
        p3[i] = eval_orthonormal_legendre(3, u);
    }
    CHECK(std::abs(inner_product(p1, p2, g1.weights)) <= 1e-14);
    CHECK(inner_product(p3, p3, g1.weights) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(inner_product(p1, VectorXd::Zero(3), g1.weights), ArgumentError);

    // projection of x*y onto the product of two degree-1 functions is 1/3
    const BasisSet b2 = build_basis(2, 2, DomainBox::unit_cube(2));
    const QuadratureGrid g2 = quadrature_grid(b2, 5);
    VectorXd xy(g2.size()), pp(g2.size());
    for (Eigen::Index i = 0; i < g2.size(); ++i) {
        xy[i] = g2.nodes(i, 0) * g2.nodes(i, 1);
        pp[i] = eval_orthonormal_legendre(1, g2.nodes(i, 0)) *
                eval_orthonormal_legendre(1, g2.nodes(i, 1));
    }
    CHECK(inner_product(xy, pp, g2.weights) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("monomial completeness at the basis order") {
    VectorXd lo(2), hi(2);
    lo << -1.5, 0.2;
    hi << 0.5, 2.2;
    const BasisSet b = build_basis(2, 4, DomainBox(lo, hi));
    const QuadratureGrid grid = quadrature_grid(b, 7);
    auto monomial = [](const VectorXd& x) { return x[0] * x[0] * x[1] * x[1]; };  // degree 4
    VectorXd coeffs = VectorXd::Zero(b.size());
    for (Eigen::Index n = 0; n < grid.size(); ++n) {
        const VectorXd L = eval_basis(b, grid.nodes.row(n).transpose());
        coeffs += grid.weights[n] * monomial(grid.nodes.row(n).transpose()) * L;
    }
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        VectorXd x(2);
        for (int j = 0; j < 2; ++j) x[j] = b.domain.from_canonical(j, unif(rng));
        const double recon = coeffs.dot(eval_basis(b, x));
        CHECK(recon == doctest::Approx(monomial(x)).epsilon(1e-12));
    }
}

TEST_CASE("basis enumeration is deterministic") {
    const BasisSet a = build_basis(4, 3, DomainBox::unit_cube(4));
    const BasisSet b = build_basis(4, 3, DomainBox::unit_cube(4));
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i)
        CHECK(a.indices[static_cast<std::size_t>(i)].orders ==
              b.indices[static_cast<std::size_t>(i)].orders);
    // graded: total order is non-decreasing
    for (int i = 1; i < a.size(); ++i)
        CHECK(a.indices[static_cast<std::size_t>(i)].total_order() >=
              a.indices[static_cast<std::size_t>(i - 1)].total_order());
    // no duplicates
    std::set<std::vector<int>> seen;
    for (const auto& mi : a.indices) seen.insert(mi.orders);
    CHECK(static_cast<int>(seen.size()) == a.size());
}
