#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/gauss_legendre.hpp"

namespace kolambert {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Orthonormal Legendre polynomials on [-1,1] under the constant weight 1/2,
// i.e. Pt_n(u) = sqrt(2n+1) * P_n(u) so that <Pt_n, Pt_n> = 1 and Pt_0 = 1.
// ---------------------------------------------------------------------------

inline constexpr double kDomainTolerance = 1e-6;  // canonical units

// Values Pt_0..Pt_n at u, by the three-term recurrence.
inline void orthonormal_legendre_values(int max_order, double u, double* out) {
    out[0] = 1.0;
    if (max_order == 0) return;
    double p0 = 1.0, p1 = u;
    out[1] = std::sqrt(3.0) * u;
    for (int n = 1; n < max_order; ++n) {
        const double p2 = ((2 * n + 1) * u * p1 - n * p0) / (n + 1);
        p0 = p1;
        p1 = p2;
        out[n + 1] = std::sqrt(2.0 * (n + 1) + 1.0) * p2;
    }
}

// Derivatives d/du Pt_0..Pt_n at u, via P'_{n+1} = P'_{n-1} + (2n+1) P_n.
inline void orthonormal_legendre_derivatives(int max_order, double u, double* out) {
    out[0] = 0.0;
    if (max_order == 0) return;
    std::vector<double> p(static_cast<std::size_t>(max_order) + 1);
    p[0] = 1.0;
    p[1] = u;
    for (int n = 1; n < max_order; ++n)
        p[static_cast<std::size_t>(n) + 1] = ((2 * n + 1) * u * p[static_cast<std::size_t>(n)] - n * p[static_cast<std::size_t>(n) - 1]) / (n + 1);
    double d0 = 0.0, d1 = 1.0;
    out[1] = std::sqrt(3.0);
    for (int n = 1; n < max_order; ++n) {
        const double d2 = d0 + (2 * n + 1) * p[static_cast<std::size_t>(n)];
        d0 = d1;
        d1 = d2;
        out[n + 1] = std::sqrt(2.0 * (n + 1) + 1.0) * d2;
    }
}

// Single orthonormal Legendre value; clamps |u| <= 1 within tolerance and
// rejects points further out.
inline double eval_orthonormal_legendre(int order, double u) {
    if (order < 0) throw ArgumentError("eval_orthonormal_legendre: negative order");
    if (std::abs(u) > 1.0 + kDomainTolerance)
        throw DomainError("eval_orthonormal_legendre: |u| = " + std::to_string(std::abs(u)) +
                          " outside [-1,1]");
    u = std::clamp(u, -1.0, 1.0);
    std::vector<double> vals(static_cast<std::size_t>(order) + 1);
    orthonormal_legendre_values(order, u, vals.data());
    return vals[static_cast<std::size_t>(order)];
}

// ---------------------------------------------------------------------------
// Multivariate basis
// ---------------------------------------------------------------------------

struct MultiIndex {
    std::vector<int> orders;  // one per dimension

    int total_order() const {
        int c = 0;
        for (int n : orders) c += n;
        return c;
    }
};

struct DomainBox {
    VectorXd lower;
    VectorXd upper;

    DomainBox() = default;
    DomainBox(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw ArgumentError("DomainBox: bound size mismatch");
        for (Eigen::Index j = 0; j < lower.size(); ++j)
            if (!(lower[j] < upper[j]))
                throw ArgumentError("DomainBox: lower >= upper in dimension " + std::to_string(j));
    }

    static DomainBox unit_cube(int d) {
        return DomainBox(VectorXd::Constant(d, -1.0), VectorXd::Constant(d, 1.0));
    }

    int dimension() const { return static_cast<int>(lower.size()); }
    double center(int j) const { return 0.5 * (lower[j] + upper[j]); }
    double halfwidth(int j) const { return 0.5 * (upper[j] - lower[j]); }

    // affine map into the canonical cube [-1,1]^d
    double to_canonical(int j, double x) const { return (x - center(j)) / halfwidth(j); }
    double from_canonical(int j, double u) const { return center(j) + halfwidth(j) * u; }

    bool contains(const VectorXd& x, double tol = kDomainTolerance) const {
        for (Eigen::Index j = 0; j < lower.size(); ++j)
            if (std::abs(to_canonical(static_cast<int>(j), x[j])) > 1.0 + tol) return false;
        return true;
    }
};

struct BasisSet {
    int dimension = 0;
    int max_order = 0;
    std::vector<MultiIndex> indices;  // graded lexicographic, constant first
    DomainBox domain;
    double weight = 0.5;  // constant weight per dimension

    int size() const { return static_cast<int>(indices.size()); }
};

namespace detail {

inline void enumerate_fixed_total(int d, int total, std::vector<int>& prefix,
                                  std::vector<MultiIndex>& out) {
    if (d == 1) {
        MultiIndex mi;
        mi.orders = prefix;
        mi.orders.push_back(total);
        out.push_back(std::move(mi));
        return;
    }
    for (int n = 0; n <= total; ++n) {
        prefix.push_back(n);
        enumerate_fixed_total(d - 1, total - n, prefix, out);
        prefix.pop_back();
    }
}

inline std::int64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::int64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace detail

// All multi-indices with total order <= max_order in graded lexicographic
// order; the count is C(dimension + max_order, max_order) and entry 0 is the
// constant function.
inline BasisSet build_basis(int dimension, int max_order, DomainBox domain,
                            std::int64_t max_terms = 20000) {
    if (dimension < 1) throw ArgumentError("build_basis: dimension must be >= 1");
    if (max_order < 0) throw ArgumentError("build_basis: max_order must be >= 0");
    if (domain.dimension() != dimension)
        throw ArgumentError("build_basis: domain dimension mismatch");
    const std::int64_t m = detail::binomial(dimension + max_order, max_order);
    if (m > max_terms)
        throw ResourceCapError("build_basis: basis count " + std::to_string(m) +
                               " exceeds cap " + std::to_string(max_terms));
    BasisSet basis;
    basis.dimension = dimension;
    basis.max_order = max_order;
    basis.domain = std::move(domain);
    basis.indices.reserve(static_cast<std::size_t>(m));
    std::vector<int> prefix;
    for (int total = 0; total <= max_order; ++total)
        detail::enumerate_fixed_total(dimension, total, prefix, basis.indices);
    return basis;
}

namespace detail {

// Per-point table of 1-D values (and optionally derivatives) for every
// dimension; the multivariate products are read off this table.
struct PointTable {
    int d = 0;
    int order = 0;
    std::vector<double> vals;  // [dim * (order+1) + n]
    std::vector<double> ders;

    double v(int dim, int n) const { return vals[static_cast<std::size_t>(dim * (order + 1) + n)]; }
    double dv(int dim, int n) const { return ders[static_cast<std::size_t>(dim * (order + 1) + n)]; }
};

inline PointTable make_point_table(const BasisSet& basis, const VectorXd& x, bool with_derivs) {
    if (x.size() != basis.dimension) throw ArgumentError("eval_basis: point dimension mismatch");
    PointTable t;
    t.d = basis.dimension;
    t.order = basis.max_order;
    t.vals.resize(static_cast<std::size_t>(t.d * (t.order + 1)));
    if (with_derivs) t.ders.resize(t.vals.size());
    for (int j = 0; j < t.d; ++j) {
        double u = basis.domain.to_canonical(j, x[j]);
        if (std::abs(u) > 1.0 + kDomainTolerance)
            throw DomainError("point outside basis domain in dimension " + std::to_string(j) +
                              " (canonical coordinate " + std::to_string(u) + ")");
        u = std::clamp(u, -1.0, 1.0);
        orthonormal_legendre_values(t.order, u, &t.vals[static_cast<std::size_t>(j * (t.order + 1))]);
        if (with_derivs)
            orthonormal_legendre_derivatives(t.order, u,
                                             &t.ders[static_cast<std::size_t>(j * (t.order + 1))]);
    }
    return t;
}

}  // namespace detail

// Vector of all basis functions L_i(x) = prod_j Pt_{n_j}(u_j(x)).
inline VectorXd eval_basis(const BasisSet& basis, const VectorXd& x) {
    const auto t = detail::make_point_table(basis, x, false);
    VectorXd out(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
        double p = 1.0;
        const auto& mi = basis.indices[static_cast<std::size_t>(i)].orders;
        for (int j = 0; j < basis.dimension; ++j) p *= t.v(j, mi[static_cast<std::size_t>(j)]);
        out[i] = p;
    }
    return out;
}

// m x d matrix; row i holds the gradient of L_i with the affine chain factor
// du/dx = 1/halfwidth applied per dimension.
inline MatrixXd eval_basis_gradient(const BasisSet& basis, const VectorXd& x) {
    const auto t = detail::make_point_table(basis, x, true);
    MatrixXd out(basis.size(), basis.dimension);
    for (int i = 0; i < basis.size(); ++i) {
        const auto& mi = basis.indices[static_cast<std::size_t>(i)].orders;
        for (int k = 0; k < basis.dimension; ++k) {
            double p = 1.0;
            for (int j = 0; j < basis.dimension; ++j) {
                const int n = mi[static_cast<std::size_t>(j)];
                p *= (j == k) ? t.dv(j, n) : t.v(j, n);
            }
            out(i, k) = p / basis.domain.halfwidth(k);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tensor-product quadrature over the domain box. Weights absorb the affine
// Jacobian and the constant weight, so they sum to 1 and the basis Gram
// matrix is the identity once points_per_dim >= max_order + 1.
// ---------------------------------------------------------------------------

struct QuadratureGrid {
    int points_per_dim = 0;
    MatrixXd nodes;     // one row per node, in element units
    VectorXd weights;   // sum to 1

    Eigen::Index size() const { return weights.size(); }
};

inline QuadratureGrid quadrature_grid(const BasisSet& basis, int points_per_dim,
                                      std::int64_t max_nodes = 4'000'000) {
    if (points_per_dim < 1) throw ArgumentError("quadrature_grid: points_per_dim must be >= 1");
    const int d = basis.dimension;
    std::int64_t total = 1;
    for (int j = 0; j < d; ++j) {
        total *= points_per_dim;
        if (total > max_nodes)
            throw ResourceCapError("quadrature_grid: " + std::to_string(points_per_dim) + "^" +
                                   std::to_string(d) + " nodes exceed cap " +
                                   std::to_string(max_nodes));
    }
    const GaussLegendreRule rule = gauss_legendre_rule(points_per_dim);
    QuadratureGrid grid;
    grid.points_per_dim = points_per_dim;
    grid.nodes.resize(total, d);
    grid.weights.resize(total);
    std::vector<int> odo(static_cast<std::size_t>(d), 0);
    for (std::int64_t n = 0; n < total; ++n) {
        double w = 1.0;
        for (int j = 0; j < d; ++j) {
            const int ij = odo[static_cast<std::size_t>(j)];
            grid.nodes(n, j) = basis.domain.from_canonical(j, rule.nodes[static_cast<std::size_t>(ij)]);
            w *= 0.5 * rule.weights[static_cast<std::size_t>(ij)];
        }
        grid.weights[n] = w;
        for (int j = d - 1; j >= 0; --j) {  // odometer, last dimension fastest
            if (++odo[static_cast<std::size_t>(j)] < points_per_dim) break;
            odo[static_cast<std::size_t>(j)] = 0;
        }
    }
    return grid;
}

// Weighted dot product of two functions sampled on a quadrature grid.
inline double inner_product(const VectorXd& f_values, const VectorXd& g_values,
                            const VectorXd& weights) {
    if (f_values.size() != g_values.size() || f_values.size() != weights.size())
        throw ArgumentError("inner_product: length mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) acc += weights[i] * f_values[i] * g_values[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Exact 1-D product integrals used by the factorized Galerkin assembly:
//   T0[a][e][b] = <Pt_a * u^e, Pt_b>,   T1[a][e][b] = <Pt_a' * u^e, Pt_b>
// under the weight 1/2 on [-1,1].
// ---------------------------------------------------------------------------

struct OneDimIntegralTables {
    int max_order = 0;
    int max_power = 0;
    std::vector<double> t0;
    std::vector<double> t1;

    double value(int a, int e, int b) const {
        return t0[static_cast<std::size_t>((a * (max_power + 1) + e) * (max_order + 1) + b)];
    }
    double deriv(int a, int e, int b) const {
        return t1[static_cast<std::size_t>((a * (max_power + 1) + e) * (max_order + 1) + b)];
    }
};

inline OneDimIntegralTables one_dim_integral_tables(int max_order, int max_power) {
    OneDimIntegralTables t;
    t.max_order = max_order;
    t.max_power = max_power;
    const std::size_t n = static_cast<std::size_t>((max_order + 1) * (max_power + 1) * (max_order + 1));
    t.t0.assign(n, 0.0);
    t.t1.assign(n, 0.0);
    const int npts = (2 * max_order + max_power) / 2 + 2;
    const GaussLegendreRule rule = gauss_legendre_rule(npts);
    std::vector<double> vals(static_cast<std::size_t>(max_order) + 1);
    std::vector<double> ders(static_cast<std::size_t>(max_order) + 1);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double u = rule.nodes[q];
        const double w = 0.5 * rule.weights[q];
        orthonormal_legendre_values(max_order, u, vals.data());
        orthonormal_legendre_derivatives(max_order, u, ders.data());
        double ue = 1.0;
        for (int e = 0; e <= max_power; ++e) {
            for (int a = 0; a <= max_order; ++a) {
                const double va = w * ue * vals[static_cast<std::size_t>(a)];
                const double da = w * ue * ders[static_cast<std::size_t>(a)];
                for (int b = 0; b <= max_order; ++b) {
                    const std::size_t at = static_cast<std::size_t>((a * (max_power + 1) + e) * (max_order + 1) + b);
                    t.t0[at] += va * vals[static_cast<std::size_t>(b)];
                    t.t1[at] += da * vals[static_cast<std::size_t>(b)];
                }
            }
            ue *= u;
        }
    }
    // snap parity zeros so downstream sparsity tests are exact
    for (int a = 0; a <= max_order; ++a)
        for (int e = 0; e <= max_power; ++e)
            for (int b = 0; b <= max_order; ++b) {
                const std::size_t at = static_cast<std::size_t>((a * (max_power + 1) + e) * (max_order + 1) + b);
                if ((a + e + b) % 2 == 1) t.t0[at] = 0.0;
                if ((a + e + b) % 2 == 0) t.t1[at] = 0.0;
                if (std::abs(t.t0[at]) < 1e-15) t.t0[at] = 0.0;
                if (std::abs(t.t1[at]) < 1e-15) t.t1[at] = 0.0;
            }
    return t;
}

}  // namespace kolambert
