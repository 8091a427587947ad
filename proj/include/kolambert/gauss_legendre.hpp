#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kolambert/errors.hpp"

namespace kolambert {

struct GaussLegendreRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;  // sum to 2
};

// Nodes and weights of the n-point Gauss-Legendre rule on [-1,1], exact for
// polynomials of degree <= 2n-1. Newton iteration on P_n with the usual
// Chebyshev-like initial guesses; accurate to ~1e-15 for the orders used here.
inline GaussLegendreRule gauss_legendre_rule(int n) {
    if (n < 1) throw ArgumentError("gauss_legendre_rule: need n >= 1");
    GaussLegendreRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // evaluate P_n(x) and P_n'(x) by the three-term recurrence
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}

// Composite Gauss-Legendre quadrature of f over [a, b].
template <typename F>
double integrate_gl(F&& f, double a, double b, int panels, int points_per_panel) {
    const GaussLegendreRule rule = gauss_legendre_rule(points_per_panel);
    double total = 0.0;
    const double step = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * step;
        const double mid = lo + 0.5 * step;
        const double half = 0.5 * step;
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
        }
        total += acc * half;
    }
    return total;
}

}  // namespace kolambert
