#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "kolambert/errors.hpp"

namespace kolambert {

// Sparse multivariate polynomial in monomial form. Exponents are stored per
// dimension; terms with equal exponent vectors are merged.
struct Polynomial {
    struct Term {
        double coefficient = 0.0;
        std::vector<int> exponents;
    };

    int dimension = 0;
    std::vector<Term> terms;

    explicit Polynomial(int d = 0) : dimension(d) {}

    Polynomial& add_term(double coefficient, std::vector<int> exponents) {
        if (static_cast<int>(exponents.size()) != dimension)
            throw ArgumentError("Polynomial::add_term: exponent size mismatch");
        terms.push_back({coefficient, std::move(exponents)});
        return *this;
    }

    int degree() const {
        int deg = 0;
        for (const auto& t : terms) {
            int d = 0;
            for (int e : t.exponents) d += e;
            deg = std::max(deg, d);
        }
        return deg;
    }

    double evaluate(const Eigen::VectorXd& x) const {
        double total = 0.0;
        for (const auto& t : terms) {
            double v = t.coefficient;
            for (int j = 0; j < dimension; ++j) {
                const int e = t.exponents[static_cast<std::size_t>(j)];
                for (int p = 0; p < e; ++p) v *= x[j];
            }
            total += v;
        }
        return total;
    }

    // Merge duplicate exponent vectors and drop zero coefficients.
    Polynomial compacted() const {
        std::map<std::vector<int>, double> acc;
        for (const auto& t : terms) acc[t.exponents] += t.coefficient;
        Polynomial out(dimension);
        for (auto& [e, c] : acc)
            if (c != 0.0) out.terms.push_back({c, e});
        return out;
    }

    // Substitute x_j = center_j + halfwidth_j * u_j, returning a polynomial in
    // the canonical coordinates u. Degree is preserved.
    Polynomial affine_substitute(const Eigen::VectorXd& center,
                                 const Eigen::VectorXd& halfwidth) const {
        std::map<std::vector<int>, double> acc;
        std::vector<int> zero(static_cast<std::size_t>(dimension), 0);
        for (const auto& t : terms) {
            std::map<std::vector<int>, double> part{{zero, t.coefficient}};
            for (int j = 0; j < dimension; ++j) {
                const int e = t.exponents[static_cast<std::size_t>(j)];
                if (e == 0) continue;
                // binomial expansion of (c + h u)^e
                std::vector<double> coef(static_cast<std::size_t>(e) + 1);
                double binom = 1.0;
                for (int p = 0; p <= e; ++p) {
                    coef[static_cast<std::size_t>(p)] =
                        binom * std::pow(center[j], e - p) * std::pow(halfwidth[j], p);
                    binom = binom * (e - p) / (p + 1);
                }
                std::map<std::vector<int>, double> next;
                for (const auto& [ex, c] : part)
                    for (int p = 0; p <= e; ++p) {
                        if (coef[static_cast<std::size_t>(p)] == 0.0) continue;
                        std::vector<int> ee = ex;
                        ee[static_cast<std::size_t>(j)] += p;
                        next[ee] += c * coef[static_cast<std::size_t>(p)];
                    }
                part = std::move(next);
            }
            for (const auto& [ex, c] : part) acc[ex] += c;
        }
        Polynomial out(dimension);
        for (auto& [e, c] : acc)
            if (c != 0.0) out.terms.push_back({c, e});
        return out;
    }
};

}  // namespace kolambert
