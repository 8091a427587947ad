#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/legendre_basis.hpp"
#include "kolambert/polynomial.hpp"

namespace kolambert {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

// ---------------------------------------------------------------------------
// Dynamics description: a derivative field over the element space, with the
// independent variable measured in radians. A sparse polynomial form, when
// present, enables the exact factorized Galerkin assembly; the callback form
// is always available for grid-based assembly and cross-checks.
// ---------------------------------------------------------------------------

struct DynamicsField {
    int dimension = 0;
    std::function<VectorXd(const VectorXd&)> evaluate;
    int polynomial_degree = 0;              // upper bound on the true degree
    std::vector<Polynomial> polynomial;     // one per component; may be empty
};

// Counts every Koopman matrix assembly in the process. The multi-tof reuse
// guarantee is asserted against this.
inline std::atomic<std::uint64_t>& koopman_build_counter() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

struct AssemblyOptions {
    int points_per_dim = 0;          // 0 -> derived from orders
    int workers = 1;
    std::int64_t max_nodes = 4'000'000;
    bool force_grid = false;         // ignore the polynomial form (cross-checks)
};

namespace detail {

inline int auto_points_per_dim(int max_order, int poly_degree) {
    // integrands (grad L_i . f) L_j have per-dimension degree
    // <= 2*max_order - 1 + poly_degree
    const int deg = 2 * max_order - 1 + poly_degree;
    return std::max(1, (deg + 2) / 2);
}

inline MatrixXd assemble_from_polynomial(const std::vector<Polynomial>& field,
                                         const BasisSet& basis) {
    const int d = basis.dimension;
    const int m = basis.size();
    VectorXd center(d), halfwidth(d);
    for (int j = 0; j < d; ++j) {
        center[j] = basis.domain.center(j);
        halfwidth[j] = basis.domain.halfwidth(j);
    }
    int max_power = 0;
    std::vector<Polynomial> canonical(field.size());
    for (std::size_t k = 0; k < field.size(); ++k) {
        canonical[k] = field[k].affine_substitute(center, halfwidth);
        for (const auto& t : canonical[k].terms)
            for (int e : t.exponents) max_power = std::max(max_power, e);
    }
    const OneDimIntegralTables tables = one_dim_integral_tables(basis.max_order, max_power);

    MatrixXd K = MatrixXd::Zero(m, m);
    for (int k = 0; k < d; ++k) {
        const double inv_h = 1.0 / halfwidth[k];
        for (const auto& term : canonical[static_cast<std::size_t>(k)].terms) {
            for (int i = 0; i < m; ++i) {
                const auto& ni = basis.indices[static_cast<std::size_t>(i)].orders;
                if (ni[static_cast<std::size_t>(k)] == 0) continue;  // d/du_k of a constant factor
                for (int j = 0; j < m; ++j) {
                    const auto& nj = basis.indices[static_cast<std::size_t>(j)].orders;
                    double v = term.coefficient * inv_h;
                    for (int dim = 0; dim < d; ++dim) {
                        const int a = ni[static_cast<std::size_t>(dim)];
                        const int e = term.exponents[static_cast<std::size_t>(dim)];
                        const int b = nj[static_cast<std::size_t>(dim)];
                        const double f = (dim == k) ? tables.deriv(a, e, b) : tables.value(a, e, b);
                        if (f == 0.0) {
                            v = 0.0;
                            break;
                        }
                        v *= f;
                    }
                    if (v != 0.0) K(i, j) += v;
                }
            }
        }
    }
    return K;
}

inline MatrixXd assemble_from_grid(const DynamicsField& dynamics, const BasisSet& basis,
                                   const AssemblyOptions& opts) {
    const int p = opts.points_per_dim > 0
                      ? opts.points_per_dim
                      : auto_points_per_dim(basis.max_order, dynamics.polynomial_degree);
    const QuadratureGrid grid = quadrature_grid(basis, p, opts.max_nodes);
    const int m = basis.size();
    const Eigen::Index n = grid.size();
    const int workers = std::max(1, opts.workers);

    std::vector<MatrixXd> partial(static_cast<std::size_t>(workers), MatrixXd::Zero(m, m));
    std::vector<Eigen::Index> bad_node(static_cast<std::size_t>(workers), -1);

    auto run_chunk = [&](int w, Eigen::Index begin, Eigen::Index end) {
        MatrixXd& K = partial[static_cast<std::size_t>(w)];
        VectorXd u(m);
        for (Eigen::Index q = begin; q < end; ++q) {
            const VectorXd x = grid.nodes.row(q).transpose();
            const VectorXd fx = dynamics.evaluate(x);
            if (!fx.allFinite()) {
                bad_node[static_cast<std::size_t>(w)] = q;
                return;
            }
            const VectorXd L = eval_basis(basis, x);
            const MatrixXd G = eval_basis_gradient(basis, x);
            u.noalias() = G * fx;
            K.noalias() += grid.weights[q] * u * L.transpose();
        }
    };

    if (workers == 1) {
        run_chunk(0, 0, n);
    } else {
        std::vector<std::thread> pool;
        const Eigen::Index chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const Eigen::Index begin = w * chunk;
            const Eigen::Index end = std::min<Eigen::Index>(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run_chunk, w, begin, end);
        }
        for (auto& t : pool) t.join();
    }
    for (int w = 0; w < workers; ++w)
        if (bad_node[static_cast<std::size_t>(w)] >= 0) {
            const Eigen::Index q = bad_node[static_cast<std::size_t>(w)];
            throw AssemblyError("build_koopman_matrix: non-finite dynamics at quadrature node " +
                                std::to_string(q));
        }
    MatrixXd K = MatrixXd::Zero(m, m);
    for (int w = 0; w < workers; ++w) K += partial[static_cast<std::size_t>(w)];  // fixed order
    return K;
}

}  // namespace detail

// Galerkin projection of the dynamics onto the basis:
//   K_ij = < (grad L_i) . f , L_j >
inline MatrixXd build_koopman_matrix(const DynamicsField& dynamics, const BasisSet& basis,
                                     const AssemblyOptions& opts = {}) {
    if (dynamics.dimension != basis.dimension)
        throw ArgumentError("build_koopman_matrix: dimension mismatch");
    koopman_build_counter().fetch_add(1, std::memory_order_relaxed);
    if (!dynamics.polynomial.empty() && !opts.force_grid)
        return detail::assemble_from_polynomial(dynamics.polynomial, basis);
    if (!dynamics.evaluate) throw ArgumentError("build_koopman_matrix: no evaluate callback");
    return detail::assemble_from_grid(dynamics, basis, opts);
}

// ---------------------------------------------------------------------------
// Eigendecomposition. Rows of P are left eigenvectors: P K = diag(lambda) P.
// P is the inverse of the right-eigenvector matrix, which is refined by
// shifted inverse iteration inside eigenvalue clusters where the raw
// back-substituted vectors of repeated eigenvalues can lose independence.
// ---------------------------------------------------------------------------

struct EigenDiagnostics {
    double condition_P = 0.0;
    double residual = 0.0;       // ||P K - Lam P||_F / ||K||_F
    bool diagonalizable = false;
};

struct EigenDecomposition {
    VectorXcd eigenvalues;
    MatrixXcd P;          // left eigenvectors as rows
    MatrixXcd P_inverse;  // right eigenvectors as columns
    EigenDiagnostics diagnostics;
};

namespace detail {

inline double residual_left(const MatrixXcd& P, const VectorXcd& lam, const MatrixXd& K) {
    const MatrixXcd R = P * K.cast<std::complex<double>>() - lam.asDiagonal() * P;
    const double nk = K.norm();
    return R.norm() / (nk > 0 ? nk : 1.0);
}

// Orthonormal basis of the (near-)eigenspace for a cluster of equal
// eigenvalues, by inverse iteration with a deterministic random start.
inline MatrixXcd cluster_eigenvectors(const MatrixXd& K, std::complex<double> lambda, int count,
                                      double scale, std::uint64_t seed) {
    const int m = static_cast<int>(K.rows());
    const std::complex<double> shift =
        lambda + std::complex<double>(1.0, 1.0) * (1e-10 * std::max(scale, 1.0));
    MatrixXcd shifted = K.cast<std::complex<double>>();
    shifted.diagonal().array() -= shift;
    Eigen::PartialPivLU<MatrixXcd> lu(shifted);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    MatrixXcd X(m, count);
    for (int j = 0; j < count; ++j)
        for (int i = 0; i < m; ++i) X(i, j) = std::complex<double>(dist(rng), dist(rng));
    for (int pass = 0; pass < 3; ++pass) {
        X = lu.solve(X);
        // modified Gram-Schmidt
        for (int j = 0; j < count; ++j) {
            for (int k = 0; k < j; ++k) X.col(j) -= X.col(k).dot(X.col(j)) * X.col(k);
            const double nrm = X.col(j).norm();
            if (nrm > 0) X.col(j) /= nrm;
        }
    }
    return X;
}

}  // namespace detail

namespace detail {

struct ScoredDecomposition {
    MatrixXcd P;
    MatrixXcd V;
    double residual = 0.0;
    double condition = 0.0;
};

inline ScoredDecomposition score_eigenvectors(const MatrixXcd& V, const VectorXcd& lam,
                                              const MatrixXd& K) {
    ScoredDecomposition out;
    out.V = V;
    Eigen::PartialPivLU<MatrixXcd> lu(V);
    out.P = lu.solve(MatrixXcd::Identity(V.rows(), V.cols()));
    out.residual = residual_left(out.P, lam, K);
    const double norm_v = V.cwiseAbs().colwise().sum().maxCoeff();
    const double norm_vi = out.P.cwiseAbs().colwise().sum().maxCoeff();
    out.condition = norm_v * norm_vi;
    return out;
}

}  // namespace detail

inline EigenDecomposition eigendecompose(const MatrixXd& K, double residual_tol = 1e-8,
                                         double condition_tol = 1e12) {
    if (!K.allFinite()) throw ArgumentError("eigendecompose: non-finite matrix");
    Eigen::EigenSolver<MatrixXd> solver(K, true);
    if (solver.info() != Eigen::Success)
        throw DecompositionError("eigendecompose: QR iteration did not converge");

    EigenDecomposition out;
    out.eigenvalues = solver.eigenvalues();
    const MatrixXcd V_raw = solver.eigenvectors();
    const int m = static_cast<int>(K.rows());
    const double scale = std::max(K.norm(), 1e-300);

    detail::ScoredDecomposition best = detail::score_eigenvectors(V_raw, out.eigenvalues, K);

    // For repeated eigenvalues the back-substituted vectors can lose
    // independence. Re-derive those clusters by block inverse iteration and
    // keep whichever decomposition scores better; a defective cluster leaves
    // the residual large and the model falls back to the matrix exponential.
    const double cluster_tol = 1e-8 * scale;
    if (best.residual > residual_tol || best.condition > condition_tol) {
        MatrixXcd V = V_raw;
        std::vector<bool> seen(static_cast<std::size_t>(m), false);
        for (int i = 0; i < m; ++i) {
            if (seen[static_cast<std::size_t>(i)]) continue;
            std::vector<int> cluster{i};
            for (int j = i + 1; j < m; ++j)
                if (!seen[static_cast<std::size_t>(j)] &&
                    std::abs(out.eigenvalues[i] - out.eigenvalues[j]) <= cluster_tol)
                    cluster.push_back(j);
            for (int j : cluster) seen[static_cast<std::size_t>(j)] = true;
            if (cluster.size() < 2) continue;
            const MatrixXcd X = detail::cluster_eigenvectors(
                K, out.eigenvalues[i], static_cast<int>(cluster.size()), scale,
                0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(i));
            for (std::size_t c = 0; c < cluster.size(); ++c)
                V.col(cluster[c]) = X.col(static_cast<int>(c));
        }
        const detail::ScoredDecomposition refined =
            detail::score_eigenvectors(V, out.eigenvalues, K);
        if (refined.residual < best.residual) best = refined;
    }

    out.P = std::move(best.P);
    out.P_inverse = std::move(best.V);
    out.diagnostics.residual = best.residual;
    out.diagnostics.condition_P = best.condition;
    out.diagnostics.diagonalizable =
        best.residual <= residual_tol && best.condition <= condition_tol;
    return out;
}

// ---------------------------------------------------------------------------
// Observable projections
// ---------------------------------------------------------------------------

using Observable = std::function<double(const VectorXd&)>;

// Rows hold the basis-projection coefficients of each observable, computed on
// a tensor quadrature grid (exact for polynomial observables).
inline MatrixXd project_observables(const std::vector<Observable>& observables,
                                    const BasisSet& basis, int points_per_dim = 0,
                                    std::int64_t max_nodes = 4'000'000) {
    const int p = points_per_dim > 0 ? points_per_dim : basis.max_order + 1;
    const QuadratureGrid grid = quadrature_grid(basis, p, max_nodes);
    const int q = static_cast<int>(observables.size());
    const int m = basis.size();
    MatrixXd A = MatrixXd::Zero(q, m);
    for (Eigen::Index n = 0; n < grid.size(); ++n) {
        const VectorXd x = grid.nodes.row(n).transpose();
        const VectorXd L = eval_basis(basis, x);
        for (int i = 0; i < q; ++i) A.row(i) += grid.weights[n] * observables[static_cast<std::size_t>(i)](x) * L.transpose();
    }
    return A;
}

// Exact projection of the identity observables g(x) = x. Each coordinate is
// affine, so only the constant and the matching degree-1 entry are nonzero.
inline MatrixXd identity_projection(const BasisSet& basis) {
    const int d = basis.dimension;
    const int m = basis.size();
    MatrixXd A = MatrixXd::Zero(d, m);
    for (int j = 0; j < m; ++j) {
        const auto& mi = basis.indices[static_cast<std::size_t>(j)].orders;
        const int total = basis.indices[static_cast<std::size_t>(j)].total_order();
        if (total == 0) {
            for (int i = 0; i < d; ++i) A(i, j) = basis.domain.center(i);
        } else if (total == 1) {
            for (int i = 0; i < d; ++i)
                if (mi[static_cast<std::size_t>(i)] == 1)
                    A(i, j) = basis.domain.halfwidth(i) / std::sqrt(3.0);
        }
    }
    return A;
}

// ---------------------------------------------------------------------------
// KoopmanModel: everything needed to propagate observables spectrally.
// ---------------------------------------------------------------------------

struct KoopmanModel {
    BasisSet basis;
    MatrixXd K;
    VectorXcd eigenvalues;
    MatrixXcd P;           // left eigenvectors (rows)
    MatrixXcd P_inverse;   // right eigenvectors (columns)
    MatrixXd A;            // q x m observable projections
    MatrixXcd B;           // A * P_inverse (Koopman modes)
    bool diagonalizable = false;
    double condition_P = 0.0;
    double eigen_residual = 0.0;

    int state_dimension() const { return basis.dimension; }
    int observable_count() const { return static_cast<int>(A.rows()); }
};

inline KoopmanModel build_koopman_model(const DynamicsField& dynamics, const BasisSet& basis,
                                        const AssemblyOptions& opts = {},
                                        std::optional<MatrixXd> observables = std::nullopt,
                                        int eigendecompose_limit = 2500) {
    KoopmanModel model;
    model.basis = basis;
    model.K = build_koopman_matrix(dynamics, basis, opts);
    model.A = observables ? std::move(*observables) : identity_projection(basis);
    if (basis.size() > eigendecompose_limit) {
        // very large bases propagate through the matrix exponential action;
        // the dense eigensolve would dominate the build many times over
        const int m = basis.size();
        model.eigenvalues = VectorXcd::Zero(m);
        model.P = MatrixXcd::Identity(m, m);
        model.P_inverse = MatrixXcd::Identity(m, m);
        model.diagonalizable = false;
        model.condition_P = std::numeric_limits<double>::infinity();
        model.eigen_residual = std::numeric_limits<double>::infinity();
        model.B = model.A.cast<std::complex<double>>();
        return model;
    }
    EigenDecomposition eig = eigendecompose(model.K);
    model.eigenvalues = std::move(eig.eigenvalues);
    model.P = std::move(eig.P);
    model.P_inverse = std::move(eig.P_inverse);
    model.diagonalizable = eig.diagnostics.diagonalizable;
    model.condition_P = eig.diagnostics.condition_P;
    model.eigen_residual = eig.diagnostics.residual;
    model.B = model.A.cast<std::complex<double>>() * model.P_inverse;
    return model;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

inline constexpr double kImaginaryTolerance = 1e-8;

namespace detail {

// y <- exp(K * theta) y by scaling and squaring applied to the action
// (truncated Taylor per scaled step); used when the model is not
// diagonalizable and for very large bases.
inline VectorXd expm_action(const MatrixXd& K, double theta, VectorXd y) {
    const double norm = K.cwiseAbs().colwise().sum().maxCoeff() * std::abs(theta);
    int s = 0;
    while (norm / std::pow(2.0, s) > 0.5 && s < 60) ++s;
    const double h = theta / std::pow(2.0, s);
    const long reps = 1L << s;
    for (long r = 0; r < reps; ++r) {
        VectorXd term = y;
        for (int k = 1; k <= 60; ++k) {
            term = (h / k) * (K * term);
            y += term;
            if (term.cwiseAbs().maxCoeff() <= 1e-18 * (1.0 + y.cwiseAbs().maxCoeff())) break;
        }
    }
    return y;
}

}  // namespace detail

// Caches the per-state spectral data so that many theta evaluations (time
// quadrature, Jacobians) reuse one basis evaluation and one P application.
class SpectralPropagator {
  public:
    SpectralPropagator(const KoopmanModel& model, const VectorXd& x0)
        : model_(&model), x0_(x0) {
        L0_ = eval_basis(model.basis, x0);  // throws DomainError when outside
        if (model.diagonalizable) {
            w0_ = model.P * L0_.cast<std::complex<double>>();
        }
    }

    // Observables at theta (radians past the initial state).
    VectorXd observables(double theta) const {
        if (!model_->diagonalizable) {
            // march the exponential action forward from the last evaluated
            // angle; time quadratures and trajectory sampling sweep theta in
            // ascending order
            if (march_theta_ < 0.0 || theta < march_theta_) {
                march_theta_ = 0.0;
                march_state_ = L0_;
            }
            if (theta > march_theta_) {
                march_state_ =
                    detail::expm_action(model_->K, theta - march_theta_, march_state_);
                march_theta_ = theta;
            }
            return model_->A * march_state_;
        }
        const VectorXcd y = model_->B * (phase(theta).asDiagonal() * w0_);
        return strip_imaginary(y);
    }

    // d(observables at theta) / d(x0), q x d.
    MatrixXd state_transition(double theta) const {
        if (grad0_.size() == 0) {
            const MatrixXd G = eval_basis_gradient(model_->basis, x0_);
            if (model_->diagonalizable)
                gradw_ = model_->P * G.cast<std::complex<double>>();
            grad0_ = G;
        }
        if (!model_->diagonalizable) {
            MatrixXd out(model_->A.rows(), model_->basis.dimension);
            for (int c = 0; c < grad0_.cols(); ++c)
                out.col(c) = model_->A * detail::expm_action(model_->K, theta, grad0_.col(c));
            return out;
        }
        const MatrixXcd y = model_->B * (phase(theta).asDiagonal() * gradw_);
        MatrixXd out(y.rows(), y.cols());
        double max_im = 0.0, max_re = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            max_im = std::max(max_im, std::abs(y(i).imag()));
            max_re = std::max(max_re, std::abs(y(i).real()));
        }
        if (max_im > kImaginaryTolerance * (1.0 + max_re))
            throw SpectralConsistencyError("state transition imaginary residue " +
                                           std::to_string(max_im));
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index j = 0; j < y.cols(); ++j) out(i, j) = y(i, j).real();
        return out;
    }

  private:
    VectorXcd phase(double theta) const {
        VectorXcd e(model_->eigenvalues.size());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            e[i] = std::exp(model_->eigenvalues[i] * theta);
        return e;
    }

    static VectorXd strip_imaginary(const VectorXcd& y) {
        double max_im = 0.0, max_re = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            max_im = std::max(max_im, std::abs(y[i].imag()));
            max_re = std::max(max_re, std::abs(y[i].real()));
        }
        if (max_im > kImaginaryTolerance * (1.0 + max_re))
            throw SpectralConsistencyError("propagation imaginary residue " + std::to_string(max_im) +
                                           " exceeds tolerance");
        return y.real();
    }

    const KoopmanModel* model_;
    VectorXd x0_;
    VectorXd L0_;
    VectorXcd w0_;
    mutable MatrixXd grad0_;
    mutable MatrixXcd gradw_;
    mutable double march_theta_ = -1.0;
    mutable VectorXd march_state_;
};

// One-shot observable propagation: A P^-1 exp(Lam theta) P L(x0).
inline VectorXd propagate(const KoopmanModel& model, const VectorXd& x0, double theta) {
    return SpectralPropagator(model, x0).observables(theta);
}

// One-shot state transition matrix at theta.
inline MatrixXd state_transition_matrix(const KoopmanModel& model, const VectorXd& x0,
                                        double theta) {
    return SpectralPropagator(model, x0).state_transition(theta);
}

}  // namespace kolambert
