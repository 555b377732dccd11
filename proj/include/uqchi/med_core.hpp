#pragma once

// Maximum-entropy dual for the uncertainty-quantified health index.
//
// With a N(0, I) weight prior and exponential margin priors of rate c, the
// dual objective over one multiplier per subject is
//
//     J(lambda) = sum_n [lambda_n + log(1 - lambda_n / c)] - 1/2 ||v(lambda)||^2,
//     v(lambda) = sum_n lambda_n a_n,
//
// concave on the box 0 <= lambda_n < c, and J = -log Z with
// log Z = log Z_w + log Z_gamma. At the maximizer the weight posterior is
// N(v(lambda*), I).

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "uqchi/error.hpp"
#include "uqchi/panel.hpp"

namespace uqchi {

/// Immutable dual problem: aggregate vectors as rows plus the margin-prior rate.
class DualProblem {
public:
    DualProblem(Matrix aggregate_rows, double c) : rows_(std::move(aggregate_rows)), c_(c) {
        if (!(c_ > 0.0) || !std::isfinite(c_)) throw ValidationError("BadMarginRate", "c must be positive and finite");
        if (rows_.rows() < 1) throw ValidationError("EmptyProblem", "dual problem needs at least one subject");
        if (rows_.cols() < 1) throw ValidationError("DimensionMismatch", "aggregate dimension must be >= 1");
        if (!rows_.allFinite()) throw ValidationError("NonFiniteAggregate", "aggregates contain non-finite values");
    }

    DualProblem(const std::vector<SubjectAggregate>& aggs, double c) : DualProblem(stack(aggs), c) {}

    const Matrix& aggregates() const { return rows_; }
    double c() const { return c_; }
    Eigen::Index size() const { return rows_.rows(); }
    Eigen::Index dim() const { return rows_.cols(); }

    /// Largest multiplier the solver may use; keeps the log barrier finite.
    double upper_bound() const { return c_ - box_margin * c_; }

    bool barrier_interior() const { return c_ > 1.0; }

    static constexpr double box_margin = 1e-8;

private:
    static Matrix stack(const std::vector<SubjectAggregate>& aggs) {
        if (aggs.empty()) return Matrix(0, 0);
        Matrix m(static_cast<Eigen::Index>(aggs.size()), aggs.front().value.size());
        for (std::size_t n = 0; n < aggs.size(); ++n) {
            if (aggs[n].value.size() != m.cols())
                throw ValidationError("DimensionMismatch", "aggregates have differing dimensions");
            m.row(static_cast<Eigen::Index>(n)) = aggs[n].value.transpose();
        }
        return m;
    }

    Matrix rows_;
    double c_;
};

namespace detail {

inline void check_lambda_length(const Vector& lambda, Eigen::Index n) {
    if (lambda.size() != n)
        throw ValidationError("DimensionMismatch", "lambda has length " + std::to_string(lambda.size()) +
                                                       ", expected " + std::to_string(n));
}

inline void check_domain(const Vector& lambda, double c) {
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (!(lambda[i] >= 0.0)) throw ValidationError("DomainError", "lambda entries must be >= 0");
        if (!(lambda[i] < c)) throw ValidationError("DomainError", "lambda entries must be < c");
    }
}

}  // namespace detail

/// v(lambda) = sum_n lambda_n a_n, aggregates given as rows.
inline Vector potential_vector(const Vector& lambda, const Matrix& aggregate_rows) {
    detail::check_lambda_length(lambda, aggregate_rows.rows());
    return aggregate_rows.transpose() * lambda;
}

inline Vector potential_vector(const Vector& lambda, const DualProblem& problem) {
    return potential_vector(lambda, problem.aggregates());
}

/// log Z = 1/2 ||v||^2 + sum_n [-lambda_n - log(1 - lambda_n / c)].
inline double log_partition(const Vector& lambda, const DualProblem& problem) {
    detail::check_lambda_length(lambda, problem.size());
    detail::check_domain(lambda, problem.c());
    const double log_zw = 0.5 * potential_vector(lambda, problem).squaredNorm();
    double log_zgamma = 0.0;
    for (Eigen::Index n = 0; n < lambda.size(); ++n)
        log_zgamma += -lambda[n] - std::log1p(-lambda[n] / problem.c());
    return log_zw + log_zgamma;
}

inline double dual_objective(const Vector& lambda, const DualProblem& problem) {
    detail::check_lambda_length(lambda, problem.size());
    detail::check_domain(lambda, problem.c());
    double barrier = 0.0;
    for (Eigen::Index n = 0; n < lambda.size(); ++n) barrier += lambda[n] + std::log1p(-lambda[n] / problem.c());
    return barrier - 0.5 * potential_vector(lambda, problem).squaredNorm();
}

/// dJ/dlambda_n = 1 - 1/(c - lambda_n) - a_n^T v(lambda).
inline Vector dual_gradient(const Vector& lambda, const DualProblem& problem) {
    detail::check_lambda_length(lambda, problem.size());
    detail::check_domain(lambda, problem.c());
    const Vector v = potential_vector(lambda, problem);
    Vector g = -(problem.aggregates() * v);
    for (Eigen::Index n = 0; n < lambda.size(); ++n) g[n] += 1.0 - 1.0 / (problem.c() - lambda[n]);
    return g;
}

/// Zeroes gradient components that point out of the box [0, ub].
inline Vector projected_gradient(const Vector& lambda, const Vector& grad, double upper) {
    Vector pg = grad;
    for (Eigen::Index n = 0; n < lambda.size(); ++n) {
        if (lambda[n] <= 0.0 && grad[n] < 0.0) pg[n] = 0.0;
        if (lambda[n] >= upper && grad[n] > 0.0) pg[n] = 0.0;
    }
    return pg;
}

struct SolverOptions {
    double tol = 1e-8;            // projected-gradient Euclidean norm
    int max_iter = 10000;
    double armijo = 1e-4;
    int max_backtracks = 60;
    double initial_lambda = -1.0;  // < 0: min(0.5, max((c-1)/2, 1e-3))
};

struct DualSolution {
    Vector lambda;
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // J after each accepted iterate, starting point first
    std::vector<std::string> warnings;
};

class NonConvergence : public NumericalError {
public:
    NonConvergence(DualSolution diagnostics, const std::string& message)
        : NumericalError("NonConvergence", message), diagnostics_(std::move(diagnostics)) {}
    const DualSolution& diagnostics() const noexcept { return diagnostics_; }

private:
    DualSolution diagnostics_;
};

/// KKT conditions on [0, ub]: zero multipliers may only have gradient <= tol,
/// interior multipliers need |gradient| <= tol, multipliers at ub need
/// gradient >= -tol.
inline bool kkt_certificate(const Vector& lambda, const DualProblem& problem, double tol) {
    const Vector g = dual_gradient(lambda, problem);
    const double ub = problem.upper_bound();
    for (Eigen::Index n = 0; n < lambda.size(); ++n) {
        if (lambda[n] <= 0.0) {
            if (g[n] > tol) return false;
        } else if (lambda[n] >= ub) {
            if (g[n] < -tol) return false;
        } else if (std::abs(g[n]) > tol) {
            return false;
        }
    }
    return true;
}

namespace detail {

// J(lambda + step) - J(lambda) without cancelling the two large objective
// values against each other.
inline double objective_increment(const Vector& lambda, const Vector& step, const Vector& v, const DualProblem& p) {
    const Vector dv = p.aggregates().transpose() * step;
    double inc = 0.0;
    for (Eigen::Index n = 0; n < lambda.size(); ++n)
        inc += step[n] + std::log1p(-step[n] / (p.c() - lambda[n]));
    return inc - 0.5 * dv.dot(2.0 * v + dv);
}

inline Vector project_box(Vector x, double upper) {
    for (Eigen::Index n = 0; n < x.size(); ++n) x[n] = std::clamp(x[n], 0.0, upper);
    return x;
}

}  // namespace detail

/// Maximizes J over [0, c(1 - 1e-8)]^N with a projected Newton method: Newton
/// steps on the free multipliers, scaled gradient steps on the ones held at a
/// bound, Armijo backtracking along the projection arc. Falls back to a
/// projected gradient step when the Newton arc fails to increase J.
inline DualSolution solve_dual(const DualProblem& problem, const SolverOptions& opts = {}) {
    if (!(opts.tol > 0.0)) throw ValidationError("BadTolerance", "tol must be positive");
    const double c = problem.c();
    const Matrix& a = problem.aggregates();
    const Eigen::Index n_sub = problem.size();
    const double ub = problem.upper_bound();

    DualSolution sol;
    if (c <= 1.0) {
        if (a.isZero(0.0))
            throw NumericalError("DegenerateProblem", "all aggregates are zero and c <= 1: maximizer sits at lambda = 0");
        sol.warnings.push_back("c <= 1: the margin barrier is maximized at lambda = 0");
    }

    double start = opts.initial_lambda;
    if (start < 0.0) start = std::min(0.5, std::max((c - 1.0) / 2.0, 1e-3));
    Vector lambda = Vector::Constant(n_sub, std::min(start, ub));

    const Matrix gram = a * a.transpose();
    Vector v = a.transpose() * lambda;
    double obj = dual_objective(lambda, problem);
    sol.objective_trace.push_back(obj);

    auto gradient_at = [&](const Vector& lam, const Vector& pot) {
        Vector g = -(a * pot);
        for (Eigen::Index n = 0; n < n_sub; ++n) g[n] += 1.0 - 1.0 / (c - lam[n]);
        return g;
    };

    int it = 0;
    Vector g = gradient_at(lambda, v);
    Vector pg = projected_gradient(lambda, g, ub);
    for (; it < opts.max_iter && pg.norm() > opts.tol; ++it) {
        const double width = (lambda - detail::project_box(lambda + g, ub)).norm();
        const double eps = std::min(1e-3, width);

        std::vector<Eigen::Index> free_set;
        std::vector<char> bound(static_cast<std::size_t>(n_sub), 0);
        for (Eigen::Index n = 0; n < n_sub; ++n) {
            const bool at_lower = lambda[n] <= eps && g[n] < 0.0;
            const bool at_upper = lambda[n] >= ub - eps && g[n] > 0.0;
            if (at_lower || at_upper)
                bound[static_cast<std::size_t>(n)] = 1;
            else
                free_set.push_back(n);
        }

        // -H = G + diag(1 / (c - lambda)^2) is positive definite.
        Vector curvature(n_sub);
        for (Eigen::Index n = 0; n < n_sub; ++n) curvature[n] = gram(n, n) + 1.0 / ((c - lambda[n]) * (c - lambda[n]));

        Vector dir = Vector::Zero(n_sub);
        for (Eigen::Index n = 0; n < n_sub; ++n)
            if (bound[static_cast<std::size_t>(n)]) dir[n] = g[n] / curvature[n];
        if (!free_set.empty()) {
            const auto nf = static_cast<Eigen::Index>(free_set.size());
            Matrix hf(nf, nf);
            Vector gf(nf);
            for (Eigen::Index i = 0; i < nf; ++i) {
                gf[i] = g[free_set[i]];
                for (Eigen::Index j = 0; j < nf; ++j) hf(i, j) = gram(free_set[i], free_set[j]);
                hf(i, i) += 1.0 / ((c - lambda[free_set[i]]) * (c - lambda[free_set[i]]));
            }
            Eigen::LLT<Matrix> llt(hf);
            Vector df = llt.info() == Eigen::Success ? Vector(llt.solve(gf)) : Vector(gf.cwiseQuotient(hf.diagonal()));
            for (Eigen::Index i = 0; i < nf; ++i) dir[free_set[i]] = df[i];
        }

        auto try_arc = [&](const Vector& d, bool newton) -> bool {
            double alpha = 1.0;
            for (int bt = 0; bt < opts.max_backtracks; ++bt, alpha *= 0.5) {
                const Vector trial = detail::project_box(lambda + alpha * d, ub);
                const Vector step = trial - lambda;
                if (step.isZero(0.0)) return false;
                double predicted = 0.0;
                for (Eigen::Index n = 0; n < n_sub; ++n) {
                    if (newton && !bound[static_cast<std::size_t>(n)])
                        predicted += alpha * g[n] * d[n];
                    else
                        predicted += g[n] * step[n];
                }
                const double inc = detail::objective_increment(lambda, step, v, problem);
                if (std::isfinite(inc) && inc >= opts.armijo * predicted && inc > 0.0) {
                    lambda = trial;
                    v = a.transpose() * lambda;
                    obj += inc;
                    return true;
                }
            }
            return false;
        };

        if (!try_arc(dir, true) && !try_arc(pg.cwiseQuotient(curvature), false)) break;

        sol.objective_trace.push_back(obj);
        g = gradient_at(lambda, v);
        pg = projected_gradient(lambda, g, ub);
    }

    sol.lambda = lambda;
    sol.objective = dual_objective(lambda, problem);
    sol.grad_norm = pg.norm();
    sol.iterations = it;
    sol.converged = sol.grad_norm <= opts.tol;
    if (!sol.converged) {
        const std::string msg = "projected gradient norm " + std::to_string(sol.grad_norm) + " after " +
                                std::to_string(it) + " iterations";
        throw NonConvergence(std::move(sol), msg);
    }
    return sol;
}

/// Gaussian posterior over index weights: N(mean, I).
struct WeightPosterior {
    Vector mean;

    Eigen::Index dim() const { return mean.size(); }
    static WeightPosterior prior(Eigen::Index d) { return {Vector::Zero(d)}; }
};

inline WeightPosterior posterior(const DualSolution& solution, const DualProblem& problem, bool force = false) {
    if (!solution.converged && !force)
        throw ValidationError("UnconvergedSolution", "refusing to build a posterior from an unconverged solution");
    return {potential_vector(solution.lambda, problem)};
}

}  // namespace uqchi
