#pragma once

// Convex health-index baseline:
//
//   1/2 ||w||^2
//   + beta  * sum_{labeled n} max(0, 1 - y_n (x_{n,T_n}^T w + b))
//   + alpha * sum_{n, t}      max(0, 1 - z_{n,t}^T w)
//   + lambda_var/2 * (1/N+) sum_{y=+1} ((x_{n,T_n} - xbar+)^T w)^2
//   + lambda_var/2 * (1/N-) sum_{y=-1} ((x_{n,T_n} - xbar-)^T w)^2
//   + gamma_l1 * ||w||_1
//
// trained by proximal subgradient descent (soft-thresholding handles the L1
// term) with step size step_size / sqrt(k) and best-iterate return.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "uqchi/error.hpp"
#include "uqchi/panel.hpp"

namespace uqchi {

struct ChiHyperparams {
    double alpha = 1.0;       // monotonicity hinge
    double beta = 1.0;        // label hinge
    double lambda_var = 0.1;  // within-class variance
    double gamma_l1 = 0.1;    // sparsity

    void validate() const {
        for (double v : {alpha, beta, lambda_var, gamma_l1})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("BadHyperparameter", "CHI hyperparameters must be finite and non-negative");
    }
};

struct ChiModel {
    Vector w;
    double b = 0.0;

    static ChiModel zero(Eigen::Index d) { return {Vector::Zero(d), 0.0}; }
};

/// Panel-derived matrices the objective needs, built once per training run.
struct ChiData {
    Matrix terminal;           // labeled terminal visits, rows
    Vector labels;             // +1 / -1 for rows of `terminal`
    Matrix diffs;              // all consecutive-visit differences, rows
    Matrix centered_positive;  // positive terminal visits minus their class mean
    Matrix centered_negative;

    static ChiData from_panel(const LongitudinalPanel& panel) {
        const Eigen::Index d = panel.dim();
        std::vector<Vector> term, pos, neg;
        std::vector<double> ys;
        Eigen::Index n_diff = 0;
        for (const auto& s : panel.subjects()) {
            n_diff += static_cast<Eigen::Index>(s.visit_count()) - 1;
            if (!is_observed(s.label)) continue;
            term.push_back(s.last_visit());
            ys.push_back(label_sign(s.label));
            (s.label == Label::Positive ? pos : neg).push_back(s.last_visit());
        }
        ChiData out;
        out.terminal.resize(static_cast<Eigen::Index>(term.size()), d);
        out.labels.resize(static_cast<Eigen::Index>(ys.size()));
        for (std::size_t i = 0; i < term.size(); ++i) {
            out.terminal.row(static_cast<Eigen::Index>(i)) = term[i].transpose();
            out.labels[static_cast<Eigen::Index>(i)] = ys[i];
        }
        out.diffs.resize(n_diff, d);
        Eigen::Index r = 0;
        for (const auto& s : panel.subjects()) {
            const Matrix z = step_differences(s);
            if (z.rows() > 0) out.diffs.middleRows(r, z.rows()) = z;
            r += z.rows();
        }
        auto centered = [d](const std::vector<Vector>& xs) {
            Matrix m(static_cast<Eigen::Index>(xs.size()), d);
            if (xs.empty()) return m;
            Vector mean = Vector::Zero(d);
            for (const auto& x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = (xs[i] - mean).transpose();
            return m;
        };
        out.centered_positive = centered(pos);
        out.centered_negative = centered(neg);
        return out;
    }
};

inline double chi_objective(const ChiModel& m, const ChiData& data, const ChiHyperparams& h) {
    double obj = 0.5 * m.w.squaredNorm();
    if (data.terminal.rows() > 0) {
        const Vector margins = (data.labels.array() * ((data.terminal * m.w).array() + m.b)).matrix();
        obj += h.beta * (1.0 - margins.array()).max(0.0).sum();
    }
    if (data.diffs.rows() > 0) obj += h.alpha * (1.0 - (data.diffs * m.w).array()).max(0.0).sum();
    if (data.centered_positive.rows() > 0)
        obj += 0.5 * h.lambda_var * (data.centered_positive * m.w).squaredNorm() /
               static_cast<double>(data.centered_positive.rows());
    if (data.centered_negative.rows() > 0)
        obj += 0.5 * h.lambda_var * (data.centered_negative * m.w).squaredNorm() /
               static_cast<double>(data.centered_negative.rows());
    return obj + h.gamma_l1 * m.w.lpNorm<1>();
}

inline double chi_objective(const ChiModel& m, const LongitudinalPanel& panel, const ChiHyperparams& h) {
    if (m.w.size() != panel.dim()) throw ValidationError("DimensionMismatch", "model dimension differs from panel");
    return chi_objective(m, ChiData::from_panel(panel), h);
}

/// Gradient of the differentiable part (ridge + variance terms) plus a
/// subgradient of the two hinge sums, with respect to (w, b).
inline std::pair<Vector, double> chi_subgradient(const ChiModel& m, const ChiData& data, const ChiHyperparams& h) {
    Vector gw = m.w;
    double gb = 0.0;
    if (data.terminal.rows() > 0) {
        const Vector margins = (data.labels.array() * ((data.terminal * m.w).array() + m.b)).matrix();
        Vector coef = Vector::Zero(margins.size());
        for (Eigen::Index i = 0; i < margins.size(); ++i)
            if (margins[i] < 1.0) coef[i] = -h.beta * data.labels[i];
        gw += data.terminal.transpose() * coef;
        gb += coef.sum();
    }
    if (data.diffs.rows() > 0) {
        const Vector mz = data.diffs * m.w;
        Vector coef = Vector::Zero(mz.size());
        for (Eigen::Index i = 0; i < mz.size(); ++i)
            if (mz[i] < 1.0) coef[i] = -h.alpha;
        gw += data.diffs.transpose() * coef;
    }
    if (data.centered_positive.rows() > 0)
        gw += h.lambda_var * data.centered_positive.transpose() * (data.centered_positive * m.w) /
              static_cast<double>(data.centered_positive.rows());
    if (data.centered_negative.rows() > 0)
        gw += h.lambda_var * data.centered_negative.transpose() * (data.centered_negative * m.w) /
              static_cast<double>(data.centered_negative.rows());
    return {gw, gb};
}

inline Vector soft_threshold(const Vector& x, double t) {
    return x.unaryExpr([t](double v) { return v > t ? v - t : (v < -t ? v + t : 0.0); });
}

struct ChiTrainOptions {
    int steps = 1500;
    double step_size = 0.0;  // <= 0 picks 1 / (1 + subgradient scale of the data)
};

/// Step size that moves w by O(1) on the first iterations regardless of
/// how many visit pairs or labeled subjects the panel holds.
inline double chi_default_step(const ChiData& data, const ChiHyperparams& h) {
    double scale = 1.0;
    for (Eigen::Index i = 0; i < data.terminal.rows(); ++i) scale += h.beta * data.terminal.row(i).norm();
    for (Eigen::Index i = 0; i < data.diffs.rows(); ++i) scale += h.alpha * data.diffs.row(i).norm();
    double var_scale = 0.0;
    for (const Matrix* m : {&data.centered_positive, &data.centered_negative})
        if (m->rows() > 0) var_scale += m->squaredNorm() / static_cast<double>(m->rows());
    return 1.0 / (scale + h.lambda_var * var_scale);
}

inline ChiModel chi_train(const LongitudinalPanel& panel, const ChiHyperparams& hyper, const ChiTrainOptions& opts = {}) {
    hyper.validate();
    if (panel.labeled_count() == 0) throw ValidationError("NoLabels", "CHI training needs at least one labeled subject");
    if (opts.steps < 0) throw ValidationError("BadSteps", "steps must be non-negative");
    const ChiData data = ChiData::from_panel(panel);
    const double step0 = opts.step_size > 0.0 ? opts.step_size : chi_default_step(data, hyper);

    ChiModel cur = ChiModel::zero(panel.dim());
    ChiModel best = cur;
    double best_obj = chi_objective(cur, data, hyper);
    for (int k = 1; k <= opts.steps; ++k) {
        const double eta = step0 / std::sqrt(static_cast<double>(k));
        const auto [gw, gb] = chi_subgradient(cur, data, hyper);
        cur.w = soft_threshold(cur.w - eta * gw, eta * hyper.gamma_l1);
        cur.b -= eta * gb;
        const double obj = chi_objective(cur, data, hyper);
        if (!std::isfinite(obj))
            throw NumericalError("NonFiniteObjective", "CHI objective diverged at step " + std::to_string(k) +
                                                           " (step size " + std::to_string(step0) + ")");
        if (obj < best_obj) {
            best_obj = obj;
            best = cur;
        }
    }
    return best;
}

inline int chi_predict(const ChiModel& m, const Vector& x) {
    if (x.size() != m.w.size()) throw ValidationError("DimensionMismatch", "feature dimension differs from model");
    return m.w.dot(x) + m.b >= 0.0 ? 1 : -1;
}

/// Number of visit pairs with a decreasing index under `w`.
inline int monotonicity_violations(const Vector& w, const LongitudinalPanel& panel) {
    int count = 0;
    for (const auto& s : panel.subjects())
        for (std::size_t r = 1; r < s.visit_count(); ++r)
            if (s.visit(r).dot(w) < s.visit(r - 1).dot(w)) ++count;
    return count;
}

}  // namespace uqchi
