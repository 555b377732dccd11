#pragma once

// Longitudinal panel data model: irregularly sampled multivariate visits per
// subject, optional subject-level labels, feature standardization, label
// priors and the per-subject aggregate vectors the dual problem consumes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "uqchi/error.hpp"

namespace uqchi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Label : int { Negative = -1, Unobserved = 0, Positive = 1 };

inline bool is_observed(Label l) { return l != Label::Unobserved; }

inline int label_sign(Label l) { return static_cast<int>(l); }

/// One subject's visits. Rows of `observations` are x_{n,t} in visit order.
struct SubjectSeries {
    std::string subject_id;
    std::vector<int> times;
    Matrix observations;  // T_n x d
    Label label = Label::Unobserved;

    std::size_t visit_count() const { return times.size(); }
    Eigen::Index dim() const { return observations.cols(); }

    Vector visit(std::size_t t) const { return observations.row(static_cast<Eigen::Index>(t)).transpose(); }
    Vector first_visit() const { return visit(0); }
    Vector last_visit() const { return visit(visit_count() - 1); }
    int last_time() const { return times.back(); }
};

inline void validate_series(const SubjectSeries& s) {
    if (s.times.empty())
        throw ValidationError("EmptySeries", "subject '" + s.subject_id + "' has no visits");
    if (static_cast<std::size_t>(s.observations.rows()) != s.times.size())
        throw ValidationError("DimensionMismatch",
                              "subject '" + s.subject_id + "': time count differs from observation rows");
    for (std::size_t i = 1; i < s.times.size(); ++i) {
        if (s.times[i] == s.times[i - 1])
            throw ValidationError("DuplicateTimeIndex", "subject '" + s.subject_id + "' repeats t=" +
                                                            std::to_string(s.times[i]));
        if (s.times[i] < s.times[i - 1])
            throw ValidationError("UnorderedTimes", "subject '" + s.subject_id + "' times not increasing");
    }
    if (!s.observations.allFinite())
        throw ValidationError("NonFiniteFeature", "subject '" + s.subject_id + "' has non-finite features");
}

/// Per-feature affine map x -> (x - mean) / scale.
struct Standardization {
    Vector mean;
    Vector scale;

    static Standardization identity(Eigen::Index d) {
        return {Vector::Zero(d), Vector::Ones(d)};
    }

    bool is_identity() const {
        return (mean.array() == 0.0).all() && (scale.array() == 1.0).all();
    }

    Vector apply(const Vector& x) const { return ((x - mean).array() / scale.array()).matrix(); }
    Vector invert(const Vector& x) const { return (x.array() * scale.array()).matrix() + mean; }

    Matrix apply_rows(const Matrix& rows) const {
        Matrix out = rows;
        for (Eigen::Index r = 0; r < out.rows(); ++r)
            out.row(r) = ((rows.row(r) - mean.transpose()).array() / scale.transpose().array()).matrix();
        return out;
    }

    /// Composition: apply `this` after `inner`.
    Standardization compose(const Standardization& inner) const {
        return {inner.mean + (inner.scale.array() * mean.array()).matrix(),
                (inner.scale.array() * scale.array()).matrix()};
    }
};

/// Immutable, validated collection of subjects sharing feature dimension d.
class LongitudinalPanel {
public:
    LongitudinalPanel(std::vector<SubjectSeries> subjects, Standardization standardization)
        : subjects_(std::move(subjects)), standardization_(std::move(standardization)) {
        if (subjects_.empty()) throw ValidationError("EmptyPanel", "panel needs at least one subject");
        d_ = subjects_.front().dim();
        if (d_ < 1) throw ValidationError("DimensionMismatch", "feature dimension must be >= 1");
        for (const auto& s : subjects_) {
            validate_series(s);
            if (s.dim() != d_)
                throw ValidationError("DimensionMismatch", "subject '" + s.subject_id + "' has dimension " +
                                                               std::to_string(s.dim()) + ", expected " +
                                                               std::to_string(d_));
        }
        if (standardization_.mean.size() != d_ || standardization_.scale.size() != d_)
            throw ValidationError("DimensionMismatch", "standardization dimension differs from panel");
    }

    explicit LongitudinalPanel(std::vector<SubjectSeries> subjects)
        : LongitudinalPanel(subjects, Standardization::identity(subjects.empty() ? 0 : subjects.front().dim())) {}

    const std::vector<SubjectSeries>& subjects() const { return subjects_; }
    const SubjectSeries& subject(std::size_t n) const { return subjects_.at(n); }
    std::size_t size() const { return subjects_.size(); }
    Eigen::Index dim() const { return d_; }
    const Standardization& standardization() const { return standardization_; }

    std::size_t count(Label l) const {
        return static_cast<std::size_t>(
            std::count_if(subjects_.begin(), subjects_.end(), [l](const auto& s) { return s.label == l; }));
    }
    std::size_t labeled_count() const { return size() - count(Label::Unobserved); }

    std::size_t observation_count() const {
        std::size_t k = 0;
        for (const auto& s : subjects_) k += s.visit_count();
        return k;
    }

private:
    std::vector<SubjectSeries> subjects_;
    Eigen::Index d_ = 0;
    Standardization standardization_;
};

enum class ScaleMode {
    UnitVariance,  // each feature has variance 1
    UnitNorm,      // unit variance divided by sqrt(d): E||x||^2 = 1, the scale of the N(0, I) weight prior
};

inline ScaleMode scale_mode_from_name(const std::string& name) {
    if (name == "unit_norm") return ScaleMode::UnitNorm;
    if (name == "unit_variance") return ScaleMode::UnitVariance;
    throw ValidationError("BadScaleMode", "scale mode must be unit_norm or unit_variance");
}

/// Zero mean over every observation of the panel, scaled per `mode`.
/// Constant features keep unit scale before the sqrt(d) factor.
inline Standardization fit_standardization(const LongitudinalPanel& panel, ScaleMode mode = ScaleMode::UnitNorm) {
    const Eigen::Index d = panel.dim();
    const double count = static_cast<double>(panel.observation_count());
    Vector mean = Vector::Zero(d);
    for (const auto& s : panel.subjects()) mean += s.observations.colwise().sum().transpose();
    mean /= count;
    Vector var = Vector::Zero(d);
    for (const auto& s : panel.subjects())
        for (Eigen::Index r = 0; r < s.observations.rows(); ++r)
            var += (s.observations.row(r).transpose() - mean).array().square().matrix();
    var /= count;
    Vector scale = var.cwiseSqrt();
    for (Eigen::Index k = 0; k < d; ++k)
        if (!(scale[k] > 1e-12)) scale[k] = 1.0;
    if (mode == ScaleMode::UnitNorm) scale *= std::sqrt(static_cast<double>(d));
    return {mean, scale};
}

/// Applies `stats` to raw features. The returned panel records the total map
/// from the original units.
inline LongitudinalPanel apply_standardization(const LongitudinalPanel& panel, const Standardization& stats) {
    if (stats.mean.size() != panel.dim())
        throw ValidationError("DimensionMismatch", "standardization dimension differs from panel");
    std::vector<SubjectSeries> out = panel.subjects();
    for (auto& s : out) s.observations = stats.apply_rows(s.observations);
    return LongitudinalPanel(std::move(out), stats.compose(panel.standardization()));
}

inline std::pair<LongitudinalPanel, Standardization> standardize(const LongitudinalPanel& panel,
                                                                 ScaleMode mode = ScaleMode::UnitNorm) {
    Standardization stats = fit_standardization(panel, mode);
    return {apply_standardization(panel, stats), stats};
}

inline LongitudinalPanel destandardize(const LongitudinalPanel& panel) {
    const Standardization& st = panel.standardization();
    std::vector<SubjectSeries> out = panel.subjects();
    for (auto& s : out)
        for (Eigen::Index r = 0; r < s.observations.rows(); ++r)
            s.observations.row(r) = st.invert(s.observations.row(r).transpose()).transpose();
    return LongitudinalPanel(std::move(out), Standardization::identity(panel.dim()));
}

/// Prior probability p0(y_n = +1) per subject.
struct LabelPrior {
    std::vector<double> positive_probability;
};

inline LabelPrior make_label_prior(const LongitudinalPanel& panel, double unobserved_positive = 0.5) {
    if (!(unobserved_positive >= 0.0 && unobserved_positive <= 1.0))
        throw ValidationError("BadPrior", "unobserved prior must lie in [0, 1]");
    LabelPrior prior;
    prior.positive_probability.reserve(panel.size());
    for (const auto& s : panel.subjects()) {
        switch (s.label) {
            case Label::Positive: prior.positive_probability.push_back(1.0); break;
            case Label::Negative: prior.positive_probability.push_back(0.0); break;
            case Label::Unobserved: prior.positive_probability.push_back(unobserved_positive); break;
        }
    }
    return prior;
}

/// E[y_n] under the prior, in [-1, 1].
inline double expected_label(const LabelPrior& prior, std::size_t n) {
    return 2.0 * prior.positive_probability.at(n) - 1.0;
}

/// Consecutive-visit differences z_t = x_{t+1} - x_t as rows; empty for T_n = 1.
inline Matrix step_differences(const SubjectSeries& s) {
    const Eigen::Index steps = s.observations.rows() - 1;
    Matrix z(steps, s.dim());
    for (Eigen::Index t = 0; t < steps; ++t) z.row(t) = s.observations.row(t + 1) - s.observations.row(t);
    return z;
}

struct SubjectAggregate {
    Vector value;           // a_n = ybar_n x_{n,T_n} + sum_t z_{n,t}
    Vector monotone_sum;    // sum_t z_{n,t}
    double expected_label;  // ybar_n
};

inline SubjectAggregate make_aggregate(const SubjectSeries& s, double ybar) {
    const Matrix z = step_differences(s);
    Vector zsum = Vector::Zero(s.dim());
    for (Eigen::Index t = 0; t < z.rows(); ++t) zsum += z.row(t).transpose();
    return {ybar * s.last_visit() + zsum, zsum, ybar};
}

inline std::vector<SubjectAggregate> aggregates(const LongitudinalPanel& panel, const LabelPrior& prior) {
    if (prior.positive_probability.size() != panel.size())
        throw ValidationError("DimensionMismatch", "label prior size differs from subject count");
    std::vector<SubjectAggregate> out;
    out.reserve(panel.size());
    for (std::size_t n = 0; n < panel.size(); ++n)
        out.push_back(make_aggregate(panel.subject(n), expected_label(prior, n)));
    return out;
}

/// Panel restricted to the listed subject indices, in the listed order.
inline LongitudinalPanel select_subjects(const LongitudinalPanel& panel, const std::vector<std::size_t>& idx) {
    std::vector<SubjectSeries> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(panel.subject(i));
    return LongitudinalPanel(std::move(out), panel.standardization());
}

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

struct PanelSplit {
    LongitudinalPanel train;
    LongitudinalPanel test;
    std::vector<std::size_t> train_index;  // positions in the source panel
    std::vector<std::size_t> test_index;
};

/// Subject-level random split, then masks round(unlabeled_fraction * N_train)
/// training labels. The split and the mask draw from separate streams of
/// `seed`, so for a fixed seed the masked sets are nested in the fraction.
inline PanelSplit split_and_mask(const LongitudinalPanel& panel, double train_fraction, double unlabeled_fraction,
                                 std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0) || !(unlabeled_fraction >= 0.0 && unlabeled_fraction <= 1.0))
        throw ValidationError("BadFraction", "fractions must lie in [0, 1]");
    const std::size_t n = panel.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0) throw ValidationError("EmptySplit", "train split is empty");
    if (n_train >= n) throw ValidationError("EmptySplit", "test split is empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto split_rng = derived_rng(seed, 1);
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    std::vector<SubjectSeries> train;
    train.reserve(n_train);
    for (auto i : train_idx) train.push_back(panel.subject(i));

    const auto n_mask = static_cast<std::size_t>(std::llround(unlabeled_fraction * static_cast<double>(n_train)));
    std::vector<std::size_t> mask_order(n_train);
    std::iota(mask_order.begin(), mask_order.end(), 0);
    auto mask_rng = derived_rng(seed, 2);
    std::shuffle(mask_order.begin(), mask_order.end(), mask_rng);
    for (std::size_t k = 0; k < n_mask; ++k) train[mask_order[k]].label = Label::Unobserved;

    return {LongitudinalPanel(std::move(train), panel.standardization()), select_subjects(panel, test_idx),
            std::move(train_idx), std::move(test_idx)};
}

}  // namespace uqchi
