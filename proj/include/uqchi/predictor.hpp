#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "uqchi/med_core.hpp"
#include "uqchi/panel.hpp"
#include "uqchi/panel_io.hpp"

namespace uqchi {

struct PredictionRecord {
    std::string subject_id;
    int t_last = 0;
    std::vector<double> index_values;  // posterior mean index per visit
    double index_mean = 0.0;           // at the decision (last) visit
    double index_std = 0.0;
    int predicted_label = 1;           // +1 / -1
    double confidence = 0.5;           // in [0.5, 1]
    bool abstained = false;

    /// +1 / -1, or 0 when the record abstains.
    int rejection_aware_label() const { return abstained ? 0 : predicted_label; }
};

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace detail {
inline void check_dim(const WeightPosterior& post, const Vector& x) {
    if (x.size() != post.dim())
        throw ValidationError("DimensionMismatch", "feature vector has dimension " + std::to_string(x.size()) +
                                                       ", posterior has " + std::to_string(post.dim()));
}
}  // namespace detail

/// sign(v^T x) with ties going to +1.
inline int predict(const WeightPosterior& post, const Vector& x) {
    detail::check_dim(post, x);
    return post.mean.dot(x) >= 0.0 ? 1 : -1;
}

/// Under w ~ N(v, I), w^T x ~ N(v^T x, ||x||^2); the larger class probability
/// is Phi(|v^T x| / ||x||).
inline double confidence(const WeightPosterior& post, const Vector& x) {
    detail::check_dim(post, x);
    const double norm = x.norm();
    if (!(norm > 0.0)) throw ValidationError("ZeroFeatureVector", "confidence undefined for a zero feature vector");
    return standard_normal_cdf(std::abs(post.mean.dot(x)) / norm);
}

inline std::vector<PredictionRecord> reject_by_threshold(std::vector<PredictionRecord> records, double threshold) {
    if (!(threshold >= 0.5 && threshold <= 1.0))
        throw ValidationError("BadThreshold", "rejection threshold must lie in [0.5, 1]");
    for (auto& r : records) r.abstained = r.confidence < threshold;
    return records;
}

/// Abstains on the floor(rate * M) least confident records; equal
/// confidences keep input order.
inline std::vector<PredictionRecord> reject_by_rate(std::vector<PredictionRecord> records, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("BadRejectionRate", "rejection rate must lie in [0, 1)");
    const auto m = records.size();
    const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(m) + 1e-9));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return records[i].confidence < records[j].confidence; });
    for (auto& r : records) r.abstained = false;
    for (std::size_t i = 0; i < k; ++i) records[order[i]].abstained = true;
    return records;
}

struct TrajectoryPoint {
    int t;
    double mean;
    double std;
};

struct IndexTrajectory {
    std::vector<TrajectoryPoint> points;
    int monotonicity_violations = 0;  // #{t : h_{t+1} < h_t}
};

inline IndexTrajectory index_trajectory(const WeightPosterior& post, const SubjectSeries& series) {
    if (series.dim() != post.dim())
        throw ValidationError("DimensionMismatch", "series dimension differs from posterior");
    IndexTrajectory out;
    for (std::size_t r = 0; r < series.visit_count(); ++r) {
        const Vector x = series.visit(r);
        out.points.push_back({series.times[r], post.mean.dot(x), x.norm()});
        if (r > 0 && out.points[r].mean < out.points[r - 1].mean) ++out.monotonicity_violations;
    }
    return out;
}

inline PredictionRecord predict_subject(const WeightPosterior& post, const SubjectSeries& series) {
    const IndexTrajectory traj = index_trajectory(post, series);
    const Vector x = series.last_visit();
    PredictionRecord rec;
    rec.subject_id = series.subject_id;
    rec.t_last = series.last_time();
    for (const auto& p : traj.points) rec.index_values.push_back(p.mean);
    rec.index_mean = traj.points.back().mean;
    rec.index_std = traj.points.back().std;
    rec.predicted_label = predict(post, x);
    rec.confidence = confidence(post, x);
    return rec;
}

inline std::vector<PredictionRecord> predict_panel(const WeightPosterior& post, const LongitudinalPanel& panel) {
    std::vector<PredictionRecord> out;
    out.reserve(panel.size());
    for (const auto& s : panel.subjects()) out.push_back(predict_subject(post, s));
    return out;
}

inline void write_predictions_csv(std::ostream& out, const std::vector<PredictionRecord>& records) {
    out << "subject_id,t_last,index_mean,index_std,pred,confidence,abstained\n";
    for (const auto& r : records)
        out << fmt::format("{},{},{:.12g},{:.12g},{},{:.12g},{}\n", r.subject_id, r.t_last, r.index_mean, r.index_std,
                           r.rejection_aware_label(), r.confidence, r.abstained ? 1 : 0);
}

/// Reads the prediction CSV back. Records get predicted_label from `pred`
/// when not abstained; abstained rows keep predicted_label = 0.
inline std::vector<PredictionRecord> read_predictions_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("BadHeader", "empty prediction file");
    if (detail::trim(line) != "subject_id,t_last,index_mean,index_std,pred,confidence,abstained")
        throw ValidationError("BadHeader", "unexpected prediction header '" + line + "'");
    std::vector<PredictionRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 7) throw ValidationError("DimensionMismatch", fmt::format("line {}: expected 7 fields", line_no));
        PredictionRecord r;
        r.subject_id = std::string(detail::trim(cells[0]));
        const auto t = detail::parse_int(cells[1]);
        const auto mean = detail::parse_double(cells[2]);
        const auto sd = detail::parse_double(cells[3]);
        const auto pred = detail::parse_int(cells[4]);
        const auto conf = detail::parse_double(cells[5]);
        const auto abst = detail::parse_int(cells[6]);
        if (!t || !mean || !sd || !pred || !abst || (*pred != 1 && *pred != -1 && *pred != 0) || (*abst != 0 && *abst != 1))
            throw ValidationError("BadPredictionRow", fmt::format("line {}: malformed prediction row", line_no));
        r.t_last = static_cast<int>(*t);
        r.index_mean = *mean;
        r.index_std = *sd;
        r.abstained = *abst == 1;
        r.predicted_label = r.abstained ? 0 : static_cast<int>(*pred);
        if (!r.abstained && *pred == 0)
            throw ValidationError("BadPredictionRow", fmt::format("line {}: pred 0 without abstention", line_no));
        r.confidence = conf.value_or(std::nan(""));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace uqchi
