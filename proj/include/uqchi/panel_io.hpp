#pragma once

// CSV long format (`subject_id,t,label,f1,...,fd`) and the standardization
// JSON sidecar.

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uqchi/panel.hpp"

namespace uqchi {

/// Column mapping for long-format CSV input. Empty `feature_columns` means
/// every column that is not the id, time or label column, in file order.
struct CsvSchema {
    std::string subject_column = "subject_id";
    std::string time_column = "t";
    std::string label_column = "label";
    std::vector<std::string> feature_columns;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline Label parse_label(std::string_view s, std::size_t line_no) {
    s = trim(s);
    if (s.empty()) return Label::Unobserved;
    if (s == "1" || s == "+1") return Label::Positive;
    if (s == "-1") return Label::Negative;
    throw ValidationError("BadLabel", fmt::format("line {}: label '{}' not in {{1,-1,<blank>}}", line_no, s));
}

}  // namespace detail

inline LongitudinalPanel read_panel_csv(std::istream& in, const CsvSchema& schema = {}) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ValidationError("BadHeader", "empty CSV input");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);

    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name(detail::trim(header[i]));
        if (!column_of.emplace(name, i).second) throw ValidationError("BadHeader", "duplicate column '" + name + "'");
    }
    auto require = [&](const std::string& name) {
        auto it = column_of.find(name);
        if (it == column_of.end()) throw ValidationError("BadHeader", "missing column '" + name + "'");
        return it->second;
    };
    const std::size_t id_col = require(schema.subject_column);
    const std::size_t t_col = require(schema.time_column);
    const auto label_it = column_of.find(schema.label_column);
    const bool has_label = label_it != column_of.end();
    const std::size_t label_index = has_label ? label_it->second : header.size();
    std::vector<std::size_t> feature_cols;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (i != id_col && i != t_col && i != label_index) feature_cols.push_back(i);
    } else {
        for (const auto& f : schema.feature_columns) feature_cols.push_back(require(f));
    }
    if (feature_cols.empty()) throw ValidationError("BadHeader", "no feature columns");
    const std::size_t d = feature_cols.size();

    struct Pending {
        std::string id;
        std::map<int, std::vector<double>> rows;
        Label label = Label::Unobserved;
    };
    std::vector<Pending> pending;
    std::unordered_map<std::string, std::size_t> slot;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ValidationError("DimensionMismatch",
                                  fmt::format("line {}: {} fields, header has {}", line_no, cells.size(), header.size()));
        std::string id(detail::trim(cells[id_col]));
        if (id.empty()) throw ValidationError("BadSubjectId", fmt::format("line {}: empty subject id", line_no));
        const auto t = detail::parse_int(cells[t_col]);
        if (!t) throw ValidationError("BadTime", fmt::format("line {}: time '{}' is not an integer", line_no, cells[t_col]));
        const Label label = has_label ? detail::parse_label(cells[label_index], line_no) : Label::Unobserved;
        std::vector<double> x(d);
        for (std::size_t k = 0; k < d; ++k) {
            const auto v = detail::parse_double(cells[feature_cols[k]]);
            if (!v || !std::isfinite(*v))
                throw ValidationError("NonNumericFeature",
                                      fmt::format("line {}: feature '{}' value '{}'", line_no,
                                                  detail::trim(header[feature_cols[k]]), cells[feature_cols[k]]));
            x[k] = *v;
        }

        auto [it, inserted] = slot.emplace(id, pending.size());
        if (inserted) pending.push_back(Pending{id, {}, Label::Unobserved});
        Pending& p = pending[it->second];
        if (!p.rows.emplace(static_cast<int>(*t), std::move(x)).second)
            throw ValidationError("DuplicateTimeIndex", fmt::format("line {}: subject '{}' repeats t={}", line_no, id, *t));
        if (is_observed(label)) {
            if (is_observed(p.label) && p.label != label)
                throw ValidationError("ConflictingLabels", fmt::format("line {}: subject '{}' has conflicting labels", line_no, id));
            p.label = label;
        }
    }

    std::vector<SubjectSeries> subjects;
    subjects.reserve(pending.size());
    for (auto& p : pending) {
        SubjectSeries s;
        s.subject_id = p.id;
        s.label = p.label;
        s.observations.resize(static_cast<Eigen::Index>(p.rows.size()), static_cast<Eigen::Index>(d));
        Eigen::Index r = 0;
        for (auto& [t, x] : p.rows) {
            s.times.push_back(t);
            for (std::size_t k = 0; k < d; ++k) s.observations(r, static_cast<Eigen::Index>(k)) = x[k];
            ++r;
        }
        subjects.push_back(std::move(s));
    }
    return LongitudinalPanel(std::move(subjects));
}

inline LongitudinalPanel load_panel(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ValidationError("FileNotFound", "cannot open '" + path + "'");
    return read_panel_csv(in, schema);
}

inline std::string label_field(Label l) {
    switch (l) {
        case Label::Positive: return "1";
        case Label::Negative: return "-1";
        case Label::Unobserved: return "";
    }
    return "";
}

/// Writes features in shortest round-trip decimal form.
inline void write_panel_csv(std::ostream& out, const LongitudinalPanel& panel) {
    out << "subject_id,t,label";
    for (Eigen::Index k = 0; k < panel.dim(); ++k) out << ",f" << (k + 1);
    out << '\n';
    for (const auto& s : panel.subjects()) {
        for (std::size_t r = 0; r < s.visit_count(); ++r) {
            out << s.subject_id << ',' << s.times[r] << ',' << label_field(s.label);
            for (Eigen::Index k = 0; k < panel.dim(); ++k)
                out << ',' << fmt::format("{}", s.observations(static_cast<Eigen::Index>(r), k));
            out << '\n';
        }
    }
}

inline void save_panel(const std::string& path, const LongitudinalPanel& panel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("FileNotWritable", "cannot write '" + path + "'");
    write_panel_csv(out, panel);
}

inline nlohmann::json to_json(const Standardization& st) {
    return {{"format", "uqchi-standardization"},
            {"version", 1},
            {"d", st.mean.size()},
            {"mean", std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size())},
            {"scale", std::vector<double>(st.scale.data(), st.scale.data() + st.scale.size())}};
}

inline Standardization standardization_from_json(const nlohmann::json& j) {
    try {
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto scale = j.at("scale").get<std::vector<double>>();
        if (mean.size() != scale.size() || mean.empty())
            throw ValidationError("BadStandardization", "mean/scale length mismatch");
        for (double s : scale)
            if (!(s > 0.0)) throw ValidationError("BadStandardization", "scale entries must be positive");
        return {Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()))};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("BadStandardization", e.what());
    }
}

}  // namespace uqchi
