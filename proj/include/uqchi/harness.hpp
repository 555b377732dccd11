#pragma once

// Experiment driver: split/mask -> aggregates -> dual solve -> posterior ->
// predict -> reject -> accepted-accuracy, over grids of label ratio, train
// ratio, rejection rate and margin rate c, plus the CHI baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uqchi/chi_baseline.hpp"
#include "uqchi/med_core.hpp"
#include "uqchi/panel.hpp"
#include "uqchi/panel_io.hpp"
#include "uqchi/predictor.hpp"
#include "uqchi/simulator.hpp"

namespace uqchi {

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
    std::optional<double> accuracy;  // correct / accepted; empty when nothing was accepted
    std::size_t accepted = 0;
    std::size_t abstained = 0;
    std::size_t correct = 0;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t true_negative = 0;
    std::size_t false_negative = 0;
};

/// `predictions` use {1, -1, 0}, 0 meaning abstention; `truth` uses {1, -1}.
inline Evaluation evaluate(std::span<const int> predictions, std::span<const int> truth) {
    if (predictions.size() != truth.size())
        throw ValidationError("IdMismatch", "prediction and truth counts differ");
    Evaluation e;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], y = truth[i];
        if (y != 1 && y != -1) throw ValidationError("BadTruth", "truth labels must be +1 or -1");
        if (p == 0) {
            ++e.abstained;
            continue;
        }
        if (p != 1 && p != -1) throw ValidationError("BadPrediction", "predictions must be in {1, -1, 0}");
        ++e.accepted;
        if (p == y) ++e.correct;
        if (p == 1 && y == 1) ++e.true_positive;
        if (p == 1 && y == -1) ++e.false_positive;
        if (p == -1 && y == -1) ++e.true_negative;
        if (p == -1 && y == 1) ++e.false_negative;
    }
    if (e.accepted > 0) e.accuracy = static_cast<double>(e.correct) / static_cast<double>(e.accepted);
    return e;
}

/// Matches records to truth by subject id; both sides must cover the same ids.
inline Evaluation evaluate(const std::vector<PredictionRecord>& records,
                           const std::vector<std::pair<std::string, Label>>& truth) {
    std::unordered_map<std::string, Label> by_id;
    for (const auto& [id, label] : truth) by_id.emplace(id, label);
    if (by_id.size() != records.size())
        throw ValidationError("IdMismatch", fmt::format("{} predictions vs {} truth subjects", records.size(), by_id.size()));
    std::vector<int> preds, ys;
    for (const auto& r : records) {
        auto it = by_id.find(r.subject_id);
        if (it == by_id.end()) throw ValidationError("IdMismatch", "no truth for subject '" + r.subject_id + "'");
        if (!is_observed(it->second)) throw ValidationError("BadTruth", "subject '" + r.subject_id + "' has no label");
        preds.push_back(r.rejection_aware_label());
        ys.push_back(label_sign(it->second));
    }
    return evaluate(preds, ys);
}

inline nlohmann::json to_json(const Evaluation& e) {
    return {{"accuracy", e.accuracy ? nlohmann::json(*e.accuracy) : nlohmann::json(nullptr)},
            {"accepted", e.accepted},
            {"abstained", e.abstained},
            {"correct", e.correct},
            {"confusion",
             {{"tp", e.true_positive}, {"fp", e.false_positive}, {"tn", e.true_negative}, {"fn", e.false_negative}}}};
}

// ---------------------------------------------------------------------------
// Training entry points shared by the CLI and the pipeline

struct UqchiFit {
    DualProblem problem;
    DualSolution solution;
    WeightPosterior posterior;
};

inline UqchiFit fit_uqchi(const LongitudinalPanel& train, double c, double unobserved_prior = 0.5,
                          const SolverOptions& solver = {}) {
    const LabelPrior prior = make_label_prior(train, unobserved_prior);
    DualProblem problem(aggregates(train, prior), c);
    DualSolution sol = solve_dual(problem, solver);
    WeightPosterior post = posterior(sol, problem);
    return {std::move(problem), std::move(sol), std::move(post)};
}

inline std::vector<PredictionRecord> chi_predict_panel(const ChiModel& m, const LongitudinalPanel& panel) {
    std::vector<PredictionRecord> out;
    for (const auto& s : panel.subjects()) {
        PredictionRecord r;
        r.subject_id = s.subject_id;
        r.t_last = s.last_time();
        for (std::size_t t = 0; t < s.visit_count(); ++t) r.index_values.push_back(s.visit(t).dot(m.w));
        r.index_mean = s.last_visit().dot(m.w) + m.b;
        r.predicted_label = chi_predict(m, s.last_visit());
        r.confidence = std::nan("");
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation of c

struct CvResult {
    double chosen_c = 0.0;
    std::vector<double> mean_accuracy;  // aligned with the sorted grid
    std::vector<double> grid;           // ascending
    bool holdout = false;
    std::string warning;
};

/// Subject-level folds; labeled and unlabeled subjects are dealt round-robin
/// separately so every fold sees labeled validation subjects. Picks the c
/// with the highest mean fold accuracy, ties going to the smaller c.
inline CvResult cross_validate_c(const LongitudinalPanel& train, std::vector<double> c_grid, int folds,
                                 std::uint64_t seed, double unobserved_prior = 0.5, const SolverOptions& solver = {}) {
    if (c_grid.empty()) throw ValidationError("EmptyGrid", "c grid is empty");
    if (folds < 2) throw ValidationError("BadFolds", "cross-validation needs at least 2 folds");
    std::sort(c_grid.begin(), c_grid.end());
    c_grid.erase(std::unique(c_grid.begin(), c_grid.end()), c_grid.end());
    CvResult res;
    res.grid = c_grid;
    res.mean_accuracy.assign(c_grid.size(), 0.0);
    if (c_grid.size() == 1) {
        res.chosen_c = c_grid.front();
        return res;
    }

    std::vector<std::size_t> labeled, unlabeled;
    for (std::size_t i = 0; i < train.size(); ++i)
        (is_observed(train.subject(i).label) ? labeled : unlabeled).push_back(i);
    if (labeled.size() < 2) {
        res.chosen_c = c_grid.front();
        res.warning = "fewer than 2 labeled subjects; using the smallest c";
        return res;
    }
    auto rng = derived_rng(seed, 3);
    std::shuffle(labeled.begin(), labeled.end(), rng);
    std::shuffle(unlabeled.begin(), unlabeled.end(), rng);

    std::vector<int> fold_of(train.size(), 0);
    int n_folds = folds;
    if (labeled.size() < static_cast<std::size_t>(folds)) {
        res.holdout = true;
        res.warning = fmt::format("{} labeled subjects < {} folds; using a single holdout split", labeled.size(), folds);
        n_folds = 1;
        const std::size_t n_val = std::max<std::size_t>(1, labeled.size() / 3);
        for (std::size_t i = 0; i < labeled.size(); ++i) fold_of[labeled[i]] = i < n_val ? 0 : -1;
        for (auto i : unlabeled) fold_of[i] = -1;
    } else {
        for (std::size_t i = 0; i < labeled.size(); ++i) fold_of[labeled[i]] = static_cast<int>(i % folds);
        for (std::size_t i = 0; i < unlabeled.size(); ++i) fold_of[unlabeled[i]] = static_cast<int>(i % folds);
    }

    std::vector<double> acc_sum(c_grid.size(), 0.0);
    int used_folds = 0;
    for (int f = 0; f < n_folds; ++f) {
        std::vector<std::size_t> fit_idx, val_idx;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (fold_of[i] == f) {
                if (is_observed(train.subject(i).label)) val_idx.push_back(i);
            } else {
                fit_idx.push_back(i);
            }
        }
        if (val_idx.empty() || fit_idx.empty()) continue;
        ++used_folds;
        const LongitudinalPanel fit = select_subjects(train, fit_idx);
        const LongitudinalPanel val = select_subjects(train, val_idx);
        const auto aggs = aggregates(fit, make_label_prior(fit, unobserved_prior));
        std::vector<int> truth;
        for (const auto& s : val.subjects()) truth.push_back(label_sign(s.label));
        for (std::size_t k = 0; k < c_grid.size(); ++k) {
            try {
                const DualProblem problem(aggs, c_grid[k]);
                const WeightPosterior post = posterior(solve_dual(problem, solver), problem);
                std::vector<int> preds;
                for (const auto& s : val.subjects()) preds.push_back(predict(post, s.last_visit()));
                acc_sum[k] += evaluate(preds, truth).accuracy.value_or(0.0);
            } catch (const Error&) {
                // a failed solve scores zero on this fold
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 0; k < c_grid.size(); ++k) {
        res.mean_accuracy[k] = used_folds > 0 ? acc_sum[k] / used_folds : 0.0;
        if (res.mean_accuracy[k] > res.mean_accuracy[best] + 1e-12) best = k;
    }
    res.chosen_c = c_grid[best];
    return res;
}

// ---------------------------------------------------------------------------
// Experiment specification

enum class Method { Uqchi, Chi };
enum class CMode { Fixed, CrossValidated, Both };

inline std::string method_name(Method m) { return m == Method::Uqchi ? "uqchi" : "chi"; }

struct CsvSource {
    std::string path;
    CsvSchema schema;
};

struct ExperimentSpec {
    std::variant<SimConfig, CsvSource> data = SimConfig{};
    std::vector<double> c_grid{1.5, 3, 5, 10, 20, 100};
    CMode c_mode = CMode::Fixed;
    std::vector<double> label_ratios{0.1, 0.2, 0.5};  // fraction of training labels masked
    std::vector<double> train_ratios{0.3, 0.5, 0.7};
    std::vector<double> rejection_rates{0.2, 0.4, 0.6};
    int n_seeds = 20;
    std::uint64_t base_seed = 1;
    int cv_folds = 10;
    std::vector<Method> methods{Method::Uqchi, Method::Chi};
    bool standardize = true;
    ScaleMode scale_mode = ScaleMode::UnitNorm;
    double unobserved_prior = 0.5;
    SolverOptions solver;
    ChiHyperparams chi_hyper;
    ChiTrainOptions chi_train;

    void validate() const {
        auto in_open_unit = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && x < 1.0; });
        };
        if (c_grid.empty() || label_ratios.empty() || train_ratios.empty() || rejection_rates.empty() || methods.empty())
            throw ValidationError("BadSpec", "grids must be non-empty");
        if (!std::all_of(c_grid.begin(), c_grid.end(), [](double c) { return c > 0.0 && std::isfinite(c); }))
            throw ValidationError("BadSpec", "c values must be positive");
        if (!in_open_unit(label_ratios) || !in_open_unit(train_ratios) || !in_open_unit(rejection_rates))
            throw ValidationError("BadSpec", "ratios must lie in (0, 1)");
        if (n_seeds < 1) throw ValidationError("BadSpec", "n_seeds must be >= 1");
        if (cv_folds < 2) throw ValidationError("BadSpec", "cv_folds must be >= 2");
        if (!(unobserved_prior >= 0.0 && unobserved_prior <= 1.0))
            throw ValidationError("BadSpec", "unobserved_prior must lie in [0, 1]");
        chi_hyper.validate();
        if (const auto* sim = std::get_if<SimConfig>(&data)) sim->validate();
    }
};

namespace detail {
template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"data",         "c_grid",          "c_mode",    "label_ratios",
                                                "train_ratios", "rejection_rates", "n_seeds",   "base_seed",
                                                "cv_folds",     "methods",         "standardize", "unobserved_prior",
                                                "solver",       "chi",             "scale_mode"};
    ExperimentSpec s;
    try {
        if (!j.is_object()) throw ValidationError("BadSpec", "experiment spec must be a JSON object");
        for (const auto& [key, value] : j.items())
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ValidationError("BadSpec", "unknown spec field '" + key + "'");
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("simulate")) {
                s.data = sim_config_from_json(d.at("simulate"));
            } else if (d.contains("csv")) {
                CsvSource src;
                src.path = d.at("csv").get<std::string>();
                if (d.contains("schema")) {
                    const auto& sc = d.at("schema");
                    detail::read_field(sc, "subject_column", src.schema.subject_column);
                    detail::read_field(sc, "time_column", src.schema.time_column);
                    detail::read_field(sc, "label_column", src.schema.label_column);
                    detail::read_field(sc, "feature_columns", src.schema.feature_columns);
                }
                s.data = src;
            } else {
                throw ValidationError("BadSpec", "data must contain 'simulate' or 'csv'");
            }
        }
        detail::read_field(j, "c_grid", s.c_grid);
        if (j.contains("c_mode")) {
            const auto m = j.at("c_mode").get<std::string>();
            if (m == "fixed") s.c_mode = CMode::Fixed;
            else if (m == "cv") s.c_mode = CMode::CrossValidated;
            else if (m == "both") s.c_mode = CMode::Both;
            else throw ValidationError("BadSpec", "c_mode must be fixed, cv or both");
        }
        detail::read_field(j, "label_ratios", s.label_ratios);
        detail::read_field(j, "train_ratios", s.train_ratios);
        detail::read_field(j, "rejection_rates", s.rejection_rates);
        detail::read_field(j, "n_seeds", s.n_seeds);
        detail::read_field(j, "base_seed", s.base_seed);
        detail::read_field(j, "cv_folds", s.cv_folds);
        if (j.contains("methods")) {
            s.methods.clear();
            for (const auto& m : j.at("methods")) {
                const auto name = m.get<std::string>();
                if (name == "uqchi") s.methods.push_back(Method::Uqchi);
                else if (name == "chi") s.methods.push_back(Method::Chi);
                else throw ValidationError("BadSpec", "unknown method '" + name + "'");
            }
        }
        detail::read_field(j, "standardize", s.standardize);
        if (j.contains("scale_mode")) s.scale_mode = scale_mode_from_name(j.at("scale_mode").get<std::string>());
        detail::read_field(j, "unobserved_prior", s.unobserved_prior);
        if (j.contains("solver")) {
            detail::read_field(j.at("solver"), "tol", s.solver.tol);
            detail::read_field(j.at("solver"), "max_iter", s.solver.max_iter);
        }
        if (j.contains("chi")) {
            const auto& c = j.at("chi");
            detail::read_field(c, "alpha", s.chi_hyper.alpha);
            detail::read_field(c, "beta", s.chi_hyper.beta);
            detail::read_field(c, "lambda_var", s.chi_hyper.lambda_var);
            detail::read_field(c, "gamma_l1", s.chi_hyper.gamma_l1);
            detail::read_field(c, "steps", s.chi_train.steps);
            detail::read_field(c, "step_size", s.chi_train.step_size);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("BadSpec", e.what());
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Results

struct CellKey {
    Method method;
    double label_ratio;
    double train_ratio;
    double rejection_rate;
    std::string c;  // numeric value, "cv", or "-" for methods without c

    /// Numeric c first, then "cv"; "-" sorts before everything.
    double c_order() const {
        if (c == "-") return -std::numeric_limits<double>::infinity();
        if (c == "cv") return std::numeric_limits<double>::infinity();
        return detail::parse_double(c).value_or(0.0);
    }
    auto sort_key() const {
        return std::make_tuple(method, label_ratio, train_ratio, c_order(), c, rejection_rate);
    }
    bool operator<(const CellKey& o) const { return sort_key() < o.sort_key(); }
    bool operator==(const CellKey& o) const { return sort_key() == o.sort_key(); }
};

struct SeedRecord {
    CellKey key;
    std::uint64_t seed = 0;
    Evaluation eval;
    std::optional<double> chosen_c;
    std::string error;
};

struct ResultRow {
    CellKey key;
    std::optional<double> mean_accuracy;
    double std_accuracy = 0.0;
    int n_seeds = 0;  // seeds with a defined accuracy
    double mean_abstain = 0.0;
    int n_failed = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    const ResultRow* find(const CellKey& key) const {
        for (const auto& r : rows)
            if (r.key == key) return &r;
        return nullptr;
    }
};

inline std::string c_label(double c) { return fmt::format("{}", c); }

inline nlohmann::json to_json(const SeedRecord& r) {
    nlohmann::json j = {{"method", method_name(r.key.method)},
                        {"label_ratio", r.key.label_ratio},
                        {"train_ratio", r.key.train_ratio},
                        {"rejection_rate", r.key.rejection_rate},
                        {"c", r.key.c},
                        {"seed", r.seed},
                        {"accuracy", r.eval.accuracy ? nlohmann::json(*r.eval.accuracy) : nlohmann::json(nullptr)},
                        {"accepted", r.eval.accepted},
                        {"abstained", r.eval.abstained},
                        {"correct", r.eval.correct}};
    if (r.chosen_c) j["chosen_c"] = *r.chosen_c;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

inline SeedRecord seed_record_from_json(const nlohmann::json& j) {
    SeedRecord r;
    const auto m = j.at("method").get<std::string>();
    r.key = {m == "uqchi" ? Method::Uqchi : Method::Chi, j.at("label_ratio").get<double>(),
             j.at("train_ratio").get<double>(), j.at("rejection_rate").get<double>(), j.at("c").get<std::string>()};
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("accuracy").is_null()) r.eval.accuracy = j.at("accuracy").get<double>();
    r.eval.accepted = j.at("accepted").get<std::size_t>();
    r.eval.abstained = j.at("abstained").get<std::size_t>();
    r.eval.correct = j.at("correct").get<std::size_t>();
    if (j.contains("chosen_c")) r.chosen_c = j.at("chosen_c").get<double>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
}

/// Groups per-seed records by cell. Mean and sample standard deviation run
/// over seeds with a defined accuracy; failed seeds are only counted.
inline ResultTable aggregate_records(const std::vector<SeedRecord>& records) {
    std::map<CellKey, std::vector<const SeedRecord*>> groups;
    for (const auto& r : records) groups[r.key].push_back(&r);
    ResultTable table;
    for (const auto& [key, recs] : groups) {
        ResultRow row;
        row.key = key;
        std::vector<double> accs;
        double abstain_sum = 0.0;
        int ok = 0;
        for (const auto* r : recs) {
            if (!r->error.empty()) {
                ++row.n_failed;
                continue;
            }
            ++ok;
            abstain_sum += static_cast<double>(r->eval.abstained);
            if (r->eval.accuracy) accs.push_back(*r->eval.accuracy);
        }
        row.n_seeds = static_cast<int>(accs.size());
        row.mean_abstain = ok > 0 ? abstain_sum / ok : 0.0;
        if (!accs.empty()) {
            const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
            double ss = 0.0;
            for (double a : accs) ss += (a - mean) * (a - mean);
            row.mean_accuracy = mean;
            row.std_accuracy = accs.size() > 1 ? std::sqrt(ss / static_cast<double>(accs.size() - 1)) : 0.0;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline void write_results_csv(std::ostream& out, const ResultTable& t) {
    out << "method,label_ratio,train_ratio,rejection_rate,c,mean_accuracy,std_accuracy,n_seeds,mean_abstain,n_failed\n";
    for (const auto& r : t.rows) {
        out << fmt::format("{},{},{},{},{},{},{:.6f},{},{:.4f},{}\n", method_name(r.key.method), r.key.label_ratio,
                           r.key.train_ratio, r.key.rejection_rate, r.key.c,
                           r.mean_accuracy ? fmt::format("{:.6f}", *r.mean_accuracy) : std::string("null"),
                           r.std_accuracy, r.n_seeds, r.mean_abstain, r.n_failed);
    }
}

inline void write_seed_log(std::ostream& out, const std::vector<SeedRecord>& records) {
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

struct PipelineResult {
    ResultTable table;
    std::vector<SeedRecord> log;
};

// ---------------------------------------------------------------------------
// Pipeline

namespace detail {

struct SeedData {
    LongitudinalPanel panel;  // truth labels where known
};

inline SeedData load_seed_data(const ExperimentSpec& spec, std::uint64_t seed,
                               const std::optional<LongitudinalPanel>& csv_panel) {
    if (const auto* sim = std::get_if<SimConfig>(&spec.data)) {
        SimConfig cfg = *sim;
        cfg.seed = seed;
        return {simulate(cfg).fully_labeled()};
    }
    return {*csv_panel};
}

inline std::vector<PredictionRecord> labeled_only(const std::vector<PredictionRecord>& recs,
                                                  const LongitudinalPanel& panel, std::vector<int>& truth) {
    std::vector<PredictionRecord> out;
    truth.clear();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (!is_observed(panel.subject(i).label)) continue;
        out.push_back(recs[i]);
        truth.push_back(label_sign(panel.subject(i).label));
    }
    return out;
}

inline Evaluation score(const std::vector<PredictionRecord>& recs, const std::vector<int>& truth) {
    std::vector<int> preds;
    preds.reserve(recs.size());
    for (const auto& r : recs) preds.push_back(r.rejection_aware_label());
    return evaluate(preds, truth);
}

}  // namespace detail

/// Runs every (seed, train ratio, label ratio) split once, then every method
/// and c setting on it. Deterministic for a given spec; failures are
/// recorded per cell and do not stop the sweep.
inline PipelineResult run_pipeline(const ExperimentSpec& spec) {
    spec.validate();
    std::optional<LongitudinalPanel> csv_panel;
    if (const auto* src = std::get_if<CsvSource>(&spec.data)) csv_panel = load_panel(src->path, src->schema);

    std::vector<double> rates{0.0};
    for (double r : spec.rejection_rates)
        if (r != 0.0) rates.push_back(r);

    std::vector<std::pair<std::string, std::optional<double>>> c_settings;  // label, fixed value
    if (spec.c_mode != CMode::CrossValidated)
        for (double c : spec.c_grid) c_settings.emplace_back(c_label(c), c);
    if (spec.c_mode != CMode::Fixed) c_settings.emplace_back("cv", std::nullopt);

    PipelineResult result;
    auto record_error = [&](const CellKey& key, std::uint64_t seed, const std::string& what) {
        SeedRecord r;
        r.key = key;
        r.seed = seed;
        r.error = what;
        result.log.push_back(std::move(r));
    };

    for (int s = 0; s < spec.n_seeds; ++s) {
        const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(s);
        const detail::SeedData data = detail::load_seed_data(spec, seed, csv_panel);
        for (double tr : spec.train_ratios) {
            for (double lr : spec.label_ratios) {
                std::optional<PanelSplit> split;
                std::string split_error;
                try {
                    split = split_and_mask(data.panel, tr, lr, seed);
                } catch (const Error& e) {
                    split_error = e.what();
                }
                std::optional<LongitudinalPanel> train, test;
                if (split) {
                    if (spec.standardize) {
                        const Standardization st = fit_standardization(split->train, spec.scale_mode);
                        train = apply_standardization(split->train, st);
                        test = apply_standardization(split->test, st);
                    } else {
                        train = split->train;
                        test = split->test;
                    }
                }

                for (Method method : spec.methods) {
                    if (method == Method::Chi) {
                        const CellKey key{method, lr, tr, 0.0, "-"};
                        if (!split) {
                            record_error(key, seed, split_error);
                            continue;
                        }
                        try {
                            const ChiModel m = chi_train(*train, spec.chi_hyper, spec.chi_train);
                            std::vector<int> truth;
                            const auto recs = detail::labeled_only(chi_predict_panel(m, *test), *test, truth);
                            result.log.push_back({key, seed, detail::score(recs, truth), std::nullopt, {}});
                        } catch (const Error& e) {
                            record_error(key, seed, e.what());
                        }
                        continue;
                    }

                    for (const auto& [label, fixed_c] : c_settings) {
                        auto fail_all = [&](const std::string& what) {
                            for (double rate : rates) record_error({method, lr, tr, rate, label}, seed, what);
                        };
                        if (!split) {
                            fail_all(split_error);
                            continue;
                        }
                        try {
                            double c = 0.0;
                            std::optional<double> chosen;
                            if (fixed_c) {
                                c = *fixed_c;
                            } else {
                                c = cross_validate_c(*train, spec.c_grid, spec.cv_folds, seed, spec.unobserved_prior,
                                                     spec.solver)
                                        .chosen_c;
                                chosen = c;
                            }
                            const UqchiFit fit = fit_uqchi(*train, c, spec.unobserved_prior, spec.solver);
                            std::vector<int> truth;
                            const auto recs = detail::labeled_only(predict_panel(fit.posterior, *test), *test, truth);
                            for (double rate : rates) {
                                const auto rejected = reject_by_rate(recs, rate);
                                result.log.push_back({{method, lr, tr, rate, label}, seed,
                                                      detail::score(rejected, truth), chosen, {}});
                            }
                        } catch (const Error& e) {
                            fail_all(e.what());
                        }
                    }
                }
            }
        }
    }
    result.table = aggregate_records(result.log);
    return result;
}

}  // namespace uqchi
