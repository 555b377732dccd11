// uqchi: simulate / train / predict / evaluate / sweep.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "uqchi/uqchi.hpp"

namespace fs = std::filesystem;
using namespace uqchi;

namespace {

constexpr int exit_validation = 2;
constexpr int exit_numerical = 3;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("FileNotWritable", "cannot write '" + path + "'");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("FileNotFound", "cannot open '" + path + "'");
    return in;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::string config;
    std::string out;
    std::string echo;
    std::optional<std::uint64_t> seed;
    std::optional<int> d, n_per_class, informative_k, visits_min, visits_max, max_gap;
    std::optional<double> normal_proportion, degradation_rate, baseline_mean, label_observed_fraction;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
    auto* cmd = app.add_subcommand("simulate", "Generate a synthetic two-class panel");
    cmd->add_option("--config", a.config, "Simulation config JSON; flags override its fields");
    cmd->add_option("-o,--out", a.out, "Output panel CSV")->required();
    cmd->add_option("--echo", a.echo, "Config echo JSON (default: <out>.config.json)");
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--d", a.d, "Feature dimension");
    cmd->add_option("--n-per-class", a.n_per_class);
    cmd->add_option("--normal-proportion", a.normal_proportion);
    cmd->add_option("--visits-min", a.visits_min);
    cmd->add_option("--visits-max", a.visits_max);
    cmd->add_option("--max-gap", a.max_gap);
    cmd->add_option("--degradation-rate", a.degradation_rate);
    cmd->add_option("--baseline-mean", a.baseline_mean);
    cmd->add_option("--informative-k", a.informative_k);
    cmd->add_option("--label-observed-fraction", a.label_observed_fraction);
}

int run_simulate(const SimulateArgs& a) {
    SimConfig cfg = a.config.empty() ? SimConfig{} : sim_config_from_json(read_json_file(a.config));
    if (a.seed) cfg.seed = *a.seed;
    if (a.d) cfg.d = *a.d;
    if (a.n_per_class) cfg.n_per_class = *a.n_per_class;
    if (a.normal_proportion) cfg.normal_proportion = *a.normal_proportion;
    if (a.visits_min) cfg.visits_min = *a.visits_min;
    if (a.visits_max) cfg.visits_max = *a.visits_max;
    if (a.max_gap) cfg.max_gap = *a.max_gap;
    if (a.degradation_rate) cfg.degradation_rate = *a.degradation_rate;
    if (a.baseline_mean) cfg.baseline_mean = *a.baseline_mean;
    if (a.informative_k) cfg.informative_k = *a.informative_k;
    if (a.label_observed_fraction) cfg.label_observed_fraction = *a.label_observed_fraction;

    const SimulationResult r = simulate(cfg);
    save_panel(a.out, r.panel);
    const std::string echo = a.echo.empty() ? a.out + ".config.json" : a.echo;
    write_json_file(echo, config_echo(r));
    std::cerr << fmt::format("wrote {} subjects ({} labeled) to {}\n", r.panel.size(), r.panel.labeled_count(), a.out);
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string out;
    std::string method = "uqchi";
    std::optional<double> c;
    std::vector<double> c_grid;
    int cv_folds = 10;
    std::uint64_t seed = 1;
    double unobserved_prior = 0.5;
    bool no_standardize = false;
    std::string scale_mode = "unit_norm";
    double tol = 1e-8;
    int max_iter = 10000;
    ChiHyperparams hyper;
    ChiTrainOptions chi_opts;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* cmd = app.add_subcommand("train", "Fit a UQ-CHI posterior or the CHI baseline");
    cmd->add_option("--data", a.data, "Training panel CSV")->required();
    cmd->add_option("-o,--out", a.out, "Output model JSON")->required();
    cmd->add_option("--method", a.method)->check(CLI::IsMember({"uqchi", "chi"}));
    cmd->add_option("--c", a.c, "Margin rate c (uqchi)");
    cmd->add_option("--c-grid", a.c_grid, "Select c by cross-validation over this grid when --c is absent");
    cmd->add_option("--cv-folds", a.cv_folds);
    cmd->add_option("--seed", a.seed, "Fold assignment seed");
    cmd->add_option("--unobserved-prior", a.unobserved_prior, "p(y=+1) for unlabeled subjects");
    cmd->add_flag("--no-standardize", a.no_standardize);
    cmd->add_option("--scale-mode", a.scale_mode)->check(CLI::IsMember({"unit_norm", "unit_variance"}));
    cmd->add_option("--tol", a.tol);
    cmd->add_option("--max-iter", a.max_iter);
    cmd->add_option("--alpha", a.hyper.alpha);
    cmd->add_option("--beta", a.hyper.beta);
    cmd->add_option("--lambda-var", a.hyper.lambda_var);
    cmd->add_option("--gamma-l1", a.hyper.gamma_l1);
    cmd->add_option("--steps", a.chi_opts.steps);
    cmd->add_option("--step-size", a.chi_opts.step_size);
}

std::string sidecar_path(const std::string& model_path) {
    fs::path p(model_path);
    return (p.parent_path() / (p.stem().string() + ".standardization.json")).string();
}

int run_train(const TrainArgs& a) {
    LongitudinalPanel panel = load_panel(a.data);
    std::string sidecar;
    if (!a.no_standardize) {
        const Standardization st = fit_standardization(panel, scale_mode_from_name(a.scale_mode));
        panel = apply_standardization(panel, st);
        sidecar = sidecar_path(a.out);
        write_json_file(sidecar, to_json(st));
        sidecar = fs::path(sidecar).filename().string();
    }

    if (a.method == "chi") {
        const ChiModel m = chi_train(panel, a.hyper, a.chi_opts);
        write_json_file(a.out, to_json(ChiModelFile{m, a.hyper, sidecar}));
        std::cerr << fmt::format("CHI model: {} monotonicity violations on training visits\n",
                                 monotonicity_violations(m.w, panel));
        return 0;
    }

    SolverOptions solver;
    solver.tol = a.tol;
    solver.max_iter = a.max_iter;
    double c = 0.0;
    if (a.c) {
        c = *a.c;
    } else if (!a.c_grid.empty()) {
        const CvResult cv = cross_validate_c(panel, a.c_grid, a.cv_folds, a.seed, a.unobserved_prior, solver);
        if (!cv.warning.empty()) std::cerr << "warning: " << cv.warning << '\n';
        c = cv.chosen_c;
        std::cerr << fmt::format("cross-validation chose c = {}\n", c);
    } else {
        throw ValidationError("MissingC", "uqchi training needs --c or --c-grid");
    }
    const UqchiFit fit = fit_uqchi(panel, c, a.unobserved_prior, solver);
    for (const auto& w : fit.solution.warnings) std::cerr << "warning: " << w << '\n';
    write_json_file(a.out, to_json(UqchiModel{c, fit.solution, fit.posterior, sidecar}));
    std::cerr << fmt::format("solved dual: N={} iterations={} grad_norm={:.3g} objective={:.10g}\n",
                             fit.problem.size(), fit.solution.iterations, fit.solution.grad_norm,
                             fit.solution.objective);
    return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
    std::string model;
    std::string data;
    std::string out;
    std::optional<double> reject_rate;
    std::optional<double> reject_threshold;
};

void add_predict(CLI::App& app, PredictArgs& a) {
    auto* cmd = app.add_subcommand("predict", "Score a panel with a trained model");
    cmd->add_option("--model", a.model, "Model JSON")->required();
    cmd->add_option("--data", a.data, "Panel CSV in raw units")->required();
    cmd->add_option("-o,--out", a.out, "Output prediction CSV")->required();
    auto* rate = cmd->add_option("--reject-rate", a.reject_rate, "Abstain on this fraction of least confident subjects");
    auto* thr = cmd->add_option("--reject-threshold", a.reject_threshold, "Abstain when confidence < T");
    rate->excludes(thr);
}

int run_predict(const PredictArgs& a) {
    const AnyModel model = model_from_json(read_json_file(a.model));
    LongitudinalPanel panel = load_panel(a.data);
    const std::string sidecar =
        std::visit([](const auto& m) { return m.standardization_file; }, model);
    if (!sidecar.empty()) {
        const fs::path p = fs::path(a.model).parent_path() / sidecar;
        panel = apply_standardization(panel, standardization_from_json(read_json_file(p.string())));
    }

    std::vector<PredictionRecord> records;
    if (const auto* m = std::get_if<UqchiModel>(&model)) {
        records = predict_panel(m->posterior, panel);
        if (a.reject_rate) records = reject_by_rate(std::move(records), *a.reject_rate);
        if (a.reject_threshold) records = reject_by_threshold(std::move(records), *a.reject_threshold);
    } else {
        if (a.reject_rate || a.reject_threshold)
            throw ValidationError("NoConfidence", "the CHI baseline has no confidence score to reject on");
        records = chi_predict_panel(std::get<ChiModelFile>(model).model, panel);
    }
    auto out = open_out(a.out);
    write_predictions_csv(out, records);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string predictions;
    std::string truth;
    std::string out;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
    auto* cmd = app.add_subcommand("evaluate", "Accepted-accuracy of predictions against a labeled panel");
    cmd->add_option("--predictions", a.predictions, "Prediction CSV")->required();
    cmd->add_option("--truth", a.truth, "Panel CSV whose label column holds the truth")->required();
    cmd->add_option("-o,--out", a.out, "Write the summary JSON here instead of stdout");
}

int run_evaluate(const EvaluateArgs& a) {
    auto in = open_in(a.predictions);
    const auto records = read_predictions_csv(in);
    const LongitudinalPanel truth_panel = load_panel(a.truth);
    std::vector<std::pair<std::string, Label>> truth;
    for (const auto& s : truth_panel.subjects()) truth.emplace_back(s.subject_id, s.label);
    const nlohmann::json j = to_json(evaluate(records, truth));
    if (a.out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_json_file(a.out, j);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    std::string spec;
    std::string data;
    std::string out;
    std::string log;
    std::vector<double> c_grid, label_ratios, train_ratios, rejection_rates;
    std::optional<std::string> c_mode, scale_mode;
    std::optional<int> n_seeds, cv_folds;
    std::optional<std::uint64_t> base_seed;
    std::vector<std::string> methods;
    std::optional<double> unobserved_prior, degradation_rate;
    bool no_standardize = false;
};

void add_sweep(CLI::App& app, SweepArgs& a) {
    auto* cmd = app.add_subcommand("sweep", "Run the experiment grid and write a results table");
    cmd->add_option("--spec", a.spec, "Experiment spec JSON; flags override its fields");
    cmd->add_option("--data", a.data, "Use this panel CSV instead of simulated data");
    cmd->add_option("-o,--out", a.out, "Results CSV")->required();
    cmd->add_option("--log", a.log, "Per-seed JSONL log (default: <out>.jsonl)");
    cmd->add_option("--c-grid", a.c_grid);
    cmd->add_option("--c-mode", a.c_mode)->check(CLI::IsMember({"fixed", "cv", "both"}));
    cmd->add_option("--label-ratios", a.label_ratios, "Fractions of training labels masked");
    cmd->add_option("--train-ratios", a.train_ratios);
    cmd->add_option("--rejection-rates", a.rejection_rates);
    cmd->add_option("--n-seeds", a.n_seeds);
    cmd->add_option("--base-seed", a.base_seed);
    cmd->add_option("--cv-folds", a.cv_folds);
    cmd->add_option("--methods", a.methods)->check(CLI::IsMember({"uqchi", "chi"}));
    cmd->add_option("--unobserved-prior", a.unobserved_prior);
    cmd->add_option("--degradation-rate", a.degradation_rate, "Simulated drift per visit");
    cmd->add_option("--scale-mode", a.scale_mode)->check(CLI::IsMember({"unit_norm", "unit_variance"}));
    cmd->add_flag("--no-standardize", a.no_standardize);
}

int run_sweep(const SweepArgs& a) {
    ExperimentSpec spec = a.spec.empty() ? ExperimentSpec{} : spec_from_json(read_json_file(a.spec));
    if (!a.data.empty()) spec.data = CsvSource{a.data, {}};
    if (!a.c_grid.empty()) spec.c_grid = a.c_grid;
    if (!a.label_ratios.empty()) spec.label_ratios = a.label_ratios;
    if (!a.train_ratios.empty()) spec.train_ratios = a.train_ratios;
    if (!a.rejection_rates.empty()) spec.rejection_rates = a.rejection_rates;
    if (a.c_mode) spec.c_mode = *a.c_mode == "fixed" ? CMode::Fixed : *a.c_mode == "cv" ? CMode::CrossValidated : CMode::Both;
    if (a.scale_mode) spec.scale_mode = scale_mode_from_name(*a.scale_mode);
    if (a.n_seeds) spec.n_seeds = *a.n_seeds;
    if (a.base_seed) spec.base_seed = *a.base_seed;
    if (a.cv_folds) spec.cv_folds = *a.cv_folds;
    if (!a.methods.empty()) {
        spec.methods.clear();
        for (const auto& m : a.methods) spec.methods.push_back(m == "uqchi" ? Method::Uqchi : Method::Chi);
    }
    if (a.unobserved_prior) spec.unobserved_prior = *a.unobserved_prior;
    if (a.no_standardize) spec.standardize = false;
    if (a.degradation_rate) {
        auto* sim = std::get_if<SimConfig>(&spec.data);
        if (!sim) throw ValidationError("BadSpec", "--degradation-rate only applies to simulated data");
        sim->degradation_rate = *a.degradation_rate;
    }

    const PipelineResult res = run_pipeline(spec);
    {
        auto out = open_out(a.out);
        write_results_csv(out, res.table);
    }
    auto log = open_out(a.log.empty() ? a.out + ".jsonl" : a.log);
    write_seed_log(log, res.log);
    std::size_t failed = 0;
    for (const auto& r : res.log) failed += r.error.empty() ? 0 : 1;
    std::cerr << fmt::format("{} cells, {} seed records, {} failed\n", res.table.rows.size(), res.log.size(), failed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-quantified health index: simulate, train, predict, evaluate, sweep"};
    app.require_subcommand(1);
    SimulateArgs sim;
    TrainArgs train;
    PredictArgs pred;
    EvaluateArgs eval;
    SweepArgs sweep;
    add_simulate(app, sim);
    add_train(app, train);
    add_predict(app, pred);
    add_evaluate(app, eval);
    add_sweep(app, sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_validation;
    }

    try {
        if (app.got_subcommand("simulate")) return run_simulate(sim);
        if (app.got_subcommand("train")) return run_train(train);
        if (app.got_subcommand("predict")) return run_predict(pred);
        if (app.got_subcommand("evaluate")) return run_evaluate(eval);
        if (app.got_subcommand("sweep")) return run_sweep(sweep);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    }
    return exit_validation;
}
