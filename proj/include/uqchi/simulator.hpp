#pragma once

// Two-class synthetic panels. Normal subjects fluctuate around a constant
// mean; diseased subjects drift by `degradation_rate` per visit along a
// sparse unit direction over `informative_k` features. Every random draw comes
// from a stream derived from (seed, purpose) or (seed, subject), so subjects
// can be generated in any order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uqchi/error.hpp"
#include "uqchi/panel.hpp"

namespace uqchi {

struct SimConfig {
    int d = 90;
    int n_per_class = 50;
    std::optional<double> normal_proportion;  // unset: n_per_class in each class
    int visits_min = 3;
    int visits_max = 7;
    int max_gap = 2;                          // visit times advance by 1..max_gap
    double degradation_rate = 0.6;
    double baseline_mean = 0.0;
    std::vector<double> noise_sigmas;         // empty: Uniform(0.5, 1.5) per feature
    int informative_k = 10;
    double label_observed_fraction = 0.2;
    std::uint64_t seed = 1;

    static constexpr double default_normal_proportion = 0.6;

    void validate() const {
        if (d < 1) throw ValidationError("BadSimConfig", "d must be >= 1");
        if (n_per_class < 1) throw ValidationError("BadSimConfig", "n_per_class must be >= 1");
        if (normal_proportion && !(*normal_proportion > 0.0 && *normal_proportion < 1.0))
            throw ValidationError("BadSimConfig", "normal_proportion must lie in (0, 1)");
        if (visits_min < 1 || visits_max < visits_min)
            throw ValidationError("BadSimConfig", "need 1 <= visits_min <= visits_max");
        if (max_gap < 1) throw ValidationError("BadSimConfig", "max_gap must be >= 1");
        if (!(degradation_rate >= 0.0) || !std::isfinite(degradation_rate))
            throw ValidationError("BadSimConfig", "degradation_rate must be finite and >= 0");
        if (informative_k < 1 || informative_k > d) throw ValidationError("BadSimConfig", "need 1 <= informative_k <= d");
        if (!noise_sigmas.empty() && static_cast<int>(noise_sigmas.size()) != d)
            throw ValidationError("BadSimConfig", "noise_sigmas must have d entries");
        for (double s : noise_sigmas)
            if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("BadSimConfig", "noise sigmas must be >= 0");
        if (!(label_observed_fraction >= 0.0 && label_observed_fraction <= 1.0))
            throw ValidationError("BadSimConfig", "label_observed_fraction must lie in [0, 1]");
    }

    std::pair<int, int> class_sizes() const {
        if (!normal_proportion) return {n_per_class, n_per_class};
        const int total = 2 * n_per_class;
        const int normal = static_cast<int>(std::floor(*normal_proportion * total));
        return {normal, total - normal};
    }
};

struct SimulationResult {
    LongitudinalPanel panel;      // labels masked per label_observed_fraction
    std::vector<Label> truth;     // aligned with panel subjects
    std::vector<double> sigmas;   // resolved per-feature noise
    Vector direction;             // unit drift direction
    std::vector<int> informative; // indices carrying drift, ascending
    SimConfig config;

    LongitudinalPanel fully_labeled() const {
        std::vector<SubjectSeries> subjects = panel.subjects();
        for (std::size_t i = 0; i < subjects.size(); ++i) subjects[i].label = truth[i];
        return LongitudinalPanel(std::move(subjects), panel.standardization());
    }
};

namespace sim_stream {
constexpr std::uint64_t sigmas = 1;
constexpr std::uint64_t direction = 2;
constexpr std::uint64_t labels = 3;
constexpr std::uint64_t subject_base = 1000;
}  // namespace sim_stream

inline SimulationResult simulate(const SimConfig& cfg) {
    cfg.validate();
    const int d = cfg.d;

    std::vector<double> sigmas = cfg.noise_sigmas;
    if (sigmas.empty()) {
        auto rng = derived_rng(cfg.seed, sim_stream::sigmas);
        std::uniform_real_distribution<double> u(0.5, 1.5);
        sigmas.resize(static_cast<std::size_t>(d));
        for (auto& s : sigmas) s = u(rng);
    }

    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    {
        auto rng = derived_rng(cfg.seed, sim_stream::direction);
        std::shuffle(features.begin(), features.end(), rng);
    }
    std::vector<int> informative(features.begin(), features.begin() + cfg.informative_k);
    std::sort(informative.begin(), informative.end());
    Vector direction = Vector::Zero(d);
    for (int k : informative) direction[k] = 1.0 / std::sqrt(static_cast<double>(cfg.informative_k));

    const auto [n_normal, n_diseased] = cfg.class_sizes();
    const int n_total = n_normal + n_diseased;
    std::vector<SubjectSeries> subjects;
    std::vector<Label> truth;
    subjects.reserve(static_cast<std::size_t>(n_total));
    for (int i = 0; i < n_total; ++i) {
        const bool diseased = i >= n_normal;
        auto rng = derived_rng(cfg.seed, sim_stream::subject_base + static_cast<std::uint64_t>(i));
        std::uniform_int_distribution<int> visits(cfg.visits_min, cfg.visits_max);
        std::uniform_int_distribution<int> gap(1, cfg.max_gap);
        std::normal_distribution<double> noise(0.0, 1.0);

        SubjectSeries s;
        s.subject_id = fmt::format("s{:04d}", i + 1);
        s.label = diseased ? Label::Positive : Label::Negative;
        const int t_n = visits(rng);
        s.observations.resize(t_n, d);
        int t = 1;
        for (int v = 0; v < t_n; ++v) {
            if (v > 0) t += gap(rng);
            s.times.push_back(t);
            const double drift = diseased ? cfg.degradation_rate * (v + 1) : 0.0;
            for (int k = 0; k < d; ++k)
                s.observations(v, k) = cfg.baseline_mean + drift * direction[k] + sigmas[static_cast<std::size_t>(k)] * noise(rng);
        }
        truth.push_back(s.label);
        subjects.push_back(std::move(s));
    }

    // Keep floor(fraction * class size) labels per class.
    auto rng = derived_rng(cfg.seed, sim_stream::labels);
    for (auto [lo, hi] : {std::pair{0, n_normal}, std::pair{n_normal, n_total}}) {
        std::vector<int> idx(static_cast<std::size_t>(hi - lo));
        std::iota(idx.begin(), idx.end(), lo);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto keep = static_cast<std::size_t>(std::floor(cfg.label_observed_fraction * (hi - lo) + 1e-9));
        for (std::size_t j = keep; j < idx.size(); ++j) subjects[static_cast<std::size_t>(idx[j])].label = Label::Unobserved;
    }

    return {LongitudinalPanel(std::move(subjects)), std::move(truth), std::move(sigmas), std::move(direction),
            std::move(informative), cfg};
}

inline nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json j = {{"d", c.d},
                        {"n_per_class", c.n_per_class},
                        {"visits_min", c.visits_min},
                        {"visits_max", c.visits_max},
                        {"max_gap", c.max_gap},
                        {"degradation_rate", c.degradation_rate},
                        {"baseline_mean", c.baseline_mean},
                        {"noise_sigmas", c.noise_sigmas},
                        {"informative_k", c.informative_k},
                        {"label_observed_fraction", c.label_observed_fraction},
                        {"seed", c.seed}};
    if (c.normal_proportion) j["normal_proportion"] = *c.normal_proportion;
    return j;
}

inline SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {}) {
    try {
        if (!j.is_object()) throw ValidationError("BadSimConfig", "simulation config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            if (key == "d") base.d = value.get<int>();
            else if (key == "n_per_class") base.n_per_class = value.get<int>();
            else if (key == "normal_proportion") {
                if (value.is_null()) base.normal_proportion.reset();
                else base.normal_proportion = value.get<double>();
            }
            else if (key == "visits_min") base.visits_min = value.get<int>();
            else if (key == "visits_max") base.visits_max = value.get<int>();
            else if (key == "max_gap") base.max_gap = value.get<int>();
            else if (key == "degradation_rate") base.degradation_rate = value.get<double>();
            else if (key == "baseline_mean") base.baseline_mean = value.get<double>();
            else if (key == "noise_sigmas") base.noise_sigmas = value.get<std::vector<double>>();
            else if (key == "informative_k") base.informative_k = value.get<int>();
            else if (key == "label_observed_fraction") base.label_observed_fraction = value.get<double>();
            else if (key == "seed") base.seed = value.get<std::uint64_t>();
            else throw ValidationError("BadSimConfig", "unknown simulation field '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("BadSimConfig", e.what());
    }
    base.validate();
    return base;
}

/// Config echo with the resolved noise levels and ground-truth direction.
inline nlohmann::json config_echo(const SimulationResult& r) {
    nlohmann::json j = to_json(r.config);
    j["resolved_noise_sigmas"] = r.sigmas;
    j["informative_features"] = r.informative;
    j["direction"] = std::vector<double>(r.direction.data(), r.direction.data() + r.direction.size());
    const auto [nn, nd] = r.config.class_sizes();
    j["n_normal"] = nn;
    j["n_diseased"] = nd;
    return j;
}

}  // namespace uqchi
