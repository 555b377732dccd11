#pragma once

// JSON model files for both the dual-posterior model and the CHI baseline.

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqchi/chi_baseline.hpp"
#include "uqchi/med_core.hpp"

namespace uqchi {

inline constexpr int model_format_version = 1;

struct UqchiModel {
    double c = 0.0;
    DualSolution solution;
    WeightPosterior posterior;
    std::string standardization_file;  // sidecar, relative to the model file; empty when unstandardized
};

struct ChiModelFile {
    ChiModel model;
    ChiHyperparams hyper;
    std::string standardization_file;
};

using AnyModel = std::variant<UqchiModel, ChiModelFile>;

namespace detail {
inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
inline Vector to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

inline nlohmann::json to_json(const UqchiModel& m) {
    return {{"format", "uqchi-model"},
            {"version", model_format_version},
            {"method", "uqchi"},
            {"d", m.posterior.dim()},
            {"N", m.solution.lambda.size()},
            {"c", m.c},
            {"lambda", detail::to_std(m.solution.lambda)},
            {"v", detail::to_std(m.posterior.mean)},
            {"convergence",
             {{"objective", m.solution.objective},
              {"grad_norm", m.solution.grad_norm},
              {"iterations", m.solution.iterations},
              {"converged", m.solution.converged},
              {"warnings", m.solution.warnings}}},
            {"standardization_file", m.standardization_file}};
}

inline nlohmann::json to_json(const ChiModelFile& m) {
    return {{"format", "uqchi-model"},
            {"version", model_format_version},
            {"method", "chi"},
            {"d", m.model.w.size()},
            {"w", detail::to_std(m.model.w)},
            {"b", m.model.b},
            {"hyper",
             {{"alpha", m.hyper.alpha},
              {"beta", m.hyper.beta},
              {"lambda_var", m.hyper.lambda_var},
              {"gamma_l1", m.hyper.gamma_l1}}},
            {"standardization_file", m.standardization_file}};
}

inline AnyModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "uqchi-model")
            throw ValidationError("BadModel", "not a uqchi model file");
        if (j.at("version").get<int>() != model_format_version)
            throw ValidationError("BadModel", "unsupported model version");
        const auto d = j.at("d").get<std::size_t>();
        const auto method = j.at("method").get<std::string>();
        const std::string sidecar = j.value("standardization_file", std::string{});
        if (method == "uqchi") {
            UqchiModel m;
            m.c = j.at("c").get<double>();
            m.solution.lambda = detail::to_eigen(j.at("lambda").get<std::vector<double>>());
            m.posterior.mean = detail::to_eigen(j.at("v").get<std::vector<double>>());
            const auto& conv = j.at("convergence");
            m.solution.objective = conv.at("objective").get<double>();
            m.solution.grad_norm = conv.at("grad_norm").get<double>();
            m.solution.iterations = conv.at("iterations").get<int>();
            m.solution.converged = conv.at("converged").get<bool>();
            m.solution.warnings = conv.value("warnings", std::vector<std::string>{});
            m.standardization_file = sidecar;
            if (static_cast<std::size_t>(m.posterior.mean.size()) != d)
                throw ValidationError("BadModel", "v length differs from d");
            if (static_cast<std::size_t>(m.solution.lambda.size()) != j.at("N").get<std::size_t>())
                throw ValidationError("BadModel", "lambda length differs from N");
            return m;
        }
        if (method == "chi") {
            ChiModelFile m;
            m.model.w = detail::to_eigen(j.at("w").get<std::vector<double>>());
            m.model.b = j.at("b").get<double>();
            const auto& h = j.at("hyper");
            m.hyper = {h.at("alpha").get<double>(), h.at("beta").get<double>(), h.at("lambda_var").get<double>(),
                       h.at("gamma_l1").get<double>()};
            m.standardization_file = sidecar;
            if (static_cast<std::size_t>(m.model.w.size()) != d) throw ValidationError("BadModel", "w length differs from d");
            return m;
        }
        throw ValidationError("BadModel", "unknown method '" + method + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("BadModel", e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("FileNotFound", "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("BadJson", path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("FileNotWritable", "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

}  // namespace uqchi
