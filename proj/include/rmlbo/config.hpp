#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bench.hpp"

namespace rmlbo {

/// An externally produced trace set (one JSON-lines file per trial).
struct ExternalTraces {
    std::string name;
    std::vector<std::string> files;
    bool shared = true;
};

/// Experiment configuration. Top-level keys mirror HDBOConfig; `n_rml` is
/// required, the rest default (K=10, n0=5, budget_N=1000, d_e=d+1, beta=2,
/// prox_eta=0.25).
struct ExperimentConfig {
    nlohmann::json problem;
    std::string method = "hdbo-rml";
    std::vector<std::string> methods{"hdbo-rml", "random-design", "local-search"};
    HDBOConfig hdbo;
    int trials = 5;
    std::vector<long> checkpoints;
    int n_checkpoints = 20;
    int prior_samples = 10000;
    double local_search_step = 0.1;
    std::vector<ExternalTraces> external;
    nlohmann::json snapshot; ///< fully resolved config, written to reports
};

inline const std::set<std::string>& known_methods()
{
    static const std::set<std::string> m{"hdbo-rml", "random-design", "local-search"};
    return m;
}

/// Sets `path` (dot-separated) in `doc` from "key=value". The value is parsed
/// as JSON when possible, otherwise kept as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set", "expected KEY=VALUE, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded())
        value = raw;
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

namespace detail {
    template <typename T>
    T get_field(const nlohmann::json& j, const std::string& key, T fallback)
    {
        if (!j.contains(key))
            return fallback;
        try {
            return j.at(key).get<T>();
        }
        catch (const nlohmann::json::exception&) {
            throw ConfigError(key, "has the wrong type");
        }
    }

    inline long get_integer(const nlohmann::json& j, const std::string& key, long fallback)
    {
        if (!j.contains(key))
            return fallback;
        const auto& v = j.at(key);
        if (!v.is_number_integer())
            throw ConfigError(key, "must be an integer");
        return v.get<long>();
    }

    inline double get_number(const nlohmann::json& j, const std::string& key, double fallback)
    {
        if (!j.contains(key))
            return fallback;
        const auto& v = j.at(key);
        if (!v.is_number())
            throw ConfigError(key, "must be a number");
        return v.get<double>();
    }
} // namespace detail

/// Normalizes the "problem" entry to a problem_from_json document. A bare
/// catalog object ({"name": ...}) is accepted as shorthand.
inline nlohmann::json normalize_problem_json(const nlohmann::json& p)
{
    if (!p.is_object())
        throw ConfigError("problem", "must be an object");
    if (p.contains("catalog") || p.contains("simulator"))
        return p;
    if (p.contains("name"))
        return {{"catalog", p}};
    throw ConfigError("problem", "needs 'name', 'catalog' or 'simulator'");
}

/// Validates a config document and resolves defaults. `problem` supplies the
/// active dimension for the d_e = d + 1 default.
inline ExperimentConfig parse_config(const nlohmann::json& doc, const ProblemSpec* problem = nullptr)
{
    static const std::set<std::string> allowed{
        "problem", "method", "methods",      "n_rml",  "budget_N",      "K",
        "d_e",     "n0",     "beta",         "prox_eta", "acq_restarts", "y_scale",
        "seed",    "trials", "checkpoints",  "n_checkpoints", "prior_samples", "local_search_step",
        "external_traces"};
    if (!doc.is_object())
        throw ConfigError("", "config must be a JSON object");
    for (const auto& [key, _] : doc.items())
        if (!allowed.count(key))
            throw ConfigError(key, "unknown field");
    if (!doc.contains("n_rml"))
        throw ConfigError("n_rml", "required field missing");
    if (!doc.contains("problem"))
        throw ConfigError("problem", "required field missing");

    ExperimentConfig c;
    c.problem = normalize_problem_json(doc.at("problem"));
    c.method = detail::get_field<std::string>(doc, "method", c.method);
    if (!known_methods().count(c.method))
        throw ConfigError("method", "unknown method '" + c.method + "'");
    if (doc.contains("methods")) {
        c.methods = detail::get_field<std::vector<std::string>>(doc, "methods", {});
        for (const auto& m : c.methods)
            if (!known_methods().count(m))
                throw ConfigError("methods", "unknown method '" + m + "'");
    }

    auto& h = c.hdbo;
    h.n_rml = static_cast<int>(detail::get_integer(doc, "n_rml", h.n_rml));
    h.budget_N = detail::get_integer(doc, "budget_N", h.budget_N);
    h.K = static_cast<int>(detail::get_integer(doc, "K", h.K));
    Index active_dim = 1;
    if (problem && problem->simulator.active_subspace())
        active_dim = problem->simulator.active_subspace()->cols();
    long default_de = active_dim + 1;
    if (problem)
        default_de = std::min<long>(default_de, problem->input_dim());
    h.d_e = static_cast<int>(detail::get_integer(doc, "d_e", default_de));
    h.n0 = static_cast<int>(detail::get_integer(doc, "n0", h.n0));
    h.beta = detail::get_number(doc, "beta", h.beta);
    h.prox_eta = detail::get_number(doc, "prox_eta", h.prox_eta);
    h.acq_restarts = static_cast<int>(detail::get_integer(doc, "acq_restarts", h.acq_restarts));
    h.y_scale = detail::get_number(doc, "y_scale", h.y_scale);
    const long seed = detail::get_integer(doc, "seed", 0);
    h.seed = static_cast<std::uint64_t>(seed);

    c.trials = static_cast<int>(detail::get_integer(doc, "trials", c.trials));
    c.n_checkpoints = static_cast<int>(detail::get_integer(doc, "n_checkpoints", c.n_checkpoints));
    c.prior_samples = static_cast<int>(detail::get_integer(doc, "prior_samples", c.prior_samples));
    c.local_search_step = detail::get_number(doc, "local_search_step", c.local_search_step);
    if (doc.contains("checkpoints"))
        c.checkpoints = detail::get_field<std::vector<long>>(doc, "checkpoints", {});

    if (h.n_rml < 1)
        throw ConfigError("n_rml", "must be at least 1");
    if (h.budget_N < 1)
        throw ConfigError("budget_N", "must be at least 1");
    if (c.trials < 1)
        throw ConfigError("trials", "must be at least 1");
    if (c.n_checkpoints < 1)
        throw ConfigError("n_checkpoints", "must be at least 1");
    if (c.prior_samples < 1)
        throw ConfigError("prior_samples", "must be at least 1");
    if (!(c.local_search_step > 0.0))
        throw ConfigError("local_search_step", "must be positive");
    if (c.methods.empty())
        throw ConfigError("methods", "at least one method is required");
    if (c.checkpoints.empty())
        c.checkpoints = even_checkpoints(h.budget_N, c.n_checkpoints);
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i)
        if (c.checkpoints[i] < 1 || (i > 0 && c.checkpoints[i] <= c.checkpoints[i - 1]))
            throw ConfigError("checkpoints", "must be positive and strictly increasing");

    if (doc.contains("external_traces")) {
        const auto& ext = doc.at("external_traces");
        if (!ext.is_array())
            throw ConfigError("external_traces", "must be an array");
        for (const auto& e : ext) {
            ExternalTraces t;
            t.name = detail::get_field<std::string>(e, "name", "");
            t.files = detail::get_field<std::vector<std::string>>(e, "files", {});
            t.shared = detail::get_field<bool>(e, "shared", true);
            if (t.name.empty() || t.files.empty())
                throw ConfigError("external_traces", "entries need 'name' and non-empty 'files'");
            c.external.push_back(std::move(t));
        }
    }

    if (problem)
        h.validate(*problem);

    c.snapshot = doc;
    c.snapshot["problem"] = c.problem;
    c.snapshot["method"] = c.method;
    c.snapshot["methods"] = c.methods;
    c.snapshot["budget_N"] = h.budget_N;
    c.snapshot["K"] = h.K;
    c.snapshot["d_e"] = h.d_e;
    c.snapshot["n0"] = h.n0;
    c.snapshot["beta"] = h.beta;
    c.snapshot["prox_eta"] = h.prox_eta;
    c.snapshot["acq_restarts"] = h.acq_restarts;
    c.snapshot["y_scale"] = h.y_scale;
    c.snapshot["seed"] = h.seed;
    c.snapshot["trials"] = c.trials;
    c.snapshot["checkpoints"] = c.checkpoints;
    c.snapshot["prior_samples"] = c.prior_samples;
    c.snapshot["local_search_step"] = c.local_search_step;
    return c;
}

/// Binds a method name to its runner under `config`.
inline Method make_method(const std::string& name, const ExperimentConfig& config)
{
    if (name == "hdbo-rml") {
        HDBOConfig h = config.hdbo;
        return {name, [h](const ProblemSpec& p, const std::vector<RMLInstance>& inst, const Rng& rng) {
                    return run_hdbo_rml(p, inst, h, rng);
                }};
    }
    if (name == "random-design") {
        const long n = config.hdbo.budget_N;
        return {name, [n](const ProblemSpec& p, const std::vector<RMLInstance>& inst, const Rng& rng) {
                    return random_design(p, inst, n, rng);
                }};
    }
    if (name == "local-search") {
        const long n = config.hdbo.budget_N;
        const LocalSearchOptions opts{config.local_search_step};
        return {name, [n, opts](const ProblemSpec& p, const std::vector<RMLInstance>& inst, const Rng& rng) {
                    return per_objective_local_search(p, inst, n, rng, opts);
                }};
    }
    throw ConfigError("method", "unknown method '" + name + "'");
}

} // namespace rmlbo
