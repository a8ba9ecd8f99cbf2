#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"

namespace rmlbo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    std::string out_dir = ".";
};

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw Error("cannot write " + tmp.string());
        os << content;
        if (!os)
            throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

struct Prepared {
    ExperimentConfig config;
    ProblemSpec problem;
};

/// Reads the config, applies --seed and --set, loads the problem and
/// validates everything. Throws ConfigError on any invalid input.
inline Prepared prepare(const Options& opts)
{
    std::ifstream is(opts.config_path);
    if (!is)
        throw ConfigError("--config", "cannot open '" + opts.config_path + "'");
    nlohmann::json doc = nlohmann::json::parse(is, nullptr, false);
    if (doc.is_discarded())
        throw ConfigError("--config", "'" + opts.config_path + "' is not valid JSON");
    for (const auto& s : opts.sets)
        apply_override(doc, s);
    if (opts.seed)
        doc["seed"] = *opts.seed;

    parse_config(doc); // field checks before the problem is built
    ProblemSpec problem;
    try {
        problem = problem_from_json(normalize_problem_json(doc.at("problem")));
    }
    catch (const ConfigError&) {
        throw;
    }
    catch (const nlohmann::json::exception& e) {
        throw ConfigError("problem", e.what());
    }
    catch (const Error& e) {
        throw ConfigError("problem", e.what());
    }
    ExperimentConfig config = parse_config(doc, &problem);
    return {std::move(config), std::move(problem)};
}

namespace detail {
    inline std::string trace_text(const std::vector<SimulationRecord>& trace)
    {
        std::ostringstream os;
        write_trace_jsonl(os, trace);
        return os.str();
    }

    inline nlohmann::json instances_json(const std::vector<RMLInstance>& inst)
    {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& i : inst)
            a.push_back(to_json(i));
        return a;
    }

    template <typename F>
    int guarded(std::ostream& err, F&& body)
    {
        try {
            return body();
        }
        catch (const ConfigError& e) {
            err << "config error: " << e.what() << '\n';
            return kExitConfig;
        }
        catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitRuntime;
        }
    }
} // namespace detail

/// Runs one method on one problem; writes trace.jsonl and report.json.
inline int cmd_run(const Options& opts, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&] {
        const auto start = std::chrono::steady_clock::now();
        Prepared prep = prepare(opts);
        const auto& cfg = prep.config;
        const std::filesystem::path dir(opts.out_dir);
        const Rng master(cfg.hdbo.seed);
        Rng inst_rng = master.split("randomization");
        const auto instances = draw_randomizations(prep.problem, cfg.hdbo.n_rml, inst_rng);
        const Method method = make_method(cfg.method, cfg);
        const ProblemSpec problem = prep.problem.fresh();

        RMLResult result;
        try {
            result = method.run(problem, instances, master.split("method:" + method.name));
        }
        catch (const RunAborted& e) {
            write_file_atomic(dir / "trace.jsonl", detail::trace_text(e.partial.trace));
            err << "run aborted: " << e.what() << " (partial trace with " << e.partial.trace.size()
                << " records written)\n";
            return kExitRuntime;
        }
        write_file_atomic(dir / "trace.jsonl", detail::trace_text(result.trace));

        const double mr = mean_return(result, instances, problem);
        nlohmann::json report;
        report["config"] = cfg.snapshot;
        report["seed"] = cfg.hdbo.seed;
        report["method"] = method.name;
        report["problem"] = problem_to_json(problem);
        report["instances"] = detail::instances_json(instances);
        nlohmann::json embs = nlohmann::json::array();
        for (const auto& e : result.embeddings)
            embs.push_back(to_json(e));
        report["embeddings"] = embs;
        report["maximizers"] = selections_to_json(result.maximizers);
        report["mean_return"] = mr;
        report["evaluations"] = result.evaluations;
        report["simulator_eval_count"] = problem.simulator.eval_count();
        report["analysis_evaluations"] = problem.simulator.analysis_eval_count();
        report["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_file_atomic(dir / "report.json", report.dump(2) + "\n");

        out << "method: " << method.name << '\n'
            << "mean_return: " << format_double(mr) << '\n'
            << "evaluations: " << result.evaluations << '\n';
        return kExitOk;
    });
}

inline TrialRun external_trial(const ExternalTraces& ext, int trial, const std::vector<RMLInstance>& instances,
                               const ProblemSpec& problem, const std::vector<long>& checkpoints,
                               std::vector<std::string>& warnings)
{
    const std::string& file = ext.files[static_cast<std::size_t>(trial) % ext.files.size()];
    std::ifstream is(file);
    if (!is)
        throw ConfigError("external_traces", "cannot open '" + file + "'");
    TrialRun tr;
    tr.trial = trial;
    tr.instances = instances;
    tr.result.method = ext.name;
    tr.result.trace = read_trace_jsonl(is);
    const bool refined = !tr.result.trace.empty() && tr.result.trace.front().refined_z.has_value();
    tr.result.policy = {refined ? CandidateKind::refined : CandidateKind::lifted, ext.shared};
    for (const auto& r : tr.result.trace)
        tr.result.evaluations = std::max(tr.result.evaluations, r.evals);
    tr.result.maximizers = select_maximizers(tr.result.trace, instances, problem, tr.result.policy);
    tr.final_mean_return = mean_return(tr.result, instances, problem);
    tr.curve = curve_from_trace(tr.result, instances, problem, checkpoints, &warnings);
    return tr;
}

/// Budget curves for every configured method; writes curves.csv,
/// summary.csv and report.json and prints a summary table.
inline int cmd_compare(const Options& opts, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&] {
        Prepared prep = prepare(opts);
        const auto& cfg = prep.config;
        const std::filesystem::path dir(opts.out_dir);
        std::vector<Method> methods;
        for (const auto& name : cfg.methods)
            methods.push_back(make_method(name, cfg));
        CurveOptions co;
        co.n_rml = cfg.hdbo.n_rml;
        co.trials = cfg.trials;
        co.seed = cfg.hdbo.seed;
        co.checkpoints = cfg.checkpoints;
        ExperimentReport report = budget_curve(prep.problem, methods, co);
        report.config = cfg.snapshot;

        for (const auto& ext : cfg.external) {
            auto& runs = report.runs[ext.name];
            for (int t = 0; t < cfg.trials; ++t) {
                const auto& inst = report.runs.at(cfg.methods.front())[static_cast<std::size_t>(t)].instances;
                runs.push_back(external_trial(ext, t, inst, prep.problem, cfg.checkpoints, report.warnings));
            }
            report.methods.push_back(ext.name);
        }
        for (const auto& w : report.warnings)
            err << "warning: " << w << '\n';

        std::ostringstream curves;
        write_curves_csv(curves, report);
        write_file_atomic(dir / "curves.csv", curves.str());

        std::ostringstream summary;
        summary << "method,trials,final_neg_mean_return_mean,final_neg_mean_return_sd\n";
        out << std::left << std::setw(16) << "method" << "  final negative mean return (mean +- sd over "
            << cfg.trials << " trials)\n";
        for (const auto& m : report.methods) {
            std::vector<double> v;
            for (const auto& t : report.runs.at(m))
                v.push_back(-t.final_mean_return);
            double mean = 0.0;
            for (double x : v)
                mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v)
                var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
            summary << m << ',' << v.size() << ',' << format_double(mean) << ',' << format_double(sd) << '\n';
            out << std::left << std::setw(16) << m << "  " << mean << " +- " << sd << '\n';
        }
        write_file_atomic(dir / "summary.csv", summary.str());
        write_file_atomic(dir / "report.json", to_json(report, &prep.problem).dump(2) + "\n");
        return kExitOk;
    });
}

/// Active-subspace exports: prior landscape, oracle RML samples (linear
/// simulator with Gaussian prior only) and the configured method's samples.
inline int cmd_export_landscape(const Options& opts, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&] {
        Prepared prep = prepare(opts);
        const auto& cfg = prep.config;
        if (!prep.problem.simulator.active_subspace())
            throw ConfigError("problem", "the active subspace of '" + prep.problem.name
                                             + "' is unknown; landscape export needs it");
        const std::filesystem::path dir(opts.out_dir);
        const Index d = prep.problem.simulator.active_subspace()->cols();
        const Rng master(cfg.hdbo.seed);

        const ProblemSpec analysis = prep.problem.fresh();
        Rng land_rng = master.split("landscape");
        const auto landscape = prior_landscape(analysis, cfg.prior_samples, land_rng);
        std::ostringstream land;
        write_projection_csv(land, landscape, d);
        write_file_atomic(dir / "landscape.csv", land.str());
        out << "landscape.csv: " << landscape.size() << " prior samples\n";

        Rng inst_rng = master.split("randomization");
        const auto instances = draw_randomizations(prep.problem, cfg.hdbo.n_rml, inst_rng);

        const auto& lin = prep.problem.simulator.linear_map();
        if (lin && prep.problem.gaussian_prior()) {
            std::vector<Vector> xs;
            for (const auto& inst : instances)
                xs.push_back(oracle_linear_rml(*lin, inst, prep.problem));
            std::ostringstream os;
            write_projection_csv(os, project_with_log_posterior(xs, analysis), d);
            write_file_atomic(dir / "oracle_samples.csv", os.str());
            out << "oracle_samples.csv: " << xs.size() << " oracle RML samples\n";
        }
        else {
            std::filesystem::remove(dir / "oracle_samples.csv");
            err << "warning: oracle RML samples need a linear simulator with a Gaussian prior; "
                   "oracle_samples.csv not written\n";
        }

        const Method method = make_method(cfg.method, cfg);
        const ProblemSpec run_problem = prep.problem.fresh();
        const RMLResult result = method.run(run_problem, instances, master.split("method:" + method.name));
        std::vector<Vector> xs;
        for (const auto& s : result.maximizers)
            if (s.found())
                xs.push_back(s.x);
        std::ostringstream ms;
        write_projection_csv(ms, project_with_log_posterior(xs, analysis), d);
        write_file_atomic(dir / "method_samples.csv", ms.str());
        out << "method_samples.csv: " << xs.size() << " " << method.name << " samples ("
            << result.evaluations << " optimization evaluations, " << analysis.simulator.analysis_eval_count()
            << " analysis evaluations)\n";
        return kExitOk;
    });
}

} // namespace rmlbo::cli
