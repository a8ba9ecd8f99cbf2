#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include <Eigen/QR>

#include "baselines.hpp"
#include "hdbo.hpp"

namespace rmlbo {

// ---------------------------------------------------------------------------
// Synthetic problems

/// Catalog of synthetic simulators f(x) = g(A^T x) with a known
/// semi-orthogonal active subspace A (D x d):
///   linear-gaussian  f(x) = C A^T x, C random m x d (d defaults to D)
///   quadratic-bowl   g(u) = u                       (m = d)
///   rosenbrock-2d    g(u) = (u1, u2 - u1^2)         (d = m = 2)
///   sine-ridge       g(u) = sin(2u) + u/2 per coord (m = d)
inline const std::vector<std::string>& catalog_names()
{
    static const std::vector<std::string> names{"linear-gaussian", "quadratic-bowl", "rosenbrock-2d", "sine-ridge"};
    return names;
}

struct SyntheticOptions {
    std::string name = "quadratic-bowl";
    Index D = 100;
    Index d = 2;       ///< active dimension; <= 0 means D for linear-gaussian
    Index m = 5;       ///< output dimension, linear-gaussian only
    std::string prior; ///< "uniform" or "gaussian"; empty picks the catalog default
    double noise_sd = 0.1;
    std::uint64_t seed = 0;

    std::string resolved_prior() const
    {
        if (!prior.empty())
            return prior;
        return name == "linear-gaussian" ? "gaussian" : "uniform";
    }

    Index resolved_active_dim() const
    {
        if (name == "linear-gaussian" && (d <= 0 || d > D))
            return D;
        if (name == "rosenbrock-2d")
            return 2;
        return d;
    }
};

/// D x d matrix with orthonormal columns from the QR of a seeded Gaussian matrix.
inline Matrix random_semi_orthogonal(Index D, Index d, Rng& rng)
{
    Matrix g(D, d);
    for (Index c = 0; c < d; ++c)
        for (Index r = 0; r < D; ++r)
            g(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(D, d);
    // Fix column signs so the basis does not depend on QR sign conventions.
    const Matrix r = qr.matrixQR().topLeftCorner(d, d);
    for (Index c = 0; c < d; ++c)
        if (r(c, c) < 0.0)
            q.col(c) *= -1.0;
    return q;
}

inline Simulator make_simulator(const SyntheticOptions& opt)
{
    const auto& names = catalog_names();
    if (std::find(names.begin(), names.end(), opt.name) == names.end())
        throw ConfigError("problem.name", "unknown catalog problem '" + opt.name + "'");
    const Index d = opt.resolved_active_dim();
    if (opt.D < 1 || d < 1 || d > opt.D)
        throw ConfigError("problem.d", "active dimension must satisfy 1 <= d <= D");
    if (opt.name == "rosenbrock-2d" && opt.D < 2)
        throw ConfigError("problem.D", "rosenbrock-2d needs D >= 2");

    Rng base(opt.seed);
    Rng active_rng = base.split("active");
    const Matrix a = random_semi_orthogonal(opt.D, d, active_rng);
    const Matrix at = a.transpose();
    nlohmann::json desc = {{"name", opt.name}, {"D", opt.D}, {"d", d}, {"seed", opt.seed}};

    Simulator sim;
    if (opt.name == "linear-gaussian") {
        if (opt.m < 1)
            throw ConfigError("problem.m", "must be positive");
        Rng lin_rng = base.split("linear");
        Matrix c(opt.m, d);
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < opt.m; ++i)
                c(i, j) = lin_rng.normal();
        const Matrix b = c * at;
        sim = Simulator(opt.name, opt.D, opt.m, [b](const Vector& x) { return Vector(b * x); });
        sim.set_linear_map(b);
        desc["m"] = opt.m;
    }
    else if (opt.name == "quadratic-bowl") {
        sim = Simulator(opt.name, opt.D, d, [at](const Vector& x) { return Vector(at * x); });
        sim.set_linear_map(at);
    }
    else if (opt.name == "rosenbrock-2d") {
        sim = Simulator(opt.name, opt.D, 2, [at](const Vector& x) {
            const Vector u = at * x;
            return Vector{{u[0], u[1] - u[0] * u[0]}};
        });
    }
    else {
        sim = Simulator(opt.name, opt.D, d, [at](const Vector& x) {
            const Vector u = at * x;
            return Vector((2.0 * u.array()).sin() + 0.5 * u.array());
        });
    }
    sim.set_active_subspace(a);
    sim.set_descriptor(desc);
    return sim;
}

/// Seeded synthetic inverse problem: data = f(x_true) + noise, x_true drawn
/// from the prior, Sigma_obs = noise_sd^2 I.
inline ProblemSpec make_problem(const SyntheticOptions& opt)
{
    Simulator sim = make_simulator(opt);
    const std::string prior_kind = opt.resolved_prior();
    Prior prior;
    if (prior_kind == "uniform" || prior_kind == "box")
        prior = BoxPrior::cube(opt.D, -1.0, 1.0);
    else if (prior_kind == "gaussian")
        prior = GaussianSpec(Vector::Zero(opt.D), Matrix::Identity(opt.D, opt.D), "prior.covariance");
    else
        throw ConfigError("problem.prior", "expected 'uniform' or 'gaussian'");
    if (!(opt.noise_sd > 0.0))
        throw ConfigError("problem.noise_sd", "must be positive");

    Rng base(opt.seed);
    Rng truth_rng = base.split("truth");
    Rng noise_rng = base.split("noise");
    const Vector x_true = sample_prior(prior, truth_rng);
    const Index m = sim.output_dim();
    const Vector data = sim.evaluate_analysis(x_true) + opt.noise_sd * noise_rng.normal_vector(m);
    const Matrix obs_cov = opt.noise_sd * opt.noise_sd * Matrix::Identity(m, m);
    nlohmann::json desc = sim.descriptor();
    desc["prior"] = prior_kind;
    desc["noise_sd"] = opt.noise_sd;
    sim.set_descriptor(desc);
    return ProblemSpec(opt.name, sim.fresh(), std::move(prior), LikelihoodSpec(data, obs_cov));
}

inline SyntheticOptions synthetic_options_from_json(const nlohmann::json& j)
{
    SyntheticOptions o;
    o.name = j.value("name", o.name);
    o.D = j.value("D", o.D);
    o.d = j.value("d", o.name == "linear-gaussian" ? Index{0} : o.d);
    o.m = j.value("m", o.m);
    o.prior = j.value("prior", o.prior);
    o.noise_sd = j.value("noise_sd", o.noise_sd);
    o.seed = j.value("seed", o.seed);
    return o;
}

/// Loads a problem definition. Either a catalog problem
///   {"catalog": {"name", "D", "d", "m", "prior", "noise_sd", "seed"}}
/// or explicit ingredients
///   {"simulator": {"name": "linear", "matrix": [[...]]} | catalog simulator params,
///    "prior": {...}, "likelihood": {"data": [...], "covariance": [[...]]}}.
inline ProblemSpec problem_from_json(const nlohmann::json& j)
{
    if (j.contains("catalog"))
        return make_problem(synthetic_options_from_json(j.at("catalog")));
    const auto& sj = j.at("simulator");
    const std::string name = sj.at("name").get<std::string>();
    Simulator sim;
    if (name == "linear") {
        const Matrix b = matrix_from_json(sj.at("matrix"), "simulator.matrix");
        sim = Simulator("linear", b.cols(), b.rows(), [b](const Vector& x) { return Vector(b * x); });
        sim.set_linear_map(b);
        sim.set_descriptor({{"name", "linear"}, {"matrix", to_json_matrix(b)}});
    }
    else {
        sim = make_simulator(synthetic_options_from_json(sj));
    }
    return ProblemSpec(name, sim, prior_from_json(j.at("prior")), likelihood_from_json(j.at("likelihood")));
}

inline nlohmann::json problem_to_json(const ProblemSpec& p)
{
    return {{"simulator", p.simulator.descriptor()},
            {"prior", prior_to_json(p.prior)},
            {"likelihood", likelihood_to_json(p.likelihood)}};
}

// ---------------------------------------------------------------------------
// Metrics

/// Mean over objectives of O_n(x*_n), recomputed from cached simulator outputs.
inline double mean_return(const RMLResult& result, const std::vector<RMLInstance>& instances,
                          const ProblemSpec& problem)
{
    if (instances.empty())
        throw Error("mean_return: no objectives");
    double sum = 0.0;
    for (const RMLInstance& inst : instances) {
        auto it = std::find_if(result.maximizers.begin(), result.maximizers.end(),
                               [&](const Selection& s) { return s.objective == inst.index; });
        if (it == result.maximizers.end() || !it->found())
            throw Error("mean_return: no maximizer for objective " + std::to_string(inst.index));
        sum += objective(inst, it->x, problem, it->fx);
    }
    return sum / static_cast<double>(instances.size());
}

// ---------------------------------------------------------------------------
// Budget curves

struct Method {
    std::string name;
    std::function<RMLResult(const ProblemSpec&, const std::vector<RMLInstance>&, const Rng&)> run;
};

struct TrialRun {
    int trial = 0;
    std::uint64_t seed = 0;
    std::vector<RMLInstance> instances;
    RMLResult result;
    double final_mean_return = kLogZero;
    std::vector<std::optional<double>> curve; ///< negative mean return per checkpoint
};

struct ExperimentReport {
    nlohmann::json config;
    std::string problem;
    std::vector<long> checkpoints;
    std::vector<std::string> methods;
    std::map<std::string, std::vector<TrialRun>> runs;
    std::vector<std::string> warnings;
    std::uint64_t seed = 0;
    double wall_clock_seconds = 0.0;

    /// Mean over trials at each checkpoint (trials lacking a point are skipped).
    std::vector<std::optional<double>> mean_curve(const std::string& method) const
    {
        std::vector<std::optional<double>> out(checkpoints.size());
        const auto& trials = runs.at(method);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            double s = 0.0;
            int count = 0;
            for (const auto& t : trials)
                if (t.curve[c]) {
                    s += *t.curve[c];
                    ++count;
                }
            if (count > 0)
                out[c] = s / count;
        }
        return out;
    }
};

/// Negative mean return at each checkpoint, from the best-so-far selection
/// over records within that budget.
inline std::vector<std::optional<double>> curve_from_trace(const RMLResult& result,
                                                           const std::vector<RMLInstance>& instances,
                                                           const ProblemSpec& problem,
                                                           const std::vector<long>& checkpoints,
                                                           std::vector<std::string>* warnings = nullptr)
{
    const Matrix table = objective_table(result.trace, instances, problem, result.policy);
    std::vector<std::optional<double>> out;
    for (long cp : checkpoints) {
        if (cp < 1 || static_cast<std::uint64_t>(cp) > result.evaluations) {
            if (warnings)
                warnings->push_back(result.method + ": trace of " + std::to_string(result.evaluations)
                                    + " evaluations is shorter than checkpoint " + std::to_string(cp) + ", skipped");
            out.emplace_back();
            continue;
        }
        auto sel = select_from_table(table, result.trace, instances, result.policy, static_cast<std::uint64_t>(cp));
        if (std::any_of(sel.begin(), sel.end(), [](const Selection& s) { return !s.found(); })) {
            if (warnings)
                warnings->push_back(result.method + ": some objective has no candidate at checkpoint "
                                    + std::to_string(cp) + ", skipped");
            out.emplace_back();
            continue;
        }
        double s = 0.0;
        for (const auto& x : sel)
            s += x.value;
        out.emplace_back(-s / static_cast<double>(sel.size()));
    }
    return out;
}

/// `count` evenly spaced budgets ending at N.
inline std::vector<long> even_checkpoints(long budget_N, int count)
{
    std::vector<long> cps;
    for (int i = 1; i <= count; ++i) {
        const long c = budget_N * i / count;
        if (c >= 1 && (cps.empty() || c > cps.back()))
            cps.push_back(c);
    }
    return cps;
}

/// Worker count from RML_SAMPLER_THREADS, else hardware concurrency.
inline int trial_threads()
{
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RML_SAMPLER_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0)
            n = v;
    }
    return std::max(1, n);
}

struct CurveOptions {
    int n_rml = 20;
    int trials = 5;
    std::uint64_t seed = 0;
    std::vector<long> checkpoints;
    int threads = 0; ///< <= 0 uses trial_threads()
};

/// Runs every method once per trial at full budget and reconstructs the
/// curves from the traces. Trial t draws its own randomizations from the
/// trial seed; all methods of a trial share them.
inline ExperimentReport budget_curve(const ProblemSpec& problem, const std::vector<Method>& methods,
                                     const CurveOptions& options)
{
    if (!std::is_sorted(options.checkpoints.begin(), options.checkpoints.end())
        || std::adjacent_find(options.checkpoints.begin(), options.checkpoints.end()) != options.checkpoints.end())
        throw ConfigError("checkpoints", "must be strictly increasing");
    if (options.trials < 1)
        throw ConfigError("trials", "must be at least 1");
    if (methods.empty())
        throw ConfigError("methods", "at least one method is required");

    const auto start = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.problem = problem.name;
    report.checkpoints = options.checkpoints;
    report.seed = options.seed;
    for (const auto& m : methods) {
        report.methods.push_back(m.name);
        report.runs[m.name].resize(static_cast<std::size_t>(options.trials));
    }

    const Rng master(options.seed);
    std::vector<std::vector<std::string>> trial_warnings(static_cast<std::size_t>(options.trials));
    auto run_trial = [&](int t) {
        const Rng trial_rng = master.split("trial", static_cast<std::uint64_t>(t));
        Rng inst_rng = trial_rng.split("randomization");
        const auto instances = draw_randomizations(problem, options.n_rml, inst_rng);
        for (const auto& m : methods) {
            TrialRun tr;
            tr.trial = t;
            tr.seed = trial_rng.seed();
            tr.instances = instances;
            const ProblemSpec p = problem.fresh();
            tr.result = m.run(p, instances, trial_rng.split("method:" + m.name));
            tr.final_mean_return = mean_return(tr.result, instances, p);
            tr.curve = curve_from_trace(tr.result, instances, p, options.checkpoints,
                                        &trial_warnings[static_cast<std::size_t>(t)]);
            report.runs.at(m.name)[static_cast<std::size_t>(t)] = std::move(tr);
        }
    };

    const int workers = std::min(options.threads > 0 ? options.threads : trial_threads(), options.trials);
    if (workers <= 1) {
        for (int t = 0; t < options.trials; ++t)
            run_trial(t);
    }
    else {
        std::atomic<int> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int t = next++; t < options.trials; t = next++) {
                    try {
                        run_trial(t);
                    }
                    catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool)
            th.join();
        if (failure)
            std::rethrow_exception(failure);
    }
    for (auto& w : trial_warnings)
        report.warnings.insert(report.warnings.end(), w.begin(), w.end());
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Active-subspace projections

struct ProjectedPoint {
    Vector coords;
    double log_post = kLogZero;
};

/// A^T x for each sample.
inline std::vector<Vector> project_active(const std::vector<Vector>& samples, const Matrix& active)
{
    std::vector<Vector> out;
    out.reserve(samples.size());
    for (const auto& x : samples) {
        require_dim(x.size(), active.rows(), "project_active");
        out.emplace_back(active.transpose() * x);
    }
    return out;
}

inline const Matrix& require_active(const ProblemSpec& problem)
{
    if (!problem.simulator.active_subspace())
        throw Error("problem '" + problem.name + "' has no known active subspace");
    return *problem.simulator.active_subspace();
}

/// Projections colored by log p(D|x) + log p(x). Simulator calls are counted
/// on the analysis counter, outside any optimization budget.
inline std::vector<ProjectedPoint> project_with_log_posterior(const std::vector<Vector>& samples,
                                                              const ProblemSpec& problem)
{
    const Matrix& a = require_active(problem);
    std::vector<ProjectedPoint> out;
    out.reserve(samples.size());
    for (const auto& x : samples) {
        const Vector fx = problem.simulator.evaluate_analysis(x);
        out.push_back({a.transpose() * x, log_posterior_unnormalized(x, problem, fx)});
    }
    return out;
}

/// Prior-sample landscape in the active subspace.
inline std::vector<ProjectedPoint> prior_landscape(const ProblemSpec& problem, int n_samples, Rng& rng)
{
    std::vector<Vector> xs;
    xs.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i)
        xs.push_back(sample_prior(problem.prior, rng));
    return project_with_log_posterior(xs, problem);
}

// ---------------------------------------------------------------------------
// Output formats

inline std::string format_double(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_projection_csv(std::ostream& os, const std::vector<ProjectedPoint>& pts, Index active_dim)
{
    os << "sample_id";
    for (Index j = 1; j <= active_dim; ++j)
        os << ",coord_" << j;
    os << ",log_post\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        os << i;
        for (Index j = 0; j < pts[i].coords.size(); ++j)
            os << ',' << format_double(pts[i].coords[j]);
        os << ',' << format_double(pts[i].log_post) << '\n';
    }
}

/// One row per (method, checkpoint, trial) that has a value.
inline void write_curves_csv(std::ostream& os, const ExperimentReport& report)
{
    os << "method,budget,trial,neg_mean_return\n";
    for (const auto& m : report.methods)
        for (std::size_t c = 0; c < report.checkpoints.size(); ++c)
            for (const auto& t : report.runs.at(m))
                if (t.curve[c])
                    os << m << ',' << report.checkpoints[c] << ',' << t.trial << ',' << format_double(*t.curve[c])
                       << '\n';
}

inline nlohmann::json selections_to_json(const std::vector<Selection>& sel)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sel) {
        nlohmann::json j = {{"objective", s.objective}, {"record", s.record}};
        if (s.found()) {
            j["x"] = to_json_vector(s.x);
            j["value"] = s.value;
        }
        arr.push_back(j);
    }
    return arr;
}

inline nlohmann::json to_json(const ExperimentReport& r, const ProblemSpec* problem = nullptr)
{
    nlohmann::json j;
    j["config"] = r.config;
    j["problem"] = r.problem;
    j["seed"] = r.seed;
    j["checkpoints"] = r.checkpoints;
    j["warnings"] = r.warnings;
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& m : r.methods) {
        nlohmann::json mj;
        nlohmann::json mean = nlohmann::json::array();
        for (const auto& v : r.mean_curve(m))
            mean.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        mj["mean_neg_mean_return"] = mean;
        nlohmann::json trials = nlohmann::json::array();
        for (const auto& t : r.runs.at(m)) {
            nlohmann::json tj;
            tj["trial"] = t.trial;
            tj["seed"] = t.seed;
            tj["evaluations"] = t.result.evaluations;
            tj["final_mean_return"] = t.final_mean_return;
            nlohmann::json curve = nlohmann::json::array();
            for (const auto& v : t.curve)
                curve.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
            tj["neg_mean_return"] = curve;
            tj["maximizers"] = selections_to_json(t.result.maximizers);
            if (problem && problem->simulator.active_subspace()) {
                nlohmann::json proj = nlohmann::json::array();
                for (const auto& s : t.result.maximizers)
                    if (s.found())
                        proj.push_back(to_json_vector(problem->simulator.active_subspace()->transpose() * s.x));
                tj["active_projections"] = proj;
            }
            trials.push_back(tj);
        }
        mj["trials"] = trials;
        methods[m] = mj;
    }
    j["methods"] = methods;
    return j;
}

} // namespace rmlbo
