#pragma once

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "embedding.hpp"
#include "gp.hpp"
#include "lowdiscrepancy.hpp"
#include "rml.hpp"

namespace rmlbo {

struct HDBOConfig {
    int n_rml = 20;
    long budget_N = 1000;
    int K = 10;
    int d_e = 3;
    int n0 = 5;
    double beta = 2.0;
    int acq_restarts = 10;
    int acq_probes = 512;
    int acq_steps = 50;
    double prox_eta = 0.25;
    double y_scale = 1.0;
    std::uint64_t seed = 0;

    /// Iterations per embedding: floor(N/K), or floor(N/(2K)) under a
    /// Gaussian prior where each iteration costs two simulator calls.
    long iterations_per_embedding(bool gaussian_prior) const
    {
        return gaussian_prior ? budget_N / (2L * K) : budget_N / K;
    }

    long expected_evaluations(bool gaussian_prior) const
    {
        return (gaussian_prior ? 2L : 1L) * K * iterations_per_embedding(gaussian_prior);
    }

    void validate(const ProblemSpec& problem) const
    {
        if (n_rml < 1)
            throw ConfigError("n_rml", "must be at least 1");
        if (budget_N < 1)
            throw ConfigError("budget_N", "must be at least 1");
        if (K < 1)
            throw ConfigError("K", "must be at least 1");
        if (d_e < 1 || d_e > problem.input_dim())
            throw ConfigError("d_e", "must satisfy 1 <= d_e <= D (" + std::to_string(problem.input_dim()) + ")");
        if (d_e > static_cast<int>(ScrambledHalton::kPrimes.size()))
            throw ConfigError("d_e", "at most 32 embedding dimensions are supported");
        if (n0 < 1)
            throw ConfigError("n0", "must be at least 1");
        if (!(beta >= 0.0))
            throw ConfigError("beta", "must be non-negative");
        if (acq_restarts < 1 || acq_probes < 1 || acq_steps < 0)
            throw ConfigError("acq_restarts", "acquisition search sizes must be positive");
        if (!(prox_eta > 0.0))
            throw ConfigError("prox_eta", "must be positive");
        if (!(y_scale > 0.0))
            throw ConfigError("y_scale", "must be positive");
        const long t = iterations_per_embedding(problem.gaussian_prior());
        if (n0 >= t)
            throw ConfigError("budget_N", "budget admits " + std::to_string(t)
                                              + " iterations per embedding, not more than n0 = "
                                              + std::to_string(n0));
    }
};

/// One simulator evaluation (two under a Gaussian prior: lifted and refined).
/// `emb_index` is 0 and `y` empty for methods that do not use embeddings.
struct SimulationRecord {
    int emb_index = 0;
    Vector y;
    Vector x;
    Vector fx;
    std::optional<Vector> refined_z;
    std::optional<Vector> f_refined;
    int iteration = 0;
    int objective_index = 1;
    std::uint64_t evals = 0; ///< cumulative simulator calls after this record
};

enum class CandidateKind { lifted, refined };

/// Which records may be selected as x*_n. `shared` lets every objective pick
/// from every record; otherwise only from records produced for it.
struct SelectionPolicy {
    CandidateKind candidates = CandidateKind::lifted;
    bool shared = true;
};

struct Selection {
    int objective = 1;
    std::ptrdiff_t record = -1; ///< -1 when no candidate exists
    Vector x;
    Vector fx;
    double value = kLogZero;

    bool found() const { return record >= 0; }
};

struct RMLResult {
    std::string method;
    std::vector<SimulationRecord> trace;
    std::vector<Selection> maximizers;
    std::uint64_t evaluations = 0;
    SelectionPolicy policy;
    std::vector<Embedding> embeddings;
};

/// Simulator failure mid-run; carries everything recorded so far.
struct RunAborted : Error {
    RunAborted(const std::string& what, RMLResult partial_result)
        : Error(what), partial(std::move(partial_result))
    {
    }
    RMLResult partial;
};

// ---------------------------------------------------------------------------
// Selection (shared by every method)

inline std::pair<const Vector*, const Vector*> candidate_point(const SimulationRecord& r, CandidateKind kind)
{
    if (kind == CandidateKind::refined) {
        if (!r.refined_z || !r.f_refined)
            return {nullptr, nullptr};
        return {&*r.refined_z, &*r.f_refined};
    }
    return {&r.x, &r.fx};
}

/// values(i, n-1) = O_n at record i's candidate, kLogZero when not eligible.
/// Computed from cached simulator outputs only.
inline Matrix objective_table(const std::vector<SimulationRecord>& trace, const std::vector<RMLInstance>& instances,
                              const ProblemSpec& problem, const SelectionPolicy& policy)
{
    Matrix values = Matrix::Constant(static_cast<Index>(trace.size()), static_cast<Index>(instances.size()), kLogZero);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        auto [x, fx] = candidate_point(trace[i], policy.candidates);
        if (!x)
            continue;
        for (std::size_t n = 0; n < instances.size(); ++n) {
            if (!policy.shared && trace[i].objective_index != instances[n].index)
                continue;
            values(static_cast<Index>(i), static_cast<Index>(n)) = objective(instances[n], *x, problem, *fx);
        }
    }
    return values;
}

/// Per-objective argmax over records with evals <= max_evals. Ties go to the
/// earliest record, i.e. the lowest (embedding, iteration) index.
inline std::vector<Selection> select_from_table(const Matrix& values, const std::vector<SimulationRecord>& trace,
                                                const std::vector<RMLInstance>& instances,
                                                const SelectionPolicy& policy,
                                                std::uint64_t max_evals = std::numeric_limits<std::uint64_t>::max())
{
    std::vector<Selection> out(instances.size());
    for (std::size_t n = 0; n < instances.size(); ++n) {
        Selection& s = out[n];
        s.objective = instances[n].index;
        for (std::size_t i = 0; i < trace.size(); ++i) {
            if (trace[i].evals > max_evals)
                continue;
            const double v = values(static_cast<Index>(i), static_cast<Index>(n));
            if (is_log_zero(v) || std::isnan(v))
                continue;
            if (!s.found() || v > s.value) {
                s.record = static_cast<std::ptrdiff_t>(i);
                s.value = v;
            }
        }
        if (s.found()) {
            auto [x, fx] = candidate_point(trace[static_cast<std::size_t>(s.record)], policy.candidates);
            s.x = *x;
            s.fx = *fx;
        }
    }
    return out;
}

inline std::vector<Selection> select_maximizers(const std::vector<SimulationRecord>& trace,
                                                const std::vector<RMLInstance>& instances,
                                                const ProblemSpec& problem, const SelectionPolicy& policy,
                                                std::uint64_t max_evals = std::numeric_limits<std::uint64_t>::max())
{
    return select_from_table(objective_table(trace, instances, problem, policy), trace, instances, policy, max_evals);
}

// ---------------------------------------------------------------------------
// Acquisition

struct AcquisitionOptions {
    int restarts = 10;
    int probes = 512;
    int steps = 50;
};

/// Approximate argmax of UCB over a box: best `restarts` of `probes`
/// quasi-random points, each refined by coordinate moves with step halving.
inline Vector acquisition_maximize(const GPModel& model, const BoxPrior& domain, double beta, Rng& rng,
                                   const AcquisitionOptions& options = {})
{
    const Index d = domain.dim();
    require_dim(d, model.dim(), "acquisition domain");
    ScrambledHalton halton(d, rng);
    std::vector<std::pair<double, Vector>> probes;
    probes.reserve(static_cast<std::size_t>(options.probes));
    const Vector width = domain.upper - domain.lower;
    for (int i = 0; i < options.probes; ++i) {
        Vector y = domain.lower + halton.next().cwiseProduct(width);
        probes.emplace_back(ucb(model, y, beta), std::move(y));
    }
    const auto n_starts = std::min<std::size_t>(static_cast<std::size_t>(options.restarts), probes.size());
    std::partial_sort(probes.begin(), probes.begin() + static_cast<std::ptrdiff_t>(n_starts), probes.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });

    Vector best = probes.front().second;
    double best_value = probes.front().first;
    for (std::size_t s = 0; s < n_starts; ++s) {
        Vector y = probes[s].second;
        double value = probes[s].first;
        Vector step = 0.1 * width;
        for (int it = 0; it < options.steps; ++it) {
            bool improved = false;
            for (Index i = 0; i < d; ++i) {
                for (double sign : {1.0, -1.0}) {
                    Vector cand = y;
                    cand[i] = std::clamp(cand[i] + sign * step[i], domain.lower[i], domain.upper[i]);
                    if (cand[i] == y[i])
                        continue;
                    const double v = ucb(model, cand, beta);
                    if (v > value) {
                        value = v;
                        y = std::move(cand);
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) {
                step *= 0.5;
                if (step.maxCoeff() < 1e-9 * width.maxCoeff())
                    break;
            }
        }
        if (value > best_value) {
            best_value = value;
            best = y;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Gaussian-prior refinement

/// Proximal step toward a perturbed prior mean:
///   z = argmax_x log N(x | mu_n, S) - |x - x0|^2 / (2 eta)
///     = (eta I + S)^{-1} (eta mu_n + S x0).
/// The factorization depends only on (S, eta) and is reused across calls.
class ProximalPriorStep {
public:
    ProximalPriorStep(const GaussianSpec& prior, double eta) : cov_(prior.covariance()), eta_(eta)
    {
        if (!(eta > 0.0))
            throw ConfigError("prox_eta", "must be positive");
        Matrix a = cov_;
        a.diagonal().array() += eta;
        chol_ = Cholesky(a, "proximal system");
    }

    Vector operator()(const Vector& x0, const Vector& prior_mean) const
    {
        require_dim(x0.size(), cov_.rows(), "proximal step start");
        require_dim(prior_mean.size(), cov_.rows(), "proximal step mean");
        return chol_.solve(Vector(eta_ * prior_mean + cov_ * x0));
    }

private:
    Matrix cov_;
    double eta_;
    Cholesky chol_;
};

inline Vector local_prior_refine(const Vector& x0, const RMLInstance& instance, const GaussianSpec& prior, double eta)
{
    if (!instance.prior_mean)
        throw Error("local_prior_refine: instance has no perturbed prior mean");
    return ProximalPriorStep(prior, eta)(x0, *instance.prior_mean);
}

// ---------------------------------------------------------------------------
// HD-BO-RML

/// Objective index for the n-th iteration (1-based) of an embedding.
inline int cycled_objective(long n, int n_rml) { return static_cast<int>((n - 1) % n_rml) + 1; }

/// Surrogate target for objective `inst` at a record. Under a box prior this
/// is O_n itself; under a Gaussian prior the surrogate models the randomized
/// log-likelihood only and the prior enters through the refinement step.
inline double surrogate_target(const RMLInstance& inst, const SimulationRecord& r, const ProblemSpec& problem)
{
    if (problem.gaussian_prior())
        return randomized_log_likelihood(inst, problem, r.fx);
    return objective(inst, r.x, problem, r.fx);
}

/// Surrogate bookkeeping for one model-guided iteration.
struct SurrogateEvent {
    int emb_index = 1;
    long iteration = 0;
    int objective_index = 1;
    Index training_size = 0;
    bool refit = false;
};

using SurrogateObserver = std::function<void(const SurrogateEvent&)>;

inline RMLResult run_hdbo_rml(const ProblemSpec& problem, const std::vector<RMLInstance>& instances,
                              const HDBOConfig& config, const Rng& rng, const SurrogateObserver& observer = {})
{
    config.validate(problem);
    if (static_cast<int>(instances.size()) != config.n_rml)
        throw ConfigError("n_rml", "number of instances does not match n_rml");
    for (std::size_t i = 0; i < instances.size(); ++i)
        if (instances[i].index != static_cast<int>(i) + 1)
            throw Error("instances must be indexed 1..n_rml in order");

    const bool gaussian = problem.gaussian_prior();
    const long iterations = config.iterations_per_embedding(gaussian);
    const auto dim_e = static_cast<Index>(config.d_e);

    RMLResult result;
    result.method = "hdbo-rml";
    result.policy = {gaussian ? CandidateKind::refined : CandidateKind::lifted, true};

    std::optional<ProximalPriorStep> prox;
    if (gaussian)
        prox.emplace(problem.gaussian(), config.prox_eta);

    const AcquisitionOptions acq_opts{config.acq_restarts, config.acq_probes, config.acq_steps};
    std::uint64_t evals = 0;
    auto simulate = [&](const Vector& x) {
        try {
            Vector y = problem.simulator(x);
            ++evals;
            return y;
        }
        catch (const SimulatorError& e) {
            result.evaluations = evals;
            throw RunAborted(e.what(), result);
        }
    };

    for (int k = 1; k <= config.K; ++k) {
        Rng emb_rng = rng.split("embedding", static_cast<std::uint64_t>(k));
        Rng init_rng = rng.split("init", static_cast<std::uint64_t>(k));
        Rng gp_rng = rng.split("gp", static_cast<std::uint64_t>(k));
        Rng acq_rng = rng.split("acquisition", static_cast<std::uint64_t>(k));
        result.embeddings.push_back(sample_embedding(problem.input_dim(), dim_e, emb_rng, k, config.y_scale));
        const Embedding& emb = result.embeddings.back();
        const BoxPrior y_domain = BoxPrior::cube(dim_e, -emb.y_bound, emb.y_bound);
        ScrambledHalton halton(dim_e, init_rng);
        const FitOptions fit_opts{5, 100, (y_domain.upper - y_domain.lower).norm()};

        const std::size_t first_record = result.trace.size();
        std::optional<KernelParams> cached_params;
        int since_fit = 0;

        for (long n = 1; n <= iterations; ++n) {
            const int obj = cycled_objective(n, config.n_rml);
            const RMLInstance& inst = instances[static_cast<std::size_t>(obj - 1)];
            Vector y;
            if (n <= config.n0) {
                y = halton.next_in_box(-emb.y_bound, emb.y_bound);
            }
            else {
                // Every earlier record of this embedding contributes a training
                // point for the current objective, recomputed from cached f(x).
                const std::size_t n_prev = result.trace.size() - first_record;
                Matrix inputs(static_cast<Index>(n_prev), dim_e);
                Vector targets(static_cast<Index>(n_prev));
                Index used = 0;
                for (std::size_t i = first_record; i < result.trace.size(); ++i) {
                    const double t = surrogate_target(inst, result.trace[i], problem);
                    if (is_log_zero(t) || !std::isfinite(t))
                        continue;
                    inputs.row(used) = result.trace[i].y.transpose();
                    targets[used] = t;
                    ++used;
                }
                inputs.conservativeResize(used, dim_e);
                targets.conservativeResize(used);

                GPModel model(dim_e, cached_params.value_or(KernelParams{}));
                bool refit = false;
                if (used > 0) {
                    if (!cached_params || used < 30 || since_fit >= 4) {
                        model = fit(inputs, targets, gp_rng, fit_opts);
                        cached_params = model.params();
                        since_fit = 0;
                        refit = true;
                    }
                    else {
                        model = GPModel::condition(inputs, targets, *cached_params);
                        ++since_fit;
                    }
                }
                if (observer)
                    observer({k, n, obj, used, refit});
                y = acquisition_maximize(model, y_domain, config.beta, acq_rng, acq_opts);
            }

            SimulationRecord rec;
            rec.emb_index = k;
            rec.iteration = static_cast<int>(n);
            rec.objective_index = obj;
            rec.y = y;
            rec.x = lift(emb, y, problem.prior);
            rec.fx = simulate(rec.x);
            if (gaussian) {
                rec.refined_z = (*prox)(rec.x, *inst.prior_mean);
                rec.f_refined = simulate(*rec.refined_z);
            }
            rec.evals = evals;
            result.trace.push_back(std::move(rec));
        }
    }

    result.evaluations = evals;
    result.maximizers = select_maximizers(result.trace, instances, problem, result.policy);
    return result;
}

// ---------------------------------------------------------------------------
// Trace serialization (JSON lines)

inline nlohmann::json to_json(const SimulationRecord& r, std::size_t seq)
{
    nlohmann::json j;
    j["seq"] = seq;
    j["emb"] = r.emb_index > 0 ? nlohmann::json(r.emb_index) : nlohmann::json(nullptr);
    j["iteration"] = r.iteration;
    j["objective"] = r.objective_index;
    j["y"] = r.y.size() > 0 ? to_json_vector(r.y) : nlohmann::json(nullptr);
    j["x"] = to_json_vector(r.x);
    j["fx"] = to_json_vector(r.fx);
    if (r.refined_z) {
        j["z"] = to_json_vector(*r.refined_z);
        j["fz"] = to_json_vector(*r.f_refined);
    }
    j["evals"] = r.evals;
    return j;
}

/// Parses one trace line. Only `x` and `fx` are required, so traces produced
/// by external optimizers can be compared with the same selection logic.
inline SimulationRecord record_from_json(const nlohmann::json& j, std::uint64_t default_evals)
{
    SimulationRecord r;
    r.x = vector_from_json(j.at("x"), "trace.x");
    r.fx = vector_from_json(j.at("fx"), "trace.fx");
    if (j.contains("emb") && !j["emb"].is_null())
        r.emb_index = j["emb"].get<int>();
    if (j.contains("y") && !j["y"].is_null())
        r.y = vector_from_json(j["y"], "trace.y");
    if (j.contains("z")) {
        r.refined_z = vector_from_json(j["z"], "trace.z");
        r.f_refined = vector_from_json(j.at("fz"), "trace.fz");
    }
    r.iteration = j.value("iteration", 0);
    r.objective_index = j.value("objective", 1);
    r.evals = j.value("evals", default_evals);
    return r;
}

inline void write_trace_jsonl(std::ostream& os, const std::vector<SimulationRecord>& trace)
{
    for (std::size_t i = 0; i < trace.size(); ++i)
        os << to_json(trace[i], i).dump() << '\n';
}

inline std::vector<SimulationRecord> read_trace_jsonl(std::istream& is)
{
    std::vector<SimulationRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        out.push_back(record_from_json(nlohmann::json::parse(line), out.size() + 1));
    }
    return out;
}

} // namespace rmlbo
