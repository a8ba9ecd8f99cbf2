#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "hdbo.hpp"

namespace rmlbo {

/// Budget-matched random design: N prior draws shared by every objective.
inline RMLResult random_design(const ProblemSpec& problem, const std::vector<RMLInstance>& instances, long budget_N,
                               const Rng& rng)
{
    if (budget_N < 1)
        throw ConfigError("budget_N", "must be at least 1");
    RMLResult result;
    result.method = "random-design";
    result.policy = {CandidateKind::lifted, true};
    Rng draws = rng.split("random-design");
    const int n_rml = static_cast<int>(instances.size());
    for (long i = 1; i <= budget_N; ++i) {
        SimulationRecord rec;
        rec.iteration = static_cast<int>(i);
        rec.objective_index = n_rml > 0 ? cycled_objective(i, n_rml) : 1;
        rec.x = sample_prior(problem.prior, draws);
        try {
            rec.fx = problem.simulator(rec.x);
        }
        catch (const SimulatorError& e) {
            result.evaluations = static_cast<std::uint64_t>(i - 1);
            throw RunAborted(e.what(), result);
        }
        rec.evals = static_cast<std::uint64_t>(i);
        result.trace.push_back(std::move(rec));
    }
    result.evaluations = static_cast<std::uint64_t>(budget_N);
    result.maximizers = select_maximizers(result.trace, instances, problem, result.policy);
    return result;
}

namespace detail {
    struct BudgetExhausted {};

    /// Nelder-Mead ascent with restarts around the incumbent, stopping when
    /// the evaluator runs out of budget.
    template <typename Eval, typename Project>
    void nelder_mead_ascent(Eval&& eval, Project&& project, Vector start, const Vector& step)
    {
        const Index d = start.size();
        Vector best_x = project(start);
        double best_f = eval(best_x);
        Vector scale = step;
        while (true) {
            std::vector<Vector> simplex{best_x};
            std::vector<double> f{best_f};
            for (Index i = 0; i < d; ++i) {
                Vector v = best_x;
                v[i] += scale[i];
                v = project(v);
                if (v[i] == best_x[i]) {
                    v[i] -= 2.0 * scale[i];
                    v = project(v);
                }
                simplex.push_back(v);
                f.push_back(eval(v));
            }
            for (int it = 0; it < 100000; ++it) {
                std::vector<std::size_t> order(simplex.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return f[a] > f[b]; });
                std::vector<Vector> s2;
                std::vector<double> f2;
                for (auto o : order) {
                    s2.push_back(simplex[o]);
                    f2.push_back(f[o]);
                }
                simplex.swap(s2);
                f.swap(f2);
                if (f.front() > best_f) {
                    best_f = f.front();
                    best_x = simplex.front();
                }
                double diam = 0.0;
                for (std::size_t i = 1; i < simplex.size(); ++i)
                    diam = std::max(diam, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
                const bool flat = std::isfinite(f.front()) && std::abs(f.front() - f.back()) < 1e-13;
                if (diam < 1e-10 || flat)
                    break;

                Vector centroid = Vector::Zero(d);
                for (std::size_t i = 0; i + 1 < simplex.size(); ++i)
                    centroid += simplex[i];
                centroid /= static_cast<double>(d);
                const Vector& worst = simplex.back();
                Vector xr = project(Vector(centroid + (centroid - worst)));
                double fr = eval(xr);
                if (fr > f.front()) {
                    Vector xe = project(Vector(centroid + 2.0 * (centroid - worst)));
                    double fe = eval(xe);
                    if (fe > fr) {
                        simplex.back() = xe;
                        f.back() = fe;
                    }
                    else {
                        simplex.back() = xr;
                        f.back() = fr;
                    }
                    continue;
                }
                if (fr > f[f.size() - 2]) {
                    simplex.back() = xr;
                    f.back() = fr;
                    continue;
                }
                const bool outside = fr > f.back();
                Vector xc = project(Vector(outside ? centroid + 0.5 * (xr - centroid) : centroid + 0.5 * (worst - centroid)));
                double fc = eval(xc);
                if (fc > (outside ? fr : f.back())) {
                    simplex.back() = xc;
                    f.back() = fc;
                    continue;
                }
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = project(Vector(simplex[0] + 0.5 * (simplex[i] - simplex[0])));
                    f[i] = eval(simplex[i]);
                }
            }
            scale *= 0.5;
            if (scale.maxCoeff() < 1e-12)
                scale = step;
        }
    }
} // namespace detail

struct LocalSearchOptions {
    /// Initial simplex edge as a fraction of the box width (uniform prior) or
    /// of the prior standard deviation (Gaussian prior).
    double step_fraction = 0.1;
};

/// Nelder-Mead per objective from a prior draw, floor(N/n_rml) evaluations
/// each, with no data shared between objectives.
inline RMLResult per_objective_local_search(const ProblemSpec& problem, const std::vector<RMLInstance>& instances,
                                            long budget_N, const Rng& rng, const LocalSearchOptions& options = {})
{
    if (instances.empty())
        throw ConfigError("n_rml", "must be at least 1");
    if (budget_N < 1)
        throw ConfigError("budget_N", "must be at least 1");
    RMLResult result;
    result.method = "local-search";
    result.policy = {CandidateKind::lifted, false};
    const long per_objective = budget_N / static_cast<long>(instances.size());

    Vector step;
    std::function<Vector(const Vector&)> project;
    if (const auto* box = std::get_if<BoxPrior>(&problem.prior)) {
        step = options.step_fraction * (box->upper - box->lower);
        project = [box](const Vector& v) { return box->clip(v); };
    }
    else {
        step = options.step_fraction * problem.gaussian().covariance().diagonal().cwiseSqrt();
        project = [](const Vector& v) { return v; };
    }

    std::uint64_t evals = 0;
    for (const RMLInstance& inst : instances) {
        Rng start_rng = rng.split("local-search", static_cast<std::uint64_t>(inst.index));
        long used = 0;
        auto eval = [&](const Vector& x) {
            if (used >= per_objective)
                throw detail::BudgetExhausted{};
            SimulationRecord rec;
            rec.iteration = static_cast<int>(++used);
            rec.objective_index = inst.index;
            rec.x = x;
            try {
                rec.fx = problem.simulator(x);
            }
            catch (const SimulatorError& e) {
                result.evaluations = evals;
                throw RunAborted(e.what(), result);
            }
            rec.evals = ++evals;
            const double v = objective(inst, x, problem, rec.fx);
            result.trace.push_back(std::move(rec));
            return v;
        };
        try {
            detail::nelder_mead_ascent(eval, project, sample_prior(problem.prior, start_rng), step);
        }
        catch (const detail::BudgetExhausted&) {
        }
    }
    result.evaluations = evals;
    result.maximizers = select_maximizers(result.trace, instances, problem, result.policy);
    return result;
}

} // namespace rmlbo
