#pragma once

#include <optional>
#include <vector>

#include "probspec.hpp"

namespace rmlbo {

/// One randomized objective: perturbed data and, for Gaussian priors, a
/// perturbed prior mean. `index` is 1-based.
struct RMLInstance {
    int index = 1;
    Vector data;
    std::optional<Vector> prior_mean;
};

/// Draws n_rml randomizations. Per instance the data perturbation is drawn
/// first, then the prior-mean perturbation, each coordinate-ascending, as
/// D + L xi with L the lower Cholesky factor. No simulator evaluations.
inline std::vector<RMLInstance> draw_randomizations(const ProblemSpec& problem, int n_rml, Rng& rng)
{
    if (n_rml < 1)
        throw ConfigError("n_rml", "must be at least 1");
    std::vector<RMLInstance> out;
    out.reserve(static_cast<std::size_t>(n_rml));
    const auto& lik = problem.likelihood;
    for (int n = 1; n <= n_rml; ++n) {
        RMLInstance inst;
        inst.index = n;
        inst.data = lik.data() + lik.chol().lower() * rng.normal_vector(lik.dim());
        if (problem.gaussian_prior()) {
            const auto& g = problem.gaussian();
            inst.prior_mean = g.mean() + g.chol().lower() * rng.normal_vector(g.dim());
        }
        out.push_back(std::move(inst));
    }
    return out;
}

/// log N(D_n | f(x), Sigma_obs) from a cached simulator output.
inline double randomized_log_likelihood(const RMLInstance& instance, const ProblemSpec& problem, const Vector& fx)
{
    require_dim(fx.size(), problem.output_dim(), "objective simulator output");
    return log_gaussian_density(instance.data, fx, problem.likelihood.chol());
}

/// O_n(x) from a cached simulator output; no simulator call.
inline double objective(const RMLInstance& instance, const Vector& x, const ProblemSpec& problem, const Vector& fx)
{
    require_dim(x.size(), problem.input_dim(), "objective input");
    if (const auto* box = std::get_if<BoxPrior>(&problem.prior)) {
        if (!box->contains(x))
            return kLogZero;
        return randomized_log_likelihood(instance, problem, fx);
    }
    if (!instance.prior_mean)
        throw Error("objective: Gaussian prior requires a perturbed prior mean");
    const auto& g = problem.gaussian();
    return randomized_log_likelihood(instance, problem, fx)
           + log_gaussian_density(x, *instance.prior_mean, g.chol());
}

/// O_n(x); consumes one simulator evaluation.
inline double objective(const RMLInstance& instance, const Vector& x, const ProblemSpec& problem)
{
    return objective(instance, x, problem, problem.simulator(x));
}

/// Exact maximizer of O_n for f(x) = B x under a Gaussian prior:
/// (B^T S_obs^{-1} B + S^{-1})^{-1} (B^T S_obs^{-1} D_n + S^{-1} mu_n).
inline Vector oracle_linear_rml(const Matrix& b, const RMLInstance& instance, const ProblemSpec& problem)
{
    if (!problem.gaussian_prior() || !instance.prior_mean)
        throw Error("oracle_linear_rml requires a Gaussian prior");
    require_dim(b.rows(), problem.output_dim(), "oracle_linear_rml rows");
    require_dim(b.cols(), problem.input_dim(), "oracle_linear_rml cols");
    const auto& g = problem.gaussian();
    const Cholesky& obs = problem.likelihood.chol();
    const Matrix obs_inv_b = obs.solve(b);
    const Matrix prior_inv = g.chol().solve(Matrix(Matrix::Identity(g.dim(), g.dim())));
    Matrix normal = b.transpose() * obs_inv_b + prior_inv;
    normal = 0.5 * (normal + normal.transpose());
    const Vector rhs = obs_inv_b.transpose() * instance.data + g.chol().solve(*instance.prior_mean);
    return Cholesky(normal, "oracle normal matrix").solve(rhs);
}

/// Analytic Gaussian posterior (mean, covariance) for f(x) = B x.
inline std::pair<Vector, Matrix> linear_gaussian_posterior(const Matrix& b, const ProblemSpec& problem)
{
    const auto& g = problem.gaussian();
    const Cholesky& obs = problem.likelihood.chol();
    const Matrix obs_inv_b = obs.solve(b);
    Matrix precision = b.transpose() * obs_inv_b + g.chol().solve(Matrix(Matrix::Identity(g.dim(), g.dim())));
    precision = 0.5 * (precision + precision.transpose());
    Cholesky pc(precision, "posterior precision");
    const Vector mean = pc.solve(Vector(obs_inv_b.transpose() * problem.likelihood.data() + g.chol().solve(g.mean())));
    const Matrix cov = pc.solve(Matrix(Matrix::Identity(g.dim(), g.dim())));
    return {mean, cov};
}

inline nlohmann::json to_json(const RMLInstance& inst)
{
    nlohmann::json j = {{"index", inst.index}, {"data", to_json_vector(inst.data)}};
    if (inst.prior_mean)
        j["prior_mean"] = to_json_vector(*inst.prior_mean);
    return j;
}

inline RMLInstance instance_from_json(const nlohmann::json& j)
{
    RMLInstance inst;
    inst.index = j.at("index").get<int>();
    inst.data = vector_from_json(j.at("data"), "instance.data");
    if (j.contains("prior_mean"))
        inst.prior_mean = vector_from_json(j.at("prior_mean"), "instance.prior_mean");
    return inst;
}

} // namespace rmlbo
