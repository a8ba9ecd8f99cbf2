#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "linalg.hpp"

namespace rmlbo {

// ---------------------------------------------------------------------------
// Simulator

/// Handle to a deterministic forward map f: R^D -> R^m.
///
/// Copies of a handle share their evaluation counters; `fresh()` yields a
/// handle with the same body and zeroed counters. Optimization calls go
/// through `operator()`, offline analysis calls through `evaluate_analysis`,
/// and the two are counted separately.
class Simulator {
public:
    using Body = std::function<Vector(const Vector&)>;

    Simulator() = default;
    Simulator(std::string name, Index input_dim, Index output_dim, Body body)
        : name_(std::move(name)), input_dim_(input_dim), output_dim_(output_dim),
          body_(std::move(body)), counters_(std::make_shared<Counters>())
    {
        if (input_dim_ < 1 || output_dim_ < 1)
            throw DimensionError("simulator '" + name_ + "' needs positive dimensions");
    }

    const std::string& name() const { return name_; }
    Index input_dim() const { return input_dim_; }
    Index output_dim() const { return output_dim_; }

    Vector operator()(const Vector& x) const
    {
        Vector y = call(x);
        counters_->evals.fetch_add(1, std::memory_order_relaxed);
        return y;
    }

    Vector evaluate_analysis(const Vector& x) const
    {
        Vector y = call(x);
        counters_->analysis_evals.fetch_add(1, std::memory_order_relaxed);
        return y;
    }

    std::uint64_t eval_count() const { return counters_->evals.load(); }
    std::uint64_t analysis_eval_count() const { return counters_->analysis_evals.load(); }

    Simulator fresh() const
    {
        Simulator s = *this;
        s.counters_ = std::make_shared<Counters>();
        return s;
    }

    /// f(x) = B x exactly, when known.
    const std::optional<Matrix>& linear_map() const { return linear_map_; }
    void set_linear_map(Matrix b) { linear_map_ = std::move(b); }

    /// Semi-orthogonal D x d basis such that f depends on x only through A^T x.
    const std::optional<Matrix>& active_subspace() const { return active_; }
    void set_active_subspace(Matrix a) { active_ = std::move(a); }

    /// Catalog parameters for serialization (may be null).
    const nlohmann::json& descriptor() const { return descriptor_; }
    void set_descriptor(nlohmann::json d) { descriptor_ = std::move(d); }

private:
    struct Counters {
        std::atomic<std::uint64_t> evals{0};
        std::atomic<std::uint64_t> analysis_evals{0};
    };

    Vector call(const Vector& x) const
    {
        require_dim(x.size(), input_dim_, "simulator '" + name_ + "' input");
        Vector y;
        try {
            y = body_(x);
        }
        catch (const std::exception& e) {
            throw SimulatorError("simulator '" + name_ + "' failed: " + e.what(), x);
        }
        if (y.size() != output_dim_)
            throw SimulatorError("simulator '" + name_ + "' returned wrong output dimension", x);
        return y;
    }

    std::string name_;
    Index input_dim_ = 0;
    Index output_dim_ = 0;
    Body body_;
    std::shared_ptr<Counters> counters_;
    std::optional<Matrix> linear_map_;
    std::optional<Matrix> active_;
    nlohmann::json descriptor_;
};

// ---------------------------------------------------------------------------
// Gaussian algebra

/// Mean and SPD covariance with a cached Cholesky factor. Copies and
/// `with_mean` share the covariance and its factor.
class GaussianSpec {
public:
    GaussianSpec() = default;
    GaussianSpec(Vector mean, const Matrix& covariance, const std::string& name = "covariance")
        : mean_(std::move(mean))
    {
        if (!is_symmetric(covariance))
            throw NotPositiveDefinite(name);
        require_dim(covariance.rows(), mean_.size(), name);
        shared_ = std::make_shared<Shared>(Shared{covariance, Cholesky(covariance, name)});
    }

    Index dim() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return shared_->cov; }
    const Cholesky& chol() const { return shared_->chol; }

    GaussianSpec with_mean(Vector mean) const
    {
        require_dim(mean.size(), dim(), "gaussian mean");
        GaussianSpec g = *this;
        g.mean_ = std::move(mean);
        return g;
    }

    Vector sample(Rng& rng) const { return mean_ + chol().lower() * rng.normal_vector(dim()); }

private:
    struct Shared {
        Matrix cov;
        Cholesky chol;
    };
    Vector mean_;
    std::shared_ptr<const Shared> shared_;
};

inline double mahalanobis_sq(const Vector& y, const Cholesky& chol)
{
    require_dim(y.size(), chol.dim(), "mahalanobis_sq");
    return chol.quad_form(y);
}

/// y^T cov^{-1} y through triangular solves against the Cholesky factor.
inline double mahalanobis_sq(const Vector& y, const Matrix& cov, const std::string& name = "covariance")
{
    require_dim(y.size(), cov.rows(), "mahalanobis_sq vs '" + name + "'");
    return mahalanobis_sq(y, Cholesky(cov, name));
}

/// log N(x | mean, L L^T)
inline double log_gaussian_density(const Vector& x, const Vector& mean, const Cholesky& chol)
{
    require_dim(x.size(), mean.size(), "log_gaussian_density");
    const double d = static_cast<double>(x.size());
    return -0.5 * (d * kLog2Pi + chol.log_det() + mahalanobis_sq(x - mean, chol));
}

inline double log_gaussian_density(const Vector& x, const GaussianSpec& spec)
{
    return log_gaussian_density(x, spec.mean(), spec.chol());
}

// ---------------------------------------------------------------------------
// Priors and likelihood

struct BoxPrior {
    Vector lower;
    Vector upper;

    BoxPrior() = default;
    BoxPrior(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi))
    {
        require_dim(upper.size(), lower.size(), "box prior bounds");
        for (Index i = 0; i < lower.size(); ++i)
            if (!(lower[i] < upper[i]))
                throw DimensionError("box prior: lower bound not below upper bound at coordinate "
                                     + std::to_string(i));
    }

    static BoxPrior cube(Index dim, double lo, double hi)
    {
        return BoxPrior(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
    }

    Index dim() const { return lower.size(); }

    bool contains(const Vector& x) const
    {
        return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }

    Vector clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    Vector sample(Rng& rng) const
    {
        Vector x(dim());
        for (Index i = 0; i < dim(); ++i)
            x[i] = rng.uniform(lower[i], upper[i]);
        return x;
    }
};

using Prior = std::variant<BoxPrior, GaussianSpec>;

inline Index prior_dim(const Prior& p)
{
    return std::visit([](const auto& v) { return v.dim(); }, p);
}

inline Vector sample_prior(const Prior& p, Rng& rng)
{
    return std::visit([&](const auto& v) { return v.sample(rng); }, p);
}

/// Observed data D with observation covariance Sigma_obs.
class LikelihoodSpec {
public:
    LikelihoodSpec() = default;
    LikelihoodSpec(Vector data, const Matrix& obs_cov) : noise_(std::move(data), obs_cov, "obs_cov") {}

    Index dim() const { return noise_.dim(); }
    const Vector& data() const { return noise_.mean(); }
    const Matrix& obs_cov() const { return noise_.covariance(); }
    const Cholesky& chol() const { return noise_.chol(); }
    const GaussianSpec& as_gaussian() const { return noise_; }

private:
    GaussianSpec noise_;
};

struct ProblemSpec {
    std::string name;
    Simulator simulator;
    Prior prior;
    LikelihoodSpec likelihood;

    ProblemSpec() = default;
    ProblemSpec(std::string n, Simulator sim, Prior p, LikelihoodSpec lik)
        : name(std::move(n)), simulator(std::move(sim)), prior(std::move(p)), likelihood(std::move(lik))
    {
        require_dim(prior_dim(prior), simulator.input_dim(), "prior vs simulator input");
        require_dim(likelihood.dim(), simulator.output_dim(), "likelihood vs simulator output");
    }

    Index input_dim() const { return simulator.input_dim(); }
    Index output_dim() const { return simulator.output_dim(); }
    bool gaussian_prior() const { return std::holds_alternative<GaussianSpec>(prior); }
    const GaussianSpec& gaussian() const { return std::get<GaussianSpec>(prior); }
    const BoxPrior& box() const { return std::get<BoxPrior>(prior); }

    /// Same problem with zeroed simulator counters.
    ProblemSpec fresh() const
    {
        ProblemSpec p = *this;
        p.simulator = simulator.fresh();
        return p;
    }
};

/// log N(D | f(x), Sigma_obs) from a precomputed simulator output; no simulator call.
inline double log_likelihood(const Vector& x, const ProblemSpec& problem, const Vector& fx)
{
    require_dim(x.size(), problem.input_dim(), "log_likelihood input");
    require_dim(fx.size(), problem.output_dim(), "log_likelihood simulator output");
    return log_gaussian_density(problem.likelihood.data(), fx, problem.likelihood.chol());
}

/// log N(D | f(x), Sigma_obs); consumes one simulator evaluation.
inline double log_likelihood(const Vector& x, const ProblemSpec& problem)
{
    return log_likelihood(x, problem, problem.simulator(x));
}

inline double log_prior(const Vector& x, const Prior& prior)
{
    if (const auto* box = std::get_if<BoxPrior>(&prior)) {
        require_dim(x.size(), box->dim(), "log_prior");
        return box->contains(x) ? 0.0 : kLogZero;
    }
    return log_gaussian_density(x, std::get<GaussianSpec>(prior));
}

inline double log_posterior_unnormalized(const Vector& x, const ProblemSpec& problem, const Vector& fx)
{
    const double lp = log_prior(x, problem.prior);
    if (is_log_zero(lp))
        return kLogZero;
    return log_likelihood(x, problem, fx) + lp;
}

// ---------------------------------------------------------------------------
// JSON helpers (dense arrays, matrices row-major as arrays of rows)

inline nlohmann::json to_json_vector(const Vector& v)
{
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline nlohmann::json to_json_matrix(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Vector r = m.row(i).transpose();
        rows.push_back(to_json_vector(r));
    }
    return rows;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& field)
{
    if (!j.is_array())
        throw ConfigError(field, "expected an array of numbers");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw ConfigError(field, "element " + std::to_string(i) + " is not a number");
        v[static_cast<Index>(i)] = j[i].get<double>();
    }
    return v;
}

/// Accepts either an array of rows or {"rows", "cols", "data"} with flat row-major data.
inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& field)
{
    if (j.is_object()) {
        const auto rows = j.at("rows").get<Index>();
        const auto cols = j.at("cols").get<Index>();
        Vector flat = vector_from_json(j.at("data"), field + ".data");
        if (flat.size() != rows * cols)
            throw ConfigError(field, "data length does not match rows*cols");
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index c = 0; c < cols; ++c)
                m(i, c) = flat[i * cols + c];
        return m;
    }
    if (!j.is_array() || j.empty())
        throw ConfigError(field, "expected a non-empty array of rows");
    const auto cols = static_cast<Index>(j[0].size());
    Matrix m(static_cast<Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        Vector r = vector_from_json(j[i], field);
        if (r.size() != cols)
            throw ConfigError(field, "ragged matrix rows");
        m.row(static_cast<Index>(i)) = r.transpose();
    }
    return m;
}

inline nlohmann::json prior_to_json(const Prior& prior)
{
    if (const auto* box = std::get_if<BoxPrior>(&prior))
        return {{"kind", "box"}, {"lower", to_json_vector(box->lower)}, {"upper", to_json_vector(box->upper)}};
    const auto& g = std::get<GaussianSpec>(prior);
    return {{"kind", "gaussian"}, {"mean", to_json_vector(g.mean())}, {"covariance", to_json_matrix(g.covariance())}};
}

inline Prior prior_from_json(const nlohmann::json& j)
{
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "box" || kind == "uniform")
        return BoxPrior(vector_from_json(j.at("lower"), "prior.lower"),
                        vector_from_json(j.at("upper"), "prior.upper"));
    if (kind == "gaussian")
        return GaussianSpec(vector_from_json(j.at("mean"), "prior.mean"),
                            matrix_from_json(j.at("covariance"), "prior.covariance"), "prior.covariance");
    throw ConfigError("prior.kind", "unknown prior kind '" + kind + "'");
}

inline nlohmann::json likelihood_to_json(const LikelihoodSpec& lik)
{
    return {{"data", to_json_vector(lik.data())}, {"covariance", to_json_matrix(lik.obs_cov())}};
}

inline LikelihoodSpec likelihood_from_json(const nlohmann::json& j)
{
    Vector data = vector_from_json(j.at("data"), "likelihood.data");
    Matrix cov = matrix_from_json(j.at("covariance"), "likelihood.covariance");
    if (!is_symmetric(cov))
        throw NotPositiveDefinite("likelihood.covariance");
    return LikelihoodSpec(std::move(data), cov);
}

} // namespace rmlbo
