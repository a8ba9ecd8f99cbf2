#pragma once

#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "common.hpp"
#include "optim.hpp"

namespace rmlbo {

/// Squared-exponential kernel hyperparameters. The fitter works on
/// (log o, log l, log noise_var).
struct KernelParams {
    static constexpr double kNoiseFloor = 1e-8;

    double outputscale = 1.0;
    double lengthscale = 1.0;
    double noise_var = kNoiseFloor;

    Vector log_params() const
    {
        return Vector{{std::log(outputscale), std::log(lengthscale), std::log(noise_var)}};
    }

    static KernelParams from_log(const Vector& p)
    {
        return {std::exp(p[0]), std::exp(p[1]), std::max(kNoiseFloor, std::exp(p[2]))};
    }
};

/// o^2 exp(-|y1 - y2|^2 / (2 l^2))
inline double rbf_kernel(const Vector& y1, const Vector& y2, const KernelParams& params)
{
    require_dim(y2.size(), y1.size(), "rbf_kernel");
    const double r2 = (y1 - y2).squaredNorm();
    return params.outputscale * params.outputscale
           * std::exp(-0.5 * r2 / (params.lengthscale * params.lengthscale));
}

namespace detail {
    /// Pairwise squared distances between the rows of x.
    inline Matrix squared_distances(const Matrix& x)
    {
        const Vector sq = x.rowwise().squaredNorm();
        Matrix d = (-2.0 * x * x.transpose()).colwise() + sq;
        d.rowwise() += sq.transpose();
        return d.cwiseMax(0.0);
    }

    /// Symmetric kernel matrix from squared distances; exp is evaluated on
    /// the upper triangle only.
    inline Matrix rbf_from_sqdist(const Matrix& d2, const KernelParams& p)
    {
        const double inv = -0.5 / (p.lengthscale * p.lengthscale);
        const double o2 = p.outputscale * p.outputscale;
        const Index n = d2.rows();
        Matrix k(n, n);
        for (Index c = 0; c < n; ++c) {
            for (Index r = 0; r < c; ++r) {
                const double v = o2 * std::exp(inv * d2(r, c));
                k(r, c) = v;
                k(c, r) = v;
            }
            k(c, c) = o2;
        }
        return k;
    }

    /// Factorizes K + (noise + jitter) I, escalating jitter 1e-8 .. 1e-4 (x o^2).
    inline std::optional<Eigen::LLT<Matrix>> factor_with_jitter(Matrix k, const KernelParams& p)
    {
        k.diagonal().array() += p.noise_var;
        Eigen::LLT<Matrix> llt(k);
        if (llt.info() == Eigen::Success)
            return llt;
        const double o2 = p.outputscale * p.outputscale;
        double added = 0.0;
        for (double jitter = 1e-8; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
            k.diagonal().array() += jitter * o2 - added;
            added = jitter * o2;
            llt.compute(k);
            if (llt.info() == Eigen::Success)
                return llt;
        }
        return std::nullopt;
    }
} // namespace detail

/// Kernel (signal) matrix over the rows of `inputs`.
inline Matrix kernel_matrix(const Matrix& inputs, const KernelParams& params)
{
    return detail::rbf_from_sqdist(detail::squared_distances(inputs), params);
}

struct Evidence {
    double value = kLogZero;
    Vector gradient = Vector::Zero(3); ///< w.r.t. (log o, log l, log noise_var)
};

/// Log marginal likelihood of `targets` (taken as given, e.g. already
/// standardized) under a zero-mean GP with covariance K + noise_var I, and
/// its analytic gradient.
inline Evidence log_marginal_likelihood_with_gradient(const Matrix& inputs, const Vector& targets,
                                                      const KernelParams& params)
{
    require_dim(targets.size(), inputs.rows(), "log_marginal_likelihood targets");
    const Index n = inputs.rows();
    const Matrix d2 = detail::squared_distances(inputs);
    const Matrix kf = detail::rbf_from_sqdist(d2, params);
    auto llt = detail::factor_with_jitter(kf, params);
    Evidence ev;
    if (!llt)
        return ev;
    const Vector alpha = llt->solve(targets);
    const double logdet = 2.0 * Eigen::Matrix<double, Eigen::Dynamic, 1>(llt->matrixLLT().diagonal())
                                    .array()
                                    .log()
                                    .sum();
    ev.value = -0.5 * targets.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;

    const Matrix kinv = llt->solve(Matrix(Matrix::Identity(n, n)));
    const Matrix w = alpha * alpha.transpose() - kinv;
    const double inv_l2 = 1.0 / (params.lengthscale * params.lengthscale);
    ev.gradient[0] = (w.array() * kf.array()).sum();
    ev.gradient[1] = 0.5 * (w.array() * kf.array() * d2.array()).sum() * inv_l2;
    ev.gradient[2] = 0.5 * params.noise_var * w.trace();
    return ev;
}

inline double log_marginal_likelihood(const Matrix& inputs, const Vector& targets, const KernelParams& params)
{
    return log_marginal_likelihood_with_gradient(inputs, targets, params).value;
}

struct Prediction {
    double mean;
    double sd;
};

/// Target normalization: z~ = (z - mean) / sd.
struct Normalization {
    double mean = 0.0;
    double sd = 1.0;
};

/// Exact GP posterior over standardized targets.
class GPModel {
public:
    static constexpr double kSdFloor = 1e-8;
    static constexpr double kDuplicateTol = 1e-10;

    explicit GPModel(Index dim = 1, KernelParams params = {}) : dim_(dim), params_(params), inputs_(0, dim) {}

    /// Conditions on (inputs, targets) with fixed hyperparameters. Rows closer
    /// than 1e-10 are merged and their targets averaged. Without an explicit
    /// normalization the targets are standardized (sd floored at 1e-8).
    static GPModel condition(const Matrix& inputs, const Vector& targets, const KernelParams& params,
                             std::optional<Normalization> norm = std::nullopt)
    {
        require_dim(targets.size(), inputs.rows(), "GP targets");
        GPModel m(inputs.cols(), params);
        m.params_.noise_var = std::max(params.noise_var, KernelParams::kNoiseFloor);
        std::tie(m.inputs_, m.raw_targets_) = merge_duplicates(inputs, targets);
        m.norm_ = norm ? *norm : standardize(m.raw_targets_);
        if (m.inputs_.rows() == 0)
            return m;
        auto llt = detail::factor_with_jitter(kernel_matrix(m.inputs_, m.params_), m.params_);
        if (!llt)
            throw NotPositiveDefinite("GP kernel matrix");
        m.chol_ = llt->matrixL();
        m.alpha_ = llt->solve(m.normalized_targets());
        return m;
    }

    static Normalization standardize(const Vector& z)
    {
        if (z.size() == 0)
            return {};
        const double mean = z.mean();
        const double var = (z.array() - mean).square().mean();
        return {mean, std::max(std::sqrt(var), kSdFloor)};
    }

    static std::pair<Matrix, Vector> merge_duplicates(const Matrix& inputs, const Vector& targets)
    {
        std::vector<Index> keep;
        std::vector<std::vector<Index>> groups;
        for (Index i = 0; i < inputs.rows(); ++i) {
            bool merged = false;
            for (std::size_t g = 0; g < keep.size(); ++g) {
                if ((inputs.row(i) - inputs.row(keep[g])).norm() < kDuplicateTol) {
                    groups[g].push_back(i);
                    merged = true;
                    break;
                }
            }
            if (!merged) {
                keep.push_back(i);
                groups.push_back({i});
            }
        }
        Matrix x(static_cast<Index>(keep.size()), inputs.cols());
        Vector z(static_cast<Index>(keep.size()));
        for (std::size_t g = 0; g < keep.size(); ++g) {
            x.row(static_cast<Index>(g)) = inputs.row(keep[g]);
            double s = 0.0;
            for (Index i : groups[g])
                s += targets[i];
            z[static_cast<Index>(g)] = s / static_cast<double>(groups[g].size());
        }
        return {x, z};
    }

    Index dim() const { return dim_; }
    Index size() const { return inputs_.rows(); }
    const KernelParams& params() const { return params_; }
    const Matrix& inputs() const { return inputs_; }
    const Vector& raw_targets() const { return raw_targets_; }
    double target_mean() const { return norm_.mean; }
    double target_sd() const { return norm_.sd; }
    const Matrix& chol_factor() const { return chol_; }
    const Vector& alpha() const { return alpha_; }

    Vector normalized_targets() const { return (raw_targets_.array() - norm_.mean) / norm_.sd; }

    /// Posterior mean and sd of the latent function in normalized units.
    Prediction predict_normalized(const Vector& y) const
    {
        require_dim(y.size(), dim_, "GP predict");
        const double o2 = params_.outputscale * params_.outputscale;
        if (size() == 0)
            return {0.0, params_.outputscale};
        const double inv = -0.5 / (params_.lengthscale * params_.lengthscale);
        const Vector kstar = (((inputs_.rowwise() - y.transpose()).rowwise().squaredNorm() * inv).array().exp()
                              * o2)
                                 .matrix();
        const double mean = kstar.dot(alpha_);
        const Vector v = chol_.triangularView<Eigen::Lower>().solve(kstar);
        const double var = o2 - v.squaredNorm();
        return {mean, std::sqrt(std::max(var, 0.0))};
    }

    /// Posterior mean and sd in raw target units.
    Prediction predict(const Vector& y) const
    {
        const Prediction p = predict_normalized(y);
        return {norm_.mean + norm_.sd * p.mean, norm_.sd * p.sd};
    }

private:
    Index dim_;
    KernelParams params_;
    Matrix inputs_;
    Vector raw_targets_;
    Normalization norm_;
    Matrix chol_;
    Vector alpha_;
};

inline Prediction predict(const GPModel& model, const Vector& y) { return model.predict(y); }

/// GP-UCB acquisition: mean + beta * sd.
inline double ucb(const GPModel& model, const Vector& y, double beta)
{
    const Prediction p = model.predict(y);
    return p.mean + beta * p.sd;
}

struct FitOptions {
    int restarts = 5;
    int max_iterations = 100;
    /// Diameter of the input domain; <= 0 infers it from the data.
    double domain_diameter = 0.0;
};

/// Fits hyperparameters by multi-start BFGS on the log marginal likelihood of
/// the standardized targets and returns the conditioned model.
inline GPModel fit(const Matrix& inputs, const Vector& targets, Rng& rng, const FitOptions& options = {})
{
    require_dim(targets.size(), inputs.rows(), "GP fit targets");
    if (inputs.rows() < 1)
        throw Error("GP fit needs at least one training point");
    auto [x, z] = GPModel::merge_duplicates(inputs, targets);
    const Normalization norm = GPModel::standardize(z);
    const Vector zn = (z.array() - norm.mean) / norm.sd;

    double diam = options.domain_diameter;
    if (!(diam > 0.0)) {
        diam = (x.colwise().maxCoeff() - x.colwise().minCoeff()).norm();
        if (!(diam > 1e-3))
            diam = 1.0;
    }

    const Vector lower{{std::log(1e-2), std::log(1e-3 * diam), std::log(KernelParams::kNoiseFloor)}};
    const Vector upper{{std::log(1e2), std::log(1e2 * diam), std::log(1e-1)}};
    auto objective = [&](const Vector& theta) {
        Evidence ev = log_marginal_likelihood_with_gradient(x, zn, KernelParams::from_log(theta));
        return opt::ValueAndGradient{ev.value, ev.gradient};
    };

    Vector best_theta = KernelParams{}.log_params();
    double best_value = kLogZero;
    for (int r = 0; r < options.restarts; ++r) {
        Vector theta0{{rng.uniform(std::log(0.1), std::log(10.0)),
                       rng.uniform(std::log(0.05 * diam), std::log(2.0 * diam)),
                       rng.uniform(std::log(1e-6), std::log(1e-2))}};
        auto res = opt::maximize_bfgs(objective, theta0, lower, upper, options.max_iterations);
        if (res.value > best_value) {
            best_value = res.value;
            best_theta = res.x;
        }
    }
    return GPModel::condition(x, z, KernelParams::from_log(best_theta), norm);
}

} // namespace rmlbo
