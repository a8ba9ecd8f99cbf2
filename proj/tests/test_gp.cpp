#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include <rmlbo/gp.hpp>

#include "oracles.hpp"

using namespace rmlbo;

namespace {

Matrix random_inputs(Index n, Index d, Rng& rng, double scale = 1.0)
{
    Matrix x(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j)
            x(i, j) = rng.uniform(-scale, scale);
    return x;
}

} // namespace

TEST(Kernel, Examples)
{
    EXPECT_DOUBLE_EQ(rbf_kernel(Vector::Zero(2), Vector::Zero(2), {1.5, 1.0}), 2.25);
    EXPECT_NEAR(rbf_kernel(Vector::Zero(1), Vector::Ones(1), {1.0, 1.0}), std::exp(-0.5), 1e-15);
    EXPECT_NEAR(rbf_kernel(Vector::Zero(2), Vector{{2.0, 0.0}}, {2.0, 2.0}), 4.0 * std::exp(-0.5), 1e-15);
}

TEST(Kernel, MatrixMatchesPairwiseKernel)
{
    Rng rng(1);
    const Matrix x = random_inputs(12, 3, rng);
    const KernelParams p{1.3, 0.7, 1e-4};
    const Matrix k = kernel_matrix(x, p);
    for (Index i = 0; i < 12; ++i)
        for (Index j = 0; j < 12; ++j)
            EXPECT_NEAR(k(i, j), rbf_kernel(x.row(i), x.row(j), p), 1e-14);
}

TEST(Evidence, SinglePoint)
{
    const Matrix x = Matrix::Zero(1, 1);
    const double v = log_marginal_likelihood(x, Vector::Ones(1), {1.0, 1.0, 1.0});
    EXPECT_NEAR(v, -0.25 - 0.5 * std::log(2.0) - 0.5 * kLog2Pi, 1e-14);
}

TEST(Evidence, MatchesDenseOracle)
{
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        const Matrix x = random_inputs(5, 2, rng);
        const Vector z = rng.normal_vector(5);
        const KernelParams p{rng.uniform(0.5, 2.0), rng.uniform(0.3, 1.5), rng.uniform(1e-4, 1e-1)};
        EXPECT_NEAR(log_marginal_likelihood(x, z, p),
                    oracle::dense_log_marginal_likelihood(x, z, p.outputscale, p.lengthscale, p.noise_var), 1e-8);
    }
}

TEST(Evidence, PermutationInvariant)
{
    Rng rng(3);
    const Matrix x = random_inputs(15, 3, rng);
    const Vector z = rng.normal_vector(15);
    std::vector<Index> perm(15);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Matrix px(15, 3);
    Vector pz(15);
    for (Index i = 0; i < 15; ++i) {
        px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        pz[i] = z[perm[static_cast<std::size_t>(i)]];
    }
    const KernelParams p{0.9, 0.6, 1e-3};
    EXPECT_NEAR(log_marginal_likelihood(x, z, p), log_marginal_likelihood(px, pz, p), 1e-9);
}

TEST(Evidence, GradientMatchesFiniteDifferences)
{
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        const Matrix x = random_inputs(20, 2, rng);
        const Vector z = rng.normal_vector(20);
        const Vector theta{{rng.uniform(-1.0, 1.0), rng.uniform(-1.5, 0.5), rng.uniform(-8.0, -2.0)}};
        const Evidence ev = log_marginal_likelihood_with_gradient(x, z, KernelParams::from_log(theta));
        auto f = [&](const Vector& th) { return log_marginal_likelihood(x, z, KernelParams::from_log(th)); };
        const Vector fd = oracle::central_gradient(f, theta, 1e-6);
        for (int k = 0; k < 3; ++k)
            EXPECT_NEAR(ev.gradient[k], fd[k], 1e-4 * std::max(1.0, std::abs(fd[k]))) << "setting " << t;
    }
}

TEST(GPModel, InterpolatesTrainingData)
{
    Rng rng(5);
    const Matrix x = random_inputs(10, 1, rng);
    Vector z(10);
    for (Index i = 0; i < 10; ++i)
        z[i] = std::sin(3.0 * x(i, 0)) + 2.0;
    const GPModel m = GPModel::condition(x, z, {1.0, 0.5, 1e-8});
    for (Index i = 0; i < 10; ++i) {
        EXPECT_NEAR(m.predict(x.row(i)).mean, z[i], 1e-4);
        EXPECT_LE(m.predict_normalized(x.row(i)).sd, std::sqrt(1e-8) + 1e-6);
    }
}

TEST(GPModel, EmptyModelReturnsPrior)
{
    const GPModel m(2, {1.7, 0.4});
    const Prediction p = m.predict(Vector{{0.3, -0.2}});
    EXPECT_EQ(p.mean, 0.0);
    EXPECT_DOUBLE_EQ(p.sd, 1.7);
    EXPECT_DOUBLE_EQ(ucb(m, Vector::Zero(2), 2.0), 3.4);
}

TEST(GPModel, SinglePointPosterior)
{
    const KernelParams p{1.2, 0.8, 0.05};
    const GPModel m = GPModel::condition(Matrix::Zero(1, 1), Vector::Constant(1, 1.5), p, Normalization{0.0, 1.0});
    for (double y : {0.0, 0.3, -1.1, 2.5}) {
        const double k = rbf_kernel(Vector::Constant(1, y), Vector::Zero(1), p);
        const double o2 = p.outputscale * p.outputscale;
        const Prediction pr = m.predict(Vector::Constant(1, y));
        EXPECT_NEAR(pr.mean, k / (o2 + p.noise_var) * 1.5, 1e-12);
        EXPECT_NEAR(pr.sd, std::sqrt(o2 - k * k / (o2 + p.noise_var)), 1e-12);
    }
}

TEST(GPModel, FarFieldRevertsToPrior)
{
    Rng rng(6);
    const Matrix x = random_inputs(8, 2, rng);
    const Vector z = rng.normal_vector(8) * 3.0 + Vector::Constant(8, 10.0);
    const GPModel m = GPModel::condition(x, z, {1.0, 0.3, 1e-6});
    const Prediction far = m.predict(Vector{{50.0, -50.0}});
    EXPECT_NEAR(far.mean, m.target_mean(), 1e-10);
    EXPECT_NEAR(far.sd, m.target_sd(), 1e-10);
}

TEST(GPModel, UcbCombinesMeanAndSd)
{
    Rng rng(7);
    const Matrix x = random_inputs(6, 2, rng);
    const GPModel m = GPModel::condition(x, rng.normal_vector(6), {1.0, 0.5, 1e-4});
    const Vector y{{0.1, 0.2}};
    const Prediction p = m.predict(y);
    EXPECT_DOUBLE_EQ(ucb(m, y, 0.0), p.mean);
    EXPECT_DOUBLE_EQ(ucb(m, y, 2.0), p.mean + 2.0 * p.sd);
}

TEST(GPModel, ConstantTargets)
{
    Rng rng(8);
    const Matrix x = random_inputs(5, 2, rng);
    const GPModel m = GPModel::condition(x, Vector::Constant(5, 4.0), {1.0, 0.5, 1e-6});
    EXPECT_EQ(m.target_sd(), GPModel::kSdFloor);
    EXPECT_NEAR(m.predict(Vector{{0.2, 0.2}}).mean, 4.0, 1e-12);
    Rng fr(1);
    const GPModel f = fit(x, Vector::Constant(5, 4.0), fr);
    EXPECT_NEAR(f.predict(Vector{{0.2, 0.2}}).mean, 4.0, 1e-9);
}

TEST(GPModel, DuplicateRowsAreMerged)
{
    Matrix x{{0.0, 0.0}, {1.0, 1.0}, {0.0, 1e-12}};
    const GPModel m = GPModel::condition(x, Vector{{1.0, 5.0, 3.0}}, {1.0, 1.0, 1e-8});
    EXPECT_EQ(m.size(), 2);
    EXPECT_DOUBLE_EQ(m.raw_targets()[0], 2.0);
}

TEST(GPModel, CholeskyReconstructsKernel)
{
    Rng rng(9);
    const Matrix x = random_inputs(30, 3, rng);
    const KernelParams p{1.1, 0.9, 1e-5};
    const GPModel m = GPModel::condition(x, rng.normal_vector(30), p);
    Matrix k = kernel_matrix(x, p);
    k.diagonal().array() += p.noise_var;
    const Matrix& l = m.chol_factor();
    EXPECT_LT((l * l.transpose() - k).norm() / k.norm(), 1e-10);
}

TEST(GPModel, FittedSdBoundedByNoiseAtData)
{
    Rng rng(10);
    const Matrix x = random_inputs(25, 2, rng);
    Vector z(25);
    for (Index i = 0; i < 25; ++i)
        z[i] = x(i, 0) * x(i, 0) - x(i, 1);
    const GPModel m = fit(x, z, rng);
    for (Index i = 0; i < 25; ++i)
        EXPECT_LE(m.predict_normalized(x.row(i)).sd, std::sqrt(m.params().noise_var) + 1e-6);
}

TEST(Fit, RecoversLengthscale)
{
    const double true_l = 0.3;
    int recovered = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const Matrix x = random_inputs(60, 1, rng);
        Matrix k = kernel_matrix(x, {1.0, true_l});
        k.diagonal().array() += 1e-6;
        const Eigen::LLT<Matrix> llt(k);
        const Vector z = llt.matrixL() * rng.normal_vector(60);
        Rng fr = rng.split("fit");
        const GPModel m = fit(x, z, fr, {5, 100, 2.0});
        const double l = m.params().lengthscale;
        if (l > true_l / 2.0 && l < true_l * 2.0)
            ++recovered;
    }
    EXPECT_GE(recovered, 4);
}

TEST(Fit, ImprovesOnDefaultHyperparameters)
{
    Rng rng(11);
    const Matrix x = random_inputs(30, 2, rng);
    Vector z(30);
    for (Index i = 0; i < 30; ++i)
        z[i] = std::cos(4.0 * x(i, 0)) * x(i, 1);
    const GPModel m = fit(x, z, rng);
    const Vector zn = m.normalized_targets();
    EXPECT_GE(log_marginal_likelihood(m.inputs(), zn, m.params()) + 1e-9,
              log_marginal_likelihood(m.inputs(), zn, KernelParams{}));
    EXPECT_GE(m.params().noise_var, KernelParams::kNoiseFloor);
}

TEST(Fit, DeterministicGivenSeed)
{
    Rng a(12), b(12), data(3);
    const Matrix x = random_inputs(20, 2, data);
    const Vector z = data.normal_vector(20);
    const GPModel m1 = fit(x, z, a), m2 = fit(x, z, b);
    EXPECT_EQ(m1.params().lengthscale, m2.params().lengthscale);
    EXPECT_EQ(m1.params().outputscale, m2.params().outputscale);
}
