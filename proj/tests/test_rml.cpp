#include <gtest/gtest.h>

#include <rmlbo/rml.hpp>

#include "oracles.hpp"

using namespace rmlbo;

namespace {

Simulator linear_simulator(const Matrix& b)
{
    Simulator s("linear", b.cols(), b.rows(), [b](const Vector& x) { return Vector(b * x); });
    s.set_linear_map(b);
    return s;
}

ProblemSpec linear_problem(const Matrix& b, const Vector& data, const Matrix& obs_cov, const Vector& mu,
                           const Matrix& cov)
{
    return ProblemSpec("linear", linear_simulator(b), GaussianSpec(mu, cov), LikelihoodSpec(data, obs_cov));
}

} // namespace

TEST(Randomization, VanishingNoiseReproducesData)
{
    const Vector d{{0.3, -1.2, 2.0}};
    ProblemSpec p("tiny", linear_simulator(Matrix::Identity(3, 3)), BoxPrior::cube(3, -5, 5),
                  LikelihoodSpec(d, Matrix::Identity(3, 3) * 1e-30));
    Rng rng(1);
    for (const auto& inst : draw_randomizations(p, 10, rng)) {
        EXPECT_LT((inst.data - d).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_FALSE(inst.prior_mean.has_value());
    }
}

TEST(Randomization, SameSeedSameDraws)
{
    Rng r(3);
    ProblemSpec p = linear_problem(Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Identity(2, 2), Vector::Ones(2),
                                   oracle::random_spd(2, r));
    Rng a(77), b(77);
    const auto x = draw_randomizations(p, 5, a);
    const auto y = draw_randomizations(p, 5, b);
    ASSERT_EQ(x.size(), 5u);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i].index, static_cast<int>(i) + 1);
        EXPECT_EQ(x[i].data, y[i].data);
        EXPECT_EQ(*x[i].prior_mean, *y[i].prior_mean);
    }
}

TEST(Randomization, NoSimulatorCalls)
{
    ProblemSpec p = linear_problem(Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Identity(2, 2), Vector::Zero(2),
                                   Matrix::Identity(2, 2));
    Rng rng(0);
    draw_randomizations(p, 50, rng);
    EXPECT_EQ(p.simulator.eval_count(), 0u);
}

TEST(Randomization, MomentsMatchNoiseModel)
{
    const Matrix obs{{1.0, 0.5}, {0.5, 2.0}};
    const Matrix cov{{0.5, -0.2}, {-0.2, 0.3}};
    const Vector d{{1.0, -1.0}}, mu{{2.0, 0.5}};
    ProblemSpec p = linear_problem(Matrix::Identity(2, 2), d, obs, mu, cov);
    Rng rng(11);
    const int n = 20000;
    const auto draws = draw_randomizations(p, n, rng);
    Vector md = Vector::Zero(2), mm = Vector::Zero(2);
    for (const auto& i : draws) {
        md += i.data;
        mm += *i.prior_mean;
    }
    md /= n;
    mm /= n;
    Matrix cd = Matrix::Zero(2, 2), cm = Matrix::Zero(2, 2);
    for (const auto& i : draws) {
        cd += (i.data - md) * (i.data - md).transpose();
        cm += (*i.prior_mean - mm) * (*i.prior_mean - mm).transpose();
    }
    cd /= n - 1;
    cm /= n - 1;
    for (int k = 0; k < 2; ++k) {
        EXPECT_NEAR(md[k], d[k], 4.0 * std::sqrt(obs(k, k) / n));
        EXPECT_NEAR(mm[k], mu[k], 4.0 * std::sqrt(cov(k, k) / n));
    }
    EXPECT_LT((cd - obs).norm() / obs.norm(), 0.05);
    EXPECT_LT((cm - cov).norm() / cov.norm(), 0.05);
}

TEST(Objective, ScalarExample)
{
    ProblemSpec p = linear_problem(Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Ones(1, 1), Vector::Zero(1),
                                   Matrix::Ones(1, 1));
    RMLInstance inst{1, Vector::Ones(1), Vector::Ones(1)};
    EXPECT_NEAR(objective(inst, Vector::Zero(1), p), -kLog2Pi - 1.0, 1e-14);
    EXPECT_EQ(p.simulator.eval_count(), 1u);
}

TEST(Objective, CachedOutputSkipsSimulator)
{
    ProblemSpec p = linear_problem(Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Ones(1, 1), Vector::Zero(1),
                                   Matrix::Ones(1, 1));
    RMLInstance inst{1, Vector::Ones(1), Vector::Ones(1)};
    const Vector x = Vector::Constant(1, 0.4);
    const double cached = objective(inst, x, p, p.simulator.evaluate_analysis(x));
    EXPECT_EQ(p.simulator.eval_count(), 0u);
    EXPECT_EQ(cached, objective(inst, x, p));
}

TEST(Objective, UniformPriorIsLikelihoodInsideAndLogZeroOutside)
{
    ProblemSpec p("box", linear_simulator(Matrix::Identity(2, 2)), BoxPrior::cube(2, -1, 1),
                  LikelihoodSpec(Vector::Zero(2), Matrix::Identity(2, 2)));
    RMLInstance inst{1, Vector{{0.2, 0.1}}, std::nullopt};
    const Vector inside{{0.5, -0.5}};
    EXPECT_DOUBLE_EQ(objective(inst, inside, p),
                     oracle::dense_log_gaussian(inst.data, inside, Matrix::Identity(2, 2)));
    EXPECT_TRUE(is_log_zero(objective(inst, Vector{{1.5, 0.0}}, p)));
}

TEST(LinearOracle, ScalarExample)
{
    ProblemSpec p = linear_problem(Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Ones(1, 1), Vector::Zero(1),
                                   Matrix::Ones(1, 1));
    RMLInstance inst{1, Vector::Constant(1, 2.0), Vector::Zero(1)};
    EXPECT_NEAR(oracle_linear_rml(Matrix::Ones(1, 1), inst, p)[0], 1.0, 1e-14);
}

TEST(LinearOracle, ZeroOperatorReturnsPriorMean)
{
    const Matrix b = Matrix::Zero(3, 4);
    Rng rng(2);
    ProblemSpec p = linear_problem(b, Vector::Zero(3), Matrix::Identity(3, 3), Vector::Zero(4),
                                   oracle::random_spd(4, rng));
    RMLInstance inst{1, rng.normal_vector(3), rng.normal_vector(4)};
    EXPECT_LT((oracle_linear_rml(b, inst, p) - *inst.prior_mean).norm(), 1e-12);
}

TEST(LinearOracle, MatchesNumericalAscent)
{
    Rng rng(8);
    for (int t = 0; t < 3; ++t) {
        Matrix b(5, 8);
        for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 8; ++j)
                b(i, j) = rng.normal();
        const Matrix obs = oracle::random_spd(5, rng, 1.0), cov = oracle::random_spd(8, rng, 1.0);
        ProblemSpec p = linear_problem(b, rng.normal_vector(5), obs, rng.normal_vector(8), cov);
        RMLInstance inst{1, rng.normal_vector(5), rng.normal_vector(8)};
        const Matrix oi = Eigen::FullPivLU<Matrix>(obs).inverse(), ci = Eigen::FullPivLU<Matrix>(cov).inverse();
        auto f = [&](const Vector& x) {
            const Vector r = inst.data - b * x, s = x - *inst.prior_mean;
            return -0.5 * r.dot(oi * r) - 0.5 * s.dot(ci * s);
        };
        const Vector numeric = oracle::gradient_ascent(f, Vector::Zero(8));
        const Vector exact = oracle_linear_rml(b, inst, p);
        EXPECT_LT((numeric - exact).cwiseAbs().maxCoeff(), 1e-6);
        auto obj = [&](const Vector& x) { return objective(inst, x, p, Vector(b * x)); };
        EXPECT_LT(oracle::central_gradient(obj, exact).norm(), 1e-6);
    }
}

TEST(LinearOracle, SamplesFollowPosterior)
{
    Rng rng(19);
    Matrix b(4, 3);
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 3; ++j)
            b(i, j) = rng.normal();
    ProblemSpec p = linear_problem(b, rng.normal_vector(4), 0.5 * Matrix::Identity(4, 4), Vector::Zero(3),
                                   oracle::random_spd(3, rng, 1.0));
    const auto [mean, cov] = linear_gaussian_posterior(b, p);

    // Dense posterior for cross-checking the analytic helper.
    const Matrix oi = Eigen::FullPivLU<Matrix>(p.likelihood.obs_cov()).inverse();
    const Matrix ci = Eigen::FullPivLU<Matrix>(p.gaussian().covariance()).inverse();
    const Matrix dense_cov = Eigen::FullPivLU<Matrix>(Matrix(b.transpose() * oi * b + ci)).inverse();
    EXPECT_LT((cov - dense_cov).norm(), 1e-10);
    EXPECT_LT((mean - dense_cov * (b.transpose() * oi * p.likelihood.data())).norm(), 1e-10);

    const int n = 2000;
    Rng draw(5);
    const auto inst = draw_randomizations(p, n, draw);
    Vector sm = Vector::Zero(3);
    std::vector<Vector> xs;
    for (const auto& i : inst) {
        xs.push_back(oracle_linear_rml(b, i, p));
        sm += xs.back();
    }
    sm /= n;
    Matrix sc = Matrix::Zero(3, 3);
    for (const auto& x : xs)
        sc += (x - sm) * (x - sm).transpose();
    sc /= n - 1;
    for (int k = 0; k < 3; ++k)
        EXPECT_NEAR(sm[k], mean[k], 4.0 * std::sqrt(cov(k, k) / n));
    EXPECT_LT((sc - cov).norm() / cov.norm(), 0.15);
}

TEST(RMLInstance, JsonRoundTrip)
{
    RMLInstance a{4, Vector{{0.1, 1e-17, -3.25}}, Vector{{1.0 / 3.0}}};
    const RMLInstance b = instance_from_json(nlohmann::json::parse(to_json(a).dump()));
    EXPECT_EQ(b.index, 4);
    EXPECT_EQ(b.data, a.data);
    EXPECT_EQ(*b.prior_mean, *a.prior_mean);
}
