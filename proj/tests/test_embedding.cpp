#include <gtest/gtest.h>

#include <rmlbo/embedding.hpp>

using namespace rmlbo;

TEST(Embedding, OneDimensionalRowsAreSigns)
{
    Rng rng(1);
    const Embedding e = sample_embedding(50, 1, rng);
    for (Index i = 0; i < 50; ++i)
        EXPECT_EQ(std::abs(e.matrix(i, 0)), 1.0);
}

TEST(Embedding, RowsHaveUnitNorm)
{
    Rng rng(2);
    for (Index de : {2, 3, 7}) {
        const Embedding e = sample_embedding(100, de, rng);
        EXPECT_EQ(e.matrix.rows(), 100);
        EXPECT_EQ(e.matrix.cols(), de);
        EXPECT_NEAR(e.y_bound, std::sqrt(static_cast<double>(de)), 1e-15);
        for (Index i = 0; i < 100; ++i)
            EXPECT_NEAR(e.matrix.row(i).norm(), 1.0, 1e-12);
    }
}

TEST(Embedding, RowsAreIsotropic)
{
    // Uniform on the sphere in R^3: E[r r^T] = I / 3.
    Rng rng(3);
    const Embedding e = sample_embedding(30000, 3, rng);
    const Matrix second = e.matrix.transpose() * e.matrix / 30000.0;
    EXPECT_LT((second - Matrix::Identity(3, 3) / 3.0).cwiseAbs().maxCoeff(), 0.01);
    EXPECT_LT(e.matrix.colwise().mean().cwiseAbs().maxCoeff(), 0.015);
}

TEST(Embedding, DimensionChecks)
{
    Rng rng(4);
    EXPECT_THROW(sample_embedding(3, 4, rng), ConfigError);
    EXPECT_THROW(sample_embedding(3, 0, rng), ConfigError);
}

TEST(Lift, ExplicitMatrix)
{
    Embedding e;
    e.matrix = Matrix{{1.0, 0.0}, {0.0, 1.0}, {std::sqrt(0.5), std::sqrt(0.5)}};
    e.y_bound = std::sqrt(2.0);
    const GaussianSpec g(Vector::Zero(3), Matrix::Identity(3, 3));
    const Vector x = lift(e, Vector{{1.0, -1.0}}, g);
    EXPECT_NEAR(x[0], 1.0, 1e-15);
    EXPECT_NEAR(x[1], -1.0, 1e-15);
    EXPECT_NEAR(x[2], 0.0, 1e-15);
    EXPECT_EQ(lift(e, Vector::Zero(2), g), Vector::Zero(3));
}

TEST(Lift, LinearUnderGaussianPrior)
{
    Rng rng(5);
    const Embedding e = sample_embedding(20, 3, rng);
    const GaussianSpec g(Vector::Zero(20), Matrix::Identity(20, 20));
    for (int t = 0; t < 20; ++t) {
        const Vector a = Vector::Random(3) * 0.8, b = Vector::Random(3) * 0.8;
        const double s = 0.3;
        const Vector lhs = lift(e, Vector(a + s * b), g);
        const Vector rhs = lift(e, a, g) + s * lift(e, b, g);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Lift, ClippedIntoBoxPrior)
{
    Rng rng(6);
    const Embedding e = sample_embedding(40, 3, rng);
    const BoxPrior box = BoxPrior::cube(40, -1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const Vector y = (Vector::Random(3) * e.y_bound).cwiseMax(-e.y_bound).cwiseMin(e.y_bound);
        const Vector x = lift(e, y, box);
        EXPECT_TRUE(box.contains(x));
        EXPECT_EQ(log_prior(x, box), 0.0);
        const Vector raw = e.matrix * y;
        for (Index i = 0; i < 40; ++i)
            EXPECT_EQ(x[i], std::clamp(raw[i], -1.0, 1.0));
    }
}

TEST(Lift, RejectsOutOfDomain)
{
    Rng rng(7);
    const Embedding e = sample_embedding(5, 2, rng);
    EXPECT_THROW(lift(e, Vector::Constant(2, 2.0), BoxPrior::cube(5, -1, 1)), Error);
    EXPECT_THROW(lift(e, Vector::Zero(3), BoxPrior::cube(5, -1, 1)), DimensionError);
}

TEST(Embedding, SameStreamSameMatrix)
{
    Rng a(9), b(9);
    EXPECT_EQ(sample_embedding(10, 2, a).matrix, sample_embedding(10, 2, b).matrix);
}
