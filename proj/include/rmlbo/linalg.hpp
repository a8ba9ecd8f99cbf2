#pragma once

#include <string>

#include <Eigen/Cholesky>

#include "common.hpp"

namespace rmlbo {

/// Cached lower Cholesky factor of an SPD matrix.
///
/// If the first factorization fails, a jitter of 1e-10 * mean(diag) is added
/// once; a second failure throws NotPositiveDefinite naming the matrix.
class Cholesky {
public:
    Cholesky() = default;

    explicit Cholesky(const Matrix& a, const std::string& name = "matrix")
    {
        if (a.rows() != a.cols())
            throw DimensionError("matrix '" + name + "' is not square");
        if (a.rows() == 0)
            throw DimensionError("matrix '" + name + "' is empty");
        if (!a.allFinite())
            throw NotPositiveDefinite(name);
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success || !llt.matrixLLT().allFinite()) {
            const double jitter = 1e-10 * a.diagonal().mean();
            Matrix b = a;
            b.diagonal().array() += jitter;
            llt.compute(b);
            if (llt.info() != Eigen::Success || !(jitter > 0.0))
                throw NotPositiveDefinite(name);
            jittered_ = true;
        }
        lower_ = llt.matrixL();
        for (Index i = 0; i < lower_.rows(); ++i)
            if (!(lower_(i, i) > 0.0))
                throw NotPositiveDefinite(name);
    }

    Index dim() const { return lower_.rows(); }
    const Matrix& lower() const { return lower_; }
    bool jittered() const { return jittered_; }

    /// L^{-1} b
    Vector solve_lower(const Vector& b) const
    {
        require_dim(b.size(), dim(), "triangular solve");
        return lower_.triangularView<Eigen::Lower>().solve(b);
    }

    /// A^{-1} b via two triangular solves.
    Vector solve(const Vector& b) const
    {
        Vector z = solve_lower(b);
        lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(z);
        return z;
    }

    Matrix solve(const Matrix& b) const
    {
        require_dim(b.rows(), dim(), "triangular solve");
        Matrix z = lower_.triangularView<Eigen::Lower>().solve(b);
        lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(z);
        return z;
    }

    /// y^T A^{-1} y
    double quad_form(const Vector& y) const { return solve_lower(y).squaredNorm(); }

    double log_det() const { return 2.0 * lower_.diagonal().array().log().sum(); }

    /// Reconstructs L L^T.
    Matrix reconstruct() const { return lower_ * lower_.transpose(); }

private:
    Matrix lower_;
    bool jittered_ = false;
};

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12)
{
    if (a.rows() != a.cols())
        return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

} // namespace rmlbo
