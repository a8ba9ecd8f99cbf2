#pragma once

#include <functional>

#include "common.hpp"

namespace rmlbo::opt {

struct ValueAndGradient {
    double value;
    Vector gradient;
};

struct BfgsResult {
    Vector x;
    double value;
    int iterations;
};

/// Box-constrained BFGS ascent with projected Armijo backtracking.
/// Coordinates pinned at a bound with the gradient pointing outward are
/// frozen for the step.
inline BfgsResult maximize_bfgs(const std::function<ValueAndGradient(const Vector&)>& fun, Vector x,
                                const Vector& lower, const Vector& upper, int max_iterations = 100)
{
    const Index n = x.size();
    auto project = [&](const Vector& v) { return Vector(v.cwiseMax(lower).cwiseMin(upper)); };
    x = project(x);
    ValueAndGradient cur = fun(x);
    Matrix h = Matrix::Identity(n, n);
    int it = 0;
    for (; it < max_iterations; ++it) {
        if (!std::isfinite(cur.value))
            break;
        Vector g = cur.gradient;
        for (Index i = 0; i < n; ++i) {
            const bool pinned_lo = x[i] <= lower[i] && g[i] < 0.0;
            const bool pinned_hi = x[i] >= upper[i] && g[i] > 0.0;
            if (pinned_lo || pinned_hi)
                g[i] = 0.0;
        }
        if (g.norm() < 1e-6)
            break;
        Vector dir = h * g;
        for (Index i = 0; i < n; ++i)
            if (g[i] == 0.0)
                dir[i] = 0.0;
        if (dir.dot(g) <= 0.0) {
            h.setIdentity();
            dir = g;
        }
        double step = 1.0;
        bool accepted = false;
        Vector xn;
        ValueAndGradient next;
        for (int k = 0; k < 40; ++k) {
            xn = project(x + step * dir);
            next = fun(xn);
            if (std::isfinite(next.value) && next.value >= cur.value + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            break;
        const Vector s = xn - x;
        const Vector y = cur.gradient - next.gradient; // gradient of the negated objective
        const double sy = s.dot(y);
        const double improvement = next.value - cur.value;
        x = xn;
        cur = next;
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Matrix id = Matrix::Identity(n, n);
            h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        if (improvement < 1e-9 * (1.0 + std::abs(cur.value)))
            break;
    }
    return {x, cur.value, it};
}

} // namespace rmlbo::opt
