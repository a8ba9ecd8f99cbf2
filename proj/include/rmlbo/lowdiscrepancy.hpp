#pragma once

#include <array>
#include <vector>

#include "common.hpp"

namespace rmlbo {

/// Halton sequence with a Cranley-Patterson random shift and a random
/// starting offset, giving scrambled points in [0, 1)^dim.
class ScrambledHalton {
public:
    static constexpr std::array<int, 32> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                                    37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79,
                                                    83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

    ScrambledHalton(Index dim, Rng& rng) : dim_(dim), shift_(dim)
    {
        if (dim < 1 || dim > static_cast<Index>(kPrimes.size()))
            throw DimensionError("ScrambledHalton supports 1.." + std::to_string(kPrimes.size()) + " dimensions");
        for (Index i = 0; i < dim; ++i)
            shift_[i] = rng.uniform();
        index_ = 1 + static_cast<std::uint64_t>(rng.uniform() * 1024.0);
    }

    Index dim() const { return dim_; }

    Vector next()
    {
        Vector p(dim_);
        for (Index i = 0; i < dim_; ++i) {
            double v = radical_inverse(index_, kPrimes[static_cast<std::size_t>(i)]) + shift_[i];
            p[i] = v - std::floor(v);
        }
        ++index_;
        return p;
    }

    /// Next point mapped affinely into [lo, hi]^dim.
    Vector next_in_box(double lo, double hi) { return (lo + (hi - lo) * next().array()).matrix(); }

private:
    static double radical_inverse(std::uint64_t n, int base)
    {
        double inv = 1.0 / base, f = inv, r = 0.0;
        while (n > 0) {
            r += f * static_cast<double>(n % static_cast<std::uint64_t>(base));
            n /= static_cast<std::uint64_t>(base);
            f *= inv;
        }
        return r;
    }

    Index dim_;
    Vector shift_;
    std::uint64_t index_ = 1;
};

} // namespace rmlbo
