#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

namespace rmlbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Log-density of an impossible point. IEEE -inf already absorbs finite
/// addends, so sums of log-terms stay at kLogZero once any term is.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double v) { return v == kLogZero; }

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct NotPositiveDefinite : Error {
    explicit NotPositiveDefinite(std::string matrix_name)
        : Error("matrix '" + matrix_name + "' is not symmetric positive definite"),
          matrix(std::move(matrix_name))
    {
    }
    std::string matrix;
};

struct SimulatorError : Error {
    SimulatorError(const std::string& what, Vector x) : Error(what), input(std::move(x)) {}
    Vector input;
};

/// Invalid user-supplied configuration; `field` names the offending key.
struct ConfigError : Error {
    ConfigError(std::string field_name, const std::string& what)
        : Error(field_name.empty() ? what : field_name + ": " + what), field(std::move(field_name))
    {
    }
    std::string field;
};

inline void require_dim(Index got, Index want, std::string_view what)
{
    if (got != want)
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want)
                             + ", got " + std::to_string(got));
}

// ---------------------------------------------------------------------------
// Seeded random streams

namespace detail {
    inline std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    inline std::uint64_t fnv1a(std::string_view s)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }
} // namespace detail

/// A seeded stream. Child streams are derived from the seed, never from the
/// engine state, so consuming draws from one stream cannot shift another.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng split(std::string_view label, std::uint64_t index = 0) const
    {
        std::uint64_t s = detail::splitmix64(seed_ ^ detail::fnv1a(label));
        return Rng(detail::splitmix64(s + 0x632be59bd9b4e019ULL * (index + 1)));
    }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    Vector normal_vector(Index n)
    {
        Vector v(n);
        for (Index i = 0; i < n; ++i)
            v[i] = normal();
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace rmlbo
