#pragma once

#include <variant>

#include "probspec.hpp"

namespace rmlbo {

/// Random linear embedding R in R^{D x d_e} with unit-norm rows, searched over
/// the box [-s*sqrt(d_e), s*sqrt(d_e)]^{d_e}.
struct Embedding {
    Matrix matrix;
    int index = 1;
    double y_bound = 1.0;
    std::uint64_t seed = 0;

    Index input_dim() const { return matrix.rows(); }
    Index dim() const { return matrix.cols(); }

    bool in_domain(const Vector& y) const { return y.size() == dim() && y.cwiseAbs().maxCoeff() <= y_bound; }
};

/// Each row is a standard-normal vector normalized to the unit sphere in R^{d_e}.
inline Embedding sample_embedding(Index input_dim, Index embed_dim, Rng& rng, int index = 1, double scale = 1.0)
{
    if (embed_dim < 1 || embed_dim > input_dim)
        throw ConfigError("d_e", "embedding dimension must satisfy 1 <= d_e <= D");
    if (!(scale > 0.0))
        throw ConfigError("y_scale", "must be positive");
    Embedding emb;
    emb.index = index;
    emb.seed = rng.seed();
    emb.y_bound = scale * std::sqrt(static_cast<double>(embed_dim));
    emb.matrix.resize(input_dim, embed_dim);
    for (Index i = 0; i < input_dim; ++i) {
        Vector row;
        double norm = 0.0;
        do {
            row = rng.normal_vector(embed_dim);
            norm = row.norm();
        } while (norm < 1e-12);
        emb.matrix.row(i) = (row / norm).transpose();
    }
    return emb;
}

/// x = R y, clipped into the prior box for uniform priors.
inline Vector lift(const Embedding& emb, const Vector& y, const Prior& prior)
{
    require_dim(y.size(), emb.dim(), "lift");
    if (!emb.in_domain(y))
        throw Error("lift: point outside the embedding search domain");
    Vector x = emb.matrix * y;
    if (const auto* box = std::get_if<BoxPrior>(&prior))
        return box->clip(x);
    return x;
}

inline nlohmann::json to_json(const Embedding& emb)
{
    return {{"index", emb.index}, {"seed", emb.seed}, {"y_bound", emb.y_bound}, {"matrix", to_json_matrix(emb.matrix)}};
}

} // namespace rmlbo
