#pragma once

#include <Eigen/Dense>

#include "gci/graph.hpp"
#include "gci/rng.hpp"

// Sampling from the G-Wishart law W_G(df, scale) with density
//
//   p(K) ∝ |K|^{(df-2)/2} exp(-tr(scale K)/2)
//
// over precisions K that are SPD with K_ij = 0 on non-edges of the graph.
// On a complete graph this is the ordinary Wishart with standard degrees of
// freedom df + n - 1 and scale matrix scale^{-1}. Decomposable graphs use an
// exact clique-sequential construction in covariance space (structural zeros
// are exact); other graphs fall back to a direct sampler that iterates
// node-wise conditional completions to tolerance.

namespace gci {

// Ordinary Wishart W(df, scale) in the standard parameterization
// (mean df * scale), via the Bartlett factorization. Requires df > n - 1.
Eigen::MatrixXd sample_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng);

enum class GWishartMethod {
    auto_select,  // exact when the graph is decomposable, direct otherwise
    exact,        // clique-sequential; rejects non-decomposable graphs
    direct        // node-completion sampler, any graph
};

Eigen::MatrixXd sample_gwishart(double df, const Eigen::MatrixXd& scale, const Adjacency& graph,
                                Rng& rng, GWishartMethod method = GWishartMethod::auto_select);

}  // namespace gci
