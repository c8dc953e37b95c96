#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "gci/graph.hpp"

namespace gci {

// Scale hyperparameters shared by the covariance updates in both estimation
// stages: observation noise gets scale H, the trend/slope/seasonal noise
// blocks get k_i^2 (n+1) H.
struct CovariancePriors {
    double nu = 1.0;
    Eigen::MatrixXd H;
    double k1 = 0.1, k2 = 0.1, k3 = 0.1;

    Eigen::MatrixXd state_scale(int block) const {  // block 0,1,2 -> u,v,w
        const double k = block == 0 ? k1 : block == 1 ? k2 : k3;
        return k * k * static_cast<double>(H.rows() + 1) * H;
    }
};

// One graph-constrained Wishart prior in the density convention
// p(K) propto |K|^{(df-2)/2} exp(-tr(multiplier * scale * K)/2). Updating on
// a Gaussian scatter S with data_df terms gives W_G(df + data_df,
// multiplier * scale + S).
struct GWishartPrior {
    double df = 1.0;
    Eigen::MatrixXd scale;
    Adjacency graph;
    double scale_multiplier = 1.0;

    void validate() const {
        if (!(df > 0.0)) throw std::invalid_argument("gwishart prior: df must be positive");
        if (!(scale_multiplier > 0.0))
            throw std::invalid_argument("gwishart prior: scale multiplier must be positive");
        if (scale.rows() != scale.cols() || scale.rows() != graph.rows())
            throw std::invalid_argument("gwishart prior: scale and graph dimensions disagree");
        validate_adjacency(graph);
    }
};

}  // namespace gci
