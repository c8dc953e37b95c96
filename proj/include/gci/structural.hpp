#pragma once

#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "gci/dense.hpp"
#include "gci/graph.hpp"
#include "gci/panel.hpp"
#include "gci/state_space.hpp"

// Multivariate structural time series assembly. The state is ordered
// (mu', tau', delta_t', delta_{t-1}', ..., delta_{t-S+2}')' with n entries per
// block, m = n(S+1):
//
//   Y_t   = mu_t + delta_t + eps_t
//   mu_{t+1}    = mu_t + tau_t + u_t
//   tau_{t+1}   = (I - Phi) D + Phi tau_t + v_t    (stationary slope)
//               = tau_t + v_t                       (random-walk slope, c = 0)
//   delta_{t+1} = -sum_{j=0}^{S-2} delta_{t-j} + w_t
//
// Q = bdiag(Sigma_u, Sigma_v, Sigma_w) with R selecting the first 3n state
// rows. Regression enters by residualizing: Y_t - X_t beta.

namespace gci {

enum class SlopeMode { stationary, random_walk };

struct StructuralSpec {
    int n_series = 0;
    int seasonal_period = 0;  // S
    SlopeMode slope_mode = SlopeMode::stationary;
    Adjacency adjacency;           // n x n, unit diagonal
    std::vector<int> p_per_store;  // regression bookkeeping, may be empty

    int n_state() const { return n_series * (seasonal_period + 1); }

    void validate() const {
        if (n_series < 1) throw std::invalid_argument("structural spec: need at least one series");
        if (seasonal_period < 2) throw std::invalid_argument("structural spec: seasonal period must be >= 2");
        validate_adjacency(adjacency);
        if (adjacency.rows() != n_series)
            throw std::invalid_argument("structural spec: adjacency size disagrees with series count");
    }
};

template <class Scalar>
struct ComponentParams {
    MatrixX<Scalar> Sigma;    // observation noise
    MatrixX<Scalar> Sigma_u;  // trend noise
    MatrixX<Scalar> Sigma_v;  // slope noise
    MatrixX<Scalar> Sigma_w;  // seasonal noise
    VectorX<Scalar> D;        // slope mean (stationary mode)
    MatrixX<Scalar> Phi;      // slope autoregression (stationary mode)
};

namespace detail {

template <class Scalar>
void check_graph_precision(const MatrixX<Scalar>& cov, const Adjacency& adj, const char* name) {
    MatrixX<Scalar> prec = cov.inverse();
    const Scalar tol = Scalar(1e-8) * std::max<Scalar>(Scalar(1), prec.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < adj.rows(); ++i)
        for (Eigen::Index j = 0; j < adj.cols(); ++j)
            if (i != j && adj(i, j) == 0 && std::abs(prec(i, j)) > tol)
                throw std::invalid_argument(std::string(name) +
                                            ": precision has mass off the graph");
}

}  // namespace detail

// Observation noise must be strictly SPD; the state noise blocks may be
// singular PSD (noise-free components are legitimate), in which case the
// graph constraint on the precision is vacuous and skipped.
template <class Scalar>
void validate_params(const StructuralSpec& spec, const ComponentParams<Scalar>& params) {
    const int n = spec.n_series;
    auto check = [&](const MatrixX<Scalar>& s, const char* name, bool strict) {
        if (s.rows() != n || s.cols() != n)
            throw std::invalid_argument(std::string(name) + ": dimension disagrees with series count");
        if ((s - s.transpose()).cwiseAbs().maxCoeff() >
            Scalar(1e-10) * (Scalar(1) + s.cwiseAbs().maxCoeff()))
            throw std::invalid_argument(std::string(name) + ": not symmetric");
        Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(s, Eigen::EigenvaluesOnly);
        const Scalar lo = es.eigenvalues().minCoeff();
        const Scalar hi = std::max<Scalar>(es.eigenvalues().maxCoeff(), Scalar(1));
        if (strict ? lo <= hi * Scalar(1e-14) : lo < -hi * Scalar(1e-12))
            throw std::invalid_argument(std::string(name) + (strict ? ": not positive definite"
                                                                    : ": not positive semi-definite"));
        if (lo > hi * Scalar(1e-12)) detail::check_graph_precision(s, spec.adjacency, name);
    };
    check(params.Sigma, "Sigma", true);
    check(params.Sigma_u, "Sigma_u", false);
    check(params.Sigma_v, "Sigma_v", false);
    check(params.Sigma_w, "Sigma_w", false);
    if (spec.slope_mode == SlopeMode::stationary) {
        if (params.D.size() != n || params.Phi.rows() != n || params.Phi.cols() != n)
            throw std::invalid_argument("slope parameters: dimension disagrees with series count");
        if (params.Phi.eigenvalues().cwiseAbs().maxCoeff() >= Scalar(1))
            throw std::invalid_argument("slope autoregression is not Schur stable");
    }
}

namespace detail {

// Assembly without the parameter checks. The EM stage needs this: its slope
// autoregression carries a Gaussian ridge prior instead of a stationarity
// restriction, so mid-iteration Phi may sit outside the Schur-stable set.
template <class Scalar>
StateSpaceSystem<Scalar> build_system(const StructuralSpec& spec,
                                      const ComponentParams<Scalar>& params,
                                      const std::type_identity_t<VectorX<Scalar>>& init_mean,
                                      const std::type_identity_t<MatrixX<Scalar>>& init_cov) {
    const int n = spec.n_series, S = spec.seasonal_period, m = spec.n_state();
    if (init_mean.size() != m || init_cov.rows() != m || init_cov.cols() != m)
        throw std::invalid_argument("assemble_system: initial state dimensions disagree");

    StateSpaceSystem<Scalar> sys;
    sys.z = MatrixX<Scalar>::Zero(n, m);
    sys.z.block(0, 0, n, n).setIdentity();
    sys.z.block(0, 2 * n, n, n).setIdentity();

    sys.T_mat = MatrixX<Scalar>::Zero(m, m);
    sys.c = VectorX<Scalar>::Zero(m);
    sys.T_mat.block(0, 0, n, n).setIdentity();
    sys.T_mat.block(0, n, n, n).setIdentity();
    if (spec.slope_mode == SlopeMode::stationary) {
        sys.T_mat.block(n, n, n, n) = params.Phi;
        sys.c.segment(n, n) = (MatrixX<Scalar>::Identity(n, n) - params.Phi) * params.D;
    } else {
        sys.T_mat.block(n, n, n, n).setIdentity();
    }
    for (int b = 0; b < S - 1; ++b)
        sys.T_mat.block(2 * n, (2 + b) * n, n, n) = -MatrixX<Scalar>::Identity(n, n);
    for (int b = 1; b < S - 1; ++b)
        sys.T_mat.block((2 + b) * n, (1 + b) * n, n, n).setIdentity();

    sys.R = MatrixX<Scalar>::Zero(m, 3 * n);
    sys.R.block(0, 0, 3 * n, 3 * n).setIdentity();
    sys.Q = MatrixX<Scalar>::Zero(3 * n, 3 * n);
    sys.Q.block(0, 0, n, n) = params.Sigma_u;
    sys.Q.block(n, n, n, n) = params.Sigma_v;
    sys.Q.block(2 * n, 2 * n, n, n) = params.Sigma_w;
    sys.Sigma = params.Sigma;
    sys.a1 = init_mean;
    sys.P1 = init_cov;
    return sys;
}

}  // namespace detail

template <class Scalar>
StateSpaceSystem<Scalar> assemble_system(const StructuralSpec& spec,
                                         const ComponentParams<Scalar>& params,
                                         const std::type_identity_t<VectorX<Scalar>>& init_mean,
                                         const std::type_identity_t<MatrixX<Scalar>>& init_cov) {
    spec.validate();
    validate_params(spec, params);
    return detail::build_system(spec, params, init_mean, init_cov);
}

// Residualized observations: Y_t - X_t beta columnwise over the full range.
inline Eigen::MatrixXd apply_regression(const TimeSeriesPanel& panel, const Eigen::VectorXd& beta) {
    if (beta.size() != panel.n_design())
        throw std::invalid_argument("apply_regression: coefficient count disagrees with design");
    Eigen::MatrixXd out = panel.y;
    for (Eigen::Index j = 0; j < panel.n_design(); ++j) {
        if (beta(j) == 0.0) continue;
        const auto& col = panel.design[j];
        for (int s : col.stores) out.row(s) -= beta(j) * col.x.transpose();
    }
    return out;
}

template <class Scalar>
StateSpaceSystem<Scalar> assemble_univariate(int seasonal_period, SlopeMode slope_mode, Scalar d,
                                             Scalar phi, Scalar sigma2, Scalar sigma_u2,
                                             Scalar sigma_v2, Scalar sigma_w2,
                                             const std::type_identity_t<VectorX<Scalar>>& init_mean,
                                             const std::type_identity_t<MatrixX<Scalar>>& init_cov) {
    StructuralSpec spec;
    spec.n_series = 1;
    spec.seasonal_period = seasonal_period;
    spec.slope_mode = slope_mode;
    spec.adjacency = Adjacency::Ones(1, 1);
    ComponentParams<Scalar> params;
    auto one = [](Scalar v) { return MatrixX<Scalar>::Constant(1, 1, v); };
    params.Sigma = one(sigma2);
    params.Sigma_u = one(sigma_u2);
    params.Sigma_v = one(sigma_v2);
    params.Sigma_w = one(sigma_w2);
    params.D = VectorX<Scalar>::Constant(1, d);
    params.Phi = one(phi);
    return assemble_system(spec, params, init_mean, init_cov);
}

// Pooled variance SS = sum (y_t - ybar)^2 / (T-1) over finite entries,
// anchoring the univariate Gamma prior rates.
inline double pooled_variance(const Eigen::VectorXd& y) {
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (std::isfinite(y(i))) vals.push_back(y(i));
    if (vals.size() < 2) throw std::invalid_argument("pooled variance needs at least two observations");
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double ss = 0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(vals.size() - 1);
}

}  // namespace gci
