#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gci/panel.hpp"
#include "gci/priors.hpp"
#include "gci/state_space.hpp"
#include "gci/structural.hpp"

// Synthetic-control selection by EM under a spike-and-slab prior on the
// regression coefficients. The E-step smooths the structural state on
// beta-residualized pre-period observations and refreshes the inclusion
// weights; the M-step is closed-form in theta, beta, the slope
// autoregression (ridge prior, variance 0.1 per entry), and the
// graph-constrained covariances (IPS projection of each precision).
//
// Weight tempering with exponent s in (0,1] flattens the inclusion odds,
// which keeps early iterations from committing to a support too soon; s = 1
// is the plain EM weight.

namespace gci {

struct SpikeSlabConfig {
    std::vector<double> v0_grid;  // spike variances, each in (0, v1)
    double v1 = 10.0;             // slab variance
    double zeta1 = 1.0;           // Beta prior shapes for theta
    double zeta2 = 1.0;
    double temperature_s = 1.0;  // weight tempering exponent, (0, 1]
    int max_iters = 50;
    double convergence_tol = 1e-6;      // relative q gain
    double init_state_variance = 1.0;   // initial variance of the free state blocks

    void validate() const;
    static std::vector<double> default_grid();  // 20 points, 1e-6 .. 0.02
};

struct EmvsState {
    Eigen::VectorXd beta;
    double theta = 0.5;
    Eigen::MatrixXd Phi_em;
    Eigen::MatrixXd Sigma_em, Sigma_u_em, Sigma_v_em, Sigma_w_em;
    Eigen::VectorXd w;       // inclusion weights, p entries in [0,1]
    Eigen::VectorXd a_star;  // precision weights, p entries in [1/v1, 1/v0]
    // Marginal objective at the current parameters (filter log likelihood
    // plus log prior, additive constant dropped); one trace entry per
    // iteration, non-decreasing when temperature_s is 1.
    double q_value = 0.0;
    std::vector<double> q_trace;
    int iterations = 0;
};

struct EStepWeights {
    Eigen::VectorXd w;
    Eigen::VectorXd a_star;
};

// Inclusion weights w_i = g1^s / (g1^s + g2^s) with g1 = N(beta_i; 0, v1) theta
// and g2 = N(beta_i; 0, v0) (1-theta), evaluated in log space, and the induced
// prior precisions a*_i = (1-w_i)/v0 + w_i/v1.
EStepWeights e_step_gamma(const Eigen::VectorXd& beta, double theta, double v0, double v1,
                          double s);

// theta = (sum w + zeta1 - 1) / (p + zeta1 + zeta2 - 2), clamped to [0,1]
// (the clamp is the boundary maximizer when a shape parameter is below 1).
double m_step_theta(const Eigen::VectorXd& w, double zeta1, double zeta2);

// Ridge solve for beta over the fully observed times t < t_end:
//   (sum_t X_t' Sigma^{-1} X_t + diag(a*))^{-1} sum_t X_t' Sigma^{-1} (Y_t - z a_{t|T}).
// The direct route inverts p x p; the Woodbury route inverts the stacked
// n_inf x n_inf observation block instead and is used when p exceeds it.
Eigen::VectorXd m_step_beta_direct(const TimeSeriesPanel& panel, Eigen::Index t_end,
                                   const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                                   const Eigen::VectorXd& a_star,
                                   const SmoothedMoments<double>& sm);
Eigen::VectorXd m_step_beta_woodbury(const TimeSeriesPanel& panel, Eigen::Index t_end,
                                     const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                                     const Eigen::VectorXd& a_star,
                                     const SmoothedMoments<double>& sm);
Eigen::VectorXd m_step_beta(const TimeSeriesPanel& panel, Eigen::Index t_end,
                            const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                            const Eigen::VectorXd& a_star, const SmoothedMoments<double>& sm);

// Observation covariance update over fully observed times t < t_end:
// (residual scatter + H) / (T_obs + nu - 2), with the precision projected onto
// the graph by IPS and inverted back.
Eigen::MatrixXd m_step_sigma(const TimeSeriesPanel& panel, Eigen::Index t_end,
                             const Eigen::VectorXd& beta, const Eigen::MatrixXd& z,
                             const SmoothedMoments<double>& sm, double nu,
                             const Eigen::MatrixXd& H, const Adjacency& graph);

struct StateNoiseUpdate {
    Eigen::MatrixXd Sigma_u, Sigma_v, Sigma_w;
};

// State noise update from the smoothed transition scatter R' E[(a_{t+1} - c -
// T a_t)(.)'] R. Cross-component blocks are dropped (the precision prior keeps
// Q block diagonal), each diagonal block gets its k_i^2 (n+1) H scale added,
// the sum is divided by T + nu - 3, and each block precision is IPS-projected.
StateNoiseUpdate m_step_state_noise(const StateSpaceSystem<double>& sys,
                                    const SmoothedMoments<double>& sm,
                                    const CovariancePriors& priors, const Adjacency& graph);

// Slope autoregression update: solve
//   [sum_t E[tau_t tau_t']' kron Sigma_v^{-1} + 10 I] vec(Phi)
//     = vec(Sigma_v^{-1} sum_t E[tau_{t+1} tau_t']).
Eigen::MatrixXd m_step_phi(const Eigen::MatrixXd& sum_second, const Eigen::MatrixXd& sum_cross,
                           const Eigen::MatrixXd& Sigma_v);

// tau-block moment sums over transitions: (sum_t E[tau_t tau_t'],
// sum_t E[tau_{t+1} tau_t']) for t = 0..T-2.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> tau_moment_sums(const SmoothedMoments<double>& sm,
                                                            int n);

struct SelectionThreshold {
    double value = 0.0;
    bool degenerate = false;  // radicand < 0 (everything selected) or non-finite
};

// Magnitude below which a coefficient is declared zero: the |beta| where the
// spike and slab components carry equal posterior weight,
//   sqrt[(log(v0/v1) + 2 log(theta/(1-theta))) / (1/v1 - 1/v0)].
SelectionThreshold selection_threshold(double v0, double v1, double theta_hat);

// Full EM run on the pre-period columns [0, panel.causal_start) of an already
// validated panel. warm, when given, seeds beta/theta/Phi/covariances from a
// previous run (used by the v0 grid scan).
EmvsState run_emvs(const TimeSeriesPanel& panel, const StructuralSpec& spec,
                   const SpikeSlabConfig& config, double v0, const CovariancePriors& priors,
                   const EmvsState* warm = nullptr);

struct SelectionPathRow {
    double v0 = 0.0;
    double theta = 0.0;
    double threshold = 0.0;
    bool threshold_degenerate = false;
    EmvsState state;  // beta and w live here
};

// One run_emvs per grid point, warm-started from the previous point unless
// disabled. Rows come back in grid order.
std::vector<SelectionPathRow> v0_grid_scan(const TimeSeriesPanel& panel,
                                           const StructuralSpec& spec,
                                           const SpikeSlabConfig& config,
                                           const CovariancePriors& priors,
                                           bool warm_start = true);

// Selection under the time-independent reduction Y_t = X_t beta + noise with
// i.i.d. graph-constrained noise: the loop keeps only the coefficient,
// mixing-weight, and noise-covariance updates. Slope and state-noise fields
// of the result stay empty. The noise covariance keeps the same prior family
// (scale H, exponent nu - 2, graph projection) as the structural run.
EmvsState run_emvs_iid(const TimeSeriesPanel& panel, const Adjacency& graph,
                       const SpikeSlabConfig& config, double v0, const CovariancePriors& priors,
                       const EmvsState* warm = nullptr);

std::vector<SelectionPathRow> v0_grid_scan_iid(const TimeSeriesPanel& panel,
                                               const Adjacency& graph,
                                               const SpikeSlabConfig& config,
                                               const CovariancePriors& priors,
                                               bool warm_start = true);

// Selection estimate with sub-threshold coefficients zeroed. A degenerate
// threshold keeps every coefficient.
inline Eigen::VectorXd thresholded_beta(const SelectionPathRow& row) {
    Eigen::VectorXd beta = row.state.beta;
    if (!row.threshold_degenerate)
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            if (std::abs(beta(j)) < row.threshold) beta(j) = 0.0;
    return beta;
}

}  // namespace gci
