#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gci/gwishart.hpp"
#include "gci/priors.hpp"
#include "gci/rng.hpp"
#include "gci/state_space.hpp"
#include "gci/stationary.hpp"
#include "gci/structural.hpp"

// Stage-2 posterior sampling on the beta-residualized data. One Gibbs sweep:
//
//   (a) draw the state path with the simulation smoother,
//   (b) Metropolis step on the n^2 unrestricted slope-autoregression
//       parameters (anchor = current slope noise covariance), plus a
//       separate flip move on the reflection bit,
//   (c) exact Gaussian draw of the slope mean D,
//   (d) graph-constrained Wishart draws of the four noise precisions.
//
// (b) and (c) are skipped for the random-walk slope. The chain state for the
// autoregression is the unrestricted vector; the coefficient matrix is
// re-derived against the current anchor at the top of every sweep, so each
// stored draw is Schur-stable by construction.

namespace gci {

struct McmcConfig {
    int n_iters = 10000;
    int n_burnin = 2000;
    int thinning = 1;
    std::uint64_t rng_seed = 0;
    Eigen::VectorXd proposal_scales;  // n^2 random-walk sds; empty = 0.1 each
    bool adapt_proposals = true;      // Robbins-Monro on a global log scale,
                                      // burn-in only, target acceptance 0.25
    bool sample_observation_noise = true;  // freeze Sigma at its init when false
    bool sample_state_noise = true;        // freeze Sigma_u/v/w at their inits

    void validate() const;
};

// Prior bundle for the multivariate chain. The covariance part is shared
// with the selection stage; the slope map parameters get independent
// N(0, phi_param_variance) priors and the reflection bit a Bernoulli prior.
struct ChainPriors {
    CovariancePriors cov;
    double phi_param_variance = 5.0;
    double iota_prior = 0.5;
};

// Initial chain position plus the initial state law (a1, P1). Defaults:
// zero map parameters (coefficient matrix (1/sqrt 2) I against anchor I),
// D = 0, identity covariances, a1 = 0, P1 = I with the slope block inflated
// to 1e6 when the slope is a random walk.
struct ChainInit {
    Eigen::VectorXd theta;  // n^2 unrestricted slope-map parameters
    bool iota = false;
    Eigen::VectorXd D;
    Eigen::MatrixXd Sigma, Sigma_u, Sigma_v, Sigma_w;
    Eigen::VectorXd a1;
    Eigen::MatrixXd P1;

    static ChainInit defaults(const StructuralSpec& spec);
};

struct PosteriorDraws {
    // Retained draws: post burn-in, every `thinning`-th sweep.
    std::vector<Eigen::MatrixXd> alpha;  // m x T state paths
    std::vector<Eigen::MatrixXd> Phi;    // empty for the random-walk slope
    std::vector<Eigen::VectorXd> D;      // empty for the random-walk slope
    std::vector<Eigen::MatrixXd> Sigma, Sigma_u, Sigma_v, Sigma_w;
    std::vector<std::uint8_t> iota;

    // Post-burn-in move counters (the adaptation phase is not representative).
    long long phi_proposals = 0, phi_accepts = 0;
    long long iota_proposals = 0, iota_accepts = 0;

    Eigen::Index n_draws() const { return static_cast<Eigen::Index>(alpha.size()); }
    double phi_acceptance() const {
        return phi_proposals == 0 ? 0.0
                                  : static_cast<double>(phi_accepts) /
                                        static_cast<double>(phi_proposals);
    }
};

// Step (a): one conditional state draw. Thin wrapper so the Gibbs loop and
// tests name the move the same way.
inline Eigen::MatrixXd sample_states(const StateSpaceSystem<double>& sys,
                                     const Eigen::MatrixXd& y, Rng& rng) {
    return simulation_smoother(sys, y, rng);
}

// Sum of transition log densities sum_t log N(tau_{t+1}; (I-Phi)D + Phi tau_t,
// Sigma_v) over the tau columns.
double var1_transition_loglik(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                              const Eigen::VectorXd& D, const Eigen::MatrixXd& Sigma_v);

struct PhiStepSettings {
    Eigen::VectorXd proposal_scales;  // n^2 entries, required
    double prior_variance = 5.0;      // N(0, .) on each unrestricted parameter
    double iota_prior = 0.5;
    // Test seam: replaces the log target (transition likelihood + priors)
    // entirely when set; the coefficient map is then never evaluated.
    const std::function<double(const StationaryVarParams<double>&)>* log_target_override =
        nullptr;
};

struct PhiStepResult {
    StationaryVarParams<double> params;
    bool accepted = false;       // the random-walk move on the parameters
    bool iota_accepted = false;  // the reflection flip move
};

// Step (b): random-walk Metropolis on the unrestricted parameters with iota
// held, then an independent Bernoulli(0.5) proposal for iota with the
// parameters held. tau with fewer than two columns returns the current
// position untouched.
PhiStepResult sample_phi_mh(const StationaryVarParams<double>& current,
                            const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Sigma_v,
                            const Eigen::VectorXd& D, const PhiStepSettings& settings,
                            Rng& rng);

struct GaussianMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Conditional law of D given the slope path: the transition density is linear
// in D through (I-Phi)D, so with the N(0, prior_variance I) prior
//   V^{-1} = I/prior_variance + (T-1)(I-Phi)' Sigma_v^{-1} (I-Phi),
//   m = V (I-Phi)' Sigma_v^{-1} sum_t (tau_{t+1} - Phi tau_t).
GaussianMoments d_conditional(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                              const Eigen::MatrixXd& Sigma_v, double prior_variance = 1.0);

// Step (c): exact draw from d_conditional.
Eigen::VectorXd sample_d(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                         const Eigen::MatrixXd& Sigma_v, Rng& rng,
                         double prior_variance = 1.0);

// Step (d) helper: posterior draw K ~ W_G(prior.df + data_df,
// prior.scale_multiplier * prior.scale + scatter), returned as a precision.
Eigen::MatrixXd sample_gwishart_posterior(const GWishartPrior& prior,
                                          const Eigen::MatrixXd& scatter, double data_df,
                                          Rng& rng);

// Full Gibbs loop on beta-residualized observations (NaN = missing; the
// observation-noise update counts fully observed times only). Any sub-step
// failure is rethrown with the sweep index attached.
PosteriorDraws run_chain(const Eigen::MatrixXd& y_tilde, const StructuralSpec& spec,
                         const ChainPriors& priors, const ChainInit& init,
                         const McmcConfig& config);

// Single-series comparison model: same structural form with scalar noise
// variances under Gamma priors on the precisions, a N(0, d_prior_sd^2) slope
// mean and a truncated-normal slope coefficient on (-1, 1). All four noise
// rates scale with the pooled variance of the series.
struct UnivariatePriors {
    double sigma_shape = 0.05;       // Gamma(shape, rate_factor * SS) on 1/sigma^2
    double sigma_rate_factor = 0.05;
    double state_shape = 0.01;       // shared by the three state precisions
    double state_rate_factor = 0.01;
    double d_prior_sd = 0.1;
    double phi_prior_sd = 0.1;
};

PosteriorDraws run_univariate_chain(const Eigen::VectorXd& y_tilde, int seasonal_period,
                                    SlopeMode slope_mode, const UnivariatePriors& priors,
                                    const McmcConfig& config);

struct InefficiencyFactor {
    double value = 1.0;
    bool degenerate = false;  // constant chain: autocorrelation undefined
};

// 1 + 2 sum_{l=1}^{L} w(l/L) rho_l with the Parzen lag window and
// L = min(1000, length/10). Requires at least 100 points.
InefficiencyFactor inefficiency_factor(const Eigen::VectorXd& chain);

}  // namespace gci
