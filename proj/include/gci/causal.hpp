#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/emvs.hpp"
#include "gci/mcmc.hpp"
#include "gci/panel.hpp"
#include "gci/rng.hpp"
#include "gci/structural.hpp"

// Counterfactual prediction and the two causal estimands. The difference
// estimand summarizes the temporal average of observed-minus-counterfactual
// outcomes per store. The distribution estimand is a one-sided KS distance
// between the posterior of the trend's causal-window partial sums under the
// observed data and under counterfactual datasets, declared significant when
// it exceeds a data-driven threshold: the upper percentile of the pairwise
// distances among the counterfactual fits themselves.

namespace gci {

struct CounterfactualSet {
    std::vector<Eigen::MatrixXd> replicates;  // each n x horizon, observation scale
    std::vector<Eigen::Index> draw_indices;   // posterior draw behind each replicate
    std::vector<std::uint64_t> seeds;         // noise stream behind each replicate

    Eigen::Index k() const { return static_cast<Eigen::Index>(replicates.size()); }
};

// Draw k post-period datasets from the posterior predictive of a pre-period
// fit. Replicate j takes the posterior draw at an evenly spaced retained
// index, starts from that draw's final state, iterates the state equation
// forward with fresh state noise, and observes through
// Y_t = z alpha_t + X_t beta + eps_t. The panel supplies the post-period
// design, so columns causal_start .. causal_start + horizon - 1 must exist.
CounterfactualSet predict_counterfactuals(const PosteriorDraws& draws,
                                          const TimeSeriesPanel& panel, const StructuralSpec& spec,
                                          const Eigen::VectorXd& beta, Eigen::Index horizon,
                                          Eigen::Index k, Rng& rng);

struct DifferenceSummary {
    Eigen::VectorXd median;  // per store
    Eigen::VectorXd lo95;
    Eigen::VectorXd hi95;
};

// Temporal-average difference estimand: for each counterfactual draw, average
// observed - counterfactual over the window (finite observed entries only),
// then summarize per store by the median and the central 95% interval.
DifferenceSummary difference_estimand(const Eigen::MatrixXd& observed,
                                      const std::vector<Eigen::MatrixXd>& counterfactuals);

// sup_x [F_a(x) - F_b(x)] over the pooled sample points, floored at zero.
// Right-continuous empirical distribution functions; the sup of the signed
// gap is attained at a sample point, so the pooled-point maximum is exact.
double one_sided_ks(const Eigen::VectorXd& sample_a, const Eigen::VectorXd& sample_b);

// Causal-window partial sums of the trend draws: element i of the result is a
// horizon x n_draws matrix whose row h holds draws of
// sum_{t=causal_start}^{causal_start+h} mu_{i,t}.
std::vector<Eigen::MatrixXd> trend_partial_sums(const PosteriorDraws& draws,
                                                Eigen::Index n_series, Eigen::Index causal_start,
                                                Eigen::Index horizon);

// Per-store per-horizon distance between the counterfactual-side trend
// posterior and the observed-fit trend posterior. The counterfactual side
// averages the k fits' empirical CDFs, which equals stacking the draws when
// the fits share a retained-draw count. observed_fit comes from
// trend_partial_sums on the observed-data fit; counterfactual_fits holds one
// such vector per counterfactual re-fit. Returns n x horizon.
Eigen::MatrixXd ks_trajectories(const std::vector<Eigen::MatrixXd>& observed_fit,
                                const std::vector<std::vector<Eigen::MatrixXd>>& counterfactual_fits);

// Data-driven significance cutoffs: per store and horizon, the nearest-rank
// upper percentile of the k(k-1) ordered pairwise one-sided distances among
// the counterfactual fits. Returns n x horizon.
Eigen::MatrixXd ks_thresholds(const std::vector<std::vector<Eigen::MatrixXd>>& counterfactual_fits,
                              double percentile = 0.95);

struct CausalReport {
    std::vector<std::string> store_ids;       // stores that entered the analysis
    std::vector<std::string> dropped_stores;  // selection removed every control
    Eigen::Index causal_start = 0;
    Eigen::Index k = 0;
    double percentile = 0.0;
    Eigen::VectorXd beta;  // thresholded selection estimate, input design order

    Eigen::MatrixXd ks;         // n x horizon
    Eigen::MatrixXd threshold;  // n x horizon
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> significant;  // ks > threshold

    DifferenceSummary difference;
};

// End-to-end causal analysis: synthetic-control selection on the pre-period,
// a pre-period chain, k counterfactual datasets, one re-fit per dataset plus
// a re-fit on the full observed series, then both estimands. The selection
// coefficient is the thresholded estimate at the largest spike variance in
// the grid; a store whose candidate controls are all eliminated is dropped
// and listed in the report. Re-fits run in parallel with seeds derived from
// mcmc_config.rng_seed, so the report does not depend on scheduling.
CausalReport full_causal_pipeline(const TimeSeriesPanel& panel, const StructuralSpec& spec,
                                  const ChainPriors& priors, const SpikeSlabConfig& emvs_config,
                                  const McmcConfig& mcmc_config, Eigen::Index k = 30,
                                  double percentile = 0.95);

}  // namespace gci
