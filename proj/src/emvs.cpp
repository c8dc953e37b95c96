#include "gci/emvs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gci/errors.hpp"
#include "gci/graph.hpp"

namespace gci {

namespace {

double xlogy(double a, double x) { return a == 0.0 ? 0.0 : a * std::log(x); }

double log_normal_density(double x, double variance) {
    return -0.5 * (std::log(2.0 * M_PI * variance) + x * x / variance);
}

// Times before t_end with every series observed. Partially observed columns
// enter the smoother but are left out of the observation-side sums.
std::vector<Eigen::Index> complete_times(const Eigen::MatrixXd& y, Eigen::Index t_end) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index t = 0; t < t_end; ++t)
        if (y.col(t).array().isFinite().all()) out.push_back(t);
    return out;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& s, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw numerical_error(std::string(what) + ": not positive definite");
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
    symmetrize(inv);
    return inv;
}

// Scatter-to-covariance step shared by the Sigma and Q updates: check the
// unconstrained update is SPD, project its precision onto the graph, invert.
Eigen::MatrixXd project_covariance(const Eigen::MatrixXd& unconstrained, const Adjacency& graph,
                                   const char* what) {
    Eigen::MatrixXd s = unconstrained;
    symmetrize(s);
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw numerical_error(std::string(what) + ": scatter update is not positive definite");
    Eigen::MatrixXd prec = ips_project(s, graph);
    return spd_inverse(prec, what);
}

// Transition residual scatter sum_t E[(a_{t+1} - c - T a_t)(.)'] over all
// smoothed transitions.
Eigen::MatrixXd transition_scatter(const StateSpaceSystem<double>& sys,
                                   const SmoothedMoments<double>& sm) {
    const Eigen::Index m = sys.n_state();
    const Eigen::Index T = sm.a.cols();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, m);
    const bool has_c = sys.c.size() > 0 && sys.c.cwiseAbs().maxCoeff() > 0.0;
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        Eigen::MatrixXd cross = sm.cross_moment(t);  // E[alpha_t alpha_{t+1}']
        Eigen::MatrixXd tc = sys.T_mat * cross;
        sum += sm.second_moment(t + 1) - tc - tc.transpose() +
               sys.T_mat * sm.second_moment(t) * sys.T_mat.transpose();
        if (has_c) {
            Eigen::VectorXd h = sm.a.col(t + 1) - sys.T_mat * sm.a.col(t);
            sum += sys.c * sys.c.transpose() - sys.c * h.transpose() - h * sys.c.transpose();
        }
    }
    symmetrize(sum);
    return sum;
}

}  // namespace

void SpikeSlabConfig::validate() const {
    if (!(v1 > 0.0)) throw std::invalid_argument("spike-slab config: slab variance must be positive");
    for (double v0 : v0_grid)
        if (!(v0 > 0.0) || !(v0 < v1))
            throw std::invalid_argument("spike-slab config: grid values must lie in (0, v1)");
    if (!(temperature_s > 0.0) || temperature_s > 1.0)
        throw std::invalid_argument("spike-slab config: temperature must lie in (0, 1]");
    if (max_iters < 1) throw std::invalid_argument("spike-slab config: need at least one iteration");
    if (!(convergence_tol > 0.0)) throw std::invalid_argument("spike-slab config: tolerance must be positive");
    if (!(init_state_variance > 0.0))
        throw std::invalid_argument("spike-slab config: initial state variance must be positive");
}

std::vector<double> SpikeSlabConfig::default_grid() {
    const double lo = 1e-6, hi = 0.02;
    std::vector<double> g(20);
    for (int i = 0; i < 20; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / 19.0;
    return g;
}

EStepWeights e_step_gamma(const Eigen::VectorXd& beta, double theta, double v0, double v1,
                          double s) {
    if (!(v0 > 0.0) || !(v1 > 0.0)) throw std::invalid_argument("e_step: variances must be positive");
    if (!(theta >= 0.0) || !(theta <= 1.0)) throw std::invalid_argument("e_step: theta outside [0,1]");
    if (!(s > 0.0) || s > 1.0) throw std::invalid_argument("e_step: temperature outside (0,1]");
    const Eigen::Index p = beta.size();
    EStepWeights out;
    out.w.resize(p);
    out.a_star.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double lg1 = log_normal_density(beta(i), v1) + std::log(theta);
        const double lg2 = log_normal_density(beta(i), v0) + std::log1p(-theta);
        // w = g1^s / (g1^s + g2^s) without leaving log space
        const double w = 1.0 / (1.0 + std::exp(s * (lg2 - lg1)));
        out.w(i) = w;
        out.a_star(i) = (1.0 - w) / v0 + w / v1;
    }
    return out;
}

double m_step_theta(const Eigen::VectorXd& w, double zeta1, double zeta2) {
    const double p = static_cast<double>(w.size());
    if (w.size() < 1) throw std::invalid_argument("theta update: need at least one coefficient");
    const double denom = p + zeta1 + zeta2 - 2.0;
    if (!(denom > 0.0)) throw std::invalid_argument("theta update: degenerate Beta shapes");
    const double theta = (w.sum() + zeta1 - 1.0) / denom;
    return std::clamp(theta, 0.0, 1.0);
}

Eigen::VectorXd m_step_beta_direct(const TimeSeriesPanel& panel, Eigen::Index t_end,
                                   const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                                   const Eigen::VectorXd& a_star,
                                   const SmoothedMoments<double>& sm) {
    const Eigen::Index p = panel.n_design();
    if (a_star.size() != p) throw std::invalid_argument("beta update: weight count disagrees with design");
    if (p == 0) return Eigen::VectorXd();
    if ((a_star.array() <= 0.0).any()) throw std::invalid_argument("beta update: weights must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success) throw numerical_error("beta update: Sigma not positive definite");
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (Eigen::Index t : complete_times(panel.y, t_end)) {
        Eigen::MatrixXd x = panel.design_at(t);
        if (x.cwiseAbs().maxCoeff() == 0.0) continue;
        Eigen::MatrixXd six = llt.solve(x);
        gram.noalias() += x.transpose() * six;
        rhs.noalias() += six.transpose() * (panel.y.col(t) - z * sm.a.col(t));
    }
    gram += Eigen::MatrixXd(a_star.asDiagonal());
    return gram.ldlt().solve(rhs);
}

Eigen::VectorXd m_step_beta_woodbury(const TimeSeriesPanel& panel, Eigen::Index t_end,
                                     const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                                     const Eigen::VectorXd& a_star,
                                     const SmoothedMoments<double>& sm) {
    const Eigen::Index p = panel.n_design();
    const Eigen::Index n = panel.n_series();
    if (a_star.size() != p) throw std::invalid_argument("beta update: weight count disagrees with design");
    if (p == 0) return Eigen::VectorXd();
    if ((a_star.array() <= 0.0).any()) throw std::invalid_argument("beta update: weights must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success) throw numerical_error("beta update: Sigma not positive definite");

    std::vector<Eigen::MatrixXd> xs;
    std::vector<Eigen::Index> ts;
    for (Eigen::Index t : complete_times(panel.y, t_end)) {
        Eigen::MatrixXd x = panel.design_at(t);
        if (x.cwiseAbs().maxCoeff() == 0.0) continue;
        xs.push_back(std::move(x));
        ts.push_back(t);
    }
    if (xs.empty()) return Eigen::VectorXd::Zero(p);

    const Eigen::Index blocks = static_cast<Eigen::Index>(xs.size());
    const Eigen::Index big = n * blocks;
    const Eigen::VectorXd ainv = a_star.cwiseInverse();

    //   (A + X'S^{-1}X)^{-1} = A^{-1} - A^{-1} X' (S + X A^{-1} X')^{-1} X A^{-1}
    // with X the stacked design and S the matching block diagonal of Sigma.
    Eigen::MatrixXd stacked(big, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        stacked.middleRows(b * n, n) = xs[b];
        Eigen::VectorXd r = panel.y.col(ts[b]) - z * sm.a.col(ts[b]);
        rhs.noalias() += xs[b].transpose() * llt.solve(r);
    }
    Eigen::MatrixXd inner = stacked * ainv.asDiagonal() * stacked.transpose();
    for (Eigen::Index b = 0; b < blocks; ++b) inner.block(b * n, b * n, n, n) += Sigma;

    Eigen::VectorXd u = ainv.asDiagonal() * rhs;
    symmetrize(inner);
    Eigen::LLT<Eigen::MatrixXd> inner_llt(inner);
    if (inner_llt.info() != Eigen::Success)
        throw numerical_error("beta update: stacked observation block not positive definite");
    Eigen::VectorXd correction =
        ainv.asDiagonal() * (stacked.transpose() * inner_llt.solve(stacked * u));
    return u - correction;
}

Eigen::VectorXd m_step_beta(const TimeSeriesPanel& panel, Eigen::Index t_end,
                            const Eigen::MatrixXd& z, const Eigen::MatrixXd& Sigma,
                            const Eigen::VectorXd& a_star, const SmoothedMoments<double>& sm) {
    Eigen::Index informative = 0;
    for (Eigen::Index t : complete_times(panel.y, t_end))
        if (panel.design_at(t).cwiseAbs().maxCoeff() != 0.0) ++informative;
    const bool use_woodbury = panel.n_design() > panel.n_series() * informative;
    return use_woodbury ? m_step_beta_woodbury(panel, t_end, z, Sigma, a_star, sm)
                        : m_step_beta_direct(panel, t_end, z, Sigma, a_star, sm);
}

Eigen::MatrixXd m_step_sigma(const TimeSeriesPanel& panel, Eigen::Index t_end,
                             const Eigen::VectorXd& beta, const Eigen::MatrixXd& z,
                             const SmoothedMoments<double>& sm, double nu,
                             const Eigen::MatrixXd& H, const Adjacency& graph) {
    const Eigen::Index n = panel.n_series();
    if (H.rows() != n || H.cols() != n) throw std::invalid_argument("Sigma update: scale size disagrees");
    const std::vector<Eigen::Index> times = complete_times(panel.y, t_end);
    const double denom = static_cast<double>(times.size()) + nu - 2.0;
    if (!(denom > 0.0)) throw std::invalid_argument("Sigma update: nonpositive degrees of freedom");
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index t : times) {
        Eigen::VectorXd r = panel.y.col(t);
        if (beta.size() > 0) r -= panel.design_at(t) * beta;
        Eigen::VectorXd za = z * sm.a.col(t);
        scatter += r * r.transpose() - za * r.transpose() - r * za.transpose() +
                   z * sm.P[t] * z.transpose() + za * za.transpose();
    }
    return project_covariance((scatter + H) / denom, graph, "Sigma update");
}

StateNoiseUpdate m_step_state_noise(const StateSpaceSystem<double>& sys,
                                    const SmoothedMoments<double>& sm,
                                    const CovariancePriors& priors, const Adjacency& graph) {
    const Eigen::Index n = graph.rows();
    if (sys.R.cols() != 3 * n) throw std::invalid_argument("state noise update: disturbance rank disagrees");
    if (priors.H.rows() != n || priors.H.cols() != n)
        throw std::invalid_argument("state noise update: scale size disagrees");
    const Eigen::Index T = sm.a.cols();
    if (T < 2) throw std::invalid_argument("state noise update: need at least two time points");
    const double denom = static_cast<double>(T - 1) + priors.nu - 2.0;
    if (!(denom > 0.0)) throw std::invalid_argument("state noise update: nonpositive degrees of freedom");

    Eigen::MatrixXd scatter = sys.R.transpose() * transition_scatter(sys, sm) * sys.R;
    StateNoiseUpdate out;
    Eigen::MatrixXd* dest[3] = {&out.Sigma_u, &out.Sigma_v, &out.Sigma_w};
    const char* names[3] = {"trend noise update", "slope noise update", "seasonal noise update"};
    for (int b = 0; b < 3; ++b) {
        Eigen::MatrixXd unc = (scatter.block(b * n, b * n, n, n) + priors.state_scale(b)) / denom;
        *dest[b] = project_covariance(unc, graph, names[b]);
    }
    return out;
}

Eigen::MatrixXd m_step_phi(const Eigen::MatrixXd& sum_second, const Eigen::MatrixXd& sum_cross,
                           const Eigen::MatrixXd& Sigma_v) {
    const Eigen::Index n = Sigma_v.rows();
    if (sum_second.rows() != n || sum_second.cols() != n || sum_cross.rows() != n ||
        sum_cross.cols() != n)
        throw std::invalid_argument("Phi update: moment size disagrees");
    Eigen::MatrixXd svi = spd_inverse(Sigma_v, "Phi update: slope noise");
    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index bc = 0; bc < n; ++bc)
        for (Eigen::Index br = 0; br < n; ++br)
            system.block(br * n, bc * n, n, n) = sum_second(bc, br) * svi;
    system += 10.0 * Eigen::MatrixXd::Identity(n * n, n * n);
    Eigen::MatrixXd target = svi * sum_cross;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(target.data(), n * n);
    Eigen::VectorXd vec_phi = system.ldlt().solve(rhs);
    return Eigen::Map<const Eigen::MatrixXd>(vec_phi.data(), n, n);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> tau_moment_sums(const SmoothedMoments<double>& sm,
                                                            int n) {
    const Eigen::Index T = sm.a.cols();
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        second += sm.second_moment(t).block(n, n, n, n);
        // cross_moment(t) is E[alpha_t alpha_{t+1}']; the update wants E[tau_{t+1} tau_t']
        cross += sm.cross_moment(t).block(n, n, n, n).transpose();
    }
    return {second, cross};
}

SelectionThreshold selection_threshold(double v0, double v1, double theta_hat) {
    if (!(v0 > 0.0) || !(v1 > 0.0) || !(v0 < v1))
        throw std::invalid_argument("selection threshold: need 0 < v0 < v1");
    if (!(theta_hat >= 0.0) || !(theta_hat <= 1.0))
        throw std::invalid_argument("selection threshold: theta outside [0,1]");
    const double log_odds = std::log(theta_hat) - std::log1p(-theta_hat);
    const double radicand = (std::log(v0 / v1) + 2.0 * log_odds) / (1.0 / v1 - 1.0 / v0);
    if (radicand < 0.0) return {0.0, true};
    const double value = std::sqrt(radicand);
    return {value, !std::isfinite(value)};
}

namespace {

double log_det_spd(const Eigen::MatrixXd& s, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw numerical_error(std::string(what) + ": not positive definite");
    return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

// Spike-and-slab mixture marginal on beta plus the Beta(zeta1, zeta2) prior
// on theta, up to an additive constant.
double log_prior_selection(const Eigen::VectorXd& beta, double theta,
                           const SpikeSlabConfig& config, double v0) {
    const Eigen::Index p = beta.size();
    if (p == 0) return 0.0;
    double lp = 0.0;
    const double log_theta = std::log(theta);
    const double log_1m_theta = std::log1p(-theta);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double slab = log_theta + log_normal_density(beta(i), config.v1);
        const double spike = log_1m_theta + log_normal_density(beta(i), v0);
        const double hi = std::max(slab, spike);
        lp += std::isfinite(hi) ? hi + std::log1p(std::exp(std::min(slab, spike) - hi)) : hi;
    }
    lp += xlogy(config.zeta1 - 1.0, theta) + xlogy(config.zeta2 - 1.0, 1.0 - theta);
    return lp;
}

// Wishart-type prior term on a covariance: exponent nu - 2 on the precision
// determinant and the given trace scale.
double log_prior_covariance(const Eigen::MatrixXd& S, double nu, const Eigen::MatrixXd& scale,
                            const char* what) {
    return -0.5 * (nu - 2.0) * log_det_spd(S, what) -
           0.5 * (spd_inverse(S, what) * scale).trace();
}

// Log prior density at the parameters held by st, up to an additive constant.
// Added to the filter log likelihood this is the marginal objective the EM
// iterations ascend; the expected complete-data surrogate maximized by the
// M-steps can dip between iterations when the smoothing distribution
// tightens, so the surrogate itself is not what run_emvs records.
double log_prior_density(const EmvsState& st, const SpikeSlabConfig& config, double v0,
                         const CovariancePriors& priors, bool stationary_slope) {
    double lp = log_prior_selection(st.beta, st.theta, config, v0);
    lp += log_prior_covariance(st.Sigma_em, priors.nu, priors.H, "objective: Sigma");
    const Eigen::MatrixXd* blocks[3] = {&st.Sigma_u_em, &st.Sigma_v_em, &st.Sigma_w_em};
    for (int b = 0; b < 3; ++b)
        lp += log_prior_covariance(*blocks[b], priors.nu, priors.state_scale(b),
                                   "objective: state noise");
    if (stationary_slope) lp += -5.0 * st.Phi_em.squaredNorm();
    return lp;
}

}  // namespace

EmvsState run_emvs(const TimeSeriesPanel& panel, const StructuralSpec& spec,
                   const SpikeSlabConfig& config, double v0, const CovariancePriors& priors,
                   const EmvsState* warm) {
    spec.validate();
    config.validate();
    if (!(v0 > 0.0) || !(v0 < config.v1))
        throw std::invalid_argument("run_emvs: spike variance must lie in (0, v1)");
    const Eigen::Index n = panel.n_series();
    if (n != spec.n_series) throw std::invalid_argument("run_emvs: panel series count disagrees with spec");
    if (priors.H.rows() != n || priors.H.cols() != n)
        throw std::invalid_argument("run_emvs: prior scale size disagrees");
    const Eigen::Index p = panel.n_design();
    const Eigen::Index t_end = std::min(panel.causal_start, panel.n_times());
    const int m = spec.n_state();

    EmvsState st;
    if (warm) {
        st = *warm;
        if (st.beta.size() != p || st.Phi_em.rows() != n || st.Sigma_em.rows() != n)
            throw std::invalid_argument("run_emvs: warm start shape disagrees");
        st.q_trace.clear();
        st.iterations = 0;
    } else {
        st.beta = Eigen::VectorXd::Zero(p);
        st.theta = 0.5;
        st.Phi_em = Eigen::MatrixXd::Zero(n, n);
        st.Sigma_em = Eigen::MatrixXd::Identity(n, n);
        st.Sigma_u_em = Eigen::MatrixXd::Identity(n, n);
        st.Sigma_v_em = Eigen::MatrixXd::Identity(n, n);
        st.Sigma_w_em = Eigen::MatrixXd::Identity(n, n);
    }
    {
        EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
        st.w = ew.w;
        st.a_star = ew.a_star;
    }
    if (t_end == 0) return st;  // nothing observed: prior state, beta stays zero

    // The observation-side M-steps are defined per whole time point: columns
    // must be fully observed or fully missing.
    for (Eigen::Index t = 0; t < t_end; ++t) {
        const auto finite = panel.y.col(t).array().isFinite();
        if (finite.any() && !finite.all())
            throw std::invalid_argument("run_emvs: partially observed time point " +
                                        std::to_string(t) + " in the pre-period");
    }

    const Eigen::VectorXd a1 = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd P1 = Eigen::MatrixXd::Zero(m, m);
    P1.diagonal().head(3 * n).setConstant(config.init_state_variance);
    const bool stationary = spec.slope_mode == SlopeMode::stationary;
    // a random-walk slope has no stationary law to anchor its start, so its
    // initial covariance block is diffuse
    if (!stationary) P1.diagonal().segment(n, n).setConstant(1e6);

    auto make_system = [&](const EmvsState& s) {
        ComponentParams<double> params{s.Sigma_em,   s.Sigma_u_em,             s.Sigma_v_em,
                                       s.Sigma_w_em, Eigen::VectorXd::Zero(n), s.Phi_em};
        return detail::build_system(spec, params, a1, P1);
    };

    StateSpaceSystem<double> sys = make_system(st);
    Eigen::MatrixXd y_adj = apply_regression(panel, st.beta).leftCols(t_end);
    FilterResult<double> fr = kalman_filter(sys, y_adj);

    double prev_q = 0.0;
    for (int iter = 1; iter <= config.max_iters; ++iter) {
        SmoothedMoments<double> sm = backward_smoother(sys, fr);

        if (p > 0) {
            EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
            st.w = ew.w;
            st.a_star = ew.a_star;
            st.theta = m_step_theta(st.w, config.zeta1, config.zeta2);
            st.beta = m_step_beta(panel, t_end, sys.z, st.Sigma_em, st.a_star, sm);
        }
        if (stationary) {
            auto [sum_second, sum_cross] = tau_moment_sums(sm, static_cast<int>(n));
            st.Phi_em = m_step_phi(sum_second, sum_cross, st.Sigma_v_em);
        }
        // system carrying the updated slope matrix but the old covariances:
        // the transition scatter in the noise update depends only on T and c
        StateSpaceSystem<double> sys_mid = make_system(st);
        st.Sigma_em =
            m_step_sigma(panel, t_end, st.beta, sys.z, sm, priors.nu, priors.H, spec.adjacency);
        StateNoiseUpdate noise = m_step_state_noise(sys_mid, sm, priors, spec.adjacency);
        st.Sigma_u_em = noise.Sigma_u;
        st.Sigma_v_em = noise.Sigma_v;
        st.Sigma_w_em = noise.Sigma_w;

        // score the refreshed parameters; this filter pass also feeds the
        // next iteration's smoother
        sys = make_system(st);
        y_adj = apply_regression(panel, st.beta).leftCols(t_end);
        fr = kalman_filter(sys, y_adj);
        const double q = fr.loglik + log_prior_density(st, config, v0, priors, stationary);
        st.q_value = q;
        st.q_trace.push_back(q);
        st.iterations = iter;
        if (iter >= 2) {
            const double scale = 1.0 + std::abs(prev_q);
            // tempered weights (s < 1) target a flattened surrogate, so the
            // ascent guarantee only covers the plain EM weights
            if (config.temperature_s == 1.0 && q < prev_q - 1e-8 * scale)
                throw numerical_error("run_emvs: EM objective decreased beyond slack");
            if (std::abs(q - prev_q) < config.convergence_tol * scale) break;
        }
        prev_q = q;
    }
    if (p > 0) {
        // report weights consistent with the returned coefficients
        EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
        st.w = ew.w;
        st.a_star = ew.a_star;
    }
    return st;
}

std::vector<SelectionPathRow> v0_grid_scan(const TimeSeriesPanel& panel,
                                           const StructuralSpec& spec,
                                           const SpikeSlabConfig& config,
                                           const CovariancePriors& priors, bool warm_start) {
    config.validate();
    if (config.v0_grid.empty()) throw std::invalid_argument("v0 grid scan: empty grid");
    std::vector<SelectionPathRow> rows;
    rows.reserve(config.v0_grid.size());
    const EmvsState* warm = nullptr;
    for (double v0 : config.v0_grid) {
        SelectionPathRow row;
        row.v0 = v0;
        row.state = run_emvs(panel, spec, config, v0, priors, warm);
        row.theta = row.state.theta;
        SelectionThreshold th = selection_threshold(v0, config.v1, row.state.theta);
        row.threshold = th.value;
        row.threshold_degenerate = th.degenerate;
        rows.push_back(std::move(row));
        if (warm_start) warm = &rows.back().state;
    }
    return rows;
}

EmvsState run_emvs_iid(const TimeSeriesPanel& panel, const Adjacency& graph,
                       const SpikeSlabConfig& config, double v0, const CovariancePriors& priors,
                       const EmvsState* warm) {
    config.validate();
    validate_adjacency(graph);
    if (!(v0 > 0.0) || !(v0 < config.v1))
        throw std::invalid_argument("run_emvs_iid: spike variance must lie in (0, v1)");
    const Eigen::Index n = panel.n_series();
    if (graph.rows() != n)
        throw std::invalid_argument("run_emvs_iid: graph size disagrees with panel");
    if (priors.H.rows() != n || priors.H.cols() != n)
        throw std::invalid_argument("run_emvs_iid: prior scale size disagrees");
    const Eigen::Index p = panel.n_design();
    const Eigen::Index t_end = std::min(panel.causal_start, panel.n_times());

    EmvsState st;
    if (warm) {
        st = *warm;
        if (st.beta.size() != p || st.Sigma_em.rows() != n)
            throw std::invalid_argument("run_emvs_iid: warm start shape disagrees");
        st.q_trace.clear();
        st.iterations = 0;
    } else {
        st.beta = Eigen::VectorXd::Zero(p);
        st.theta = 0.5;
        st.Sigma_em = Eigen::MatrixXd::Identity(n, n);
    }
    {
        EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
        st.w = ew.w;
        st.a_star = ew.a_star;
    }
    if (t_end == 0) return st;

    for (Eigen::Index t = 0; t < t_end; ++t) {
        const auto finite = panel.y.col(t).array().isFinite();
        if (finite.any() && !finite.all())
            throw std::invalid_argument("run_emvs_iid: partially observed time point " +
                                        std::to_string(t) + " in the pre-period");
    }

    // The structural M-steps read the state only through z and the smoothed
    // moments; a zero one-dimensional state reduces them to the i.i.d. case.
    const Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(n, 1);
    SmoothedMoments<double> sm0;
    sm0.a = Eigen::MatrixXd::Zero(1, t_end);
    sm0.P.assign(static_cast<std::size_t>(t_end), Eigen::MatrixXd::Zero(1, 1));

    auto objective = [&](const EmvsState& s) {
        Eigen::LLT<Eigen::MatrixXd> llt(s.Sigma_em);
        if (llt.info() != Eigen::Success)
            throw numerical_error("run_emvs_iid: Sigma not positive definite");
        const double logdet =
            2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
        double ll = 0.0;
        for (Eigen::Index t : complete_times(panel.y, t_end)) {
            Eigen::VectorXd r = panel.y.col(t);
            if (p > 0) r -= panel.design_at(t) * s.beta;
            ll += -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + logdet +
                          r.dot(llt.solve(r)));
        }
        return ll + log_prior_selection(s.beta, s.theta, config, v0) +
               log_prior_covariance(s.Sigma_em, priors.nu, priors.H, "objective: Sigma");
    };

    double prev_q = 0.0;
    for (int iter = 1; iter <= config.max_iters; ++iter) {
        if (p > 0) {
            EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
            st.w = ew.w;
            st.a_star = ew.a_star;
            st.theta = m_step_theta(st.w, config.zeta1, config.zeta2);
            st.beta = m_step_beta(panel, t_end, z0, st.Sigma_em, st.a_star, sm0);
        }
        st.Sigma_em = m_step_sigma(panel, t_end, st.beta, z0, sm0, priors.nu, priors.H, graph);

        const double q = objective(st);
        st.q_value = q;
        st.q_trace.push_back(q);
        st.iterations = iter;
        if (iter >= 2) {
            const double scale = 1.0 + std::abs(prev_q);
            if (config.temperature_s == 1.0 && q < prev_q - 1e-8 * scale)
                throw numerical_error("run_emvs_iid: EM objective decreased beyond slack");
            if (std::abs(q - prev_q) < config.convergence_tol * scale) break;
        }
        prev_q = q;
    }
    if (p > 0) {
        EStepWeights ew = e_step_gamma(st.beta, st.theta, v0, config.v1, config.temperature_s);
        st.w = ew.w;
        st.a_star = ew.a_star;
    }
    return st;
}

std::vector<SelectionPathRow> v0_grid_scan_iid(const TimeSeriesPanel& panel,
                                               const Adjacency& graph,
                                               const SpikeSlabConfig& config,
                                               const CovariancePriors& priors, bool warm_start) {
    config.validate();
    if (config.v0_grid.empty()) throw std::invalid_argument("v0 grid scan: empty grid");
    std::vector<SelectionPathRow> rows;
    rows.reserve(config.v0_grid.size());
    const EmvsState* warm = nullptr;
    for (double v0 : config.v0_grid) {
        SelectionPathRow row;
        row.v0 = v0;
        row.state = run_emvs_iid(panel, graph, config, v0, priors, warm);
        row.theta = row.state.theta;
        SelectionThreshold th = selection_threshold(v0, config.v1, row.state.theta);
        row.threshold = th.value;
        row.threshold_degenerate = th.degenerate;
        rows.push_back(std::move(row));
        if (warm_start) warm = &rows.back().state;
    }
    return rows;
}

}  // namespace gci
