#include "gci/mcmc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gci/dense.hpp"
#include "gci/errors.hpp"

namespace gci {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw numerical_error(std::string(what) + ": matrix is not positive definite");
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    symmetrize(inv);
    return inv;
}

// Disturbance-block residuals eta_t = R'(alpha_{t+1} - c - T alpha_t) computed
// from the structural layout directly: rows (0,1,2) are the trend, slope and
// seasonal blocks.
struct StateResiduals {
    Eigen::MatrixXd u, v, w;  // each n x (T-1)
};

StateResiduals state_residuals(const Eigen::MatrixXd& alpha, int n, int seasonal_period,
                               const Eigen::MatrixXd& Phi, const Eigen::VectorXd& c_slope) {
    const Eigen::Index T = alpha.cols();
    StateResiduals r;
    if (T < 2) {
        r.u.resize(n, 0);
        r.v.resize(n, 0);
        r.w.resize(n, 0);
        return r;
    }
    const auto prev = alpha.leftCols(T - 1);
    const auto next = alpha.rightCols(T - 1);
    r.u = next.middleRows(0, n) - prev.middleRows(0, n) - prev.middleRows(n, n);
    r.v = next.middleRows(n, n) - Phi * prev.middleRows(n, n);
    r.v.colwise() -= c_slope;
    r.w = next.middleRows(2 * n, n);
    for (int b = 0; b < seasonal_period - 1; ++b) r.w += prev.middleRows((2 + b) * n, n);
    return r;
}

double log_normal_prior(const Eigen::VectorXd& x, double variance) {
    return -0.5 * x.squaredNorm() / variance;
}

}  // namespace

void McmcConfig::validate() const {
    if (n_iters < 1) throw std::invalid_argument("mcmc config: need at least one iteration");
    if (n_burnin < 0 || n_burnin >= n_iters)
        throw std::invalid_argument("mcmc config: burn-in must be shorter than the run");
    if (thinning < 1) throw std::invalid_argument("mcmc config: thinning must be >= 1");
    if (proposal_scales.size() > 0 && (proposal_scales.array() < 0.0).any())
        throw std::invalid_argument("mcmc config: proposal scales must be non-negative");
}

ChainInit ChainInit::defaults(const StructuralSpec& spec) {
    spec.validate();
    const int n = spec.n_series, m = spec.n_state();
    ChainInit init;
    init.theta = Eigen::VectorXd::Zero(n * n);
    init.iota = false;
    init.D = Eigen::VectorXd::Zero(n);
    init.Sigma = Eigen::MatrixXd::Identity(n, n);
    init.Sigma_u = Eigen::MatrixXd::Identity(n, n);
    init.Sigma_v = Eigen::MatrixXd::Identity(n, n);
    init.Sigma_w = Eigen::MatrixXd::Identity(n, n);
    init.a1 = Eigen::VectorXd::Zero(m);
    init.P1 = Eigen::MatrixXd::Identity(m, m);
    if (spec.slope_mode == SlopeMode::random_walk)
        init.P1.block(n, n, n, n) = 1e6 * Eigen::MatrixXd::Identity(n, n);
    return init;
}

double var1_transition_loglik(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                              const Eigen::VectorXd& D, const Eigen::MatrixXd& Sigma_v) {
    const Eigen::Index n = tau.rows(), T = tau.cols();
    if (Phi.rows() != n || Phi.cols() != n || D.size() != n || Sigma_v.rows() != n ||
        Sigma_v.cols() != n)
        throw std::invalid_argument("var1 loglik: dimension mismatch");
    if (T < 2) return 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma_v);
    if (llt.info() != Eigen::Success)
        throw numerical_error("var1 loglik: slope noise covariance is not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));

    Eigen::MatrixXd resid = tau.rightCols(T - 1) - Phi * tau.leftCols(T - 1);
    const Eigen::VectorXd c = (Eigen::MatrixXd::Identity(n, n) - Phi) * D;
    resid.colwise() -= c;
    const double quad = llt.matrixL().solve(resid).squaredNorm();
    return -0.5 * (static_cast<double>(T - 1) * (static_cast<double>(n) * kLog2Pi + logdet) +
                   quad);
}

PhiStepResult sample_phi_mh(const StationaryVarParams<double>& current,
                            const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Sigma_v,
                            const Eigen::VectorXd& D, const PhiStepSettings& settings,
                            Rng& rng) {
    const Eigen::Index n = current.dim();
    if (settings.proposal_scales.size() != stationary_param_count(n))
        throw std::invalid_argument("phi step: proposal scale count disagrees with dimension");
    if (!(settings.prior_variance > 0.0))
        throw std::invalid_argument("phi step: prior variance must be positive");
    if (!(settings.iota_prior > 0.0) || !(settings.iota_prior < 1.0))
        throw std::invalid_argument("phi step: reflection prior must lie in (0,1)");

    PhiStepResult out;
    out.params = current;
    if (tau.cols() < 2 && settings.log_target_override == nullptr) return out;

    auto log_target = [&](const StationaryVarParams<double>& p) -> double {
        if (settings.log_target_override) return (*settings.log_target_override)(p);
        double ll;
        try {
            ll = var1_transition_loglik(tau, to_phi(p).Phi, D, Sigma_v);
        } catch (const numerical_error&) {
            return -std::numeric_limits<double>::infinity();  // unmappable proposal
        }
        ll += log_normal_prior(pack_stationary(p), settings.prior_variance);
        ll += std::log(p.reflect ? settings.iota_prior : 1.0 - settings.iota_prior);
        return ll;
    };

    double target_cur = log_target(out.params);

    // Random-walk move on the flat coordinates, reflection held.
    Eigen::VectorXd theta = pack_stationary(out.params);
    Eigen::VectorXd proposal =
        theta + (settings.proposal_scales.array() * rng.normal_vec(theta.size()).array())
                    .matrix();
    StationaryVarParams<double> cand =
        unpack_stationary(proposal, out.params.reflect, out.params.anchor);
    const double target_cand = log_target(cand);
    if (std::log(rng.uniform()) < target_cand - target_cur) {
        out.params = cand;
        target_cur = target_cand;
        out.accepted = true;
    }

    // Independent Bernoulli proposal for the reflection, coordinates held.
    const bool iota_prop = rng.bernoulli(0.5);
    if (iota_prop == out.params.reflect) {
        out.iota_accepted = true;
    } else {
        StationaryVarParams<double> flip = out.params;
        flip.reflect = iota_prop;
        const double target_flip = log_target(flip);
        if (std::log(rng.uniform()) < target_flip - target_cur) {
            out.params = flip;
            out.iota_accepted = true;
        }
    }
    return out;
}

GaussianMoments d_conditional(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                              const Eigen::MatrixXd& Sigma_v, double prior_variance) {
    const Eigen::Index n = tau.rows(), T = tau.cols();
    if (Phi.rows() != n || Phi.cols() != n || Sigma_v.rows() != n || Sigma_v.cols() != n)
        throw std::invalid_argument("d conditional: dimension mismatch");
    if (!(prior_variance > 0.0))
        throw std::invalid_argument("d conditional: prior variance must be positive");

    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    GaussianMoments out;
    if (T < 2) {
        out.mean = Eigen::VectorXd::Zero(n);
        out.cov = prior_variance * eye;
        return out;
    }
    const Eigen::MatrixXd sv_inv = spd_inverse(Sigma_v, "d conditional");
    const Eigen::MatrixXd imp = eye - Phi;
    Eigen::MatrixXd prec =
        eye / prior_variance + static_cast<double>(T - 1) * imp.transpose() * sv_inv * imp;
    symmetrize(prec);
    const Eigen::VectorXd resid_sum =
        tau.rightCols(T - 1).rowwise().sum() - Phi * tau.leftCols(T - 1).rowwise().sum();
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
        throw numerical_error("d conditional: posterior precision is not positive definite");
    out.cov = llt.solve(eye);
    symmetrize(out.cov);
    out.mean = llt.solve(imp.transpose() * (sv_inv * resid_sum));
    return out;
}

Eigen::VectorXd sample_d(const Eigen::MatrixXd& tau, const Eigen::MatrixXd& Phi,
                         const Eigen::MatrixXd& Sigma_v, Rng& rng, double prior_variance) {
    const GaussianMoments mom = d_conditional(tau, Phi, Sigma_v, prior_variance);
    return mom.mean + sym_sqrt(mom.cov) * rng.normal_vec(mom.mean.size());
}

Eigen::MatrixXd sample_gwishart_posterior(const GWishartPrior& prior,
                                          const Eigen::MatrixXd& scatter, double data_df,
                                          Rng& rng) {
    prior.validate();
    if (scatter.rows() != prior.scale.rows() || scatter.cols() != prior.scale.cols())
        throw std::invalid_argument("gwishart posterior: scatter dimension mismatch");
    if (data_df < 0.0) throw std::invalid_argument("gwishart posterior: negative data df");
    Eigen::MatrixXd scale = prior.scale_multiplier * prior.scale + scatter;
    symmetrize(scale);
    return sample_gwishart(prior.df + data_df, scale, prior.graph, rng);
}

PosteriorDraws run_chain(const Eigen::MatrixXd& y_tilde, const StructuralSpec& spec,
                         const ChainPriors& priors, const ChainInit& init,
                         const McmcConfig& config) {
    config.validate();
    spec.validate();
    const int n = spec.n_series, S = spec.seasonal_period, m = spec.n_state();
    const Eigen::Index T = y_tilde.cols();
    const bool stationary = spec.slope_mode == SlopeMode::stationary;
    if (y_tilde.rows() != n)
        throw std::invalid_argument("run_chain: data row count disagrees with the spec");
    if (T < 1) throw std::invalid_argument("run_chain: need at least one time point");
    if (stationary && init.theta.size() != stationary_param_count(n))
        throw std::invalid_argument("run_chain: slope-map parameter count mismatch");
    if (init.D.size() != n || init.Sigma.rows() != n || init.Sigma_u.rows() != n ||
        init.Sigma_v.rows() != n || init.Sigma_w.rows() != n)
        throw std::invalid_argument("run_chain: initial parameter dimensions disagree");
    if (init.a1.size() != m || init.P1.rows() != m || init.P1.cols() != m)
        throw std::invalid_argument("run_chain: initial state law dimensions disagree");
    if (!(priors.phi_param_variance > 0.0))
        throw std::invalid_argument("run_chain: slope-map prior variance must be positive");
    if (priors.cov.H.rows() != n || priors.cov.H.cols() != n)
        throw std::invalid_argument("run_chain: prior scale dimension disagrees");

    std::vector<Eigen::Index> complete;
    for (Eigen::Index t = 0; t < T; ++t)
        if (y_tilde.col(t).array().isFinite().all()) complete.push_back(t);

    GWishartPrior obs_prior{priors.cov.nu, priors.cov.H, spec.adjacency, 1.0};
    const double ks[3] = {priors.cov.k1, priors.cov.k2, priors.cov.k3};
    GWishartPrior block_prior[3];
    for (int b = 0; b < 3; ++b)
        block_prior[b] = GWishartPrior{priors.cov.nu, priors.cov.H, spec.adjacency,
                                       ks[b] * ks[b] * static_cast<double>(n + 1)};

    Eigen::VectorXd theta = init.theta;
    bool iota = init.iota;
    ComponentParams<double> params;
    params.Sigma = init.Sigma;
    params.Sigma_u = init.Sigma_u;
    params.Sigma_v = init.Sigma_v;
    params.Sigma_w = init.Sigma_w;
    params.D = init.D;
    params.Phi = Eigen::MatrixXd::Identity(n, n);  // placeholder; set per sweep

    Eigen::VectorXd base_scales = config.proposal_scales.size() > 0
                                      ? config.proposal_scales
                                      : Eigen::VectorXd::Constant(n * n, 0.1);
    if (stationary && base_scales.size() != stationary_param_count(n))
        throw std::invalid_argument("run_chain: proposal scale count disagrees with dimension");
    double log_scale_mult = 0.0;

    Rng rng(config.rng_seed);
    PosteriorDraws draws;
    const int retained = (config.n_iters - config.n_burnin + config.thinning - 1) / config.thinning;
    draws.alpha.reserve(retained);

    for (int it = 0; it < config.n_iters; ++it) {
        try {
            // Re-derive the slope coefficient against the current anchor.
            StationaryVarParams<double> sp;
            if (stationary) {
                sp = unpack_stationary(theta, iota, params.Sigma_v);
                params.Phi = to_phi(sp).Phi;
            }

            StateSpaceSystem<double> sys = detail::build_system(spec, params, init.a1, init.P1);
            Eigen::MatrixXd alpha = sample_states(sys, y_tilde, rng);
            const Eigen::MatrixXd tau = alpha.middleRows(n, n);

            if (stationary) {
                PhiStepSettings step;
                step.proposal_scales = base_scales * std::exp(log_scale_mult);
                step.prior_variance = priors.phi_param_variance;
                step.iota_prior = priors.iota_prior;
                PhiStepResult res = sample_phi_mh(sp, tau, params.Sigma_v, params.D, step, rng);
                theta = pack_stationary(res.params);
                iota = res.params.reflect;
                params.Phi = to_phi(res.params).Phi;
                if (config.adapt_proposals && it < config.n_burnin)
                    log_scale_mult += std::pow(static_cast<double>(it + 1), -0.6) *
                                      ((res.accepted ? 1.0 : 0.0) - 0.25);
                if (it >= config.n_burnin) {
                    ++draws.phi_proposals;
                    ++draws.iota_proposals;
                    draws.phi_accepts += res.accepted ? 1 : 0;
                    draws.iota_accepts += res.iota_accepted ? 1 : 0;
                }
                params.D = sample_d(tau, params.Phi, params.Sigma_v, rng, 1.0);
            }

            if (config.sample_observation_noise) {
                Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(n, n);
                for (Eigen::Index t : complete) {
                    const Eigen::VectorXd r = y_tilde.col(t) - sys.z * alpha.col(t);
                    scatter.noalias() += r * r.transpose();
                }
                symmetrize(scatter);
                const Eigen::MatrixXd prec = sample_gwishart_posterior(
                    obs_prior, scatter, static_cast<double>(complete.size()), rng);
                params.Sigma = spd_inverse(prec, "run_chain: observation precision");
            }

            if (config.sample_state_noise && T >= 2) {
                const Eigen::VectorXd c_slope =
                    stationary
                        ? ((Eigen::MatrixXd::Identity(n, n) - params.Phi) * params.D).eval()
                        : Eigen::VectorXd::Zero(n).eval();
                const Eigen::MatrixXd phi_eff =
                    stationary ? params.Phi : Eigen::MatrixXd::Identity(n, n);
                StateResiduals resid = state_residuals(alpha, n, S, phi_eff, c_slope);
                const double df = static_cast<double>(T - 1);
                Eigen::MatrixXd* dest[3] = {&params.Sigma_u, &params.Sigma_v, &params.Sigma_w};
                const Eigen::MatrixXd* res[3] = {&resid.u, &resid.v, &resid.w};
                for (int b = 0; b < 3; ++b) {
                    Eigen::MatrixXd scatter = (*res[b]) * res[b]->transpose();
                    symmetrize(scatter);
                    const Eigen::MatrixXd prec =
                        sample_gwishart_posterior(block_prior[b], scatter, df, rng);
                    *dest[b] = spd_inverse(prec, "run_chain: state precision");
                }
            }

            if (it >= config.n_burnin && (it - config.n_burnin) % config.thinning == 0) {
                draws.alpha.push_back(std::move(alpha));
                if (stationary) {
                    draws.Phi.push_back(params.Phi);
                    draws.D.push_back(params.D);
                }
                draws.Sigma.push_back(params.Sigma);
                draws.Sigma_u.push_back(params.Sigma_u);
                draws.Sigma_v.push_back(params.Sigma_v);
                draws.Sigma_w.push_back(params.Sigma_w);
                draws.iota.push_back(iota ? 1 : 0);
            }
        } catch (const std::exception& e) {
            throw numerical_error("run_chain: sweep " + std::to_string(it) + ": " + e.what());
        }
    }
    return draws;
}

PosteriorDraws run_univariate_chain(const Eigen::VectorXd& y_tilde, int seasonal_period,
                                    SlopeMode slope_mode, const UnivariatePriors& priors,
                                    const McmcConfig& config) {
    config.validate();
    if (seasonal_period < 2)
        throw std::invalid_argument("univariate chain: seasonal period must be >= 2");
    const Eigen::Index T = y_tilde.size();
    if (T < 2) throw std::invalid_argument("univariate chain: need at least two time points");
    if (!(priors.sigma_shape > 0.0) || !(priors.sigma_rate_factor > 0.0) ||
        !(priors.state_shape > 0.0) || !(priors.state_rate_factor > 0.0) ||
        !(priors.d_prior_sd > 0.0) || !(priors.phi_prior_sd > 0.0))
        throw std::invalid_argument("univariate chain: prior hyperparameters must be positive");

    const double ss = pooled_variance(y_tilde);
    const double b_sigma = priors.sigma_rate_factor * ss;
    const double b_state = priors.state_rate_factor * ss;
    const bool stationary = slope_mode == SlopeMode::stationary;
    const int S = seasonal_period, m = S + 1;

    StructuralSpec spec;
    spec.n_series = 1;
    spec.seasonal_period = S;
    spec.slope_mode = slope_mode;
    spec.adjacency = Adjacency::Ones(1, 1);

    const Eigen::MatrixXd y_row = y_tilde.transpose();
    std::vector<Eigen::Index> complete;
    for (Eigen::Index t = 0; t < T; ++t)
        if (std::isfinite(y_tilde(t))) complete.push_back(t);

    double sigma2 = ss, sigma_u2 = ss, sigma_v2 = ss, sigma_w2 = ss;
    double d = 0.0, phi = 0.0;
    Eigen::VectorXd a1 = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd P1 = Eigen::MatrixXd::Identity(m, m);
    if (!stationary) P1(1, 1) = 1e6;

    Rng rng(config.rng_seed);
    PosteriorDraws draws;
    auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };

    for (int it = 0; it < config.n_iters; ++it) {
        try {
            ComponentParams<double> params;
            params.Sigma = one(sigma2);
            params.Sigma_u = one(sigma_u2);
            params.Sigma_v = one(sigma_v2);
            params.Sigma_w = one(sigma_w2);
            params.D = Eigen::VectorXd::Constant(1, d);
            params.Phi = one(phi);
            StateSpaceSystem<double> sys = detail::build_system(spec, params, a1, P1);

            Eigen::MatrixXd alpha = sample_states(sys, y_row, rng);
            const Eigen::Index nt = T - 1;
            const auto tau_prev = alpha.row(1).head(nt);
            const auto tau_next = alpha.row(1).tail(nt);

            if (stationary) {
                // d given phi: the transition mean is (1-phi) d.
                const double imp = 1.0 - phi;
                const double prec_d = 1.0 / (priors.d_prior_sd * priors.d_prior_sd) +
                                      static_cast<double>(nt) * imp * imp / sigma_v2;
                const double mean_d =
                    imp / sigma_v2 * (tau_next.sum() - phi * tau_prev.sum()) / prec_d;
                d = mean_d + rng.normal() / std::sqrt(prec_d);

                // phi given d: centered regression tau_{t+1}-d on tau_t-d,
                // prior truncated to the stationary interval.
                const Eigen::ArrayXd s = tau_prev.transpose().array() - d;
                const Eigen::ArrayXd r = tau_next.transpose().array() - d;
                const double prec_phi = 1.0 / (priors.phi_prior_sd * priors.phi_prior_sd) +
                                        (s * s).sum() / sigma_v2;
                const double mean_phi = (s * r).sum() / sigma_v2 / prec_phi;
                const double sd_phi = 1.0 / std::sqrt(prec_phi);
                bool drawn = false;
                for (int attempt = 0; attempt < 100000; ++attempt) {
                    const double cand = mean_phi + sd_phi * rng.normal();
                    if (cand > -1.0 && cand < 1.0) {
                        phi = cand;
                        drawn = true;
                        break;
                    }
                }
                if (!drawn)
                    throw numerical_error(
                        "slope coefficient rejection sampler exhausted its attempts");
            }

            // Observation variance over the observed times.
            double obs_ss = 0.0;
            for (Eigen::Index t : complete) {
                const double e = y_tilde(t) - alpha(0, t) - alpha(2, t);
                obs_ss += e * e;
            }
            sigma2 = 1.0 / rng.gamma(priors.sigma_shape + 0.5 * static_cast<double>(complete.size()),
                                     b_sigma + 0.5 * obs_ss);

            // State variances from the drawn path.
            const double c_slope = stationary ? (1.0 - phi) * d : 0.0;
            const double phi_eff = stationary ? phi : 1.0;
            double uss = 0.0, vss = 0.0, wss = 0.0;
            for (Eigen::Index t = 0; t + 1 < T; ++t) {
                const double ur = alpha(0, t + 1) - alpha(0, t) - alpha(1, t);
                const double vr = alpha(1, t + 1) - phi_eff * alpha(1, t) - c_slope;
                double wr = alpha(2, t + 1);
                for (int b = 0; b < S - 1; ++b) wr += alpha(2 + b, t);
                uss += ur * ur;
                vss += vr * vr;
                wss += wr * wr;
            }
            const double state_shape = priors.state_shape + 0.5 * static_cast<double>(nt);
            sigma_u2 = 1.0 / rng.gamma(state_shape, b_state + 0.5 * uss);
            sigma_v2 = 1.0 / rng.gamma(state_shape, b_state + 0.5 * vss);
            sigma_w2 = 1.0 / rng.gamma(state_shape, b_state + 0.5 * wss);

            if (it >= config.n_burnin && (it - config.n_burnin) % config.thinning == 0) {
                draws.alpha.push_back(std::move(alpha));
                if (stationary) {
                    draws.Phi.push_back(one(phi));
                    draws.D.push_back(Eigen::VectorXd::Constant(1, d));
                }
                draws.Sigma.push_back(one(sigma2));
                draws.Sigma_u.push_back(one(sigma_u2));
                draws.Sigma_v.push_back(one(sigma_v2));
                draws.Sigma_w.push_back(one(sigma_w2));
                draws.iota.push_back(0);
            }
        } catch (const std::exception& e) {
            throw numerical_error("univariate chain: sweep " + std::to_string(it) + ": " +
                                  e.what());
        }
    }
    return draws;
}

InefficiencyFactor inefficiency_factor(const Eigen::VectorXd& chain) {
    const Eigen::Index N = chain.size();
    if (N < 100) throw std::invalid_argument("inefficiency factor: need at least 100 points");
    const double mean = chain.mean();
    const Eigen::VectorXd x = chain.array() - mean;
    const double gamma0 = x.squaredNorm() / static_cast<double>(N);

    InefficiencyFactor out;
    if (!(gamma0 > 1e-24 * (1.0 + mean * mean))) {
        out.degenerate = true;
        return out;
    }
    const Eigen::Index L = std::min<Eigen::Index>(1000, N / 10);
    double acc = 0.0;
    for (Eigen::Index l = 1; l <= L; ++l) {
        const double u = static_cast<double>(l) / static_cast<double>(L);
        const double w = u <= 0.5 ? 1.0 - 6.0 * u * u + 6.0 * u * u * u
                                  : 2.0 * (1.0 - u) * (1.0 - u) * (1.0 - u);
        const double gamma_l =
            x.head(N - l).dot(x.tail(N - l)) / static_cast<double>(N);
        acc += w * gamma_l / gamma0;
    }
    out.value = 1.0 + 2.0 * acc;
    return out;
}

}  // namespace gci
