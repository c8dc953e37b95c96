#include "gci/causal.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace gci {

namespace {

std::vector<double> sorted_row(const Eigen::MatrixXd& m, Eigen::Index r) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
    std::sort(v.begin(), v.end());
    return v;
}

// sup of F_a - F_b over the pooled points, floored at zero; inputs sorted.
// The walk consumes every tie at the current point before evaluating, which
// is exactly the right-continuous ECDF value there.
double ks_directed(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    while (i < a.size()) {
        const double x = (j == b.size() || a[i] <= b[j]) ? a[i] : b[j];
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        best = std::max(best, static_cast<double>(i) / na - static_cast<double>(j) / nb);
    }
    return best;  // once F_a is exhausted the gap can only shrink
}

struct DirectedPair {
    double ab = 0.0, ba = 0.0;
};

// Both one-sided distances from a single merge walk.
DirectedPair ks_both(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    DirectedPair d;
    while (i < a.size() || j < b.size()) {
        const double x = (j == b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        const double gap = static_cast<double>(i) / na - static_cast<double>(j) / nb;
        d.ab = std::max(d.ab, gap);
        d.ba = std::max(d.ba, -gap);
    }
    return d;
}

// One-sided distance of the averaged counterfactual CDF against the observed
// CDF: sup_x [(1/k) sum_j F_j(x) - F_obs(x)], floored at zero. Sorted inputs.
double ks_average_directed(const std::vector<std::vector<double>>& parts,
                           const std::vector<double>& obs) {
    const std::size_t k = parts.size();
    std::vector<std::size_t> idx(k, 0);
    std::size_t io = 0;
    const double inv_k = 1.0 / static_cast<double>(k);
    const double n_obs = static_cast<double>(obs.size());
    double best = 0.0;
    for (;;) {
        double x = std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t p = 0; p < k; ++p)
            if (idx[p] < parts[p].size()) {
                x = std::min(x, parts[p][idx[p]]);
                any = true;
            }
        if (io < obs.size()) {
            x = std::min(x, obs[io]);
            any = true;
        }
        if (!any) break;
        double f_avg = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            while (idx[p] < parts[p].size() && parts[p][idx[p]] <= x) ++idx[p];
            f_avg += static_cast<double>(idx[p]) / static_cast<double>(parts[p].size());
        }
        while (io < obs.size() && obs[io] <= x) ++io;
        best = std::max(best, f_avg * inv_k - static_cast<double>(io) / n_obs);
    }
    return best;
}

// ceil(p * n)-th order statistic.
double nearest_rank(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    double raw = std::ceil(p * static_cast<double>(n) - 1e-9);
    std::size_t r = static_cast<std::size_t>(std::max(raw, 1.0));
    if (r > n) r = n;
    return sorted[r - 1];
}

double quantile_type7(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double w = h - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

}  // namespace

CounterfactualSet predict_counterfactuals(const PosteriorDraws& draws,
                                          const TimeSeriesPanel& panel, const StructuralSpec& spec,
                                          const Eigen::VectorXd& beta, Eigen::Index horizon,
                                          Eigen::Index k, Rng& rng) {
    spec.validate();
    if (horizon < 1) throw std::invalid_argument("predict_counterfactuals: horizon must be positive");
    if (k < 2) throw std::invalid_argument("predict_counterfactuals: need at least two replicates");
    const Eigen::Index R = draws.n_draws();
    if (R == 0) throw std::invalid_argument("predict_counterfactuals: no posterior draws");
    const Eigen::Index n = spec.n_series, m = spec.n_state();
    if (panel.n_series() != n)
        throw std::invalid_argument("predict_counterfactuals: panel series count disagrees with spec");
    if (draws.alpha.front().rows() != m)
        throw std::invalid_argument("predict_counterfactuals: draw dimension disagrees with spec");
    const bool stationary = spec.slope_mode == SlopeMode::stationary;
    if (stationary && (draws.Phi.size() != static_cast<std::size_t>(R) ||
                       draws.D.size() != static_cast<std::size_t>(R)))
        throw std::invalid_argument("predict_counterfactuals: stationary slope needs Phi and D draws");
    if (beta.size() != panel.n_design())
        throw std::invalid_argument("predict_counterfactuals: coefficient count disagrees with design");
    if (panel.causal_start + horizon > panel.n_times())
        throw std::invalid_argument("predict_counterfactuals: horizon runs past the panel");

    Eigen::MatrixXd reg(n, horizon);
    for (Eigen::Index h = 0; h < horizon; ++h)
        reg.col(h) = panel.design_at(panel.causal_start + h) * beta;

    CounterfactualSet out;
    out.replicates.reserve(static_cast<std::size_t>(k));
    out.draw_indices.reserve(static_cast<std::size_t>(k));
    out.seeds.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index r = j * (R - 1) / (k - 1);
        const std::uint64_t seed = rng.engine()();
        Rng rep(seed);

        ComponentParams<double> params;
        params.Sigma = draws.Sigma[r];
        params.Sigma_u = draws.Sigma_u[r];
        params.Sigma_v = draws.Sigma_v[r];
        params.Sigma_w = draws.Sigma_w[r];
        if (stationary) {
            params.Phi = draws.Phi[r];
            params.D = draws.D[r];
        }
        const auto sys = detail::build_system<double>(spec, params, Eigen::VectorXd::Zero(m),
                                                      Eigen::MatrixXd::Identity(m, m));
        const Eigen::MatrixXd Lq = sym_sqrt<double>(sys.Q);
        const Eigen::MatrixXd Ls = sym_sqrt<double>(sys.Sigma);

        Eigen::VectorXd alpha = draws.alpha[r].col(draws.alpha[r].cols() - 1);
        Eigen::MatrixXd y(n, horizon);
        for (Eigen::Index h = 0; h < horizon; ++h) {
            alpha = sys.c + sys.T_mat * alpha + sys.R * (Lq * rep.normal_vec(3 * n));
            y.col(h) = sys.z * alpha + reg.col(h) + Ls * rep.normal_vec(n);
        }
        out.replicates.push_back(std::move(y));
        out.draw_indices.push_back(r);
        out.seeds.push_back(seed);
    }
    return out;
}

DifferenceSummary difference_estimand(const Eigen::MatrixXd& observed,
                                      const std::vector<Eigen::MatrixXd>& counterfactuals) {
    if (counterfactuals.empty())
        throw std::invalid_argument("difference_estimand: no counterfactual draws");
    const Eigen::Index n = observed.rows(), P = observed.cols();
    if (n < 1 || P < 1) throw std::invalid_argument("difference_estimand: empty window");
    for (const auto& c : counterfactuals)
        if (c.rows() != n || c.cols() != P)
            throw std::invalid_argument(
                "difference_estimand: counterfactual shape disagrees with observed");

    DifferenceSummary out;
    out.median.resize(n);
    out.lo95.resize(n);
    out.hi95.resize(n);
    std::vector<double> avg(counterfactuals.size());
    std::vector<Eigen::Index> times;
    for (Eigen::Index i = 0; i < n; ++i) {
        times.clear();
        for (Eigen::Index t = 0; t < P; ++t)
            if (std::isfinite(observed(i, t))) times.push_back(t);
        if (times.empty()) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            out.median(i) = out.lo95(i) = out.hi95(i) = nan;
            continue;
        }
        for (std::size_t r = 0; r < counterfactuals.size(); ++r) {
            double s = 0.0;
            for (Eigen::Index t : times) s += observed(i, t) - counterfactuals[r](i, t);
            avg[r] = s / static_cast<double>(times.size());
        }
        std::sort(avg.begin(), avg.end());
        out.median(i) = quantile_type7(avg, 0.5);
        out.lo95(i) = quantile_type7(avg, 0.025);
        out.hi95(i) = quantile_type7(avg, 0.975);
    }
    return out;
}

double one_sided_ks(const Eigen::VectorXd& sample_a, const Eigen::VectorXd& sample_b) {
    if (sample_a.size() == 0 || sample_b.size() == 0)
        throw std::invalid_argument("one_sided_ks: empty sample");
    if (!sample_a.allFinite() || !sample_b.allFinite())
        throw std::invalid_argument("one_sided_ks: samples must be finite");
    std::vector<double> a(sample_a.begin(), sample_a.end());
    std::vector<double> b(sample_b.begin(), sample_b.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return ks_directed(a, b);
}

std::vector<Eigen::MatrixXd> trend_partial_sums(const PosteriorDraws& draws,
                                                Eigen::Index n_series, Eigen::Index causal_start,
                                                Eigen::Index horizon) {
    const Eigen::Index R = draws.n_draws();
    if (R == 0) throw std::invalid_argument("trend_partial_sums: no posterior draws");
    if (n_series < 1 || horizon < 1 || causal_start < 0)
        throw std::invalid_argument("trend_partial_sums: empty window");
    const auto& first = draws.alpha.front();
    if (first.rows() < n_series)
        throw std::invalid_argument("trend_partial_sums: state dimension below the series count");
    if (causal_start + horizon > first.cols())
        throw std::invalid_argument("trend_partial_sums: window runs past the fitted range");

    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n_series),
                                     Eigen::MatrixXd(horizon, R));
    for (Eigen::Index r = 0; r < R; ++r) {
        const auto& a = draws.alpha[static_cast<std::size_t>(r)];
        for (Eigen::Index i = 0; i < n_series; ++i) {
            double run = 0.0;
            for (Eigen::Index h = 0; h < horizon; ++h) {
                run += a(i, causal_start + h);
                out[static_cast<std::size_t>(i)](h, r) = run;
            }
        }
    }
    return out;
}

Eigen::MatrixXd ks_trajectories(
    const std::vector<Eigen::MatrixXd>& observed_fit,
    const std::vector<std::vector<Eigen::MatrixXd>>& counterfactual_fits) {
    if (observed_fit.empty()) throw std::invalid_argument("ks_trajectories: no stores");
    if (counterfactual_fits.empty())
        throw std::invalid_argument("ks_trajectories: no counterfactual fits");
    const std::size_t n = observed_fit.size();
    const Eigen::Index P = observed_fit.front().rows();
    for (const auto& s : observed_fit)
        if (s.rows() != P || s.cols() < 1)
            throw std::invalid_argument("ks_trajectories: observed horizons disagree");
    for (const auto& fit : counterfactual_fits) {
        if (fit.size() != n) throw std::invalid_argument("ks_trajectories: store sets disagree");
        for (const auto& s : fit)
            if (s.rows() != P || s.cols() < 1)
                throw std::invalid_argument("ks_trajectories: horizons disagree across fits");
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), P);
    std::vector<std::vector<double>> parts(counterfactual_fits.size());
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index h = 0; h < P; ++h) {
            for (std::size_t j = 0; j < counterfactual_fits.size(); ++j)
                parts[j] = sorted_row(counterfactual_fits[j][i], h);
            const std::vector<double> obs = sorted_row(observed_fit[i], h);
            out(static_cast<Eigen::Index>(i), h) = ks_average_directed(parts, obs);
        }
    return out;
}

Eigen::MatrixXd ks_thresholds(const std::vector<std::vector<Eigen::MatrixXd>>& counterfactual_fits,
                              double percentile) {
    const std::size_t k = counterfactual_fits.size();
    if (k < 2) throw std::invalid_argument("ks_thresholds: need at least two counterfactual fits");
    if (!(percentile > 0.0 && percentile <= 1.0))
        throw std::invalid_argument("ks_thresholds: percentile must lie in (0, 1]");
    const std::size_t n = counterfactual_fits.front().size();
    if (n == 0) throw std::invalid_argument("ks_thresholds: no stores");
    const Eigen::Index P = counterfactual_fits.front().front().rows();
    for (const auto& fit : counterfactual_fits) {
        if (fit.size() != n) throw std::invalid_argument("ks_thresholds: store sets disagree");
        for (const auto& s : fit)
            if (s.rows() != P || s.cols() < 1)
                throw std::invalid_argument("ks_thresholds: horizons disagree across fits");
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), P);
    std::vector<std::vector<double>> rows(k);
    std::vector<double> dist;
    dist.reserve(k * (k - 1));
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index h = 0; h < P; ++h) {
            for (std::size_t j = 0; j < k; ++j) rows[j] = sorted_row(counterfactual_fits[j][i], h);
            dist.clear();
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a + 1; b < k; ++b) {
                    const DirectedPair d = ks_both(rows[a], rows[b]);
                    dist.push_back(d.ab);
                    dist.push_back(d.ba);
                }
            std::sort(dist.begin(), dist.end());
            out(static_cast<Eigen::Index>(i), h) = nearest_rank(dist, percentile);
        }
    return out;
}

CausalReport full_causal_pipeline(const TimeSeriesPanel& panel, const StructuralSpec& spec,
                                  const ChainPriors& priors, const SpikeSlabConfig& emvs_config,
                                  const McmcConfig& mcmc_config, Eigen::Index k,
                                  double percentile) {
    panel.validate();
    spec.validate();
    mcmc_config.validate();
    if (k < 2)
        throw std::invalid_argument("full_causal_pipeline: need at least two counterfactual datasets");
    if (!(percentile > 0.0 && percentile <= 1.0))
        throw std::invalid_argument("full_causal_pipeline: percentile must lie in (0, 1]");
    if (panel.n_series() != spec.n_series)
        throw std::invalid_argument("full_causal_pipeline: panel series count disagrees with spec");
    if (panel.causal_start < spec.seasonal_period + 2)
        throw std::invalid_argument(
            "full_causal_pipeline: pre-period must cover at least seasonal_period + 2 points");

    // Selection on the pre-period; keep the thresholded estimate at the
    // largest spike variance of the grid.
    const auto path = v0_grid_scan(panel, spec, emvs_config, priors.cov);
    std::size_t pick = 0;
    for (std::size_t i = 1; i < path.size(); ++i)
        if (path[i].v0 > path[pick].v0) pick = i;
    const Eigen::VectorXd beta = thresholded_beta(path[pick]);

    // A store whose candidate controls were all eliminated leaves the
    // analysis; a store that never had candidates keeps its structural fit.
    std::vector<int> keep;
    std::vector<std::string> dropped;
    for (int s = 0; s < spec.n_series; ++s) {
        bool has_candidate = false, has_control = false;
        for (Eigen::Index j = 0; j < panel.n_design(); ++j) {
            const auto& stores = panel.design[static_cast<std::size_t>(j)].stores;
            if (std::find(stores.begin(), stores.end(), s) == stores.end()) continue;
            has_candidate = true;
            if (beta(j) != 0.0) has_control = true;
        }
        if (has_candidate && !has_control)
            dropped.push_back(panel.store_ids[static_cast<std::size_t>(s)]);
        else
            keep.push_back(s);
    }
    if (keep.empty())
        throw std::runtime_error("full_causal_pipeline: selection eliminated every store");

    const PanelSubset sub = subset_panel(panel, keep);
    Eigen::VectorXd beta_work(static_cast<Eigen::Index>(sub.original_columns.size()));
    for (std::size_t a = 0; a < sub.original_columns.size(); ++a)
        beta_work(static_cast<Eigen::Index>(a)) = beta(sub.original_columns[a]);
    StructuralSpec spec_work = spec;
    spec_work.n_series = static_cast<int>(keep.size());
    spec_work.p_per_store.clear();
    spec_work.adjacency.resize(spec_work.n_series, spec_work.n_series);
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = 0; b < keep.size(); ++b)
            spec_work.adjacency(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                spec.adjacency(keep[a], keep[b]);
    ChainPriors priors_work = priors;
    priors_work.cov.H.resize(spec_work.n_series, spec_work.n_series);
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = 0; b < keep.size(); ++b)
            priors_work.cov.H(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                priors.cov.H(keep[a], keep[b]);

    const Eigen::Index T = panel.causal_start;
    const Eigen::Index P = panel.n_times() - T;
    const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
    const std::uint64_t master = mcmc_config.rng_seed;
    const Eigen::MatrixXd y_tilde = apply_regression(sub.panel, beta_work);
    const ChainInit init = ChainInit::defaults(spec_work);

    McmcConfig pre_cfg = mcmc_config;
    pre_cfg.rng_seed = mix_seed(master, 1);
    const PosteriorDraws pre = run_chain(y_tilde.leftCols(T), spec_work, priors_work, init, pre_cfg);

    Rng cf_rng(mix_seed(master, 2));
    const CounterfactualSet cf =
        predict_counterfactuals(pre, sub.panel, spec_work, beta_work, P, k, cf_rng);
    Rng diff_rng(mix_seed(master, 3));
    const CounterfactualSet diff_set = predict_counterfactuals(
        pre, sub.panel, spec_work, beta_work, P, std::max<Eigen::Index>(pre.n_draws(), 2),
        diff_rng);

    Eigen::MatrixXd reg_post(nk, P);
    for (Eigen::Index h = 0; h < P; ++h)
        reg_post.col(h) = sub.panel.design_at(T + h) * beta_work;

    // Re-fit inputs: slot 0 is the observed series, slots 1..k replace the
    // causal window by the counterfactual datasets. All are beta-residualized.
    std::vector<Eigen::MatrixXd> fit_inputs;
    fit_inputs.reserve(static_cast<std::size_t>(k) + 1);
    fit_inputs.push_back(y_tilde);
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::MatrixXd yj = y_tilde;
        yj.rightCols(P) = cf.replicates[static_cast<std::size_t>(j)] - reg_post;
        fit_inputs.push_back(std::move(yj));
    }

    const Eigen::Index n_fits = k + 1;
    std::vector<std::vector<Eigen::MatrixXd>> sums(static_cast<std::size_t>(n_fits));
    std::atomic<Eigen::Index> next(0);
    std::mutex err_mutex;
    std::exception_ptr error;
    auto work = [&]() {
        for (;;) {
            const Eigen::Index f = next.fetch_add(1);
            if (f >= n_fits) return;
            try {
                McmcConfig cfg = mcmc_config;
                cfg.rng_seed = mix_seed(master, 16 + static_cast<std::uint64_t>(f));
                const PosteriorDraws d =
                    run_chain(fit_inputs[static_cast<std::size_t>(f)], spec_work, priors_work, init, cfg);
                sums[static_cast<std::size_t>(f)] = trend_partial_sums(d, nk, T, P);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!error) error = std::current_exception();
                next.store(n_fits);
                return;
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n_workers = static_cast<unsigned>(
        std::min<Eigen::Index>(static_cast<Eigen::Index>(hw), n_fits));
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    const std::vector<std::vector<Eigen::MatrixXd>> cf_sums(sums.begin() + 1, sums.end());
    CausalReport report;
    report.store_ids = sub.panel.store_ids;
    report.dropped_stores = std::move(dropped);
    report.causal_start = T;
    report.k = k;
    report.percentile = percentile;
    report.beta = std::move(beta);
    report.ks = ks_trajectories(sums.front(), cf_sums);
    report.threshold = ks_thresholds(cf_sums, percentile);
    report.significant = (report.ks.array() > report.threshold.array()).cast<std::uint8_t>();
    const Eigen::MatrixXd observed_window = sub.panel.y.middleCols(T, P);
    report.difference = difference_estimand(observed_window, diff_set.replicates);
    return report;
}

}  // namespace gci
