#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gci/mcmc.hpp"

namespace {

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& s) {
    return Eigen::LLT<Eigen::MatrixXd>(s).matrixL();
}

// Stationary VAR(1) path with noise covariance M and intercept (I-Phi)D.
Eigen::MatrixXd simulate_var(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& D,
                             const Eigen::MatrixXd& M, Eigen::Index T, gci::Rng& rng) {
    const Eigen::Index n = Phi.rows();
    const Eigen::MatrixXd U = gci::solve_yule_walker(Phi, M);
    const Eigen::MatrixXd noise = chol_lower(M);
    Eigen::MatrixXd tau(n, T);
    tau.col(0) = D + chol_lower(U) * rng.normal_vec(n);
    const Eigen::VectorXd c = (Eigen::MatrixXd::Identity(n, n) - Phi) * D;
    for (Eigen::Index t = 1; t < T; ++t)
        tau.col(t) = c + Phi * tau.col(t - 1) + noise * rng.normal_vec(n);
    return tau;
}

}  // namespace

TEST_CASE("flat coordinates round-trip through the structured form") {
    Eigen::VectorXd theta(9);
    theta << 0.3, -0.7, 0.2, -0.1, 0.4, 0.05, 0.6, -0.25, 0.15;
    Eigen::MatrixXd anchor(3, 3);
    anchor << 1.0, 0.2, 0.0, 0.2, 1.3, -0.1, 0.0, -0.1, 0.9;
    auto p = gci::unpack_stationary<double>(theta, true, anchor);
    Eigen::VectorXd back = gci::pack_stationary(p);
    CHECK((back - theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.reflect);
}

TEST_CASE("transition log likelihood matches the longhand sum") {
    Eigen::MatrixXd tau(2, 3);
    tau << 0.5, 1.0, -0.3, 0.2, -0.1, 0.4;
    Eigen::MatrixXd Phi(2, 2);
    Phi << 0.5, 0.1, -0.2, 0.3;
    Eigen::VectorXd D(2);
    D << 0.3, -0.2;
    Eigen::MatrixXd Sv(2, 2);
    Sv << 1.2, 0.3, 0.3, 0.8;

    const Eigen::MatrixXd Sv_inv = Sv.inverse();
    const Eigen::VectorXd c = (Eigen::MatrixXd::Identity(2, 2) - Phi) * D;
    double expect = 0.0;
    for (int t = 0; t < 2; ++t) {
        const Eigen::VectorXd r = tau.col(t + 1) - Phi * tau.col(t) - c;
        expect += -0.5 * (2.0 * std::log(2.0 * M_PI) + std::log(Sv.determinant()) +
                          r.dot(Sv_inv * r));
    }
    CHECK(gci::var1_transition_loglik(tau, Phi, D, Sv) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(gci::var1_transition_loglik(tau.leftCols(1), Phi, D, Sv) == 0.0);
}

TEST_CASE("slope mean conditional: pinned scalar case") {
    Eigen::MatrixXd tau(1, 10);
    tau(0, 0) = 0.7;
    tau.rightCols(9).setOnes();
    const Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(1, 1);
    const Eigen::MatrixXd Sv = Eigen::MatrixXd::Identity(1, 1);

    auto mom = gci::d_conditional(tau, Phi, Sv, 1.0);
    CHECK(mom.mean(0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(mom.cov(0, 0) == doctest::Approx(0.1).epsilon(1e-12));

    auto prior_only = gci::d_conditional(tau.leftCols(1), Phi, Sv, 2.5);
    CHECK(prior_only.mean(0) == 0.0);
    CHECK(prior_only.cov(0, 0) == 2.5);
}

TEST_CASE("slope mean conditional concentrates at the generating value") {
    Eigen::MatrixXd Phi(2, 2);
    Phi << 0.4, 0.1, 0.0, 0.3;
    Eigen::VectorXd D0(2);
    D0 << 0.5, -0.3;
    Eigen::MatrixXd Sv(2, 2);
    Sv << 0.5, 0.1, 0.1, 0.4;

    gci::Rng rng(314);
    const Eigen::MatrixXd tau = simulate_var(Phi, D0, Sv, 5001, rng);
    auto mom = gci::d_conditional(tau, Phi, Sv, 1.0);
    CHECK((mom.mean - D0).cwiseAbs().maxCoeff() < 0.1);

    // Draw mean agrees with the conditional mean.
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(2);
    const int reps = 400;
    for (int i = 0; i < reps; ++i) acc += gci::sample_d(tau, Phi, Sv, rng, 1.0);
    acc /= reps;
    const double se = std::sqrt(mom.cov.diagonal().maxCoeff() / reps);
    CHECK((acc - mom.mean).cwiseAbs().maxCoeff() < 4.0 * se + 1e-12);
}

TEST_CASE("coefficient move returns the current position when there are no transitions") {
    Eigen::VectorXd theta(4);
    theta << 0.2, -0.1, 0.3, 0.05;
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(2, 2);
    auto cur = gci::unpack_stationary<double>(theta, false, M);

    gci::PhiStepSettings settings;
    settings.proposal_scales = Eigen::VectorXd::Constant(4, 0.2);
    gci::Rng rng(9);
    auto res = gci::sample_phi_mh(cur, Eigen::MatrixXd::Zero(2, 1), M,
                                  Eigen::VectorXd::Zero(2), settings, rng);
    CHECK_FALSE(res.accepted);
    CHECK((gci::pack_stationary(res.params) - theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero proposal scale accepts every coefficient move") {
    Eigen::VectorXd theta(4);
    theta << 0.1, 0.2, -0.3, 0.0;
    Eigen::MatrixXd M(2, 2);
    M << 1.0, 0.2, 0.2, 0.8;
    auto cur = gci::unpack_stationary<double>(theta, false, M);
    gci::Rng data_rng(21);
    const Eigen::MatrixXd tau =
        simulate_var(gci::to_phi(cur).Phi, Eigen::VectorXd::Zero(2), M, 200, data_rng);

    gci::PhiStepSettings settings;
    settings.proposal_scales = Eigen::VectorXd::Zero(4);
    gci::Rng rng(22);
    int accepted = 0;
    for (int i = 0; i < 100; ++i) {
        auto res = gci::sample_phi_mh(cur, tau, M, Eigen::VectorXd::Zero(2), settings, rng);
        accepted += res.accepted ? 1 : 0;
        CHECK((gci::pack_stationary(res.params) - theta).cwiseAbs().maxCoeff() == 0.0);
        cur = res.params;
    }
    CHECK(accepted == 100);
}

TEST_CASE("flat target override accepts every proposal") {
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(2, 2);
    auto cur = gci::unpack_stationary<double>(Eigen::VectorXd::Zero(4), false, M);

    std::function<double(const gci::StationaryVarParams<double>&)> flat =
        [](const gci::StationaryVarParams<double>&) { return 0.0; };
    gci::PhiStepSettings settings;
    settings.proposal_scales = Eigen::VectorXd::Constant(4, 0.3);
    settings.log_target_override = &flat;

    gci::Rng rng(33);
    int accepted = 0;
    for (int i = 0; i < 300; ++i) {
        auto res = gci::sample_phi_mh(cur, Eigen::MatrixXd::Zero(2, 0), M,
                                      Eigen::VectorXd::Zero(2), settings, rng);
        accepted += res.accepted ? 1 : 0;
        cur = res.params;
    }
    CHECK(accepted == 300);
}

TEST_CASE("coefficient posterior concentrates at the generating matrix") {
    Eigen::VectorXd theta0(4);
    theta0 << 0.3, -0.2, 0.1, 0.25;
    Eigen::MatrixXd M(2, 2);
    M << 1.0, 0.3, 0.3, 1.0;
    auto p0 = gci::unpack_stationary<double>(theta0, false, M);
    const Eigen::MatrixXd Phi0 = gci::to_phi(p0).Phi;

    gci::Rng data_rng(77);
    const Eigen::MatrixXd tau = simulate_var(Phi0, Eigen::VectorXd::Zero(2), M, 10000, data_rng);

    // The posterior at T = 10^4 is tight, so adapt the walk during burn-in the
    // same way the full chain does and freeze it afterwards.
    const Eigen::VectorXd base = Eigen::VectorXd::Constant(4, 0.1);
    double log_mult = 0.0;
    auto cur = gci::unpack_stationary<double>(Eigen::VectorXd::Zero(4), false, M);
    gci::Rng rng(78);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 2);
    int kept = 0, accepted = 0;
    const int sweeps = 4000, burn = 1500;
    for (int i = 0; i < sweeps; ++i) {
        gci::PhiStepSettings settings;
        settings.proposal_scales = base * std::exp(log_mult);
        auto res = gci::sample_phi_mh(cur, tau, M, Eigen::VectorXd::Zero(2), settings, rng);
        cur = res.params;
        if (i < burn) {
            log_mult += std::pow(double(i + 1), -0.6) * ((res.accepted ? 1.0 : 0.0) - 0.25);
        } else {
            accepted += res.accepted ? 1 : 0;
            mean += gci::to_phi(cur).Phi;
            ++kept;
        }
    }
    mean /= kept;
    CHECK((mean - Phi0).cwiseAbs().maxCoeff() < 0.1);
    const double rate = double(accepted) / kept;
    CHECK(rate > 0.08);  // the adapted move actually mixes
    CHECK(rate < 0.7);
}

TEST_CASE("posterior draw helper composes df and scale the stated way") {
    Eigen::MatrixXd H(2, 2);
    H << 1.0, 0.2, 0.2, 0.7;
    Eigen::MatrixXd S(2, 2);
    S << 3.0, -0.4, -0.4, 2.0;
    gci::GWishartPrior prior{1.5, H, gci::Adjacency::Ones(2, 2), 2.5};

    gci::Rng r1(11), r2(11);
    const Eigen::MatrixXd a = gci::sample_gwishart_posterior(prior, S, 7.0, r1);
    const Eigen::MatrixXd b = gci::sample_gwishart(8.5, (2.5 * H + S).eval(), prior.graph, r2);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("state draw wrapper: near-noiseless limit pins the draw to the data") {
    gci::StructuralSpec spec;
    spec.n_series = 2;
    spec.seasonal_period = 3;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::Adjacency::Ones(2, 2);
    gci::ComponentParams<double> params;
    params.Sigma = 1e-8 * Eigen::MatrixXd::Identity(2, 2);
    params.Sigma_u = 0.01 * Eigen::MatrixXd::Identity(2, 2);
    params.Sigma_v = 0.01 * Eigen::MatrixXd::Identity(2, 2);
    params.Sigma_w = 0.01 * Eigen::MatrixXd::Identity(2, 2);
    params.D = Eigen::VectorXd::Zero(2);
    params.Phi = 0.5 * Eigen::MatrixXd::Identity(2, 2);
    const int m = spec.n_state();
    auto sys = gci::assemble_system<double>(spec, params, Eigen::VectorXd::Zero(m),
                                            Eigen::MatrixXd::Identity(m, m));

    gci::Rng rng(55);
    auto path = gci::simulate_path(sys, 40, rng);
    const Eigen::MatrixXd draw = gci::sample_states(sys, path.y, rng);
    CHECK((sys.z * draw - path.y).cwiseAbs().maxCoeff() < 1e-3);

    gci::Rng ra(56), rb(56);
    const Eigen::MatrixXd d1 = gci::sample_states(sys, path.y, ra);
    const Eigen::MatrixXd d2 = gci::sample_states(sys, path.y, rb);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("state draw mean matches the smoothed mean") {
    auto sys = gci::assemble_univariate<double>(
        2, gci::SlopeMode::stationary, 0.2, 0.5, 0.3, 0.2, 0.15, 0.1,
        Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
    gci::Rng rng(91);
    auto path = gci::simulate_path(sys, 30, rng);
    auto sm = gci::backward_smoother(sys, path.y);

    const int reps = 5000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < reps; ++i) {
        const double v = gci::sample_states(sys, path.y, rng)(0, 15);
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / reps;
    const double sd = std::sqrt(acc2 / reps - mean * mean);
    CHECK(std::abs(mean - sm.a(0, 15)) < 4.0 * sd / std::sqrt(double(reps)));
}

TEST_CASE("chain recovers the conjugate observation-variance posterior") {
    // Zero state noise and a degenerate initial law pin every state at zero,
    // so the variance draws are i.i.d. from the analytic conjugate posterior.
    gci::StructuralSpec spec;
    spec.n_series = 1;
    spec.seasonal_period = 2;
    spec.slope_mode = gci::SlopeMode::random_walk;
    spec.adjacency = gci::Adjacency::Ones(1, 1);

    gci::Rng data_rng(404);
    Eigen::MatrixXd y = 1.5 * data_rng.normal_mat(1, 50);
    const double ss = y.row(0).squaredNorm();

    gci::ChainPriors priors;
    priors.cov.nu = 1.0;
    priors.cov.H = Eigen::MatrixXd::Identity(1, 1);

    gci::ChainInit init = gci::ChainInit::defaults(spec);
    init.Sigma = Eigen::MatrixXd::Constant(1, 1, 2.0);
    init.Sigma_u.setZero();
    init.Sigma_v.setZero();
    init.Sigma_w.setZero();
    init.P1.setZero();

    gci::McmcConfig config;
    config.n_iters = 10000;
    config.n_burnin = 2000;
    config.rng_seed = 42;
    config.sample_state_noise = false;

    auto draws = gci::run_chain(y, spec, priors, init, config);
    REQUIRE(draws.n_draws() == 8000);
    CHECK(draws.alpha.front().cwiseAbs().maxCoeff() == 0.0);

    double acc = 0.0, acc2 = 0.0;
    for (const auto& s : draws.Sigma) {
        acc += s(0, 0);
        acc2 += s(0, 0) * s(0, 0);
    }
    const double mean = acc / 8000.0, sd = std::sqrt(acc2 / 8000.0 - mean * mean);
    // 1/sigma^2 ~ Gamma(df'/2, scale'/2) with df' = 1 + 50, scale' = 1 + ss.
    const double analytic = (1.0 + ss) / (1.0 + 50.0 - 2.0);
    CHECK(std::abs(mean - analytic) < 4.0 * sd / std::sqrt(8000.0));
}

TEST_CASE("multivariate chain invariants on a path graph") {
    gci::StructuralSpec spec;
    spec.n_series = 3;
    spec.seasonal_period = 3;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::path_graph(3);

    gci::Rng data_rng(7);
    Eigen::MatrixXd y = data_rng.normal_mat(3, 40);
    y.row(2).array() += 1.0;

    gci::ChainPriors priors;
    priors.cov.H = Eigen::MatrixXd::Identity(3, 3);
    gci::McmcConfig config;
    config.n_iters = 40;
    config.n_burnin = 10;
    config.thinning = 3;
    config.rng_seed = 5;

    auto draws = gci::run_chain(y, spec, priors, gci::ChainInit::defaults(spec), config);
    REQUIRE(draws.n_draws() == 10);
    REQUIRE(draws.Phi.size() == 10);
    REQUIRE(draws.D.size() == 10);
    CHECK(draws.phi_proposals == 30);

    for (int i = 0; i < 10; ++i) {
        CHECK(gci::is_schur_stable(draws.Phi[i]));
        for (const Eigen::MatrixXd* s :
             {&draws.Sigma[i], &draws.Sigma_u[i], &draws.Sigma_v[i], &draws.Sigma_w[i]}) {
            Eigen::LLT<Eigen::MatrixXd> llt(*s);
            CHECK(llt.info() == Eigen::Success);
            // Non-edge (0,2) of the precision, allowing inversion round-trip noise.
            const Eigen::MatrixXd prec = s->inverse();
            CHECK(std::abs(prec(0, 2)) < 1e-10 * std::max(1.0, prec.cwiseAbs().maxCoeff()));
        }
        CHECK(draws.alpha[i].allFinite());
        CHECK(draws.D[i].allFinite());
    }
}

TEST_CASE("chains with the same seed are identical") {
    gci::StructuralSpec spec;
    spec.n_series = 2;
    spec.seasonal_period = 3;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::Adjacency::Ones(2, 2);

    gci::Rng data_rng(12);
    Eigen::MatrixXd y = data_rng.normal_mat(2, 30);
    gci::ChainPriors priors;
    priors.cov.H = Eigen::MatrixXd::Identity(2, 2);
    gci::McmcConfig config;
    config.n_iters = 25;
    config.n_burnin = 5;
    config.rng_seed = 1234;

    auto a = gci::run_chain(y, spec, priors, gci::ChainInit::defaults(spec), config);
    auto b = gci::run_chain(y, spec, priors, gci::ChainInit::defaults(spec), config);
    REQUIRE(a.n_draws() == b.n_draws());
    for (Eigen::Index i = 0; i < a.n_draws(); ++i) {
        CHECK((a.alpha[i] - b.alpha[i]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.Phi[i] - b.Phi[i]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.Sigma[i] - b.Sigma[i]).cwiseAbs().maxCoeff() == 0.0);
    }

    config.rng_seed = 1235;
    auto c = gci::run_chain(y, spec, priors, gci::ChainInit::defaults(spec), config);
    CHECK((a.alpha[0] - c.alpha[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("single-sweep smoke run keeps the invariants") {
    gci::StructuralSpec spec;
    spec.n_series = 2;
    spec.seasonal_period = 4;
    spec.slope_mode = gci::SlopeMode::random_walk;
    spec.adjacency = gci::Adjacency::Ones(2, 2);

    gci::Rng data_rng(2);
    Eigen::MatrixXd y = data_rng.normal_mat(2, 12);
    y(0, 3) = std::numeric_limits<double>::quiet_NaN();  // partial column is fine here

    gci::ChainPriors priors;
    priors.cov.H = Eigen::MatrixXd::Identity(2, 2);
    gci::McmcConfig config;
    config.n_iters = 1;
    config.n_burnin = 0;
    config.rng_seed = 3;

    auto draws = gci::run_chain(y, spec, priors, gci::ChainInit::defaults(spec), config);
    REQUIRE(draws.n_draws() == 1);
    CHECK(draws.Phi.empty());  // no stationarity moves for the random walk
    CHECK(draws.D.empty());
    CHECK(draws.phi_proposals == 0);
    CHECK(draws.alpha[0].allFinite());
    CHECK(Eigen::LLT<Eigen::MatrixXd>(draws.Sigma[0]).info() == Eigen::Success);
}

TEST_CASE("univariate chain: draws respect the model constraints") {
    gci::Rng data_rng(88);
    Eigen::VectorXd y(80);
    double level = 0.0;
    for (int t = 0; t < 80; ++t) {
        level += 0.05 * data_rng.normal();
        y(t) = level + 0.4 * std::sin(2.0 * M_PI * t / 7.0) + 0.3 * data_rng.normal();
    }

    gci::McmcConfig config;
    config.n_iters = 200;
    config.n_burnin = 50;
    config.rng_seed = 17;
    auto draws = gci::run_univariate_chain(y, 7, gci::SlopeMode::stationary,
                                           gci::UnivariatePriors{}, config);
    REQUIRE(draws.n_draws() == 150);
    for (Eigen::Index i = 0; i < draws.n_draws(); ++i) {
        CHECK(draws.Sigma[i](0, 0) > 0.0);
        CHECK(draws.Sigma_u[i](0, 0) > 0.0);
        CHECK(draws.Sigma_v[i](0, 0) > 0.0);
        CHECK(draws.Sigma_w[i](0, 0) > 0.0);
        CHECK(std::abs(draws.Phi[i](0, 0)) < 1.0);
        CHECK(std::isfinite(draws.D[i](0)));
    }

    auto again = gci::run_univariate_chain(y, 7, gci::SlopeMode::stationary,
                                           gci::UnivariatePriors{}, config);
    CHECK((draws.alpha[10] - again.alpha[10]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inefficiency factor: i.i.d., autocorrelated, and degenerate chains") {
    gci::Rng rng(1001);
    const Eigen::VectorXd iid = rng.normal_vec(100000);
    auto f_iid = gci::inefficiency_factor(iid);
    CHECK_FALSE(f_iid.degenerate);
    CHECK(f_iid.value > 0.9);
    CHECK(f_iid.value < 1.2);

    Eigen::VectorXd ar(100000);
    ar(0) = 0.0;
    for (Eigen::Index t = 1; t < ar.size(); ++t) ar(t) = 0.9 * ar(t - 1) + rng.normal();
    auto f_ar = gci::inefficiency_factor(ar);
    CHECK_FALSE(f_ar.degenerate);
    CHECK(f_ar.value > 19.0 * 0.75);
    CHECK(f_ar.value < 19.0 * 1.25);

    auto f_const = gci::inefficiency_factor(Eigen::VectorXd::Constant(500, 3.7));
    CHECK(f_const.degenerate);
    CHECK(f_const.value == 1.0);

    CHECK_THROWS_AS(gci::inefficiency_factor(Eigen::VectorXd::Zero(99)), std::invalid_argument);
}

TEST_CASE("configuration and prior validation") {
    gci::McmcConfig config;
    config.n_iters = 10;
    config.n_burnin = 10;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.n_burnin = 2;
    config.thinning = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);

    gci::GWishartPrior bad{0.0, Eigen::MatrixXd::Identity(2, 2), gci::Adjacency::Ones(2, 2), 1.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
