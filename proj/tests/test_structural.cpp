#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gci/structural.hpp>

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

gci::ComponentParams<double> diag_params(int n, double s, double su, double sv, double sw) {
    gci::ComponentParams<double> p;
    p.Sigma = s * MatrixXd::Identity(n, n);
    p.Sigma_u = su * MatrixXd::Identity(n, n);
    p.Sigma_v = sv * MatrixXd::Identity(n, n);
    p.Sigma_w = sw * MatrixXd::Identity(n, n);
    p.D = VectorXd::Zero(n);
    p.Phi = 0.5 * MatrixXd::Identity(n, n);
    return p;
}

}  // namespace

TEST_CASE("scalar random-walk layout: companion rows and shifts") {
    const int S = 4, m = 5;
    VectorXd a1 = VectorXd::Zero(m);
    MatrixXd p1 = MatrixXd::Identity(m, m);
    auto sys = gci::assemble_univariate<double>(S, gci::SlopeMode::random_walk, 0.0, 0.0, 1.0, 0.1,
                                                0.2, 0.3, a1, p1);
    CHECK(sys.n_state() == m);
    MatrixXd z_expect(1, m);
    z_expect << 1, 0, 1, 0, 0;
    CHECK((sys.z - z_expect).cwiseAbs().maxCoeff() == 0.0);

    MatrixXd t_expect = MatrixXd::Zero(m, m);
    t_expect(0, 0) = 1; t_expect(0, 1) = 1;   // trend
    t_expect(1, 1) = 1;                       // random-walk slope
    t_expect(2, 2) = -1; t_expect(2, 3) = -1; t_expect(2, 4) = -1;
    t_expect(3, 2) = 1;                       // shifts
    t_expect(4, 3) = 1;
    CHECK((sys.T_mat - t_expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sys.c.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sys.R.rows() == m);
    CHECK(sys.R.cols() == 3);
    CHECK(sys.Q(0, 0) == 0.1);
    CHECK(sys.Q(1, 1) == 0.2);
    CHECK(sys.Q(2, 2) == 0.3);
}

TEST_CASE("five series, weekly period: state dimension 40") {
    gci::StructuralSpec spec;
    spec.n_series = 5;
    spec.seasonal_period = 7;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::path_graph(5);
    auto params = diag_params(5, 1.0, 0.1, 0.1, 0.1);
    auto sys = gci::assemble_system(spec, params, VectorXd::Zero(40), MatrixXd::Identity(40, 40));
    CHECK(sys.n_state() == 40);
    CHECK(sys.n_disturb() == 15);
}

TEST_CASE("parameter blocks read back exactly") {
    const int n = 3, S = 5, m = n * (S + 1);
    gci::StructuralSpec spec;
    spec.n_series = n;
    spec.seasonal_period = S;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::path_graph(n);

    gci::Rng rng = gci::Rng::stream(17, 0);
    gci::ComponentParams<double> params = diag_params(n, 0, 0, 0, 0);
    params.Sigma = (rng.normal_vec(n).cwiseAbs() + VectorXd::Ones(n)).asDiagonal();
    params.Sigma_u = (rng.normal_vec(n).cwiseAbs() + VectorXd::Ones(n)).asDiagonal();
    params.Sigma_v = (rng.normal_vec(n).cwiseAbs() + VectorXd::Ones(n)).asDiagonal();
    params.Sigma_w = (rng.normal_vec(n).cwiseAbs() + VectorXd::Ones(n)).asDiagonal();
    params.Phi = 0.3 * rng.normal_mat(n, n);
    params.D = rng.normal_vec(n);

    auto sys = gci::assemble_system(spec, params, VectorXd::Zero(m), MatrixXd::Identity(m, m));
    MatrixXd phi_back = sys.T_mat.block(n, n, n, n);
    CHECK((phi_back - params.Phi).cwiseAbs().maxCoeff() == 0.0);
    VectorXd d_back = (MatrixXd::Identity(n, n) - phi_back).lu().solve(sys.c.segment(n, n));
    CHECK((d_back - params.D).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sys.Q.block(0, 0, n, n) - params.Sigma_u).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.Q.block(n, n, n, n) - params.Sigma_v).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.Q.block(2 * n, 2 * n, n, n) - params.Sigma_w).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.Sigma - params.Sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regression residualization") {
    gci::TimeSeriesPanel panel;
    panel.store_ids = {"s1", "s2"};
    panel.regions = {"r", "r"};
    panel.timestamps = {0, 1, 2};
    panel.y.resize(2, 3);
    panel.y << 1, 2, 3, 4, 5, 6;
    panel.causal_start = 2;
    panel.adjacency = gci::complete_graph(2);

    SUBCASE("zero coefficients change nothing") {
        panel.design.push_back({"c1", VectorXd::Ones(3), {0, 1}});
        panel.validate();
        MatrixXd out = gci::apply_regression(panel, VectorXd::Zero(1));
        CHECK((out - panel.y).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("single store, constant control") {
        panel.design.push_back({"c1", VectorXd::Ones(3), {0}});
        VectorXd beta(1);
        beta << 2.0;
        MatrixXd out = gci::apply_regression(panel, beta);
        CHECK(out(0, 0) == -1.0);
        CHECK(out(0, 2) == 1.0);
        CHECK(out.row(1) == panel.y.row(1));
    }

    SUBCASE("block-diagonal design, hand-computed") {
        VectorXd x11(3), x12(3), x21(3);
        x11 << 1, 0, 2;
        x12 << 0, 1, 1;
        x21 << 3, 3, 3;
        panel.design.push_back({"x11", x11, {0}});
        panel.design.push_back({"x12", x12, {0}});
        panel.design.push_back({"x21", x21, {1}});
        VectorXd beta(3);
        beta << 1, 2, 3;
        MatrixXd out = gci::apply_regression(panel, beta);
        for (int t = 0; t < 3; ++t) {
            CHECK(out(0, t) == doctest::Approx(panel.y(0, t) - x11(t) - 2 * x12(t)));
            CHECK(out(1, t) == doctest::Approx(panel.y(1, t) - 3 * x21(t)));
        }
    }

    SUBCASE("wrong coefficient count") {
        panel.design.push_back({"c1", VectorXd::Ones(3), {0}});
        CHECK_THROWS_AS((void)gci::apply_regression(panel, VectorXd::Zero(2)), std::invalid_argument);
    }
}

TEST_CASE("noise-free seasonal component sums to zero over every period") {
    const int n = 2, S = 5, m = n * (S + 1);
    gci::StructuralSpec spec;
    spec.n_series = n;
    spec.seasonal_period = S;
    spec.slope_mode = gci::SlopeMode::random_walk;
    spec.adjacency = gci::complete_graph(n);
    auto params = diag_params(n, 1.0, 0.05, 0.05, 0.0);

    VectorXd a1 = VectorXd::Zero(m);
    a1.segment(2 * n, (S - 1) * n) = gci::Rng::stream(3, 3).normal_vec((S - 1) * n);
    auto sys = gci::assemble_system(spec, params, a1, MatrixXd::Zero(m, m));

    gci::Rng rng = gci::Rng::stream(8, 1);
    auto path = gci::simulate_path(sys, 200, rng);
    // delta_t for each time lives in state rows [2n, 3n)
    for (int t = 0; t + S <= 200; ++t)
        for (int i = 0; i < n; ++i) {
            double acc = 0;
            for (int j = 0; j < S; ++j) acc += path.alpha(2 * n + i, t + j);
            CHECK(std::abs(acc) < 1e-10);
        }
}

TEST_CASE("stationary slope matches its marginal moments at long range") {
    const int n = 2, S = 2, m = n * (S + 1);
    gci::StructuralSpec spec;
    spec.n_series = n;
    spec.seasonal_period = S;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::complete_graph(n);
    auto params = diag_params(n, 1.0, 0.0, 0.0, 0.0);
    params.Phi << 0.5, 0.1, 0.0, 0.4;
    params.Sigma_v = 0.04 * MatrixXd::Identity(n, n);
    params.D << 1.0, -2.0;

    VectorXd a1 = VectorXd::Zero(m);
    a1.segment(n, n) = params.D;
    auto sys = gci::assemble_system(spec, params, a1, MatrixXd::Zero(m, m));

    const int T = 100000;
    gci::Rng rng = gci::Rng::stream(19, 2);
    auto path = gci::simulate_path(sys, T, rng);
    MatrixXd tau = path.alpha.middleRows(n, n);

    VectorXd mean = tau.rowwise().mean();
    CHECK((mean - params.D).cwiseAbs().maxCoeff() < 0.1 * params.D.cwiseAbs().minCoeff());

    // Yule-Walker: vec(U) = (I - Phi (x) Phi)^{-1} vec(Sigma_v), lag-1 = Phi U
    MatrixXd kron = MatrixXd::Zero(n * n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    kron(i * n + k, j * n + l) = params.Phi(i, j) * params.Phi(k, l);
    VectorXd vec_sv(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) vec_sv(j * n + i) = params.Sigma_v(i, j);
    VectorXd vec_u = (MatrixXd::Identity(n * n, n * n) - kron).lu().solve(vec_sv);
    MatrixXd u(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) u(i, j) = vec_u(j * n + i);
    MatrixXd lag1_expect = params.Phi * u;

    MatrixXd c0 = MatrixXd::Zero(n, n), c1 = MatrixXd::Zero(n, n);
    for (int t = 0; t + 1 < T; ++t) {
        VectorXd d0 = tau.col(t) - mean, d1 = tau.col(t + 1) - mean;
        c0 += d0 * d0.transpose();
        c1 += d1 * d0.transpose();
    }
    c0 /= T - 1;
    c1 /= T - 1;
    CHECK((c0 - u).cwiseAbs().maxCoeff() < 0.1 * u.cwiseAbs().maxCoeff());
    CHECK((c1 - lag1_expect).cwiseAbs().maxCoeff() < 0.1 * u.cwiseAbs().maxCoeff());
}

TEST_CASE("parameter validation rejections") {
    gci::StructuralSpec spec;
    spec.n_series = 3;
    spec.seasonal_period = 4;
    spec.slope_mode = gci::SlopeMode::stationary;
    spec.adjacency = gci::path_graph(3);
    const int m = spec.n_state();
    VectorXd a1 = VectorXd::Zero(m);
    MatrixXd p1 = MatrixXd::Identity(m, m);

    SUBCASE("observation covariance must be SPD") {
        auto params = diag_params(3, 1.0, 0.1, 0.1, 0.1);
        params.Sigma(0, 0) = -1.0;
        CHECK_THROWS_AS((void)gci::assemble_system(spec, params, a1, p1), std::invalid_argument);
    }

    SUBCASE("precision must respect the graph") {
        auto params = diag_params(3, 1.0, 0.1, 0.1, 0.1);
        params.Sigma = MatrixXd::Constant(3, 3, 0.5) + MatrixXd::Identity(3, 3);
        // dense inverse has a (0,2) entry but the path graph lacks that edge
        CHECK_THROWS_AS((void)gci::assemble_system(spec, params, a1, p1), std::invalid_argument);
    }

    SUBCASE("unstable slope autoregression is rejected") {
        auto params = diag_params(3, 1.0, 0.1, 0.1, 0.1);
        params.Phi = 1.1 * MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS((void)gci::assemble_system(spec, params, a1, p1), std::invalid_argument);
    }

    SUBCASE("initial state dimensions checked") {
        auto params = diag_params(3, 1.0, 0.1, 0.1, 0.1);
        CHECK_THROWS_AS((void)gci::assemble_system(spec, params, VectorXd::Zero(m - 1), p1),
                        std::invalid_argument);
    }
}

TEST_CASE("pooled variance anchor") {
    VectorXd y(3);
    y << 1, 2, 3;
    CHECK(gci::pooled_variance(y) == doctest::Approx(1.0).epsilon(1e-15));
    VectorXd y2(4);
    y2 << 1, std::numeric_limits<double>::quiet_NaN(), 2, 3;
    CHECK(gci::pooled_variance(y2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("region splitting restricts stores, design, and adjacency") {
    gci::TimeSeriesPanel panel;
    panel.store_ids = {"a", "b", "c"};
    panel.regions = {"east", "west", "east"};
    panel.timestamps = {10, 20, 30, 40};
    panel.y.resize(3, 4);
    panel.y.setRandom();
    panel.causal_start = 2;
    panel.adjacency = gci::complete_graph(3);
    panel.design.push_back({"u", VectorXd::Ones(4), {0, 1, 2}});
    panel.design.push_back({"v", 2.0 * VectorXd::Ones(4), {1}});
    panel.validate();

    auto regions = gci::split_regions(panel);
    REQUIRE(regions.size() == 2);
    CHECK(regions[0].store_ids == std::vector<std::string>{"a", "c"});
    CHECK(regions[1].store_ids == std::vector<std::string>{"b"});
    CHECK(regions[0].design.size() == 1);  // "v" drops out of east
    CHECK(regions[1].design.size() == 2);
    CHECK(regions[0].design[0].stores == std::vector<int>{0, 1});
    CHECK(regions[1].design[1].stores == std::vector<int>{0});
    CHECK((regions[0].y.row(1) - panel.y.row(2)).cwiseAbs().maxCoeff() == 0.0);
    regions[0].validate();
    regions[1].validate();
}
