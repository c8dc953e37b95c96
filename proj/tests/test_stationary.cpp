#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gci/rng.hpp>
#include <gci/stationary.hpp>

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

gci::StationaryVarParams<double> random_params(int n, gci::Rng& rng, const MatrixXd& anchor) {
    VectorXd theta(gci::stationary_param_count(n));
    theta.head(n * (n - 1) / 2) = rng.normal_vec(n * (n - 1) / 2);
    theta.segment(n * (n - 1) / 2, n) = rng.normal_vec(n);
    theta.tail(n * (n - 1) / 2) = rng.normal_vec(n * (n - 1) / 2);
    return gci::unpack_stationary<double>(theta, rng.bernoulli(0.5), anchor);
}

MatrixXd random_spd(int n, gci::Rng& rng) {
    MatrixXd a = rng.normal_mat(n, n);
    return a * a.transpose() / n + 0.5 * MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("cayley map basics") {
    SUBCASE("zero skew gives the identity or a reflection") {
        VectorXd g = VectorXd::Zero(3);  // n = 3
        MatrixXd o = gci::cayley_orthogonal<double>(g, false);
        CHECK((o - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
        MatrixXd orf = gci::cayley_orthogonal<double>(g, true);
        MatrixXd expect = MatrixXd::Identity(3, 3);
        expect(0, 0) = -1;
        CHECK((orf - expect).cwiseAbs().maxCoeff() < 1e-14);
    }

    SUBCASE("planar rotation squares to angle pi") {
        VectorXd g(1);
        g << 1.0;
        MatrixXd o = gci::cayley_orthogonal<double>(g, false);
        CHECK((o.transpose() * o - MatrixXd::Identity(2, 2)).norm() < 1e-12);
        CHECK(o.determinant() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((o + MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("orthogonality under random skews") {
        gci::Rng rng = gci::Rng::stream(5, 0);
        for (int rep = 0; rep < 50; ++rep) {
            VectorXd g = 2.0 * rng.normal_vec(10);  // n = 5
            MatrixXd o = gci::cayley_orthogonal<double>(g, rep % 2 == 0);
            CHECK((o.transpose() * o - MatrixXd::Identity(5, 5)).norm() < 1e-11);
        }
    }
}

TEST_CASE("schur stability predicate") {
    CHECK_FALSE(gci::is_schur_stable<double>(MatrixXd::Identity(3, 3)));
    CHECK(gci::is_schur_stable<double>(0.5 * MatrixXd::Identity(3, 3)));
    MatrixXd companion(2, 2);
    companion << 1.1, -0.1, 1.0, 0.0;  // roots of z^2 - 1.1 z + 0.1: 1.0 and 0.1
    CHECK_FALSE(gci::is_schur_stable<double>(companion));
}

TEST_CASE("scalar stable map") {
    MatrixXd m = MatrixXd::Ones(1, 1);
    VectorXd theta(1);
    theta << 0.0;  // lambda = 0
    auto pos = gci::to_phi(gci::unpack_stationary<double>(theta, false, m));
    CHECK(pos.Phi(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(pos.U(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    auto neg = gci::to_phi(gci::unpack_stationary<double>(theta, true, m));
    CHECK(neg.Phi(0, 0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("vanishing scale collapses to the anchor") {
    gci::Rng rng = gci::Rng::stream(7, 1);
    MatrixXd m = random_spd(4, rng);
    VectorXd theta = VectorXd::Zero(16);
    theta.segment(6, 4).setConstant(-30.0);  // lambda block
    theta.head(6) = rng.normal_vec(6);
    theta.tail(6) = rng.normal_vec(6);
    auto st = gci::to_phi(gci::unpack_stationary<double>(theta, false, m));
    CHECK(st.Phi.cwiseAbs().maxCoeff() < 1e-5);
    CHECK((st.U - m).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("random parameter sweep: stability and Yule-Walker identity") {
    gci::Rng rng = gci::Rng::stream(11, 2);
    MatrixXd m = random_spd(5, rng);
    for (int rep = 0; rep < 300; ++rep) {
        auto params = random_params(5, rng, m);
        auto st = gci::to_phi(params);
        CHECK(st.Phi.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
        MatrixXd resid = st.U - st.Phi * st.U * st.Phi.transpose() - m;
        CHECK(resid.norm() < 1e-8);
    }
}

TEST_CASE("yule-walker solver") {
    SUBCASE("zero coefficient returns the anchor") {
        MatrixXd m = MatrixXd::Identity(3, 3) * 2.5;
        MatrixXd u = gci::solve_yule_walker<double>(MatrixXd::Zero(3, 3), m);
        CHECK((u - m).cwiseAbs().maxCoeff() < 1e-14);
    }

    SUBCASE("scalar geometric series") {
        MatrixXd phi = MatrixXd::Constant(1, 1, 0.8);
        MatrixXd m = MatrixXd::Constant(1, 1, 0.36);
        CHECK(gci::solve_yule_walker<double>(phi, m)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("random stable residuals") {
        gci::Rng rng = gci::Rng::stream(13, 3);
        for (int rep = 0; rep < 100; ++rep) {
            MatrixXd phi = 0.4 * rng.normal_mat(2, 2);
            if (!gci::is_schur_stable<double>(phi)) continue;
            MatrixXd m = random_spd(2, rng);
            MatrixXd u = gci::solve_yule_walker<double>(phi, m);
            CHECK((u - phi * u * phi.transpose() - m).norm() < 1e-10);
        }
    }

    SUBCASE("unstable coefficient rejected") {
        MatrixXd m = MatrixXd::Identity(2, 2);
        CHECK_THROWS_AS((void)gci::solve_yule_walker<double>(MatrixXd::Identity(2, 2), m),
                        gci::numerical_error);
    }
}

TEST_CASE("round trip: yule-walker on (Phi, M) reproduces U") {
    gci::Rng rng = gci::Rng::stream(17, 4);
    MatrixXd m = random_spd(4, rng);
    for (int rep = 0; rep < 50; ++rep) {
        auto st = gci::to_phi(random_params(4, rng, m));
        MatrixXd u2 = gci::solve_yule_walker<double>(st.Phi, m);
        CHECK((u2 - st.U).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("continuity of the map in the unrestricted parameters") {
    gci::Rng rng = gci::Rng::stream(19, 5);
    MatrixXd m = random_spd(3, rng);
    VectorXd theta = rng.normal_vec(9);
    auto base = gci::to_phi(gci::unpack_stationary<double>(theta, false, m));
    for (int k = 0; k < 9; ++k) {
        VectorXd pert = theta;
        pert(k) += 1e-6;
        auto moved = gci::to_phi(gci::unpack_stationary<double>(pert, false, m));
        CHECK((moved.Phi - base.Phi).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("scale equivariance in (M, Lambda)") {
    gci::Rng rng = gci::Rng::stream(23, 6);
    MatrixXd m = random_spd(3, rng);
    VectorXd theta = rng.normal_vec(9);
    const double c = 3.7;
    auto base = gci::to_phi(gci::unpack_stationary<double>(theta, true, m));
    VectorXd theta_scaled = theta;
    theta_scaled.segment(3, 3).array() += std::log(c);  // lambda block for n=3
    auto scaled = gci::to_phi(gci::unpack_stationary<double>(theta_scaled, true, (c * m).eval()));
    CHECK((scaled.Phi - base.Phi).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((scaled.U - c * base.U).cwiseAbs().maxCoeff() < 1e-10 * c * base.U.norm());
}

TEST_CASE("parameter validation") {
    MatrixXd m = MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS((void)gci::unpack_stationary<double>(VectorXd::Zero(3), false, m),
                    std::invalid_argument);
    gci::StationaryVarParams<double> p;
    p.chol_lower = MatrixXd::Identity(2, 2);
    p.chol_lower(0, 1) = 0.5;  // upper entry not allowed
    p.log_diag = VectorXd::Zero(2);
    p.skew_lower = VectorXd::Zero(1);
    p.anchor = m;
    CHECK_THROWS_AS((void)gci::to_phi(p), std::invalid_argument);
}
