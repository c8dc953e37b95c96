#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gci/gwishart.hpp>

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(int n, gci::Rng& rng) {
    MatrixXd a = rng.normal_mat(n, n);
    return a * a.transpose() / n + 0.5 * MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("plain Wishart moments") {
    gci::Rng rng = gci::Rng::stream(101, 0);
    MatrixXd s = random_spd(3, rng);
    const double df = 7.0;
    MatrixXd mean = MatrixXd::Zero(3, 3);
    const int ndraw = 5000;
    for (int i = 0; i < ndraw; ++i) mean += gci::sample_wishart(df, s, rng);
    mean /= ndraw;
    MatrixXd expect = df * s;
    CHECK((mean - expect).cwiseAbs().maxCoeff() < 0.05 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("complete graph reduces to the Wishart law") {
    gci::Rng rng = gci::Rng::stream(103, 1);
    const int n = 3;
    MatrixXd h = random_spd(n, rng);
    const double nu = 5.0;
    MatrixXd mean = MatrixXd::Zero(n, n);
    const int ndraw = 10000;
    for (int i = 0; i < ndraw; ++i)
        mean += gci::sample_gwishart(nu, h, gci::complete_graph(n), rng);
    mean /= ndraw;
    MatrixXd expect = (nu + n - 1) * h.inverse();
    CHECK((mean - expect).cwiseAbs().maxCoeff() < 0.05 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("single node is a Gamma precision") {
    gci::Rng rng = gci::Rng::stream(107, 2);
    const double nu = 3.0, h = 2.0;
    double s1 = 0, s2 = 0;
    const int ndraw = 20000;
    for (int i = 0; i < ndraw; ++i) {
        double k = gci::sample_gwishart(nu, MatrixXd::Constant(1, 1, h),
                                        gci::Adjacency::Ones(1, 1), rng)(0, 0);
        s1 += k;
        s2 += k * k;
    }
    const double mean = s1 / ndraw, var = s2 / ndraw - mean * mean;
    CHECK(mean == doctest::Approx(nu / h).epsilon(0.05));        // Gamma(nu/2, rate h/2)
    CHECK(var == doctest::Approx(2 * nu / (h * h)).epsilon(0.10));
}

TEST_CASE("path graph draws: exact structural zeros, SPD") {
    gci::Rng rng = gci::Rng::stream(109, 3);
    MatrixXd h = random_spd(3, rng);
    gci::Adjacency g = gci::path_graph(3);
    for (int i = 0; i < 1000; ++i) {
        MatrixXd k = gci::sample_gwishart(6.0, h, g, rng);
        CHECK(k(0, 2) == 0.0);
        CHECK(k(2, 0) == 0.0);
        CHECK(k.llt().info() == Eigen::Success);
    }
}

TEST_CASE("exact and direct samplers agree in distribution on a path graph") {
    // Two independent algorithms targeting the same law: compare first and
    // second moments of the edge and diagonal precision entries.
    gci::Rng rng = gci::Rng::stream(113, 4);
    const int n = 4;
    MatrixXd h = random_spd(n, rng);
    gci::Adjacency g = gci::path_graph(n);
    const double nu = 8.0;
    const int ndraw = 8000;

    MatrixXd m1_exact = MatrixXd::Zero(n, n), m1_direct = MatrixXd::Zero(n, n);
    MatrixXd m2_exact = MatrixXd::Zero(n, n), m2_direct = MatrixXd::Zero(n, n);
    gci::Rng rng_a = gci::Rng::stream(113, 5), rng_b = gci::Rng::stream(113, 6);
    for (int i = 0; i < ndraw; ++i) {
        MatrixXd ka = gci::sample_gwishart(nu, h, g, rng_a, gci::GWishartMethod::exact);
        MatrixXd kb = gci::sample_gwishart(nu, h, g, rng_b, gci::GWishartMethod::direct);
        m1_exact += ka;
        m1_direct += kb;
        m2_exact += ka.cwiseProduct(ka);
        m2_direct += kb.cwiseProduct(kb);
    }
    m1_exact /= ndraw; m1_direct /= ndraw;
    m2_exact /= ndraw; m2_direct /= ndraw;
    const double scale1 = m1_exact.cwiseAbs().maxCoeff();
    const double scale2 = m2_exact.cwiseAbs().maxCoeff();
    CHECK((m1_exact - m1_direct).cwiseAbs().maxCoeff() < 0.05 * scale1);
    CHECK((m2_exact - m2_direct).cwiseAbs().maxCoeff() < 0.08 * scale2);

    // zeros and SPD on a non-decomposable graph through the fallback
    gci::Adjacency cycle = gci::Adjacency::Identity(4, 4);
    auto link = [&](int a, int b) { cycle(a, b) = cycle(b, a) = 1; };
    link(0, 1); link(1, 2); link(2, 3); link(3, 0);
    for (int i = 0; i < 200; ++i) {
        MatrixXd k = gci::sample_gwishart(nu, h, cycle, rng_b);
        CHECK(std::abs(k(0, 2)) < 1e-12);
        CHECK(std::abs(k(1, 3)) < 1e-12);
        CHECK(k.llt().info() == Eigen::Success);
    }
}

TEST_CASE("clique marginals of the covariance match the inverse-Wishart mean") {
    // For K ~ W_G(df, D) on a decomposable graph, Sigma_CC = (K^{-1})_CC has
    // mean D_CC / (df - 2) for every clique C.
    gci::Rng rng = gci::Rng::stream(127, 7);
    const int n = 3;
    MatrixXd d = random_spd(n, rng);
    gci::Adjacency g = gci::path_graph(n);
    const double df = 12.0;
    const int ndraw = 6000;
    MatrixXd mean_sigma = MatrixXd::Zero(n, n);
    for (int i = 0; i < ndraw; ++i)
        mean_sigma += gci::sample_gwishart(df, d, g, rng).inverse();
    mean_sigma /= ndraw;
    for (int c = 0; c < 2; ++c) {  // cliques {0,1}, {1,2}
        MatrixXd expect = d.block(c, c, 2, 2) / (df - 2.0);
        MatrixXd got = mean_sigma.block(c, c, 2, 2);
        CHECK((got - expect).cwiseAbs().maxCoeff() < 0.05 * expect.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("direct sampler is scale equivariant") {
    // W_G(df, cD) draws equal W_G(df, D)/c in law; with a shared random
    // stream the two computations agree deterministically.
    gci::Adjacency cycle = gci::Adjacency::Identity(4, 4);
    auto link = [&](int a, int b) { cycle(a, b) = cycle(b, a) = 1; };
    link(0, 1); link(1, 2); link(2, 3); link(3, 0);
    gci::Rng rng_d = gci::Rng::stream(131, 8);
    MatrixXd d = random_spd(4, rng_d);
    const double c = 2.5;
    gci::Rng r1 = gci::Rng::stream(131, 9), r2 = gci::Rng::stream(131, 9);
    MatrixXd k1 = gci::sample_gwishart(6.0, d, cycle, r1);
    MatrixXd k2 = gci::sample_gwishart(6.0, (c * d).eval(), cycle, r2);
    CHECK((k1 / c - k2).cwiseAbs().maxCoeff() < 1e-9 * k1.cwiseAbs().maxCoeff());
}

TEST_CASE("non-decomposable graph rejected when the fallback is disabled") {
    gci::Rng rng = gci::Rng::stream(137, 9);
    gci::Adjacency cycle = gci::Adjacency::Identity(4, 4);
    auto link = [&](int a, int b) { cycle(a, b) = cycle(b, a) = 1; };
    link(0, 1); link(1, 2); link(2, 3); link(3, 0);
    CHECK_THROWS_AS((void)gci::sample_gwishart(6.0, MatrixXd::Identity(4, 4), cycle, rng,
                                               gci::GWishartMethod::exact),
                    std::invalid_argument);
}

TEST_CASE("degrees of freedom validation") {
    gci::Rng rng = gci::Rng::stream(139, 10);
    CHECK_THROWS_AS((void)gci::sample_wishart(1.5, MatrixXd::Identity(3, 3), rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        (void)gci::sample_gwishart(0.0, MatrixXd::Identity(2, 2), gci::complete_graph(2), rng),
        std::invalid_argument);
}
