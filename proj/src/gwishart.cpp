#include "gci/gwishart.hpp"

#include <cmath>
#include <vector>

#include "gci/dense.hpp"
#include "gci/errors.hpp"

namespace gci {

namespace {

using Eigen::MatrixXd;

MatrixXd submatrix(const MatrixXd& a, const std::vector<int>& rows, const std::vector<int>& cols) {
    MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = a(rows[i], cols[j]);
    return out;
}

// Bartlett draw from W(df, F F') for any square factor F.
MatrixXd wishart_from_factor(double df, const MatrixXd& f, Rng& rng) {
    const int p = static_cast<int>(f.rows());
    MatrixXd a = MatrixXd::Zero(p, p);
    for (int j = 0; j < p; ++j) {
        a(j, j) = std::sqrt(rng.chisq(df - j));
        for (int i = j + 1; i < p; ++i) a(i, j) = rng.normal();
    }
    MatrixXd fa = f * a;
    return fa * fa.transpose();
}

// Upper-triangular factor F with F F' = A^{-1}, from the Cholesky of A.
MatrixXd inverse_factor(const MatrixXd& a) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw numerical_error("G-Wishart scale block is not SPD");
    const int p = static_cast<int>(a.rows());
    return llt.matrixU().solve(MatrixXd::Identity(p, p));
}

// Inverse Wishart in the (delta, A) convention: Sigma^{-1} ~ W(delta + p - 1, A^{-1}).
MatrixXd sample_inverse_wishart(double delta, const MatrixXd& a, Rng& rng) {
    const int p = static_cast<int>(a.rows());
    MatrixXd w = wishart_from_factor(delta + p - 1, inverse_factor(a), rng);
    MatrixXd sigma = w.llt().solve(MatrixXd::Identity(p, p));
    symmetrize(sigma);
    return sigma;
}

// Exact sampler for decomposable graphs: build the covariance clique by
// clique along a perfect sequence, then complete the precision as
// sum of padded clique inverses minus padded separator inverses.
MatrixXd sample_decomposable(double df, const MatrixXd& scale, const Adjacency& graph, Rng& rng) {
    const int n = static_cast<int>(graph.rows());
    CliqueSequence seq = perfect_clique_sequence(graph);
    MatrixXd sigma = MatrixXd::Zero(n, n);

    for (std::size_t j = 0; j < seq.cliques.size(); ++j) {
        const auto& clique = seq.cliques[j];
        const auto& sep = seq.separators[j];
        if (sep.empty()) {
            MatrixXd blk = sample_inverse_wishart(df, submatrix(scale, clique, clique), rng);
            for (std::size_t a = 0; a < clique.size(); ++a)
                for (std::size_t b = 0; b < clique.size(); ++b) sigma(clique[a], clique[b]) = blk(a, b);
            continue;
        }
        std::vector<int> resid;
        for (int v : clique) {
            bool in_sep = false;
            for (int s : sep) in_sep = in_sep || (s == v);
            if (!in_sep) resid.push_back(v);
        }
        const int nr = static_cast<int>(resid.size()), ns = static_cast<int>(sep.size());
        MatrixXd d_ss = submatrix(scale, sep, sep);
        MatrixXd d_rs = submatrix(scale, resid, sep);
        MatrixXd d_rr = submatrix(scale, resid, resid);
        Eigen::LLT<MatrixXd> llt_ss(d_ss);
        if (llt_ss.info() != Eigen::Success) throw numerical_error("G-Wishart scale block is not SPD");
        MatrixXd d_rr_cond = d_rr - d_rs * llt_ss.solve(d_rs.transpose());
        symmetrize(d_rr_cond);

        MatrixXd u = sample_inverse_wishart(df + ns, d_rr_cond, rng);
        // regression coefficients: mean D_RS D_SS^{-1}, row cov U, col cov D_SS^{-1}
        MatrixXd gamma = d_rs * llt_ss.solve(MatrixXd::Identity(ns, ns));
        MatrixXd z = rng.normal_mat(nr, ns);
        gamma += u.llt().matrixL() * z * inverse_factor(d_ss).transpose();

        MatrixXd sigma_ss = submatrix(sigma, sep, sep);  // already sampled
        MatrixXd sigma_rs = gamma * sigma_ss;
        MatrixXd sigma_rr = u + gamma * sigma_ss * gamma.transpose();
        for (int a = 0; a < nr; ++a) {
            for (int b = 0; b < nr; ++b) sigma(resid[a], resid[b]) = sigma_rr(a, b);
            for (int b = 0; b < ns; ++b) {
                sigma(resid[a], sep[b]) = sigma_rs(a, b);
                sigma(sep[b], resid[a]) = sigma_rs(a, b);
            }
        }
    }

    MatrixXd k = MatrixXd::Zero(n, n);
    auto add_padded_inverse = [&](const std::vector<int>& idx, double sign) {
        if (idx.empty()) return;
        MatrixXd blk = submatrix(sigma, idx, idx);
        MatrixXd inv = blk.llt().solve(MatrixXd::Identity(idx.size(), idx.size()));
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b) k(idx[a], idx[b]) += sign * inv(a, b);
    };
    for (const auto& c : seq.cliques) add_padded_inverse(c, 1.0);
    for (const auto& s : seq.separators) add_padded_inverse(s, -1.0);
    symmetrize(k);
    return k;
}

// Direct sampler for general graphs: one unconstrained Wishart draw, then
// node-wise conditional completion iterated to a fixed point.
MatrixXd sample_direct(double df, const MatrixXd& scale, const Adjacency& graph, Rng& rng) {
    const int n = static_cast<int>(graph.rows());
    MatrixXd k0 = wishart_from_factor(df + n - 1, inverse_factor(scale), rng);
    MatrixXd sigma_star = k0.llt().solve(MatrixXd::Identity(n, n));
    symmetrize(sigma_star);

    MatrixXd w = sigma_star;
    const double tol = 1e-12 * (1.0 + sigma_star.cwiseAbs().maxCoeff());
    const int max_sweeps = 10000;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double delta = 0;
        for (int i = 0; i < n; ++i) {
            std::vector<int> nb;
            for (int j = 0; j < n; ++j)
                if (j != i && graph(i, j)) nb.push_back(j);
            Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
            if (!nb.empty()) {
                MatrixXd w_nn = submatrix(w, nb, nb);
                Eigen::VectorXd s_ni(nb.size());
                for (std::size_t a = 0; a < nb.size(); ++a) s_ni(a) = sigma_star(nb[a], i);
                Eigen::VectorXd beta = w_nn.ldlt().solve(s_ni);
                for (int r = 0; r < n; ++r) {
                    if (r == i) continue;
                    double acc = 0;
                    for (std::size_t a = 0; a < nb.size(); ++a) acc += w(r, nb[a]) * beta(a);
                    col(r) = acc;
                }
            }
            for (int r = 0; r < n; ++r) {
                if (r == i) continue;
                delta = std::max(delta, std::abs(w(r, i) - col(r)));
                w(r, i) = col(r);
                w(i, r) = col(r);
            }
        }
        converged = delta < tol;
    }
    if (!converged) throw numerical_error("G-Wishart direct sampler failed to converge");

    MatrixXd k = w.llt().solve(MatrixXd::Identity(n, n));
    // enforce the structural zeros the iteration approached
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && !graph(i, j)) k(i, j) = 0.0;
    symmetrize(k);
    return k;
}

}  // namespace

Eigen::MatrixXd sample_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng) {
    const int p = static_cast<int>(scale.rows());
    if (scale.cols() != p) throw std::invalid_argument("sample_wishart: scale must be square");
    if (df <= p - 1) throw std::invalid_argument("sample_wishart: degrees of freedom too small");
    Eigen::LLT<MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) throw numerical_error("sample_wishart: scale is not SPD");
    return wishart_from_factor(df, MatrixXd(llt.matrixL()), rng);
}

Eigen::MatrixXd sample_gwishart(double df, const Eigen::MatrixXd& scale, const Adjacency& graph,
                                Rng& rng, GWishartMethod method) {
    validate_adjacency(graph);
    const int n = static_cast<int>(graph.rows());
    if (scale.rows() != n || scale.cols() != n)
        throw std::invalid_argument("sample_gwishart: scale and graph dimensions disagree");
    if (df <= 0) throw std::invalid_argument("sample_gwishart: degrees of freedom must be positive");

    MatrixXd k;
    if (method == GWishartMethod::direct) {
        k = sample_direct(df, scale, graph, rng);
    } else if (is_decomposable(graph)) {
        k = sample_decomposable(df, scale, graph, rng);
    } else if (method == GWishartMethod::auto_select) {
        k = sample_direct(df, scale, graph, rng);
    } else {
        throw std::invalid_argument("sample_gwishart: graph is not decomposable and the fallback is disabled");
    }
    Eigen::LLT<MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw numerical_error("sample_gwishart: draw failed the positive definiteness check");
    return k;
}

}  // namespace gci
