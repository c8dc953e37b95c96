#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gci/dense.hpp"
#include "gci/errors.hpp"

// Undirected graph utilities for the graph-constrained covariance models:
// adjacency validation, maximal cliques, decomposability via maximum
// cardinality search, a perfect clique sequence for decomposable graphs, and
// iterative proportional scaling onto the cone of graph-Markov precisions.
// Adjacency matrices are dense 0/1 symmetric with unit diagonal; graphs here
// are small (region blocks are capped at 15 nodes).

namespace gci {

using Adjacency = Eigen::MatrixXi;

inline void validate_adjacency(const Adjacency& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("adjacency must be square");
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (a(i, i) != 1) throw std::invalid_argument("adjacency diagonal must be one");
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (a(i, j) != 0 && a(i, j) != 1) throw std::invalid_argument("adjacency entries must be 0/1");
            if (a(i, j) != a(j, i)) throw std::invalid_argument("adjacency must be symmetric");
        }
    }
}

inline Adjacency path_graph(int n) {
    Adjacency a = Adjacency::Identity(n, n);
    for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1;
    return a;
}

inline Adjacency complete_graph(int n) { return Adjacency::Ones(n, n); }

namespace detail {

inline void bron_kerbosch(std::uint64_t r, std::uint64_t p, std::uint64_t x,
                          const std::vector<std::uint64_t>& nbr,
                          std::vector<std::vector<int>>& out) {
    if (p == 0 && x == 0) {
        std::vector<int> clique;
        for (int v = 0; v < 64; ++v)
            if (r >> v & 1) clique.push_back(v);
        out.push_back(clique);
        return;
    }
    // pivot on the candidate covering the most of p
    std::uint64_t px = p | x;
    int pivot = -1, best = -1;
    for (int v = 0; v < 64; ++v)
        if (px >> v & 1) {
            int cover = __builtin_popcountll(p & nbr[v]);
            if (cover > best) best = cover, pivot = v;
        }
    std::uint64_t cand = p & ~nbr[pivot];
    for (int v = 0; v < 64; ++v)
        if (cand >> v & 1) {
            std::uint64_t bit = 1ULL << v;
            bron_kerbosch(r | bit, p & nbr[v], x & nbr[v], nbr, out);
            p &= ~bit;
            x |= bit;
        }
}

inline std::vector<std::uint64_t> neighbor_masks(const Adjacency& a) {
    int n = static_cast<int>(a.rows());
    if (n > 63) throw std::invalid_argument("graph too large (max 63 nodes)");
    std::vector<std::uint64_t> nbr(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i && a(i, j)) nbr[i] |= 1ULL << j;
    return nbr;
}

}  // namespace detail

inline std::vector<std::vector<int>> maximal_cliques(const Adjacency& a) {
    int n = static_cast<int>(a.rows());
    auto nbr = detail::neighbor_masks(a);
    std::vector<std::vector<int>> out;
    detail::bron_kerbosch(0, n == 64 ? ~0ULL : (1ULL << n) - 1, 0, nbr, out);
    return out;
}

// Maximum cardinality search; returns the visit order (first visited first).
inline std::vector<int> mcs_order(const Adjacency& a) {
    int n = static_cast<int>(a.rows());
    std::vector<int> weight(n, 0), order;
    std::vector<bool> seen(n, false);
    for (int step = 0; step < n; ++step) {
        int v = -1;
        for (int i = 0; i < n; ++i)
            if (!seen[i] && (v < 0 || weight[i] > weight[v])) v = i;
        seen[v] = true;
        order.push_back(v);
        for (int j = 0; j < n; ++j)
            if (a(v, j) && !seen[j]) ++weight[j];
    }
    return order;
}

// Chordality test: MCS order, checked as a perfect elimination ordering in
// reverse (each vertex's earlier-visited neighbors must form a clique).
inline bool is_decomposable(const Adjacency& a) {
    int n = static_cast<int>(a.rows());
    auto order = mcs_order(a);
    std::vector<int> rank(n);
    for (int i = 0; i < n; ++i) rank[order[i]] = i;
    for (int i = 0; i < n; ++i) {
        int v = order[i];
        // earlier-visited neighbors of v
        std::vector<int> prev;
        for (int j = 0; j < n; ++j)
            if (a(v, j) && rank[j] < i) prev.push_back(j);
        if (prev.empty()) continue;
        // the most recently visited one must dominate the rest
        int p = prev[0];
        for (int u : prev)
            if (rank[u] > rank[p]) p = u;
        for (int u : prev)
            if (u != p && !a(p, u)) return false;
    }
    return true;
}

struct CliqueSequence {
    std::vector<std::vector<int>> cliques;     // perfect order
    std::vector<std::vector<int>> separators;  // separators[j] = cliques[j] ∩ (earlier union), empty for j=0
};

// Perfect clique sequence (running intersection property) for a decomposable
// graph: maximal cliques ranked by their largest MCS visit index.
inline CliqueSequence perfect_clique_sequence(const Adjacency& a) {
    if (!is_decomposable(a)) throw std::invalid_argument("graph is not decomposable");
    int n = static_cast<int>(a.rows());
    auto order = mcs_order(a);
    std::vector<int> rank(n);
    for (int i = 0; i < n; ++i) rank[order[i]] = i;
    auto cliques = maximal_cliques(a);
    std::sort(cliques.begin(), cliques.end(), [&](const auto& c1, const auto& c2) {
        int r1 = 0, r2 = 0;
        for (int v : c1) r1 = std::max(r1, rank[v]);
        for (int v : c2) r2 = std::max(r2, rank[v]);
        return r1 < r2;
    });
    CliqueSequence seq;
    std::vector<bool> used(n, false);
    for (std::size_t j = 0; j < cliques.size(); ++j) {
        std::vector<int> sep;
        for (int v : cliques[j])
            if (used[v]) sep.push_back(v);
        if (j > 0) {
            // running intersection: sep must lie inside one earlier clique
            bool ok = false;
            for (std::size_t i = 0; i < j && !ok; ++i) {
                std::size_t hits = 0;
                for (int v : sep)
                    for (int u : seq.cliques[i])
                        if (u == v) ++hits;
                ok = hits == sep.size();
            }
            if (!ok) throw numerical_error("clique ordering violates running intersection");
        }
        for (int v : cliques[j]) used[v] = true;
        seq.cliques.push_back(cliques[j]);
        seq.separators.push_back(sep);
    }
    return seq;
}

// Iterative proportional scaling. Returns the precision matrix K with zeros
// off the graph such that (K^{-1})_{ij} matches target_cov on edges and the
// diagonal. target_cov must be SPD. Throws numerical_error if the edgewise
// mismatch has not dropped below tol within max_sweeps sweeps.
inline Eigen::MatrixXd ips_project(const Eigen::MatrixXd& target_cov, const Adjacency& a,
                                   int max_sweeps = 100, double tol = 1e-8) {
    const int n = static_cast<int>(a.rows());
    if (target_cov.rows() != n || target_cov.cols() != n)
        throw std::invalid_argument("ips_project: dimension mismatch");
    auto cliques = maximal_cliques(a);
    Eigen::MatrixXd k = target_cov.diagonal().cwiseInverse().asDiagonal();
    const double scale = 1.0 + target_cov.cwiseAbs().maxCoeff();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (const auto& c : cliques) {
            const int nc = static_cast<int>(c.size());
            std::vector<int> rest;
            rest.reserve(n - nc);
            std::vector<bool> inc(n, false);
            for (int v : c) inc[v] = true;
            for (int v = 0; v < n; ++v)
                if (!inc[v]) rest.push_back(v);
            Eigen::MatrixXd s_cc(nc, nc);
            for (int i = 0; i < nc; ++i)
                for (int j = 0; j < nc; ++j) s_cc(i, j) = target_cov(c[i], c[j]);
            Eigen::MatrixXd upd = s_cc.llt().solve(Eigen::MatrixXd::Identity(nc, nc));
            if (!rest.empty()) {
                const int nr = static_cast<int>(rest.size());
                Eigen::MatrixXd k_cb(nc, nr), k_bb(nr, nr);
                for (int i = 0; i < nc; ++i)
                    for (int j = 0; j < nr; ++j) k_cb(i, j) = k(c[i], rest[j]);
                for (int i = 0; i < nr; ++i)
                    for (int j = 0; j < nr; ++j) k_bb(i, j) = k(rest[i], rest[j]);
                upd += k_cb * k_bb.llt().solve(k_cb.transpose());
            }
            for (int i = 0; i < nc; ++i)
                for (int j = 0; j < nc; ++j) k(c[i], c[j]) = upd(i, j);
        }
        Eigen::MatrixXd cov = k.llt().solve(Eigen::MatrixXd::Identity(n, n));
        double err = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i == j || a(i, j)) err = std::max(err, std::abs(cov(i, j) - target_cov(i, j)));
        if (err < tol * scale) return k;
    }
    throw numerical_error("ips_project: no convergence within sweep limit");
}

}  // namespace gci
