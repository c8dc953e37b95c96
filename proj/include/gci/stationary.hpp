#pragma once

#include <type_traits>

#include <Eigen/Dense>

#include "gci/dense.hpp"
#include "gci/errors.hpp"

// Schur-stable VAR(1) parameterization. An unrestricted parameter block
// (L, lambda, g, iota) maps to a stable coefficient matrix via
//
//   V = L diag(exp lambda) L',   U = V + M,
//   O = E_iota [(I - G)(I + G)^{-1}]^2,   E_iota = I - 2*iota*e1 e1',
//   Phi = V^{1/2} O U^{-1/2}   (symmetric PSD square roots),
//
// which satisfies the Yule-Walker identity U = Phi U Phi' + M for the fixed
// SPD anchor M. L has unit diagonal so the scale lives entirely in lambda;
// lambda is floored at -30 to keep V numerically full rank. Strict-lower
// entries of L and G are packed column-major.

namespace gci {

template <class Scalar>
struct StationaryVarParams {
    MatrixX<Scalar> chol_lower;  // n x n, unit diagonal, lower triangular
    VectorX<Scalar> log_diag;    // n
    VectorX<Scalar> skew_lower;  // n(n-1)/2 strict-lower entries of G
    bool reflect = false;        // iota
    MatrixX<Scalar> anchor;      // M, SPD

    Eigen::Index dim() const { return log_diag.size(); }

    void validate() const {
        const Eigen::Index n = log_diag.size();
        if (chol_lower.rows() != n || chol_lower.cols() != n)
            throw std::invalid_argument("stationary params: Cholesky factor dimension mismatch");
        if (skew_lower.size() != n * (n - 1) / 2)
            throw std::invalid_argument("stationary params: skew parameter count mismatch");
        if (anchor.rows() != n || anchor.cols() != n)
            throw std::invalid_argument("stationary params: anchor dimension mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (chol_lower(i, i) != Scalar(1))
                throw std::invalid_argument("stationary params: Cholesky factor must have unit diagonal");
            for (Eigen::Index j = i + 1; j < n; ++j)
                if (chol_lower(i, j) != Scalar(0))
                    throw std::invalid_argument("stationary params: Cholesky factor must be lower triangular");
        }
        if (!is_spd(anchor)) throw std::invalid_argument("stationary params: anchor must be SPD");
    }
};

// Number of unrestricted reals: strict-lower L, lambda, strict-lower G.
inline Eigen::Index stationary_param_count(Eigen::Index n) { return n * n; }

// Unpack a flat parameter vector (L entries, lambda, g entries) plus the
// reflection bit and anchor into structured form.
template <class Scalar>
StationaryVarParams<Scalar> unpack_stationary(const VectorX<Scalar>& theta, bool reflect,
                                              const std::type_identity_t<MatrixX<Scalar>>& anchor) {
    const Eigen::Index n = anchor.rows();
    if (theta.size() != stationary_param_count(n))
        throw std::invalid_argument("unpack_stationary: parameter count disagrees with anchor dimension");
    StationaryVarParams<Scalar> p;
    p.chol_lower = MatrixX<Scalar>::Identity(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) p.chol_lower(i, j) = theta(k++);
    p.log_diag = theta.segment(k, n);
    k += n;
    p.skew_lower = theta.segment(k, n * (n - 1) / 2);
    p.reflect = reflect;
    p.anchor = anchor;
    return p;
}

// Inverse of unpack_stationary on the flat coordinates.
template <class Scalar>
VectorX<Scalar> pack_stationary(const StationaryVarParams<Scalar>& params) {
    const Eigen::Index n = params.dim();
    VectorX<Scalar> theta(stationary_param_count(n));
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) theta(k++) = params.chol_lower(i, j);
    theta.segment(k, n) = params.log_diag;
    k += n;
    theta.segment(k, n * (n - 1) / 2) = params.skew_lower;
    return theta;
}

template <class Scalar>
MatrixX<Scalar> cayley_orthogonal(const VectorX<Scalar>& g, bool reflect) {
    // recover n from the triangular count
    Eigen::Index n = 1;
    while (n * (n - 1) / 2 < g.size()) ++n;
    if (n * (n - 1) / 2 != g.size())
        throw std::invalid_argument("cayley_orthogonal: skew parameter count is not triangular");

    MatrixX<Scalar> skew = MatrixX<Scalar>::Zero(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) {
            skew(i, j) = g(k);
            skew(j, i) = -g(k);
            ++k;
        }
    const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(n, n);
    MatrixX<Scalar> half = (eye + skew).partialPivLu().solve(eye);
    half = (eye - skew) * half;
    MatrixX<Scalar> o = half * half;
    if (reflect) o.row(0) = -o.row(0);
    return o;
}

// Strict stability with a 1e-12 margin so that exact boundary roots, which
// land within rounding error of 1, classify as unstable.
template <class Scalar>
bool is_schur_stable(const MatrixX<Scalar>& phi) {
    if (phi.rows() != phi.cols()) throw std::invalid_argument("is_schur_stable: matrix must be square");
    return phi.eigenvalues().cwiseAbs().maxCoeff() < Scalar(1) - Scalar(1e-12);
}

template <class Scalar>
struct StablePhi {
    MatrixX<Scalar> Phi;
    MatrixX<Scalar> U;  // stationary covariance, U = Phi U Phi' + M
};

template <class Scalar>
StablePhi<Scalar> to_phi(const StationaryVarParams<Scalar>& params) {
    params.validate();
    VectorX<Scalar> lam = params.log_diag.cwiseMax(Scalar(-30)).array().exp();
    MatrixX<Scalar> v = params.chol_lower * lam.asDiagonal() * params.chol_lower.transpose();
    symmetrize(v);
    MatrixX<Scalar> u = v + params.anchor;
    symmetrize(u);

    MatrixX<Scalar> o = cayley_orthogonal<Scalar>(params.skew_lower, params.reflect);
    StablePhi<Scalar> out;
    out.Phi = sym_sqrt(v) * o * sym_inv_sqrt(u);
    out.U = u;
    if (!is_schur_stable(out.Phi))
        throw numerical_error("to_phi: derived coefficient matrix is not Schur stable");
    if ((out.U - out.Phi * out.U * out.Phi.transpose() - params.anchor).cwiseAbs().maxCoeff() >
        Scalar(1e-8) * (Scalar(1) + params.anchor.cwiseAbs().maxCoeff()) * Scalar(10))
        throw numerical_error("to_phi: Yule-Walker identity failed numerically");
    return out;
}

// vec(U) = (I - Phi (x) Phi)^{-1} vec(M)
template <class Scalar>
MatrixX<Scalar> solve_yule_walker(const MatrixX<Scalar>& phi,
                                  const std::type_identity_t<MatrixX<Scalar>>& m) {
    const Eigen::Index n = phi.rows();
    if (phi.cols() != n || m.rows() != n || m.cols() != n)
        throw std::invalid_argument("solve_yule_walker: dimension mismatch");
    if (!is_schur_stable(phi))
        throw numerical_error("solve_yule_walker: coefficient matrix is not Schur stable");
    MatrixX<Scalar> kron = MatrixX<Scalar>::Identity(n * n, n * n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            for (Eigen::Index c = 0; c < n; ++c)
                for (Eigen::Index d = 0; d < n; ++d)
                    kron(a * n + c, b * n + d) -= phi(a, b) * phi(c, d);
    VectorX<Scalar> vec_m(n * n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) vec_m(j * n + i) = m(i, j);
    VectorX<Scalar> vec_u = kron.partialPivLu().solve(vec_m);
    MatrixX<Scalar> u(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) u(i, j) = vec_u(j * n + i);
    symmetrize(u);
    Eigen::LLT<MatrixX<Scalar>> llt(u);
    if (llt.info() != Eigen::Success)
        throw numerical_error("solve_yule_walker: solution is not positive definite");
    return u;
}

}  // namespace gci
