#pragma once

#include <Eigen/Dense>

#include "gci/errors.hpp"

namespace gci {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Derived>
inline void symmetrize(Eigen::MatrixBase<Derived>& a) {
    a = ((a + a.transpose()) * 0.5).eval();
}

// Symmetric PSD square root via eigendecomposition; negative eigenvalues from
// roundoff are clamped to zero.
template <class Scalar>
MatrixX<Scalar> sym_sqrt(const MatrixX<Scalar>& a) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a);
    if (es.info() != Eigen::Success) throw numerical_error("sym_sqrt: eigendecomposition failed");
    VectorX<Scalar> d = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Inverse symmetric square root; requires SPD input.
template <class Scalar>
MatrixX<Scalar> sym_inv_sqrt(const MatrixX<Scalar>& a) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a);
    if (es.info() != Eigen::Success) throw numerical_error("sym_inv_sqrt: eigendecomposition failed");
    if (es.eigenvalues().minCoeff() <= Scalar(0))
        throw numerical_error("sym_inv_sqrt: matrix is not positive definite");
    VectorX<Scalar> d = es.eigenvalues().cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

template <class Scalar>
bool is_spd(const MatrixX<Scalar>& a, Scalar tol = Scalar(0)) {
    if (a.rows() != a.cols()) return false;
    if (((a - a.transpose()).array().abs() > Scalar(1e-10) * (Scalar(1) + a.array().abs().maxCoeff())).any())
        return false;
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a, Eigen::EigenvaluesOnly);
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > tol;
}

// Spectral condition number of a symmetric matrix (|lambda|_max / |lambda|_min).
template <class Scalar>
Scalar sym_cond(const MatrixX<Scalar>& a) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw numerical_error("sym_cond: eigendecomposition failed");
    Scalar lo = es.eigenvalues().cwiseAbs().minCoeff();
    Scalar hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lo == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
    return hi / lo;
}

}  // namespace gci
