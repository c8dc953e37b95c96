#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "gci/dense.hpp"
#include "gci/errors.hpp"
#include "gci/rng.hpp"

// Linear Gaussian state-space core in predictive form:
//
//   Y_t = z alpha_t + eps_t,                 eps_t ~ N(0, Sigma)
//   alpha_{t+1} = c + T_mat alpha_t + R eta_t,  eta_t ~ N(0, Q)
//   alpha_1 ~ N(a1, P1)
//
// a_t, P_t denote one-step predictions E[alpha_t | Y_{1:t-1}] throughout.
// Observations are an n x T matrix with NaN marking missing entries; partial
// missingness is handled by deleting the affected rows of z and Sigma at that
// time point. The covariance recursion depends on the missingness pattern but
// not the values, so the mean-correction simulation smoother shares one
// covariance pass between the observed and the simulated series.

namespace gci {

template <class Scalar>
struct StateSpaceSystem {
    MatrixX<Scalar> z;      // n x m observation map
    VectorX<Scalar> c;      // m state intercept
    MatrixX<Scalar> T_mat;  // m x m transition
    MatrixX<Scalar> R;      // m x q disturbance selector
    MatrixX<Scalar> Sigma;  // n x n observation covariance (SPD)
    MatrixX<Scalar> Q;      // q x q disturbance covariance (PSD)
    VectorX<Scalar> a1;     // m
    MatrixX<Scalar> P1;     // m x m (PSD)

    Eigen::Index n_series() const { return z.rows(); }
    Eigen::Index n_state() const { return z.cols(); }
    Eigen::Index n_disturb() const { return R.cols(); }

    void validate() const {
        const Eigen::Index n = z.rows(), m = z.cols(), q = R.cols();
        if (c.size() != m || T_mat.rows() != m || T_mat.cols() != m || R.rows() != m)
            throw std::invalid_argument("state-space system: transition block dimensions disagree");
        if (Sigma.rows() != n || Sigma.cols() != n || Q.rows() != q || Q.cols() != q)
            throw std::invalid_argument("state-space system: covariance dimensions disagree");
        if (a1.size() != m || P1.rows() != m || P1.cols() != m)
            throw std::invalid_argument("state-space system: initial state dimensions disagree");
        auto asym = [](const MatrixX<Scalar>& x) {
            return (x - x.transpose()).cwiseAbs().maxCoeff() >
                   Scalar(1e-10) * (Scalar(1) + x.cwiseAbs().maxCoeff());
        };
        if (asym(Sigma) || asym(Q) || asym(P1))
            throw std::invalid_argument("state-space system: Sigma, Q, P1 must be symmetric");
    }
};

template <class Scalar>
std::vector<std::vector<int>> observed_pattern(const MatrixX<Scalar>& y) {
    std::vector<std::vector<int>> obs(y.cols());
    for (Eigen::Index t = 0; t < y.cols(); ++t)
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            if (std::isfinite(y(i, t))) obs[t].push_back(static_cast<int>(i));
    return obs;
}

// Data-independent filter quantities for a fixed missingness pattern.
template <class Scalar>
struct CovariancePass {
    std::vector<std::vector<int>> observed;        // per-time observed row indices
    std::vector<MatrixX<Scalar>> z_t;              // n_t x m row-deleted observation maps
    std::vector<MatrixX<Scalar>> P;                // T+1 predictive covariances
    std::vector<MatrixX<Scalar>> F;                // n_t x n_t innovation covariances
    std::vector<Eigen::LLT<MatrixX<Scalar>>> F_llt;
    std::vector<MatrixX<Scalar>> K;                // m x n_t gains
    std::vector<MatrixX<Scalar>> L;                // m x m, L_t = T_mat - K_t z_t
};

template <class Scalar>
CovariancePass<Scalar> covariance_pass(const StateSpaceSystem<Scalar>& sys,
                                       std::vector<std::vector<int>> observed) {
    const Eigen::Index m = sys.n_state();
    const std::size_t T = observed.size();
    CovariancePass<Scalar> cp;
    cp.observed = std::move(observed);
    cp.z_t.resize(T);
    cp.P.resize(T + 1);
    cp.F.resize(T);
    cp.F_llt.resize(T);
    cp.K.resize(T);
    cp.L.resize(T);

    const MatrixX<Scalar> rqr = sys.R * sys.Q * sys.R.transpose();
    MatrixX<Scalar> p = sys.P1;
    symmetrize(p);
    MatrixX<Scalar> tp(m, m);
    for (std::size_t t = 0; t < T; ++t) {
        cp.P[t] = p;
        const auto& obs = cp.observed[t];
        const Eigen::Index nt = static_cast<Eigen::Index>(obs.size());
        tp.noalias() = sys.T_mat * p;
        if (nt > 0) {
            MatrixX<Scalar> zt(nt, m);
            for (Eigen::Index i = 0; i < nt; ++i) zt.row(i) = sys.z.row(obs[i]);
            MatrixX<Scalar> f(nt, nt);
            MatrixX<Scalar> pz = p * zt.transpose();
            f.noalias() = zt * pz;
            for (Eigen::Index i = 0; i < nt; ++i)
                for (Eigen::Index j = 0; j < nt; ++j) f(i, j) += sys.Sigma(obs[i], obs[j]);
            symmetrize(f);
            Eigen::LLT<MatrixX<Scalar>> llt(f);
            if (llt.info() != Eigen::Success || llt.rcond() < Scalar(1e-12))
                throw numerical_error("kalman filter: innovation covariance is singular or has condition number above 1e12 at time " +
                                      std::to_string(t + 1));
            cp.K[t].noalias() = sys.T_mat * llt.solve(pz.transpose()).transpose();
            cp.L[t] = sys.T_mat - cp.K[t] * zt;
            p.noalias() = tp * cp.L[t].transpose();
            p += rqr;
            cp.z_t[t] = std::move(zt);
            cp.F[t] = std::move(f);
            cp.F_llt[t] = std::move(llt);
        } else {
            cp.z_t[t].resize(0, m);
            cp.F[t].resize(0, 0);
            cp.K[t].resize(m, 0);
            cp.L[t] = sys.T_mat;
            p.noalias() = tp * sys.T_mat.transpose();
            p += rqr;
        }
        symmetrize(p);
    }
    cp.P[T] = p;
    return cp;
}

template <class Scalar>
struct MeanPass {
    MatrixX<Scalar> a;                   // m x (T+1) one-step predictions, a_1 = a1
    std::vector<VectorX<Scalar>> nu;     // innovations on observed rows
    Scalar loglik = 0;
};

template <class Scalar>
MeanPass<Scalar> mean_pass(const StateSpaceSystem<Scalar>& sys, const CovariancePass<Scalar>& cp,
                           const MatrixX<Scalar>& y) {
    const Eigen::Index m = sys.n_state();
    const std::size_t T = cp.observed.size();
    MeanPass<Scalar> mp;
    mp.a.resize(m, T + 1);
    mp.nu.resize(T);
    mp.a.col(0) = sys.a1;
    const Scalar log2pi = std::log(Scalar(2) * Scalar(EIGEN_PI));
    for (std::size_t t = 0; t < T; ++t) {
        const auto& obs = cp.observed[t];
        const Eigen::Index nt = static_cast<Eigen::Index>(obs.size());
        if (nt > 0) {
            VectorX<Scalar> nu(nt);
            for (Eigen::Index i = 0; i < nt; ++i) nu(i) = y(obs[i], t);
            nu.noalias() -= cp.z_t[t] * mp.a.col(t);
            VectorX<Scalar> fi_nu = cp.F_llt[t].solve(nu);
            Scalar logdet = 0;
            for (Eigen::Index i = 0; i < nt; ++i) logdet += std::log(cp.F_llt[t].matrixLLT()(i, i));
            logdet *= Scalar(2);
            mp.loglik -= Scalar(0.5) * (Scalar(nt) * log2pi + logdet + nu.dot(fi_nu));
            mp.a.col(t + 1) = sys.c + sys.T_mat * mp.a.col(t) + cp.K[t] * nu;
            mp.nu[t] = std::move(nu);
        } else {
            mp.a.col(t + 1) = sys.c + sys.T_mat * mp.a.col(t);
            mp.nu[t].resize(0);
        }
    }
    return mp;
}

// Full filter output; L_t = T_mat - K_t z_t is stored alongside the gains.
template <class Scalar>
struct FilterResult {
    std::vector<std::vector<int>> observed;
    MatrixX<Scalar> a;
    std::vector<MatrixX<Scalar>> P;
    std::vector<VectorX<Scalar>> nu;
    std::vector<MatrixX<Scalar>> F;
    std::vector<MatrixX<Scalar>> K;
    std::vector<MatrixX<Scalar>> L;
    Scalar loglik = 0;

    bool missing(std::size_t t) const { return observed[t].empty(); }
};

template <class Scalar>
FilterResult<Scalar> kalman_filter(const StateSpaceSystem<Scalar>& sys, const MatrixX<Scalar>& y) {
    sys.validate();
    if (y.rows() != sys.n_series()) throw std::invalid_argument("kalman_filter: data row count mismatch");
    CovariancePass<Scalar> cp = covariance_pass(sys, observed_pattern(y));
    MeanPass<Scalar> mp = mean_pass(sys, cp, y);
    FilterResult<Scalar> out;
    out.observed = std::move(cp.observed);
    out.a = std::move(mp.a);
    out.P = std::move(cp.P);
    out.nu = std::move(mp.nu);
    out.F = std::move(cp.F);
    out.K = std::move(cp.K);
    out.L = std::move(cp.L);
    out.loglik = mp.loglik;
    return out;
}

template <class Scalar>
Scalar log_likelihood(const StateSpaceSystem<Scalar>& sys, const MatrixX<Scalar>& y) {
    sys.validate();
    if (y.rows() != sys.n_series()) throw std::invalid_argument("log_likelihood: data row count mismatch");
    CovariancePass<Scalar> cp = covariance_pass(sys, observed_pattern(y));
    return mean_pass(sys, cp, y).loglik;
}

// Smoothed moments. P_cross[t] = Cov(alpha_{t+1}, alpha_{t+2} | Y_{1:T}) in the
// 1-based time convention, i.e. the lag-one covariance between consecutive
// smoothed states stored at 0-based offsets (t, t+1).
template <class Scalar>
struct SmoothedMoments {
    MatrixX<Scalar> a;                    // m x T smoothed means
    std::vector<MatrixX<Scalar>> P;       // T smoothed covariances
    std::vector<MatrixX<Scalar>> P_cross; // T-1 lag-one covariances

    // E[alpha_t alpha_t'] and E[alpha_t alpha_{t+1}'] under the smoothing law
    MatrixX<Scalar> second_moment(std::size_t t) const { return P[t] + a.col(t) * a.col(t).transpose(); }
    MatrixX<Scalar> cross_moment(std::size_t t) const {
        return P_cross[t] + a.col(t) * a.col(t + 1).transpose();
    }
};

namespace detail {

// Backward r-recursion producing smoothed means only (used twice by the
// simulation smoother, where the covariance artifacts are shared).
template <class Scalar>
MatrixX<Scalar> smooth_means(const StateSpaceSystem<Scalar>& sys, const CovariancePass<Scalar>& cp,
                             const MeanPass<Scalar>& mp) {
    const Eigen::Index m = sys.n_state();
    const std::size_t T = cp.observed.size();
    MatrixX<Scalar> out(m, T);
    VectorX<Scalar> r = VectorX<Scalar>::Zero(m);
    for (std::size_t ti = T; ti-- > 0;) {
        if (!cp.observed[ti].empty())
            r = cp.z_t[ti].transpose() * cp.F_llt[ti].solve(mp.nu[ti]) + cp.L[ti].transpose() * r;
        else
            r = sys.T_mat.transpose() * r;
        out.col(ti) = mp.a.col(ti) + cp.P[ti] * r;
    }
    return out;
}

}  // namespace detail

template <class Scalar>
SmoothedMoments<Scalar> backward_smoother(const StateSpaceSystem<Scalar>& sys,
                                          const FilterResult<Scalar>& fr) {
    const Eigen::Index m = sys.n_state();
    const std::size_t T = fr.observed.size();
    SmoothedMoments<Scalar> sm;
    sm.a.resize(m, T);
    sm.P.resize(T);
    if (T > 1) sm.P_cross.resize(T - 1);

    VectorX<Scalar> r = VectorX<Scalar>::Zero(m);
    MatrixX<Scalar> n_mat = MatrixX<Scalar>::Zero(m, m);
    std::vector<MatrixX<Scalar>> n_store(T);
    for (std::size_t ti = T; ti-- > 0;) {
        if (!fr.observed[ti].empty()) {
            const Eigen::Index nt = static_cast<Eigen::Index>(fr.observed[ti].size());
            MatrixX<Scalar> zt(nt, m);
            for (Eigen::Index i = 0; i < nt; ++i) zt.row(i) = sys.z.row(fr.observed[ti][i]);
            Eigen::LLT<MatrixX<Scalar>> llt(fr.F[ti]);
            r = zt.transpose() * llt.solve(fr.nu[ti]) + fr.L[ti].transpose() * r;
            MatrixX<Scalar> zfz = zt.transpose() * llt.solve(zt);
            n_mat = zfz + fr.L[ti].transpose() * n_mat * fr.L[ti];
        } else {
            r = sys.T_mat.transpose() * r;
            n_mat = sys.T_mat.transpose() * n_mat * sys.T_mat;
        }
        symmetrize(n_mat);
        n_store[ti] = n_mat;
        sm.a.col(ti) = fr.a.col(ti) + fr.P[ti] * r;
        sm.P[ti] = fr.P[ti] - fr.P[ti] * n_mat * fr.P[ti];
        symmetrize(sm.P[ti]);
    }
    const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(m, m);
    for (std::size_t t = 0; t + 1 < T; ++t)
        sm.P_cross[t] = fr.P[t] * fr.L[t].transpose() * (eye - n_store[t + 1] * fr.P[t + 1]);
    return sm;
}

template <class Scalar>
SmoothedMoments<Scalar> backward_smoother(const StateSpaceSystem<Scalar>& sys,
                                          const MatrixX<Scalar>& y) {
    return backward_smoother(sys, kalman_filter(sys, y));
}

template <class Scalar>
struct SimulatedPath {
    MatrixX<Scalar> alpha;  // m x T
    MatrixX<Scalar> y;      // n x T
};

// Draw one unconditional path from the model.
template <class Scalar>
SimulatedPath<Scalar> simulate_path(const StateSpaceSystem<Scalar>& sys, Eigen::Index T, Rng& rng) {
    sys.validate();
    const Eigen::Index m = sys.n_state(), n = sys.n_series(), q = sys.n_disturb();
    const MatrixX<Scalar> p1_sqrt = sym_sqrt(sys.P1);
    const MatrixX<Scalar> q_sqrt = sym_sqrt(sys.Q);
    const MatrixX<Scalar> sig_sqrt = sym_sqrt(sys.Sigma);
    SimulatedPath<Scalar> out;
    out.alpha.resize(m, T);
    out.y.resize(n, T);
    VectorX<Scalar> state = sys.a1 + p1_sqrt * rng.normal_vec(m);
    for (Eigen::Index t = 0; t < T; ++t) {
        out.alpha.col(t) = state;
        out.y.col(t) = sys.z * state + sig_sqrt * rng.normal_vec(n);
        if (t + 1 < T) state = sys.c + sys.T_mat * state + sys.R * (q_sqrt * rng.normal_vec(q));
    }
    return out;
}

// Mean-correction simulation smoother: draw alpha+, Y+ from the unconditional
// model, then return  E[alpha|Y] + alpha+ - E[alpha|Y+]. The two smoothing
// passes share one covariance pass since they see the same missingness.
template <class Scalar>
MatrixX<Scalar> simulation_smoother(const StateSpaceSystem<Scalar>& sys, const MatrixX<Scalar>& y,
                                    Rng& rng) {
    sys.validate();
    if (y.rows() != sys.n_series()) throw std::invalid_argument("simulation_smoother: data row count mismatch");
    const Eigen::Index m = sys.n_state(), q = sys.n_disturb(), n = sys.n_series();
    const Eigen::Index T = y.cols();

    CovariancePass<Scalar> cp = covariance_pass(sys, observed_pattern(y));
    MeanPass<Scalar> mp = mean_pass(sys, cp, y);

    const MatrixX<Scalar> p1_sqrt = sym_sqrt(sys.P1);
    const MatrixX<Scalar> q_sqrt = sym_sqrt(sys.Q);
    const MatrixX<Scalar> sig_sqrt = sym_sqrt(sys.Sigma);

    MatrixX<Scalar> alpha_plus(m, T);
    MatrixX<Scalar> y_plus = MatrixX<Scalar>::Constant(n, T, std::numeric_limits<Scalar>::quiet_NaN());
    VectorX<Scalar> state = sys.a1 + p1_sqrt * rng.normal_vec(m);
    for (Eigen::Index t = 0; t < T; ++t) {
        alpha_plus.col(t) = state;
        VectorX<Scalar> eps = sig_sqrt * rng.normal_vec(n);
        for (int i : cp.observed[t]) y_plus(i, t) = sys.z.row(i).dot(state) + eps(i);
        if (t + 1 < T) state = sys.c + sys.T_mat * state + sys.R * (q_sqrt * rng.normal_vec(q));
    }

    MeanPass<Scalar> mp_plus = mean_pass(sys, cp, y_plus);
    MatrixX<Scalar> ahat = detail::smooth_means(sys, cp, mp);
    MatrixX<Scalar> ahat_plus = detail::smooth_means(sys, cp, mp_plus);
    return ahat + alpha_plus - ahat_plus;
}

}  // namespace gci
