#pragma once

// Check loss, SCAD penalty and the proximal maps used by the ADMM updates.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "qfuse/errors.hpp"

namespace qfuse {

template <typename Scalar = double>
struct ScadParams {
    Scalar lambda = Scalar(0);
    Scalar a = Scalar(3.7);

    void validate() const {
        if (!(lambda >= Scalar(0))) throw InvalidInput("SCAD lambda must be >= 0");
        if (!(a > Scalar(2))) throw InvalidInput("SCAD shape a must exceed 2");
    }
};

namespace detail {
template <typename Scalar>
void check_tau(Scalar tau) {
    if (!(tau > Scalar(0) && tau < Scalar(1))) {
        throw InvalidInput("quantile level must lie in (0,1), got " + std::to_string(static_cast<double>(tau)));
    }
}
template <typename Scalar>
void check_nonnegative(Scalar u) {
    if (!(u >= Scalar(0))) throw InvalidInput("SCAD argument must be >= 0");
}
}  // namespace detail

/// rho_tau(v) = tau v for v >= 0, (tau - 1) v otherwise.
template <typename Scalar>
Scalar check_loss(Scalar v, Scalar tau) {
    detail::check_tau(tau);
    return v >= Scalar(0) ? tau * v : (tau - Scalar(1)) * v;
}

/// Sum of check losses over every coefficient of an Eigen expression.
template <typename Derived>
typename Derived::Scalar total_check_loss(const Eigen::MatrixBase<Derived>& r, typename Derived::Scalar tau) {
    using Scalar = typename Derived::Scalar;
    detail::check_tau(tau);
    Scalar total(0);
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
        for (Eigen::Index i = 0; i < r.rows(); ++i) {
            const Scalar v = r(i, j);
            total += v >= Scalar(0) ? tau * v : (tau - Scalar(1)) * v;
        }
    }
    return total;
}

template <typename Scalar>
Scalar scad(Scalar u, const ScadParams<Scalar>& p) {
    detail::check_nonnegative(u);
    const Scalar lam = p.lambda;
    if (u < lam) return lam * u;
    if (u <= p.a * lam) return (p.a * lam * u - (u * u + lam * lam) / Scalar(2)) / (p.a - Scalar(1));
    return (p.a + Scalar(1)) * lam * lam / Scalar(2);
}

/// Right derivative p'_lambda(u+).
template <typename Scalar>
Scalar scad_deriv_plus(Scalar u, const ScadParams<Scalar>& p) {
    detail::check_nonnegative(u);
    const Scalar lam = p.lambda;
    if (u < lam) return lam;
    if (u < p.a * lam) return (p.a * lam - u) / (p.a - Scalar(1));
    return Scalar(0);
}

/// argmin_r c rho_tau(r) + (r - zeta)^2 / 2: asymmetric soft thresholding.
template <typename Scalar>
Scalar prox_check(Scalar zeta, Scalar c, Scalar tau) {
    detail::check_tau(tau);
    if (!(c > Scalar(0))) throw InvalidInput("prox_check scale must be positive");
    if (zeta > c * tau) return zeta - c * tau;
    if (zeta < -c * (Scalar(1) - tau)) return zeta + c * (Scalar(1) - tau);
    return Scalar(0);
}

/// R_t(z) = z (1 - t / |z|)_+.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> group_shrink(const Eigen::MatrixBase<Derived>& z,
                                                                        typename Derived::Scalar t) {
    using Scalar = typename Derived::Scalar;
    const Scalar norm = z.norm();
    if (norm <= t) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(z.size());
    return z * (Scalar(1) - t / norm);
}

/// One majorization step of the SCAD group update, anchored at v_prev:
/// R_t(z) with t = p'_lambda(|v_prev|+) / gamma.
template <typename DerivedZ, typename DerivedV>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> scad_group_update(
    const Eigen::MatrixBase<DerivedZ>& z, const Eigen::MatrixBase<DerivedV>& v_prev,
    const ScadParams<typename DerivedZ::Scalar>& p, typename DerivedZ::Scalar gamma) {
    using Scalar = typename DerivedZ::Scalar;
    if (!(gamma > Scalar(0))) throw InvalidInput("ADMM gamma must be positive");
    return group_shrink(z, scad_deriv_plus(Scalar(v_prev.norm()), p) / gamma);
}

/// Exact minimizer of p_lambda(|v|) + gamma/2 |v - z|^2 (needs a > 1 + 1/gamma).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> scad_group_prox(
    const Eigen::MatrixBase<Derived>& z, const ScadParams<typename Derived::Scalar>& p,
    typename Derived::Scalar gamma) {
    using Scalar = typename Derived::Scalar;
    if (!(gamma > Scalar(0))) throw InvalidInput("ADMM gamma must be positive");
    if (!(p.a > Scalar(1) + Scalar(1) / gamma)) {
        throw InvalidInput("exact SCAD prox needs a > 1 + 1/gamma");
    }
    const Scalar norm = z.norm();
    const Scalar lam = p.lambda;
    if (norm <= lam + lam / gamma) return group_shrink(z, lam / gamma);
    if (norm <= p.a * lam) {
        const Scalar shrink = p.a * lam / ((p.a - Scalar(1)) * gamma);
        return group_shrink(z, shrink) / (Scalar(1) - Scalar(1) / ((p.a - Scalar(1)) * gamma));
    }
    return z;
}

}  // namespace qfuse
