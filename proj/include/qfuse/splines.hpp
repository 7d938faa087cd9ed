#pragma once

// Clamped B-spline bases on [0,1] and the identifiability rotation that maps
// the zero-integral constraint onto an unconstrained coordinate system.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "qfuse/errors.hpp"

namespace qfuse {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Clamped knot sequence: `order` copies of 0, equally spaced interior knots,
/// `order` copies of 1. Basis dimension is interior_count + order.
template <typename Scalar = double>
class KnotVector {
public:
    KnotVector(int interior_count, int order)
        : interior_count_(interior_count), order_(order) {
        if (order < 1) throw InvalidInput("spline order must be >= 1");
        if (interior_count < 0) throw InvalidInput("interior knot count must be >= 0");
        const int dim = interior_count + order;
        knots_.resize(dim + order);
        for (int k = 0; k < order; ++k) {
            knots_[k] = Scalar(0);
            knots_[dim + k] = Scalar(1);
        }
        for (int k = 1; k <= interior_count; ++k) {
            knots_[order - 1 + k] = Scalar(k) / Scalar(interior_count + 1);
        }
    }

    int interior_count() const noexcept { return interior_count_; }
    int order() const noexcept { return order_; }
    int dim() const noexcept { return interior_count_ + order_; }
    const VectorX<Scalar>& knots() const noexcept { return knots_; }

    /// Index s of the knot span [t_s, t_{s+1}) containing x, in [order-1, dim-1].
    /// x = 1 belongs to the last span.
    int span(Scalar x) const {
        const int last = dim() - 1;
        if (x >= knots_[last + 1]) return last;
        const Scalar* first = knots_.data() + order_;
        const Scalar* end = knots_.data() + last + 1;
        const Scalar* it = std::upper_bound(first, end, x);
        return static_cast<int>(it - knots_.data()) - 1;
    }

private:
    int interior_count_;
    int order_;
    VectorX<Scalar> knots_;
};

template <typename Scalar = double>
KnotVector<Scalar> make_knots(int interior_count, int order) {
    return KnotVector<Scalar>(interior_count, order);
}

namespace detail {
template <typename Scalar>
void check_unit_interval(Scalar x) {
    if (!(x >= Scalar(0) && x <= Scalar(1))) {
        throw DomainError("spline argument " + std::to_string(static_cast<double>(x)) +
                          " outside [0,1]");
    }
}
}  // namespace detail

/// Writes the `order` possibly nonzero basis values at x into `out` and
/// returns the index of the first of them (Cox-de Boor recursion).
template <typename Scalar>
int eval_b_local(const KnotVector<Scalar>& kv, Scalar x, std::span<Scalar> out) {
    detail::check_unit_interval(x);
    const int q = kv.order();
    const int s = kv.span(x);
    const auto& t = kv.knots();
    // order is small in practice; scratch lives on the stack up to 16
    constexpr int kMaxOrder = 16;
    if (q > kMaxOrder || static_cast<int>(out.size()) < q) {
        throw InvalidInput("spline order too large or output buffer too small");
    }
    std::array<Scalar, kMaxOrder> left{};
    std::array<Scalar, kMaxOrder> right{};
    out[0] = Scalar(1);
    for (int j = 1; j < q; ++j) {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        Scalar saved(0);
        for (int r = 0; r < j; ++r) {
            const Scalar denom = right[r + 1] + left[j - r];
            const Scalar temp = denom > Scalar(0) ? out[r] / denom : Scalar(0);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    return s - (q - 1);
}

/// Full basis vector (B_1(x), ..., B_H(x)).
template <typename Scalar>
VectorX<Scalar> eval_b(const KnotVector<Scalar>& kv, Scalar x) {
    std::array<Scalar, 16> local{};
    const int first = eval_b_local(kv, x, std::span<Scalar>(local.data(), kv.order()));
    VectorX<Scalar> b = VectorX<Scalar>::Zero(kv.dim());
    for (int k = 0; k < kv.order(); ++k) b[first + k] = local[k];
    return b;
}

/// Exact integrals b_h = (t_{h+q} - t_h) / q of each basis function over [0,1].
template <typename Scalar>
VectorX<Scalar> basis_integrals(const KnotVector<Scalar>& kv) {
    const int q = kv.order();
    const auto& t = kv.knots();
    VectorX<Scalar> b(kv.dim());
    for (int h = 0; h < kv.dim(); ++h) b[h] = (t[h + q] - t[h]) / Scalar(q);
    return b;
}

/// Orthonormal rows spanning the complement of b. Built from the Householder
/// reflection taking b/|b| onto the first axis; the first row is dropped and
/// every remaining row is signed so its first non-negligible entry is positive.
template <typename Scalar>
MatrixX<Scalar> build_rotation(const VectorX<Scalar>& b) {
    const Scalar norm = b.norm();
    if (b.size() == 0 || !(norm > Scalar(0))) {
        throw InvalidInput("rotation requires a nonzero integral vector");
    }
    const Eigen::Index dim = b.size();
    VectorX<Scalar> v = b / norm;
    v[0] += v[0] >= Scalar(0) ? Scalar(1) : Scalar(-1);
    const Scalar vv = v.squaredNorm();
    MatrixX<Scalar> reflector = MatrixX<Scalar>::Identity(dim, dim) - (Scalar(2) / vv) * v * v.transpose();
    MatrixX<Scalar> rot = reflector.bottomRows(dim - 1);
    const Scalar eps = Scalar(64) * Eigen::NumTraits<Scalar>::epsilon();
    for (Eigen::Index r = 0; r < rot.rows(); ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            if (std::abs(rot(r, c)) > eps) {
                if (rot(r, c) < Scalar(0)) rot.row(r) *= Scalar(-1);
                break;
            }
        }
    }
    return rot;
}

/// Knots, integrals and rotation bundled for evaluating Pi(x) = sqrt(H) O B(x).
template <typename Scalar = double>
class SplineSystem {
public:
    explicit SplineSystem(KnotVector<Scalar> knots)
        : knots_(std::move(knots)),
          integrals_(basis_integrals(knots_)),
          rotation_(build_rotation(integrals_)),
          scale_(std::sqrt(Scalar(knots_.dim()))) {
        scaled_rotation_ = scale_ * rotation_;
    }

    SplineSystem(int interior_count, int order) : SplineSystem(KnotVector<Scalar>(interior_count, order)) {}

    const KnotVector<Scalar>& knots() const noexcept { return knots_; }
    const VectorX<Scalar>& integrals() const noexcept { return integrals_; }
    const MatrixX<Scalar>& rotation() const noexcept { return rotation_; }
    int dim() const noexcept { return knots_.dim(); }
    int reduced_dim() const noexcept { return knots_.dim() - 1; }

    /// Pi(x), length H - 1.
    VectorX<Scalar> eval_pi(Scalar x) const {
        VectorX<Scalar> out(reduced_dim());
        eval_pi_into(x, out);
        return out;
    }

    template <typename Derived>
    void eval_pi_into(Scalar x, Eigen::MatrixBase<Derived> const& out_) const {
        auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_);
        std::array<Scalar, 16> local{};
        const int q = knots_.order();
        const int first = eval_b_local(knots_, x, std::span<Scalar>(local.data(), q));
        out.setZero();
        for (int k = 0; k < q; ++k) out += local[k] * scaled_rotation_.col(first + k);
    }

    /// Pi(x_k)^T for every entry of xs, one row per point.
    MatrixX<Scalar> eval_pi_rows(const VectorX<Scalar>& xs) const {
        MatrixX<Scalar> rows(xs.size(), reduced_dim());
        for (Eigen::Index k = 0; k < xs.size(); ++k) eval_pi_into(xs[k], rows.row(k).transpose());
        return rows;
    }

    /// Coefficients in the original B-spline basis: beta = sqrt(H) O^T theta.
    VectorX<Scalar> to_bspline_coefficients(const VectorX<Scalar>& theta) const {
        return scaled_rotation_.transpose() * theta;
    }

private:
    KnotVector<Scalar> knots_;
    VectorX<Scalar> integrals_;
    MatrixX<Scalar> rotation_;
    Scalar scale_;
    MatrixX<Scalar> scaled_rotation_;
};

/// Basis dimension used when none is configured: max(q + 2, round((nT)^(1/5)) + 2),
/// the sieve rate for twice-differentiable targets.
inline int default_basis_dim(long long observations, int order) {
    const int rate = static_cast<int>(std::lround(std::pow(static_cast<double>(observations), 0.2)));
    return std::max(order + 2, rate + 2);
}

}  // namespace qfuse
