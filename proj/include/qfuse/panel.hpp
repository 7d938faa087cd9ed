#pragma once

// Balanced panel container, stacked parameter layout, group structures and
// the penalized objective shared by every estimator.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfuse/penalties.hpp"
#include "qfuse/splines.hpp"

namespace qfuse {

/// n x T, individual-major: the row-major storage order matches the stacking
/// y = (y_11, ..., y_1T, y_21, ...).
using PanelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Spline = SplineSystem<double>;

/// Min-max map from raw covariate units onto [0,1].
struct AffineMap {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double raw) const { return (raw - lo) / (hi - lo); }
    double invert(double unit) const { return lo + unit * (hi - lo); }
};

struct NormalizedCovariates {
    PanelMatrix values;
    AffineMap map;
};

/// Min-max normalization; an input already spanning exactly [0,1] maps to itself.
NormalizedCovariates normalize_covariates(const PanelMatrix& raw);
PanelMatrix denormalize_covariates(const PanelMatrix& unit, const AffineMap& map);

/// Immutable balanced panel with covariates on [0,1].
class PanelData {
public:
    PanelData(PanelMatrix y, PanelMatrix x, std::vector<std::string> ids = {});

    Eigen::Index n() const noexcept { return y_.rows(); }
    Eigen::Index T() const noexcept { return y_.cols(); }
    Eigen::Index size() const noexcept { return y_.size(); }
    const PanelMatrix& y() const noexcept { return y_; }
    const PanelMatrix& x() const noexcept { return x_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    /// y stacked individual-major as a length nT vector view.
    Eigen::Map<const Vector> y_stacked() const { return {y_.data(), y_.size()}; }
    Eigen::Map<const Vector> x_stacked() const { return {x_.data(), x_.size()}; }

    /// Subpanel of the listed individuals, in the given order.
    PanelData select(const std::vector<int>& individuals) const;

private:
    PanelMatrix y_;
    PanelMatrix x_;
    std::vector<std::string> ids_;
};

/// w = (mu_1, theta_1, mu_2, theta_2, ...) with blocks of length H.
class StackedParams {
public:
    StackedParams() = default;
    StackedParams(Eigen::Index n, int block) : w_(Vector::Zero(n * block)), block_(block) {}
    StackedParams(Vector w, int block);

    Eigen::Index n() const noexcept { return block_ == 0 ? 0 : w_.size() / block_; }
    int block() const noexcept { return block_; }
    const Vector& values() const noexcept { return w_; }
    Vector& values() noexcept { return w_; }

    double& mu(Eigen::Index i) { return w_[i * block_]; }
    double mu(Eigen::Index i) const { return w_[i * block_]; }
    auto theta(Eigen::Index i) { return w_.segment(i * block_ + 1, block_ - 1); }
    auto theta(Eigen::Index i) const { return w_.segment(i * block_ + 1, block_ - 1); }

    /// theta_i as rows of an n x (H-1) matrix.
    Matrix theta_matrix() const;
    Vector intercepts() const;

    static StackedParams from_blocks(const Vector& mu, const Matrix& theta_rows);

private:
    Vector w_;
    int block_ = 0;
};

/// Partition of individuals. labels are 0-based and canonical: individual 0 is
/// in group 0 and groups are numbered by their smallest member.
struct GroupStructure {
    int K = 0;
    std::vector<int> labels;
    Matrix representatives;  // K x (H-1)
    Vector intercepts;       // length n

    std::vector<std::vector<int>> members() const;
};

/// Relabels so groups are numbered by first appearance; returns the group count.
int canonicalize_labels(std::vector<int>& labels);

/// r_it = y_it - mu_i - Pi(x_it)^T theta_i.
PanelMatrix residuals(const PanelData& panel, const Spline& sys, const StackedParams& w);

/// Pi(x_it)^T theta_i for every observation.
PanelMatrix fitted_curves(const PanelData& panel, const Spline& sys, const Matrix& theta_rows);

/// (nT)^{-1} sum rho_tau(r_it) + C(n,2)^{-1} sum_{i<j} p_lambda(|theta_i - theta_j|).
double objective(const PanelData& panel, const Spline& sys, const StackedParams& w, double tau,
                 const ScadParams<double>& penalty);

}  // namespace qfuse
