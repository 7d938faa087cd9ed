#include "qfuse/panel.hpp"

#include <cmath>
#include <map>

namespace qfuse {

NormalizedCovariates normalize_covariates(const PanelMatrix& raw) {
    if (raw.size() == 0) throw InvalidInput("cannot normalize an empty covariate matrix");
    if (!raw.allFinite()) throw InvalidInput("covariates contain non-finite values");
    const double lo = raw.minCoeff();
    const double hi = raw.maxCoeff();
    if (!(hi > lo)) throw InvalidInput("covariate is constant; at least two distinct values are required");
    AffineMap map{lo, hi};
    PanelMatrix unit = raw.unaryExpr([&](double v) { return map.apply(v); });
    // guard the endpoints against rounding so every entry is inside [0,1]
    unit = unit.cwiseMax(0.0).cwiseMin(1.0);
    return {std::move(unit), map};
}

PanelMatrix denormalize_covariates(const PanelMatrix& unit, const AffineMap& map) {
    return unit.unaryExpr([&](double v) { return map.invert(v); });
}

PanelData::PanelData(PanelMatrix y, PanelMatrix x, std::vector<std::string> ids)
    : y_(std::move(y)), x_(std::move(x)), ids_(std::move(ids)) {
    if (y_.rows() != x_.rows() || y_.cols() != x_.cols()) {
        throw InvalidInput("response and covariate panels differ in shape");
    }
    if (y_.rows() < 1 || y_.cols() < 1) throw InvalidInput("panel must have n >= 1 and T >= 1");
    if (!y_.allFinite() || !x_.allFinite()) throw InvalidInput("panel contains non-finite values");
    if (x_.minCoeff() < 0.0 || x_.maxCoeff() > 1.0) {
        throw InvalidInput("covariates must be normalized into [0,1]");
    }
    if (ids_.empty()) {
        ids_.reserve(y_.rows());
        for (Eigen::Index i = 0; i < y_.rows(); ++i) ids_.push_back(std::to_string(i + 1));
    }
    if (static_cast<Eigen::Index>(ids_.size()) != y_.rows()) {
        throw InvalidInput("individual label count does not match panel rows");
    }
}

PanelData PanelData::select(const std::vector<int>& individuals) const {
    PanelMatrix ys(individuals.size(), T());
    PanelMatrix xs(individuals.size(), T());
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < individuals.size(); ++k) {
        const int i = individuals[k];
        if (i < 0 || i >= n()) throw InvalidInput("individual index out of range");
        ys.row(k) = y_.row(i);
        xs.row(k) = x_.row(i);
        ids.push_back(ids_[i]);
    }
    return PanelData(std::move(ys), std::move(xs), std::move(ids));
}

StackedParams::StackedParams(Vector w, int block) : w_(std::move(w)), block_(block) {
    if (block < 1 || w_.size() % block != 0) throw InvalidInput("stacked parameter length is not a multiple of H");
}

Matrix StackedParams::theta_matrix() const {
    Matrix out(n(), block_ - 1);
    for (Eigen::Index i = 0; i < n(); ++i) out.row(i) = theta(i).transpose();
    return out;
}

Vector StackedParams::intercepts() const {
    Vector out(n());
    for (Eigen::Index i = 0; i < n(); ++i) out[i] = mu(i);
    return out;
}

StackedParams StackedParams::from_blocks(const Vector& mu, const Matrix& theta_rows) {
    if (mu.size() != theta_rows.rows()) throw InvalidInput("intercept and slope blocks disagree in n");
    const int block = static_cast<int>(theta_rows.cols()) + 1;
    StackedParams w(mu.size(), block);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        w.mu(i) = mu[i];
        w.theta(i) = theta_rows.row(i).transpose();
    }
    return w;
}

std::vector<std::vector<int>> GroupStructure::members() const {
    std::vector<std::vector<int>> out(K);
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(static_cast<int>(i));
    return out;
}

int canonicalize_labels(std::vector<int>& labels) {
    std::map<int, int> remap;
    for (int& l : labels) {
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
        l = it->second;
    }
    return static_cast<int>(remap.size());
}

PanelMatrix fitted_curves(const PanelData& panel, const Spline& sys, const Matrix& theta_rows) {
    if (theta_rows.rows() != panel.n() || theta_rows.cols() != sys.reduced_dim()) {
        throw InvalidInput("coefficient matrix does not match panel and spline dimensions");
    }
    PanelMatrix out(panel.n(), panel.T());
    Vector pi(sys.reduced_dim());
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
        for (Eigen::Index t = 0; t < panel.T(); ++t) {
            sys.eval_pi_into(panel.x()(i, t), pi);
            out(i, t) = pi.dot(theta_rows.row(i));
        }
    }
    return out;
}

PanelMatrix residuals(const PanelData& panel, const Spline& sys, const StackedParams& w) {
    if (w.n() != panel.n() || w.block() != sys.dim()) {
        throw InvalidInput("stacked parameters do not match panel and spline dimensions");
    }
    PanelMatrix r = panel.y() - fitted_curves(panel, sys, w.theta_matrix());
    for (Eigen::Index i = 0; i < panel.n(); ++i) r.row(i).array() -= w.mu(i);
    return r;
}

double objective(const PanelData& panel, const Spline& sys, const StackedParams& w, double tau,
                 const ScadParams<double>& penalty) {
    penalty.validate();
    const PanelMatrix r = residuals(panel, sys, w);
    double value = total_check_loss(r, tau) / static_cast<double>(panel.size());
    const Eigen::Index n = panel.n();
    if (n < 2 || penalty.lambda == 0.0) return value;
    double fusion = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            fusion += scad((w.theta(i) - w.theta(j)).norm(), penalty);
        }
    }
    return value + fusion / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace qfuse
