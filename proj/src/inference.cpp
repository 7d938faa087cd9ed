#include "qfuse/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qfuse/distributions.hpp"
#include "qfuse/errors.hpp"

namespace qfuse {

std::string to_string(DensityMethod method) {
    return method == DensityMethod::nadaraya_watson ? "nw" : "reweighted_nw";
}

DensityMethod parse_density_method(const std::string& name) {
    if (name == "nw") return DensityMethod::nadaraya_watson;
    if (name == "reweighted_nw") return DensityMethod::reweighted_nadaraya_watson;
    throw ConfigError("unknown density method '" + name + "' (expected nw or reweighted_nw)");
}

void DensityOptions::validate() const {
    if (bandwidth_x && !(*bandwidth_x > 0.0)) throw InvalidInput("density bandwidth in x must be positive");
    if (bandwidth_e && !(*bandwidth_e > 0.0)) throw InvalidInput("density bandwidth in residuals must be positive");
    if (!(floor > 0.0)) throw InvalidInput("density floor must be positive");
    if (grid_points < 2) throw InvalidInput("density grid needs at least 2 points");
}

double rule_of_thumb_bandwidth(std::vector<double> sample) {
    const auto N = sample.size();
    if (N < 2) throw InferenceError("bandwidth needs at least two observations");
    double mean = 0.0;
    for (double s : sample) mean += s;
    mean /= static_cast<double>(N);
    double ss = 0.0;
    for (double s : sample) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / static_cast<double>(N - 1));
    std::sort(sample.begin(), sample.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(N - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, N - 1);
        return sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) throw InferenceError("bandwidth undefined for a constant sample");
    return 1.06 * spread * std::pow(static_cast<double>(N), -0.2);
}

namespace {

double gaussian(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

// Empirical-likelihood weights p_j proportional to 1 / (1 + lambda d_j) that make
// sum p_j d_j = 0. Returns false when no interior solution exists.
bool reweight(const std::vector<double>& d, std::vector<double>& p) {
    double dmin = 0.0, dmax = 0.0;
    for (double v : d) {
        dmin = std::min(dmin, v);
        dmax = std::max(dmax, v);
    }
    if (!(dmin < 0.0 && dmax > 0.0)) return false;
    auto g = [&](double lam) {
        double s = 0.0, ds = 0.0;
        for (double v : d) {
            const double den = 1.0 + lam * v;
            s += v / den;
            ds -= v * v / (den * den);
        }
        return std::pair{s, ds};
    };
    // g is decreasing on (-1/dmax, -1/dmin)
    double lo = -1.0 / dmax, hi = -1.0 / dmin;
    const double margin = 1e-10 * (hi - lo);
    lo += margin;
    hi -= margin;
    double lam = 0.0;
    for (int it = 0; it < 100; ++it) {
        const auto [s, ds] = g(lam);
        if (std::abs(s) < 1e-12) break;
        if (s > 0.0) lo = lam; else hi = lam;
        double next = lam - s / ds;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - lam) < 1e-15 * (1.0 + std::abs(lam))) {
            lam = next;
            break;
        }
        lam = next;
    }
    p.resize(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) p[j] = 1.0 / (1.0 + lam * d[j]);
    return true;
}

}  // namespace

DensityEstimate estimate_density_at_zero(const PanelData& panel, const PanelMatrix& residuals,
                                         const std::vector<int>& labels, const DensityOptions& options) {
    options.validate();
    if (residuals.rows() != panel.n() || residuals.cols() != panel.T()) {
        throw InvalidInput("residual matrix does not match the panel");
    }
    if (static_cast<Eigen::Index>(labels.size()) != panel.n()) throw InvalidInput("one label per individual required");
    if (!residuals.allFinite()) throw InferenceError("residuals are not finite");

    std::vector<int> canon = labels;
    const int K = canonicalize_labels(canon);
    DensityEstimate out;
    out.method = options.method;
    out.floor = options.floor;
    out.values = PanelMatrix::Constant(panel.n(), panel.T(), options.floor);
    out.bandwidth_x.resize(K);
    out.bandwidth_e.resize(K);

    const int G = options.grid_points;
    std::vector<double> grid(G);
    for (int g = 0; g < G; ++g) grid[g] = static_cast<double>(g) / static_cast<double>(G - 1);

    for (int k = 0; k < K; ++k) {
        std::vector<double> xs, es;
        for (Eigen::Index i = 0; i < panel.n(); ++i) {
            if (canon[i] != k) continue;
            for (Eigen::Index t = 0; t < panel.T(); ++t) {
                xs.push_back(panel.x()(i, t));
                es.push_back(residuals(i, t));
            }
        }
        const double hx = options.bandwidth_x.value_or(rule_of_thumb_bandwidth(xs));
        const double he = options.bandwidth_e.value_or(rule_of_thumb_bandwidth(es));
        out.bandwidth_x[k] = hx;
        out.bandwidth_e[k] = he;

        std::vector<double> ke(es.size());
        for (std::size_t j = 0; j < es.size(); ++j) ke[j] = gaussian(es[j] / he) / he;

        std::vector<double> fgrid(G);
        std::vector<double> kx(xs.size()), d(xs.size()), p;
        for (int g = 0; g < G; ++g) {
            for (std::size_t j = 0; j < xs.size(); ++j) {
                kx[j] = gaussian((xs[j] - grid[g]) / hx);
                d[j] = (xs[j] - grid[g]) * kx[j];
            }
            const bool rw = options.method == DensityMethod::reweighted_nadaraya_watson && reweight(d, p);
            double num = 0.0, den = 0.0;
            for (std::size_t j = 0; j < xs.size(); ++j) {
                const double wj = rw ? p[j] * kx[j] : kx[j];
                num += wj * ke[j];
                den += wj;
            }
            fgrid[g] = den > 0.0 ? num / den : 0.0;
        }

        for (Eigen::Index i = 0; i < panel.n(); ++i) {
            if (canon[i] != k) continue;
            for (Eigen::Index t = 0; t < panel.T(); ++t) {
                const double pos = panel.x()(i, t) * static_cast<double>(G - 1);
                const int lo = std::min(static_cast<int>(pos), G - 2);
                const double frac = pos - static_cast<double>(lo);
                double f = (1.0 - frac) * fgrid[lo] + frac * fgrid[lo + 1];
                if (!std::isfinite(f)) throw InferenceError("density estimate is not finite");
                if (f < options.floor) {
                    f = options.floor;
                    ++out.floored;
                }
                out.values(i, t) = f;
            }
        }
    }
    return out;
}

SandwichVariance::SandwichVariance(const PanelData& panel, const Spline& sys, const std::vector<int>& labels,
                                   const DensityEstimate& density, double tau)
    : sys_(&sys), scale_(tau * (1.0 - tau)) {
    detail::check_tau(tau);
    if (static_cast<Eigen::Index>(labels.size()) != panel.n()) throw InvalidInput("one label per individual required");
    if (density.values.rows() != panel.n() || density.values.cols() != panel.T()) {
        throw InvalidInput("density estimate does not match the panel");
    }
    std::vector<int> canon = labels;
    const int K = canonicalize_labels(canon);
    const int d = sys.reduced_dim();
    std::vector<Matrix> G(K, Matrix::Zero(d, d));
    std::vector<Matrix> Q(K, Matrix::Zero(d, d));
    Vector pi(d);
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
        const int k = canon[i];
        for (Eigen::Index t = 0; t < panel.T(); ++t) {
            sys.eval_pi_into(panel.x()(i, t), pi);
            G[k].selfadjointView<Eigen::Lower>().rankUpdate(pi, density.values(i, t));
            Q[k].selfadjointView<Eigen::Lower>().rankUpdate(pi, 1.0);
        }
    }
    for (int k = 0; k < K; ++k) {
        Matrix g = G[k].selfadjointView<Eigen::Lower>();
        Matrix q = Q[k].selfadjointView<Eigen::Lower>();
        Eigen::LLT<Matrix> lg(g);
        Eigen::LLT<Matrix> lq(q);
        if (lg.info() != Eigen::Success || lq.info() != Eigen::Success) {
            throw InferenceError("sandwich matrix of group " + std::to_string(k + 1) +
                                 " is singular; use fewer basis functions or larger groups");
        }
        weighted_.push_back(std::move(lg));
        gram_.push_back(lq.matrixL());
    }
}

double SandwichVariance::variance(int k, const Vector& pi) const {
    if (k < 0 || k >= K()) throw InvalidInput("group index out of range");
    const Vector g = weighted_[k].solve(pi);
    return scale_ * (gram_[k].transpose() * g).squaredNorm();
}

double SandwichVariance::variance(int k, double x) const { return variance(k, sys_->eval_pi(x)); }

double variance_at(double x, const PanelData& panel, const Spline& sys, const std::vector<int>& labels, int k,
                   const DensityEstimate& density, double tau) {
    return SandwichVariance(panel, sys, labels, density, tau).variance(k, x);
}

std::vector<double> default_band_grid() {
    std::vector<double> xs(99);
    for (int g = 0; g < 99; ++g) xs[g] = static_cast<double>(g + 1) / 100.0;
    return xs;
}

ConfidenceBand confidence_band(const std::vector<double>& xs, const Spline& sys, const Matrix& theta,
                               const SandwichVariance& variance, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0,1)");
    if (theta.rows() != variance.K() || theta.cols() != sys.reduced_dim()) {
        throw InvalidInput("group coefficients do not match the variance model");
    }
    const double z = normal_quantile(0.5 * (1.0 + level));
    const Eigen::Index K = theta.rows();
    const auto G = static_cast<Eigen::Index>(xs.size());
    ConfidenceBand band;
    band.x = xs;
    band.level = level;
    band.estimate.resize(K, G);
    band.se.resize(K, G);
    for (Eigen::Index g = 0; g < G; ++g) {
        const Vector pi = sys.eval_pi(xs[g]);
        for (Eigen::Index k = 0; k < K; ++k) {
            band.estimate(k, g) = theta.row(k).dot(pi);
            band.se(k, g) = std::sqrt(variance.variance(static_cast<int>(k), pi));
        }
    }
    band.lower = band.estimate - z * band.se;
    band.upper = band.estimate + z * band.se;
    return band;
}

}  // namespace qfuse
