#include "qfuse/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "qfuse/quantreg.hpp"

namespace qfuse {

std::vector<double> lambda_grid(double lambda_max, int M, GridSpacing spacing, double log_min_ratio) {
    if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) throw InvalidInput("lambda_max must be positive");
    if (M < 1) throw InvalidInput("lambda grid needs M >= 1");
    std::vector<double> grid(static_cast<std::size_t>(M) + 1);
    grid[0] = 0.0;
    if (spacing == GridSpacing::linear) {
        for (int m = 1; m <= M; ++m) grid[m] = lambda_max * static_cast<double>(m) / static_cast<double>(M);
        grid[M] = lambda_max;
    } else {
        if (!(log_min_ratio > 0.0 && log_min_ratio < 1.0)) throw InvalidInput("log grid ratio must lie in (0,1)");
        if (M == 1) {
            grid[1] = lambda_max;
        } else {
            const double lo = std::log(lambda_max * log_min_ratio);
            const double hi = std::log(lambda_max);
            for (int m = 1; m <= M; ++m) {
                grid[m] = std::exp(lo + (hi - lo) * static_cast<double>(m - 1) / static_cast<double>(M - 1));
            }
            grid[M] = lambda_max;
        }
    }
    return grid;
}

namespace {

struct DisjointSets {
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        // keep the smaller index as root so labels do not depend on edge order
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
    std::vector<int> parent;
};

}  // namespace

std::vector<int> fused_partition(const Vector& v, const DifferenceOperator& op, double tol) {
    if (!(tol >= 0.0)) throw InvalidInput("fusion tolerance must be >= 0");
    if (v.size() != op.rows()) throw InvalidInput("group extraction: dimension mismatch");
    const int d = op.block() - 1;
    const auto n = static_cast<std::size_t>(op.n());
    DisjointSets sets(n);
    for (Eigen::Index k = 0; k < op.pairs(); ++k) {
        if (v.segment(k * d, d).norm() <= tol) {
            const auto [i, j] = op.pair(k);
            sets.unite(i, j);
        }
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = sets.find(static_cast<int>(i));
    canonicalize_labels(labels);
    return labels;
}

GroupStructure extract_groups(const Vector& v, const DifferenceOperator& op, const StackedParams& w, double tol) {
    if (w.n() != op.n()) throw InvalidInput("group extraction: dimension mismatch");
    const int d = op.block() - 1;
    const auto n = static_cast<std::size_t>(op.n());
    GroupStructure g;
    g.labels = fused_partition(v, op, tol);
    g.K = g.labels.empty() ? 0 : *std::max_element(g.labels.begin(), g.labels.end()) + 1;
    g.representatives = Matrix::Zero(g.K, d);
    Vector counts = Vector::Zero(g.K);
    for (std::size_t i = 0; i < n; ++i) {
        g.representatives.row(g.labels[i]) += w.theta(static_cast<Eigen::Index>(i)).transpose();
        counts[g.labels[i]] += 1.0;
    }
    for (int k = 0; k < g.K; ++k) g.representatives.row(k) /= counts[k];
    g.intercepts = w.intercepts();
    return g;
}

double sic(double total_loss, int K, int H, long long observations) {
    if (!(total_loss > 0.0) || !std::isfinite(total_loss)) {
        throw InvalidInput("SIC needs a positive finite total check loss");
    }
    if (K < 1) throw InvalidInput("SIC needs K >= 1");
    const double nT = static_cast<double>(observations);
    return std::log(total_loss) + static_cast<double>(K) * static_cast<double>(H) * std::log(nT) / nT;
}

double sic(const PanelData& panel, const Spline& sys, const StackedParams& w, double tau, int K) {
    return sic(total_check_loss(residuals(panel, sys, w), tau), K, sys.dim(), panel.size());
}

double default_lambda_max(const StackedParams& unpenalized) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < unpenalized.n(); ++i) {
        for (Eigen::Index j = i + 1; j < unpenalized.n(); ++j) {
            best = std::max(best, (unpenalized.theta(i) - unpenalized.theta(j)).norm());
        }
    }
    return best;
}

namespace {

void score(FitResult& fit, const AdmmProblem& problem) {
    if (fit.diverged || !(fit.total_loss > 0.0)) {
        fit.sic = std::numeric_limits<double>::infinity();
        return;
    }
    fit.sic = sic(fit.total_loss, fit.K(), problem.design().block(), problem.panel().size());
}

void append(LambdaPath& path, FitResult fit) {
    path.total_inner_iterations += fit.state.inner_iterations;
    path.total_outer_iterations += fit.state.outer_iterations;
    path.fits.push_back(std::move(fit));
}

}  // namespace

LambdaPath run_path(const AdmmProblem& problem, const std::vector<double>& grid, double scad_a, bool warm_start) {
    if (grid.empty()) throw InvalidInput("lambda grid is empty");
    for (std::size_t m = 1; m < grid.size(); ++m) {
        if (!(grid[m] > grid[m - 1])) throw InvalidInput("lambda grid must be strictly increasing");
    }
    if (grid.front() < 0.0) throw InvalidInput("lambda grid must be nonnegative");
    LambdaPath path;
    path.grid = grid;
    std::optional<AdmmState> start;
    for (double lambda : grid) {
        FitResult fit = solve_fixed_lambda(problem, lambda, scad_a, warm_start ? start : std::nullopt);
        score(fit, problem);
        if (warm_start && !fit.diverged) start = fit.state;
        append(path, std::move(fit));
    }
    return path;
}

LambdaPath run_path(const AdmmProblem& problem, const PathSettings& settings) {
    FitResult base = solve_fixed_lambda(problem, 0.0, settings.scad_a);
    score(base, problem);
    if (base.diverged) throw DivergenceError("lambda = 0 solve diverged: " + base.message);
    double lambda_max = settings.lambda_max.value_or(default_lambda_max(base.state.w));
    if (!(lambda_max > 0.0)) lambda_max = 1.0;
    const std::vector<double> grid =
        lambda_grid(lambda_max, settings.grid_size, settings.spacing, settings.log_min_ratio);

    LambdaPath path;
    path.grid = grid;
    std::optional<AdmmState> start = base.state;
    append(path, std::move(base));
    for (std::size_t m = 1; m < grid.size(); ++m) {
        FitResult fit = solve_fixed_lambda(problem, grid[m], settings.scad_a,
                                           settings.warm_start ? start : std::nullopt);
        score(fit, problem);
        if (settings.warm_start && !fit.diverged) start = fit.state;
        append(path, std::move(fit));
    }
    return path;
}

Matrix GroupFit::individual_theta() const {
    Matrix out(labels.size(), theta.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) out.row(i) = theta.row(labels[i]);
    return out;
}

GroupStructure GroupFit::as_structure() const {
    GroupStructure g;
    g.K = K;
    g.labels = labels;
    g.representatives = theta;
    g.intercepts = intercepts;
    return g;
}

GroupFit refit_oracle(const PanelData& panel, const Spline& sys, double tau, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != panel.n()) throw InvalidInput("one label per individual required");
    GroupFit fit;
    fit.labels = labels;
    fit.K = canonicalize_labels(fit.labels);
    const int d = sys.reduced_dim();
    const Eigen::Index T = panel.T();
    fit.theta = Matrix::Zero(fit.K, d);
    fit.intercepts = Vector::Zero(panel.n());

    std::vector<std::vector<int>> members(fit.K);
    for (std::size_t i = 0; i < fit.labels.size(); ++i) members[fit.labels[i]].push_back(static_cast<int>(i));

    const Matrix rows = sys.eval_pi_rows(panel.x_stacked());
    const auto y = panel.y_stacked();
    for (int k = 0; k < fit.K; ++k) {
        const auto& group = members[k];
        const Eigen::Index m = static_cast<Eigen::Index>(group.size());
        if (m * T < m + d) {
            throw InvalidInput("group " + std::to_string(k + 1) + " has fewer observations than parameters");
        }
        Matrix Z(m * T, d);
        Vector yk(m * T);
        std::vector<int> cluster(static_cast<std::size_t>(m * T));
        for (Eigen::Index g = 0; g < m; ++g) {
            const int i = group[g];
            Z.middleRows(g * T, T) = rows.middleRows(i * T, T);
            yk.segment(g * T, T) = y.segment(i * T, T);
            std::fill(cluster.begin() + g * T, cluster.begin() + (g + 1) * T, static_cast<int>(g));
        }
        const QuantRegResult qr = quantile_regression(Z, cluster, static_cast<int>(m), yk, tau);
        fit.theta.row(k) = qr.slopes.transpose();
        for (Eigen::Index g = 0; g < m; ++g) fit.intercepts[group[g]] = qr.intercepts[g];
        fit.total_loss += qr.loss;
        fit.converged = fit.converged && qr.converged;
    }
    return fit;
}

void rescore_with_refit(LambdaPath& path, const PanelData& panel, const Spline& sys, double tau, int K_max) {
    std::map<std::vector<int>, double> cache;
    for (FitResult& fit : path.fits) {
        if (!fit.settled || fit.diverged || fit.K() > K_max) continue;
        auto it = cache.find(fit.groups.labels);
        if (it == cache.end()) {
            it = cache.emplace(fit.groups.labels, refit_oracle(panel, sys, tau, fit.groups.labels).total_loss).first;
        }
        fit.refit_loss = it->second;
        fit.sic = it->second > 0.0 ? sic(it->second, fit.K(), sys.dim(), panel.size())
                                   : -std::numeric_limits<double>::infinity();
    }
}

SelectionReport select(const LambdaPath& path, int K_max) {
    if (path.fits.empty()) throw SelectionError("lambda path is empty");
    if (K_max < 1) throw SelectionError("K_max must be >= 1");
    SelectionReport report;
    std::optional<std::size_t> best;
    for (std::size_t m = 0; m < path.fits.size(); ++m) {
        const FitResult& fit = path.fits[m];
        report.sic_table.push_back(fit.sic);
        if (!fit.settled) {
            report.excluded_unsettled.push_back(m);
            continue;
        }
        if (fit.K() > K_max) {
            report.excluded_kmax.push_back(m);
            continue;
        }
        // ties: larger lambda
        if (!best || fit.sic <= path.fits[*best].sic) best = m;
    }
    if (!best) {
        throw SelectionError("no settled lambda with K <= " + std::to_string(K_max) + " on the path");
    }
    const FitResult& chosen = path.fits[*best];
    report.index = *best;
    report.lambda = chosen.lambda;
    report.K = chosen.K();
    report.groups = chosen.groups;
    return report;
}

}  // namespace qfuse
