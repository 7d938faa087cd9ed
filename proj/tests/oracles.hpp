#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// n-point Gauss-Legendre rule on [0,1] from Newton iterations on P_n.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const long double pi = 3.141592653589793238462643383279502884L;
    for (int k = 0; k < n; ++k) {
        long double x = std::cos(pi * (k + 0.75L) / (n + 0.5L));
        long double dp = 0.0L;
        for (int it = 0; it < 100; ++it) {
            long double p0 = 1.0L, p1 = x;
            for (int m = 2; m <= n; ++m) {
                const long double p2 = ((2.0L * m - 1.0L) * x * p1 - (m - 1.0L) * p0) / m;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0L);
            const long double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-19L) break;
        }
        nodes[k] = static_cast<double>(0.5L * (x + 1.0L));
        weights[k] = static_cast<double>(1.0L / ((1.0L - x * x) * dp * dp));
    }
}

/// Cox-de Boor recursion written straight from the definition, with the
/// right end point assigned to the last basis function.
inline double bspline(const std::vector<double>& t, int h, int order, double x) {
    if (order == 1) {
        const double last = t.back();
        if (x == last) {
            // the last nondegenerate interval is closed on the right
            int j = static_cast<int>(t.size()) - 2;
            while (j > 0 && t[j] == t[j + 1]) --j;
            return h == j ? 1.0 : 0.0;
        }
        return (t[h] <= x && x < t[h + 1]) ? 1.0 : 0.0;
    }
    double out = 0.0;
    const double d1 = t[h + order - 1] - t[h];
    const double d2 = t[h + order] - t[h + 1];
    if (d1 > 0.0) out += (x - t[h]) / d1 * bspline(t, h, order - 1, x);
    if (d2 > 0.0) out += (t[h + order] - x) / d2 * bspline(t, h + 1, order - 1, x);
    return out;
}

inline std::vector<double> clamped_knots(int interior, int order) {
    std::vector<double> t(order, 0.0);
    for (int k = 1; k <= interior; ++k) t.push_back(static_cast<double>(k) / (interior + 1));
    t.insert(t.end(), order, 1.0);
    return t;
}

inline double check(double v, double tau) { return v >= 0.0 ? tau * v : (tau - 1.0) * v; }

/// argmin over a uniform grid of step `step` on [lo, hi].
inline double grid_argmin(const std::function<double(double)>& f, double lo, double hi, double step) {
    double best = lo, fbest = f(lo);
    const long long steps = static_cast<long long>(std::ceil((hi - lo) / step));
    for (long long k = 1; k <= steps; ++k) {
        const double x = lo + step * static_cast<double>(k);
        const double fx = f(x);
        if (fx < fbest) {
            fbest = fx;
            best = x;
        }
    }
    return best;
}

/// Linear quantile regression by enumerating every basic solution: some
/// optimal solution interpolates p observations, so the best interpolating
/// fit over all p-subsets is a global minimizer.
struct LpFit {
    Eigen::VectorXd beta;
    double loss = std::numeric_limits<double>::infinity();
};

inline LpFit quantile_vertex_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau) {
    const int N = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    LpFit best;
    std::vector<int> idx(p);
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::MatrixXd A(p, p);
    Eigen::VectorXd b(p);
    while (true) {
        for (int r = 0; r < p; ++r) {
            A.row(r) = X.row(idx[r]);
            b[r] = y[idx[r]];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.isInvertible()) {
            const Eigen::VectorXd beta = lu.solve(b);
            const Eigen::VectorXd r = y - X * beta;
            double loss = 0.0;
            for (int k = 0; k < N; ++k) loss += check(r[k], tau);
            if (loss < best.loss) {
                best.loss = loss;
                best.beta = beta;
            }
        }
        int k = p - 1;
        while (k >= 0 && idx[k] == N - p + k) --k;
        if (k < 0) break;
        ++idx[k];
        for (int j = k + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
    }
    return best;
}

/// Standard normal quantile by bisection on a long double erfc.
inline double normal_quantile_bisect(double p) {
    long double lo = -40.0L, hi = 40.0L;
    for (int it = 0; it < 200; ++it) {
        const long double mid = 0.5L * (lo + hi);
        const long double c = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
        if (c < p) lo = mid; else hi = mid;
    }
    return static_cast<double>(0.5L * (lo + hi));
}

}  // namespace oracle
