#include "qfuse/quantreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qfuse/errors.hpp"
#include "qfuse/penalties.hpp"

namespace qfuse {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// X = [E, Z] with E the one-hot cluster matrix.
class ClusterDesign {
public:
    ClusterDesign(const MatrixXd& Z, const std::vector<int>& cluster, int clusters)
        : Z_(Z), cluster_(cluster), clusters_(clusters) {}

    Eigen::Index rows() const { return Z_.rows(); }
    Eigen::Index params() const { return clusters_ + Z_.cols(); }

    // X p
    VectorXd times(const VectorXd& p) const {
        VectorXd out = Z_ * p.tail(Z_.cols());
        if (clusters_ > 0) {
            for (Eigen::Index k = 0; k < rows(); ++k) out[k] += p[cluster_[k]];
        }
        return out;
    }

    // X^T v
    VectorXd transpose_times(const VectorXd& v) const {
        VectorXd out(params());
        out.head(clusters_).setZero();
        for (Eigen::Index k = 0; clusters_ > 0 && k < rows(); ++k) out[cluster_[k]] += v[k];
        out.tail(Z_.cols()).noalias() = Z_.transpose() * v;
        return out;
    }

    // Solves (X^T Q X) p = g for diagonal weights q > 0.
    VectorXd weighted_solve(const VectorXd& q, const VectorXd& g) const {
        const Eigen::Index d = Z_.cols();
        const Eigen::Index m = clusters_;
        VectorXd diag = VectorXd::Zero(m);
        MatrixXd cross = MatrixXd::Zero(m, d);
        for (Eigen::Index k = 0; m > 0 && k < rows(); ++k) {
            diag[cluster_[k]] += q[k];
            cross.row(cluster_[k]).noalias() += q[k] * Z_.row(k);
        }
        MatrixXd gram = Z_.transpose() * q.asDiagonal() * Z_;
        VectorXd out(params());
        if (m > 0) {
            const VectorXd inv = diag.cwiseInverse();
            gram.noalias() -= cross.transpose() * inv.asDiagonal() * cross;
            VectorXd rhs = g.tail(d) - cross.transpose() * inv.cwiseProduct(g.head(m));
            VectorXd beta = solve_spd(gram, rhs);
            out.tail(d) = beta;
            out.head(m) = inv.cwiseProduct(g.head(m) - cross * beta);
        } else {
            out = solve_spd(gram, g);
        }
        return out;
    }

private:
    static VectorXd solve_spd(MatrixXd a, const VectorXd& b) {
        if (a.rows() == 0) return VectorXd(0);
        a = 0.5 * (a + a.transpose());
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
            a.diagonal().array() += 1e-12 * scale;
            llt.compute(a);
            if (llt.info() != Eigen::Success) throw InvalidInput("quantile regression design is rank deficient");
        }
        return llt.solve(b);
    }

    const MatrixXd& Z_;
    const std::vector<int>& cluster_;
    int clusters_;
};

// Largest step keeping v + step dv >= 0, capped at `fraction` of the boundary.
double max_step(const VectorXd& v, const VectorXd& dv) {
    double step = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (dv[k] < 0.0) step = std::min(step, -v[k] / dv[k]);
    }
    return step;
}

}  // namespace

QuantRegResult quantile_regression(const MatrixXd& Z, const std::vector<int>& cluster, int clusters,
                                   const VectorXd& y, double tau, const QuantRegOptions& options) {
    detail::check_tau(tau);
    const Eigen::Index N = y.size();
    if (Z.rows() != N) throw InvalidInput("quantile regression: design rows do not match response");
    if (clusters > 0 && static_cast<Eigen::Index>(cluster.size()) != N) {
        throw InvalidInput("quantile regression: cluster index length mismatch");
    }
    for (Eigen::Index k = 0; clusters > 0 && k < N; ++k) {
        if (cluster[k] < 0 || cluster[k] >= clusters) throw InvalidInput("quantile regression: bad cluster index");
    }
    const ClusterDesign X(Z, cluster, clusters);
    if (X.params() > N) throw InvalidInput("quantile regression is underdetermined");

    // Dual LP: min c^T x s.t. X^T x = (1-tau) X^T 1, 0 <= x <= 1, c = -y.
    // The coefficients are minus its Lagrange multipliers.
    const VectorXd c = -y;
    const VectorXd b = X.transpose_times(VectorXd::Constant(N, 1.0 - tau));
    VectorXd x = VectorXd::Constant(N, 1.0 - tau);
    VectorXd s = VectorXd::Constant(N, tau);
    VectorXd dual = X.weighted_solve(VectorXd::Ones(N), X.transpose_times(c));
    VectorXd r = c - X.times(dual);
    VectorXd z = r.cwiseMax(0.0);
    VectorXd w = (z - r).eval();
    for (Eigen::Index k = 0; k < N; ++k) {
        if (r[k] == 0.0) z[k] = w[k] = 1e-3;
    }
    auto duality_gap = [&] { return c.dot(x) - b.dot(dual) + w.sum(); };
    double gap = duality_gap();

    QuantRegResult result;
    const double beta = options.step_fraction;
    int it = 0;
    while (it < options.max_iterations) {
        if (gap <= options.gap_tolerance * (1.0 + std::abs(c.dot(x)))) {
            result.converged = true;
            break;
        }
        ++it;
        const VectorXd q = (z.cwiseQuotient(x) + w.cwiseQuotient(s)).cwiseInverse();
        r = z - w;

        // affine scaling direction
        VectorXd dy = X.weighted_solve(q, X.transpose_times(q.cwiseProduct(r)));
        VectorXd dx = q.cwiseProduct(X.times(dy) - r);
        VectorXd ds = -dx;
        VectorXd dz = -z.cwiseProduct(VectorXd::Ones(N) + dx.cwiseQuotient(x));
        VectorXd dw = -w.cwiseProduct(VectorXd::Ones(N) + ds.cwiseQuotient(s));
        double fp = std::min({beta * max_step(x, dx), beta * max_step(s, ds), 1.0});
        double fd = std::min({beta * max_step(w, dw), beta * max_step(z, dz), 1.0});

        if (std::min(fp, fd) < 1.0) {
            // centering and second-order correction
            double mu = z.dot(x) + w.dot(s);
            const double g = (z + fd * dz).dot(x + fp * dx) + (w + fd * dw).dot(s + fp * ds);
            mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(N));
            const VectorXd dxdz = dx.cwiseProduct(dz);
            const VectorXd dsdw = ds.cwiseProduct(dw);
            const VectorXd xinv = x.cwiseInverse();
            const VectorXd sinv = s.cwiseInverse();
            const VectorXd rr = r - mu * (xinv - sinv) + dxdz.cwiseProduct(xinv) - dsdw.cwiseProduct(sinv);
            dy = X.weighted_solve(q, X.transpose_times(q.cwiseProduct(rr)));
            dx = q.cwiseProduct(X.times(dy) - rr);
            ds = -dx;
            dz = (mu * xinv - z - z.cwiseProduct(xinv).cwiseProduct(dx) - dxdz.cwiseProduct(xinv)).eval();
            dw = (mu * sinv - w - w.cwiseProduct(sinv).cwiseProduct(ds) - dsdw.cwiseProduct(sinv)).eval();
            fp = std::min({beta * max_step(x, dx), beta * max_step(s, ds), 1.0});
            fd = std::min({beta * max_step(w, dw), beta * max_step(z, dz), 1.0});
        }
        x += fp * dx;
        s += fp * ds;
        dual += fd * dy;
        w += fd * dw;
        z += fd * dz;
        gap = duality_gap();
        if (!std::isfinite(gap)) throw DivergenceError("quantile regression interior point diverged");
    }
    if (!result.converged && gap <= options.gap_tolerance * (1.0 + std::abs(c.dot(x)))) result.converged = true;

    const VectorXd coef = -dual;
    result.intercepts = coef.head(clusters);
    result.slopes = coef.tail(Z.cols());
    result.iterations = it;
    result.loss = total_check_loss(y - X.times(coef), tau);
    return result;
}

QuantRegResult quantile_regression(const MatrixXd& X, const VectorXd& y, double tau, const QuantRegOptions& options) {
    static const std::vector<int> none;
    return quantile_regression(X, none, 0, y, tau, options);
}

}  // namespace qfuse
