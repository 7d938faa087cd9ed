#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "qfuse/admm.hpp"
#include "qfuse/quantreg.hpp"

using namespace qfuse;

namespace {

PanelData random_panel(int n, int T, std::uint64_t seed, const std::vector<double>& slopes = {}) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 0.3);
    PanelMatrix x(n, T), y(n, T);
    for (int i = 0; i < n; ++i) {
        const double c = slopes.empty() ? 1.0 : slopes[static_cast<std::size_t>(i)];
        for (int t = 0; t < T; ++t) {
            x(i, t) = u(gen);
            y(i, t) = 0.3 * i + c * std::sin(2.0 * 3.141592653589793 * x(i, t)) + z(gen);
        }
    }
    return PanelData(y, x);
}

AdmmConfig tight() {
    AdmmConfig c;
    c.outer_max = 20000;
    c.inner_max = 10;
    c.tol_primal = 1e-9;
    c.tol_dual = 1e-9;
    c.tol_rel = 1e-8;
    c.stability_window = 100000;
    return c;
}

}  // namespace

TEST_CASE("difference operator matches the dense Kronecker form") {
    const int n = 4, H = 3;
    DifferenceOperator op(n, H);
    CHECK(op.pairs() == 6);
    CHECK(op.pair(0) == std::make_pair(0, 1));
    CHECK(op.pair(5) == std::make_pair(2, 3));
    CHECK(op.pair_index(1, 3) == 4);
    Matrix D = Matrix::Zero(op.pairs(), n);
    for (Eigen::Index k = 0; k < op.pairs(); ++k) {
        D(k, op.pair(k).first) = 1.0;
        D(k, op.pair(k).second) = -1.0;
    }
    Matrix select = Matrix::Zero(H - 1, H);
    select.rightCols(H - 1).setIdentity();
    Matrix A(D.rows() * select.rows(), D.cols() * select.cols());
    for (Eigen::Index r = 0; r < D.rows(); ++r)
        for (Eigen::Index c = 0; c < D.cols(); ++c) A.block(r * (H - 1), c * H, H - 1, H) = D(r, c) * select;
    CHECK((Matrix(op.to_sparse()) - A).cwiseAbs().maxCoeff() == 0.0);
    const Vector w = Vector::LinSpaced(n * H, -1.0, 2.0);
    CHECK((op.apply(w) - A * w).norm() < 1e-14);
    const Vector v = Vector::LinSpaced(A.rows(), 0.5, -0.7);
    CHECK((op.apply_transpose(v) - A.transpose() * v).norm() < 1e-14);
}

TEST_CASE("design matrix is block diagonal") {
    const PanelData panel = random_panel(3, 6, 1);
    const Spline sys(1, 4);
    DesignMatrix d(panel, sys);
    const Matrix dense = d.to_dense();
    CHECK(dense.rows() == 18);
    CHECK(dense.cols() == 15);
    for (int i = 0; i < 3; ++i) {
        CHECK((dense.block(i * 6, i * 5, 6, 5) - d.block_matrix(i)).norm() == 0.0);
        CHECK(dense.block(i * 6, i * 5, 6, 1).minCoeff() == 1.0);
    }
    const Vector w = Vector::LinSpaced(15, 1.0, 2.0);
    CHECK((d.apply(w) - dense * w).norm() < 1e-13);
}

TEST_CASE("cached factorization agrees with a dense solve") {
    const PanelData panel = random_panel(3, 20, 2);
    const Spline sys(1, 4);
    REQUIRE(sys.dim() == 5);
    DesignMatrix d(panel, sys);
    DifferenceOperator op(3, 5);
    for (double gamma : {0.3, 1.0, 4.0}) {
        for (double kappa : {0.5, 1.0, 3.0}) {
            Factorization f(d, op, gamma, kappa);
            const Matrix Pi = d.to_dense();
            const Matrix A = Matrix(op.to_sparse());
            const Matrix M = kappa * Pi.transpose() * Pi + gamma * A.transpose() * A;
            std::mt19937_64 gen(17);
            std::normal_distribution<double> z;
            Vector rhs(15);
            for (auto& v : rhs) v = z(gen);
            const Vector ref = M.fullPivLu().solve(rhs);
            CHECK((f.solve(rhs) - ref).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("objective splits into loss and penalty and ignores labelling") {
    const PanelData panel = random_panel(3, 10, 3);
    const Spline sys(1, 4);
    std::mt19937_64 gen(4);
    std::normal_distribution<double> z;
    Vector mu(3);
    Matrix theta(3, 4);
    for (auto& v : mu) v = z(gen);
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta.data()[k] = z(gen);
    const StackedParams w = StackedParams::from_blocks(mu, theta);
    const ScadParams<double> p{0.4, 3.7};
    double pen = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) pen += scad((theta.row(i) - theta.row(j)).norm(), p);
    const double loss = total_check_loss(residuals(panel, sys, w), 0.3) / 30.0;
    CHECK(objective(panel, sys, w, 0.3, p) == doctest::Approx(loss + pen / 3.0).epsilon(1e-13));

    const std::vector<int> order{2, 0, 1};
    const PanelData permuted = panel.select(order);
    Vector mu2(3);
    Matrix theta2(3, 4);
    for (int k = 0; k < 3; ++k) {
        mu2[k] = mu[order[k]];
        theta2.row(k) = theta.row(order[k]);
    }
    CHECK(objective(permuted, sys, StackedParams::from_blocks(mu2, theta2), 0.3, p) ==
          doctest::Approx(objective(panel, sys, w, 0.3, p)).epsilon(1e-13));
}

TEST_CASE("lambda zero reproduces separate quantile regressions") {
    const int n = 3, T = 14;
    const PanelData panel = random_panel(n, T, 5);
    const Spline sys(1, 4);
    const double tau = 0.4;
    const FitResult fit = solve_fixed_lambda(panel, sys, tau, 0.0, std::nullopt, tight());
    const PanelMatrix fitted = panel.y() - residuals(panel, sys, fit.state.w);
    for (int i = 0; i < n; ++i) {
        Matrix X(T, sys.dim());
        X.col(0).setOnes();
        for (int t = 0; t < T; ++t) X.row(t).tail(sys.reduced_dim()) = sys.eval_pi(panel.x()(i, t)).transpose();
        const Vector y = panel.y().row(i).transpose();
        const auto ref = oracle::quantile_vertex_enumeration(X, y, tau);
        const Vector ref_fit = X * ref.beta;
        for (int t = 0; t < T; ++t) CHECK(std::abs(fitted(i, t) - ref_fit[t]) < 1e-3);
    }
}

TEST_CASE("full fusion reproduces the pooled fit") {
    // tau T non-integer: unique intercepts
    const int n = 4, T = 41;
    const PanelData panel = random_panel(n, T, 6);
    const Spline sys(1, 4);
    const double tau = 0.6;
    const FitResult fit = solve_fixed_lambda(panel, sys, tau, 50.0, std::nullopt, tight());
    CHECK(fit.K() == 1);
    const PanelMatrix fitted = panel.y() - residuals(panel, sys, fit.state.w);

    const Vector x = panel.x_stacked();
    const Matrix Z = sys.eval_pi_rows(x);
    std::vector<int> cluster(static_cast<std::size_t>(n * T));
    for (int k = 0; k < n * T; ++k) cluster[static_cast<std::size_t>(k)] = k / T;
    const auto ref = quantile_regression(Z, cluster, n, panel.y_stacked(), tau);
    REQUIRE(ref.converged);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) {
            const double r = ref.intercepts[i] + Z.row(i * T + t).dot(ref.slopes);
            CHECK(std::abs(fitted(i, t) - r) < 1e-3);
        }
}

TEST_CASE("configuration checks") {
    AdmmConfig c;
    c.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = AdmmConfig{};
    c.outer_max = 0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    CHECK(default_fusion_tolerance(5) == doctest::Approx(2e-6));
}
