#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "qfuse/quantreg.hpp"

using namespace qfuse;

TEST_CASE("interior point solution attains the linear programming optimum") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> z;
    for (double tau : {0.1, 0.5, 0.85}) {
        const int N = 25, p = 3;
        Eigen::MatrixXd X(N, p);
        Eigen::VectorXd y(N);
        for (int k = 0; k < N; ++k) {
            X(k, 0) = 1.0;
            X(k, 1) = z(gen);
            X(k, 2) = z(gen);
            y[k] = 1.0 + 2.0 * X(k, 1) - X(k, 2) + z(gen);
        }
        const auto fit = quantile_regression(X, y, tau);
        const auto ref = oracle::quantile_vertex_enumeration(X, y, tau);
        CHECK(fit.converged);
        CHECK(fit.loss == doctest::Approx(ref.loss).epsilon(1e-7));
        CHECK((fit.slopes - ref.beta).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("cluster intercepts match an explicit dummy design") {
    std::mt19937_64 gen(22);
    std::normal_distribution<double> z;
    const int N = 15;
    Eigen::MatrixXd Zs(N, 1), X(N, 4);
    Eigen::VectorXd y(N);
    std::vector<int> cluster(N);
    for (int k = 0; k < N; ++k) {
        cluster[k] = k % 3;
        Zs(k, 0) = z(gen);
        X.row(k).setZero();
        X(k, cluster[k]) = 1.0;
        X(k, 3) = Zs(k, 0);
        y[k] = cluster[k] + 0.5 * Zs(k, 0) + z(gen);
    }
    const auto fit = quantile_regression(Zs, cluster, 3, y, 0.5);
    const auto ref = oracle::quantile_vertex_enumeration(X, y, 0.5);
    CHECK(fit.loss == doctest::Approx(ref.loss).epsilon(1e-7));
    CHECK(fit.intercepts.size() == 3);
    CHECK(std::abs(fit.slopes[0] - ref.beta[3]) < 1e-5);
}

TEST_CASE("sample quantile as the intercept-only fit") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(9, 1);
    Eigen::VectorXd y(9);
    y << 5, 1, 9, 3, 7, 2, 8, 4, 6;
    const auto fit = quantile_regression(X, y, 0.5);
    CHECK(fit.slopes[0] == doctest::Approx(5.0).epsilon(1e-8));
    CHECK(fit.loss == doctest::Approx(10.0).epsilon(1e-8));
}
