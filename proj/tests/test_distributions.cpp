#include <doctest.h>

#include "oracles.hpp"
#include "qfuse/distributions.hpp"
#include "qfuse/errors.hpp"

using namespace qfuse;

TEST_CASE("normal quantile agrees with bisection") {
    for (double p : {1e-12, 1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1.0 - 1e-9}) {
        CHECK(std::abs(normal_quantile(p) - oracle::normal_quantile_bisect(p)) < 1e-9);
    }
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
    CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("Student-t distribution") {
    CHECK(student_t_quantile(0.975, 5) == doctest::Approx(2.570581835636314).epsilon(1e-9));
    CHECK(student_t_quantile(0.975, 1) == doctest::Approx(12.70620473617471).epsilon(1e-9));
    CHECK(student_t_quantile(0.95, 10) == doctest::Approx(1.812461122811676).epsilon(1e-9));
    CHECK(student_t_cdf(0.0, 7) == doctest::Approx(0.5));
    for (int nu : {1, 2, 3, 4, 9, 30}) {
        for (double p : {0.01, 0.2, 0.5, 0.8, 0.99}) {
            CHECK(student_t_cdf(student_t_quantile(p, nu), nu) == doctest::Approx(p).epsilon(1e-10));
        }
    }
}

TEST_CASE("random streams are reproducible and distinct") {
    Rng a(42, 1), b(42, 1), c(42, 2);
    bool differ = false;
    for (int k = 0; k < 100; ++k) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x > 0.0);
        CHECK(x < 1.0);
        if (x != c.uniform()) differ = true;
    }
    CHECK(differ);
    Rng m(1);
    double sum = 0.0, sq = 0.0;
    const int N = 20000;
    for (int k = 0; k < N; ++k) {
        const double z = m.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / N) < 0.05);
    CHECK(std::abs(sq / N - 1.0) < 0.05);
}
