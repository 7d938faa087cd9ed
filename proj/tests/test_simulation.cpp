#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qfuse/simulation.hpp"

using namespace qfuse;

TEST_CASE("sine designs: labels, amplitudes and centred truths") {
    const DgpSpec spec = make_dgp(1, 60, 50, 0.5, 7);
    CHECK(spec.mu.size() == 60);
    CHECK(sine_amplitude(0, 60) == 0.2);
    CHECK(sine_amplitude(20, 60) == 1.0);
    CHECK(sine_amplitude(59, 60) == 2.0);
    const auto labels = true_labels(spec);
    CHECK(labels[19] == 0);
    CHECK(labels[20] == 1);
    CHECK(labels[40] == 2);
    const auto sim = generate(spec, 0);
    CHECK(sim.panel.n() == 60);
    CHECK(sim.panel.T() == 50);
    CHECK(sim.panel.x().minCoeff() > 0.0);
    CHECK(sim.panel.x().maxCoeff() < 1.0);
    CHECK(sim.truth(45, 3) == doctest::Approx(2.0 * std::sin(2.0 * 3.141592653589793 * sim.panel.x()(45, 3))));
}

TEST_CASE("quantile-varying design has the stated conditional quantiles") {
    for (double tau : {0.1, 0.9}) {
        const DgpSpec spec = make_dgp(4, 60, 2000, tau, 8);
        const auto labels = true_labels(spec);
        CHECK(*std::max_element(labels.begin(), labels.end()) == (tau < 0.5 ? 1 : 2));
        const auto sim = generate(spec, 3);
        const double q = normal_quantile(tau);
        long long below = 0;
        for (int i = 0; i < 60; ++i) {
            for (int t = 0; t < 2000; ++t) {
                const int branch = labels[i];
                const double mean_scale = (tau > 0.5 && branch == 2) ? 0.4 : 0.8;
                const double cq = spec.mu[i] + sim.truth(i, t) + mean_scale * q;
                below += sim.panel.y()(i, t) <= cq ? 1 : 0;
            }
        }
        CHECK(static_cast<double>(below) / 120000.0 == doctest::Approx(tau).epsilon(0.05));
    }
    const DgpSpec mid = make_dgp(4, 60, 10, 0.5, 8);
    const auto one = true_labels(mid);
    CHECK(std::all_of(one.begin(), one.end(), [](int l) { return l == 0; }));
}

TEST_CASE("replications are reproducible from the seed") {
    const DgpSpec spec = make_dgp(3, 12, 20, 0.5, 9);
    const auto a = generate(spec, 5), b = generate(spec, 5), c = generate(spec, 6);
    CHECK(a.panel.y() == b.panel.y());
    CHECK(a.panel.y() != c.panel.y());
    CHECK_THROWS_AS(make_dgp(5, 12, 20, 0.5, 1), ConfigError);
}

TEST_CASE("mean squared error") {
    PanelMatrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 1, 0, 3, 1;
    double ref = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 2; ++t) ref += (a(i, t) - b(i, t)) * (a(i, t) - b(i, t));
    CHECK(mse(a, b) == doctest::Approx(ref / 4.0));
    CHECK_THROWS_AS(mse(a, PanelMatrix(3, 2)), InvalidInput);
}

TEST_CASE("study results do not depend on the thread count") {
    const DgpSpec spec = make_dgp(1, 12, 60, 0.5, 10);
    StudySettings s;
    s.replications = 3;
    s.fit.path.grid_size = 10;
    s.coverage_x = {0.25, 0.5};
    s.threads = 1;
    const auto one = run_study(spec, s);
    s.threads = 3;
    const auto three = run_study(spec, s);
    REQUIRE(one.runs.size() == 3);
    CHECK(one.true_K == 3);
    CHECK(one.percent_correct == three.percent_correct);
    CHECK(one.mean_mse_penalized == three.mean_mse_penalized);
    CHECK(one.coverage_estimated == three.coverage_estimated);
    for (int r = 0; r < 3; ++r) {
        CHECK(one.runs[r].K_hat == three.runs[r].K_hat);
        CHECK(one.runs[r].lambda == three.runs[r].lambda);
    }
}
