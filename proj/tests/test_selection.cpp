#include <doctest.h>

#include <cmath>
#include <random>

#include "qfuse/pipeline.hpp"
#include "qfuse/selection.hpp"

using namespace qfuse;

namespace {

FitResult entry(double lambda, int K, double sic_value, bool settled = true) {
    FitResult f;
    f.lambda = lambda;
    f.groups.K = K;
    f.sic = sic_value;
    f.settled = settled;
    f.converged = settled;
    return f;
}

PanelData two_group_panel(int n, int T, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 0.3);
    PanelMatrix x(n, T), y(n, T);
    for (int i = 0; i < n; ++i) {
        const double c = i < n / 2 ? 0.2 : 2.0;
        const double mu = z(gen);
        for (int t = 0; t < T; ++t) {
            x(i, t) = u(gen);
            y(i, t) = mu + c * std::sin(2.0 * 3.141592653589793 * x(i, t)) + z(gen);
        }
    }
    return PanelData(y, x);
}

}  // namespace

TEST_CASE("lambda grids") {
    const auto lin = lambda_grid(2.0, 4, GridSpacing::linear);
    REQUIRE(lin.size() == 5);
    CHECK(lin[0] == 0.0);
    CHECK(lin[2] == doctest::Approx(1.0));
    CHECK(lin[4] == 2.0);
    const auto lg = lambda_grid(1.0, 3, GridSpacing::log, 0.01);
    REQUIRE(lg.size() == 4);
    CHECK(lg[1] == doctest::Approx(0.01));
    CHECK(lg[2] == doctest::Approx(0.1));
    CHECK(lg[3] == 1.0);
    CHECK_THROWS_AS(lambda_grid(0.0, 3, GridSpacing::linear), InvalidInput);
    CHECK_THROWS_AS(lambda_grid(1.0, 0, GridSpacing::linear), InvalidInput);
}

TEST_CASE("fused partition closes chains transitively") {
    DifferenceOperator op(4, 2);
    Vector v = Vector::Ones(op.rows());
    v[op.pair_index(0, 1)] = 0.0;
    v[op.pair_index(1, 2)] = 0.0;
    const auto labels = fused_partition(v, op, 1e-9);
    CHECK(labels == std::vector<int>{0, 0, 0, 1});

    Vector w = Vector::Ones(op.rows());
    w[op.pair_index(1, 3)] = 1e-12;
    CHECK(fused_partition(w, op, 1e-9) == std::vector<int>{0, 1, 2, 1});
}

TEST_CASE("group extraction averages member coefficients") {
    DifferenceOperator op(3, 3);
    Vector v = Vector::Ones(op.rows());
    v.segment(op.pair_index(0, 2) * 2, 2).setZero();
    Matrix theta(3, 2);
    theta << 1.0, 2.0, 5.0, 5.0, 3.0, 4.0;
    const auto g = extract_groups(v, op, StackedParams::from_blocks(Vector::Zero(3), theta), 1e-9);
    CHECK(g.K == 2);
    CHECK(g.labels == std::vector<int>{0, 1, 0});
    CHECK(g.representatives(0, 0) == doctest::Approx(2.0));
    CHECK(g.representatives(0, 1) == doctest::Approx(3.0));
    CHECK(g.representatives(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("canonical labels follow first appearance") {
    std::vector<int> labels{4, 4, 1, 7, 1};
    CHECK(canonicalize_labels(labels) == 3);
    CHECK(labels == std::vector<int>{0, 0, 1, 2, 1});
}

TEST_CASE("information criterion value") {
    CHECK(std::abs(sic(std::exp(1.0), 2, 5, 1000) - 1.0690776) < 1e-7);
    CHECK(sic(std::exp(1.0), 2, 5, 1000) == doctest::Approx(1.0 + 10.0 * std::log(1000.0) / 1000.0).epsilon(1e-15));
    CHECK_THROWS_AS(sic(0.0, 1, 5, 10), InvalidInput);
    CHECK_THROWS_AS(sic(1.0, 0, 5, 10), InvalidInput);
}

TEST_CASE("selection rules") {
    LambdaPath path;
    path.fits.push_back(entry(0.0, 5, 1.0));
    path.fits.push_back(entry(0.1, 3, 0.5));
    path.fits.push_back(entry(0.2, 3, 0.5));
    path.fits.push_back(entry(0.3, 2, 0.1, false));
    path.fits.push_back(entry(0.4, 1, 0.9));
    const auto r = select(path, 10);
    CHECK(r.index == 2);
    CHECK(r.K == 3);
    CHECK(r.excluded_unsettled == std::vector<std::size_t>{3});
    CHECK(r.sic_table.size() == 5);

    const auto capped = select(path, 2);
    CHECK(capped.index == 4);
    CHECK(capped.excluded_kmax.size() == 3);

    LambdaPath none;
    none.fits.push_back(entry(0.0, 4, 1.0, false));
    CHECK_THROWS_AS(select(none, 10), SelectionError);
    CHECK_THROWS_AS(select(LambdaPath{}, 10), SelectionError);
}

TEST_CASE("refit loss never exceeds the loss of a feasible pooled point") {
    const PanelData panel = two_group_panel(6, 60, 31);
    const Spline sys(1, 4);
    AdmmProblem problem(panel, sys, 0.5, AdmmConfig{});
    PathSettings ps;
    ps.grid_size = 8;
    LambdaPath path = run_path(problem, ps);
    rescore_with_refit(path, panel, sys, 0.5, 10);
    int scored = 0;
    for (const auto& f : path.fits) {
        if (!f.refit_loss) continue;
        ++scored;
        // penalized intercepts + group-averaged theta
        Matrix theta(panel.n(), sys.reduced_dim());
        for (Eigen::Index i = 0; i < panel.n(); ++i) theta.row(i) = f.groups.representatives.row(f.groups.labels[i]);
        const StackedParams feasible = StackedParams::from_blocks(f.state.w.intercepts(), theta);
        CHECK(*f.refit_loss <= total_check_loss(residuals(panel, sys, feasible), 0.5) + 1e-8);
        CHECK(f.sic == doctest::Approx(sic(*f.refit_loss, f.K(), sys.dim(), panel.size())));
    }
    CHECK(scored > 0);
}

TEST_CASE("oracle refit pools slopes and keeps intercepts free") {
    const PanelData panel = two_group_panel(4, 50, 32);
    const Spline sys(1, 4);
    const GroupFit g = refit_oracle(panel, sys, 0.5, {0, 0, 1, 1});
    CHECK(g.K == 2);
    CHECK(g.theta.rows() == 2);
    CHECK(g.intercepts.size() == 4);
    const Matrix ind = g.individual_theta();
    CHECK((ind.row(0) - ind.row(1)).norm() == 0.0);
    CHECK((ind.row(1) - ind.row(2)).norm() > 0.1);
}

TEST_CASE("two well separated groups are recovered end to end") {
    const PanelData panel = two_group_panel(10, 200, 33);
    FitSettings s;
    s.bands = false;
    s.path.grid_size = 20;
    const QuantileFit fit = fit_quantile(panel, 0.5, s);
    CHECK(fit.refit.K == 2);
    CHECK(fit.refit.labels == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
    CHECK(fit.selected().settled);
}
