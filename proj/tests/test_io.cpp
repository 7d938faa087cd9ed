#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "qfuse/io.hpp"

using namespace qfuse;
namespace fs = std::filesystem;

namespace {

RawPanel small_raw(int n, int T, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-2.0, 5.0);
    std::normal_distribution<double> z(0.0, 0.2);
    RawPanel raw;
    raw.y.resize(n, T);
    raw.x.resize(n, T);
    for (int i = 0; i < n; ++i) raw.ids.push_back("unit" + std::to_string(i));
    for (int t = 0; t < T; ++t) raw.times.push_back(1990.0 + t);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) {
            raw.x(i, t) = u(gen);
            raw.y(i, t) = i + (i < n / 2 ? 0.2 : 2.0) * std::sin(raw.x(i, t)) + z(gen);
        }
    return raw;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qfuse_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("shortest round-trip number formatting") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1e-300) == "1e-300");
    CHECK(format_double(std::nan("")) == "nan");
    std::mt19937_64 gen(1);
    std::normal_distribution<double> z;
    for (int k = 0; k < 1000; ++k) {
        const double v = z(gen) * std::pow(10.0, k % 20 - 10);
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("panel CSV round trip is exact") {
    const RawPanel raw = small_raw(4, 7, 2);
    const fs::path dir = scratch_dir("csv");
    write_panel_csv(dir / "p.csv", raw);
    const RawPanel back = read_panel_csv(dir / "p.csv");
    CHECK(back.ids == raw.ids);
    CHECK(back.times == raw.times);
    CHECK(back.y == raw.y);
    CHECK(back.x == raw.x);
}

TEST_CASE("panel CSV reordering, BOM and line endings") {
    const std::string text =
        "\xEF\xBB\xBFid,t,y,x\r\n"
        "b,2,1.5,0.3\r\n"
        "a,1,0.5,0.1\r\n"
        "b,1,2.5,0.2\r\n"
        "a,2,3.5,0.4\r\n";
    const RawPanel p = parse_panel_csv(text);
    CHECK(p.ids == std::vector<std::string>{"b", "a"});
    CHECK(p.times == std::vector<double>{1.0, 2.0});
    CHECK(p.y(0, 0) == 2.5);
    CHECK(p.y(1, 1) == 3.5);
    CHECK(p.x(0, 1) == 0.3);
}

TEST_CASE("malformed panels are rejected with a reason") {
    const auto message = [](const std::string& text) {
        try {
            parse_panel_csv(text);
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("id,t,x,y\na,1,1,1\n").find("header") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,1,1\na,1,2,2\n").find("line 3") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,1,1\na,2,1,1\nb,1,1,1\n").find("unbalanced") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,1,1\nb,1,1,1\na,2,1,1\nb,2,1,1\nc,1,1,1\n").find("c") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,abc,1\n").find("line 2") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,inf,1\n").find("'y'") != std::string::npos);
    CHECK(message("id,t,y,x\na,1,1\n") != "no error");
    CHECK_THROWS_AS(read_panel_csv("/nonexistent/panel.csv"), DataError);
}

TEST_CASE("configuration parsing") {
    const RunConfig c = parse_config(R"({"taus": [0.25, 0.75], "seed": 5,
        "spline": {"basis_dim": 9}, "lambda": {"grid_size": 12, "spacing": "log"},
        "selection": {"kmax": 4, "sic_loss": "penalized"},
        "inference": {"density_method": "reweighted_nw", "level": 0.9}})");
    CHECK(c.taus == std::vector<double>{0.25, 0.75});
    CHECK(c.seed == 5);
    CHECK(c.fit.basis_dim == 9);
    CHECK(c.fit.path.grid_size == 12);
    CHECK(c.fit.path.spacing == GridSpacing::log);
    CHECK(c.fit.kmax == 4);
    CHECK(c.fit.sic_loss == SicLoss::penalized);
    CHECK(c.fit.level == 0.9);
    CHECK(c.fit.density.method == DensityMethod::reweighted_nadaraya_watson);

    const RunConfig again = parse_config(dump_config(c));
    CHECK(dump_config(again) == dump_config(c));

    CHECK_THROWS_WITH_AS(parse_config(R"({"admm": {"gama": 1}})"), doctest::Contains("admm.gama"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"taus": [1.5]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"spline": {"basis_dim": 8, "interior_knots": 4}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"lambda": {"grid_size": "many"}})"), ConfigError);
}

TEST_CASE("bundles round trip and predictions reproduce the fit") {
    const RawPanel raw = small_raw(6, 80, 3);
    const LoadedPanel data = prepare_panel(raw);
    RunConfig c;
    c.taus = {0.5};
    c.fit.path.grid_size = 10;
    c.fit.band_grid = {0.1, 0.5, 0.9};
    std::vector<QuantileFit> fits{fit_quantile(data.panel, 0.5, c.fit)};
    const ResultBundle bundle = make_bundle(c, data, fits);
    const std::string text = serialize_bundle(bundle);
    const ResultBundle back = parse_bundle(text);
    CHECK(serialize_bundle(back) == text);
    CHECK(back.ids == raw.ids);
    CHECK(back.fits[0].K == fits[0].refit.K);
    REQUIRE(back.fits[0].band);
    CHECK(back.fits[0].band->x.size() == 3);

    const QuantileFit& f = fits[0];
    for (int i : {0, 4}) {
        const double xr = raw.x(i, 5);
        const Prediction p = predict(back, 0.5, {xr}, raw.ids[static_cast<std::size_t>(i)]);
        const double unit = data.panel.x()(i, 5);
        const double ref = f.refit.intercepts[i] + f.spline.eval_pi(unit).dot(f.refit.theta.row(f.refit.labels[i]));
        REQUIRE(p.individual);
        CHECK(std::abs((*p.individual)[0] - ref) < 1e-10);
        CHECK_FALSE(p.extrapolated[0]);
    }

    // mean of group curves = curve of mean theta
    const Prediction grid = predict(back, 0.5, {-1.0, 0.0, 2.0, 4.5});
    const Matrix& th = back.fits[0].theta;
    const Spline sys(back.basis_dim - back.order, back.order);
    const double unit = back.covariate_map.apply(2.0);
    CHECK(grid.groups.colwise().mean()(2) == doctest::Approx(sys.eval_pi(unit).dot(th.colwise().mean())).epsilon(1e-12));

    const Prediction outside = predict(back, 0.5, {100.0});
    CHECK(outside.extrapolated[0]);
    CHECK(predict(back, 0.5, {}).groups.cols() == 0);
    CHECK_THROWS_AS(predict(back, 0.3, {0.0}), ConfigError);
    CHECK_THROWS_AS(predict(back, 0.5, {0.0}, std::string("nobody")), InvalidInput);

    const fs::path dir = scratch_dir("bundle");
    write_bundle(dir / "b.json", bundle);
    CHECK(read_text(dir / "b.json") == text);
    CHECK(serialize_bundle(load_bundle(dir / "b.json")) == text);
    const auto files = write_plot_csvs(dir, back);
    CHECK(files.size() == 3);
    for (const auto& p : files) CHECK(fs::file_size(p) > 0);
}

TEST_CASE("inconsistent bundles are rejected") {
    CHECK_THROWS_AS(parse_bundle("{}"), DataError);
    CHECK_THROWS_AS(parse_bundle(R"({"format": "other", "version": 1})"), DataError);
    CHECK_THROWS_AS(parse_bundle("[1,2"), DataError);
}
