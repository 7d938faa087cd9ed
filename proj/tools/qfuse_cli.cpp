#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfuse/config.hpp"
#include "qfuse/errors.hpp"
#include "qfuse/io.hpp"

using namespace qfuse;

namespace {

enum Exit { ok = 0, other = 1, config = 2, data = 3, divergence = 4, inference = 5, selection = 6 };

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return Exit::config;
        case ErrorKind::data: return Exit::data;
        case ErrorKind::divergence: return Exit::divergence;
        case ErrorKind::inference: return Exit::inference;
        case ErrorKind::selection: return Exit::selection;
        default: return Exit::other;
    }
}

struct Overrides {
    std::string config_path;
    std::vector<double> taus;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda_max;
    std::optional<int> grid_size;
    std::optional<int> knots;
    std::optional<int> order;
    std::optional<int> kmax;
    std::optional<double> level;
    std::optional<std::string> out;
    bool no_bands = false;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app->add_option("--tau", o.taus, "quantile level; repeat for several");
    app->add_option("--seed", o.seed, "random seed");
    app->add_option("--lambda-max", o.lambda_max, "largest lambda on the grid");
    app->add_option("--grid-size", o.grid_size, "number of positive lambda values");
    app->add_option("--knots", o.knots, "interior knot count (basis dimension = knots + order)");
    app->add_option("--order", o.order, "spline order (4 = cubic)");
    app->add_option("--kmax", o.kmax, "largest admissible group count");
    app->add_option("--level", o.level, "confidence level of the bands");
    app->add_option("--out", o.out, "output directory");
    app->add_flag("--no-bands", o.no_bands, "skip confidence bands");
}

RunConfig resolve(const Overrides& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (!o.taus.empty()) c.taus = o.taus;
    if (o.seed) c.seed = *o.seed;
    if (o.lambda_max) c.fit.path.lambda_max = *o.lambda_max;
    if (o.grid_size) c.fit.path.grid_size = *o.grid_size;
    if (o.order) c.fit.order = *o.order;
    if (o.knots) {
        if (*o.knots < 0) throw ConfigError("--knots must be >= 0");
        c.fit.basis_dim = *o.knots + c.fit.order;
    }
    if (o.kmax) c.fit.kmax = *o.kmax;
    if (o.level) c.fit.level = *o.level;
    if (o.out) c.output.dir = *o.out;
    if (o.no_bands) c.fit.bands = false;
    c.validate();
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_fit(const Overrides& o, const std::optional<std::string>& data_path) {
    RunConfig c = resolve(o);
    if (data_path) c.data = *data_path;
    if (!c.data) throw ConfigError("fit needs --data or a 'data' entry in the configuration");
    const auto t0 = std::chrono::steady_clock::now();
    const LoadedPanel panel = load_panel_csv(*c.data);
    std::vector<QuantileFit> fits;
    for (double tau : c.taus) {
        const auto t1 = std::chrono::steady_clock::now();
        fits.push_back(fit_quantile(panel.panel, tau, c.fit));
        std::fprintf(stderr, "tau %s: K = %d at lambda %s (%.2fs)\n", format_double(tau).c_str(), fits.back().refit.K,
                     format_double(fits.back().selection.lambda).c_str(), seconds_since(t1));
    }
    const ResultBundle bundle = make_bundle(c, panel, fits);
    const auto bundle_path = c.output.dir / c.output.bundle;
    write_bundle(bundle_path, bundle);
    load_bundle(bundle_path);
    if (c.output.plot_csv) write_plot_csvs(c.output.dir, bundle);
    std::printf("%s\n", bundle_path.string().c_str());
    std::fprintf(stderr, "total %.2fs\n", seconds_since(t0));
    return Exit::ok;
}

struct SimulateArgs {
    std::optional<int> experiment, n, T, reps, threads;
    bool no_coverage = false;
};

int run_simulate(const Overrides& o, const SimulateArgs& s) {
    RunConfig c = resolve(o);
    if (s.experiment) c.simulation.experiment = *s.experiment;
    if (s.n) c.simulation.n = *s.n;
    if (s.T) c.simulation.T = *s.T;
    if (s.reps) c.simulation.replications = *s.reps;
    if (s.threads) c.simulation.threads = *s.threads;
    if (s.no_coverage) c.simulation.coverage = false;
    c.validate();

    StudySettings st;
    st.replications = c.simulation.replications;
    st.threads = c.simulation.threads;
    st.coverage = c.simulation.coverage;
    st.coverage_x = c.simulation.coverage_x;
    st.fit = c.fit;
    for (double tau : c.taus) {
        const DgpSpec spec = make_dgp(c.simulation.experiment, c.simulation.n, c.simulation.T, tau, c.seed);
        const StudyReport r = run_study(spec, st);
        const auto dir = c.taus.size() == 1 ? c.output.dir : c.output.dir / ("tau" + format_double(tau));
        write_study(dir, spec, r, dump_config(c));
        std::printf("tau %s: %.1f%% correct K (truth %d), MSE penalized %s, oracle %s, failures %d\n",
                    format_double(tau).c_str(), r.percent_correct, r.true_K, format_double(r.mean_mse_penalized).c_str(),
                    format_double(r.mean_mse_oracle).c_str(), r.failures);
        std::fprintf(stderr, "tau %s: %.1fs\n", format_double(tau).c_str(), r.seconds);
    }
    return Exit::ok;
}

struct PredictArgs {
    std::string bundle;
    std::optional<double> tau;
    std::vector<double> x;
    std::optional<int> grid;
    std::optional<std::string> individual;
};

int run_predict(const PredictArgs& a) {
    const ResultBundle b = load_bundle(a.bundle);
    if (b.fits.empty()) throw DataError("bundle has no fits");
    const double tau = a.tau.value_or(b.fits.front().tau);
    std::vector<double> xs = a.x;
    if (a.grid) {
        if (*a.grid < 2) throw ConfigError("--grid needs at least 2 points");
        for (int g = 0; g < *a.grid; ++g) {
            xs.push_back(b.covariate_map.invert(static_cast<double>(g) / static_cast<double>(*a.grid - 1)));
        }
    }
    const Prediction p = predict(b, tau, xs, a.individual);
    std::string head = "x";
    for (Eigen::Index k = 0; k < p.groups.rows(); ++k) head += ",group" + std::to_string(k + 1);
    if (p.individual) head += ",individual";
    head += ",extrapolated";
    std::printf("%s\n", head.c_str());
    for (std::size_t g = 0; g < xs.size(); ++g) {
        std::string row = format_double(xs[g]);
        for (Eigen::Index k = 0; k < p.groups.rows(); ++k) {
            row += ',' + format_double(p.groups(k, static_cast<Eigen::Index>(g)));
        }
        if (p.individual) row += ',' + format_double((*p.individual)[static_cast<Eigen::Index>(g)]);
        row += p.extrapolated[g] ? ",1" : ",0";
        std::printf("%s\n", row.c_str());
    }
    for (bool e : p.extrapolated) {
        if (e) {
            std::fprintf(stderr, "warning: some points lie outside the training covariate range\n");
            break;
        }
    }
    return Exit::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantile subgroup identification for panel data with SCAD pairwise fusion"};
    app.require_subcommand(1);

    Overrides fit_o;
    std::optional<std::string> data_path;
    auto* fit = app.add_subcommand("fit", "fit a panel CSV (header id,t,y,x)");
    add_common(fit, fit_o);
    fit->add_option("--data", data_path, "panel CSV");

    Overrides sim_o;
    SimulateArgs sim_a;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo study of one simulation design");
    add_common(sim, sim_o);
    sim->add_option("--experiment", sim_a.experiment, "design 1-4");
    sim->add_option("--n", sim_a.n, "individuals");
    sim->add_option("--T", sim_a.T, "time points");
    sim->add_option("--reps", sim_a.reps, "replications");
    sim->add_option("--threads", sim_a.threads, "worker threads (0 = all cores)");
    sim->add_flag("--no-coverage", sim_a.no_coverage, "skip coverage computation");

    PredictArgs pred_a;
    auto* pred = app.add_subcommand("predict", "evaluate fitted group curves from a bundle");
    pred->add_option("--bundle", pred_a.bundle, "result bundle")->required()->check(CLI::ExistingFile);
    pred->add_option("--tau", pred_a.tau, "quantile level of the fit (default: first)");
    pred->add_option("--x", pred_a.x, "covariate values in original units");
    pred->add_option("--grid", pred_a.grid, "equally spaced points over the training range");
    pred->add_option("--individual", pred_a.individual, "also report mu_i + m(x) for this id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config;
    }

    try {
        if (*fit) return run_fit(fit_o, data_path);
        if (*sim) return run_simulate(sim_o, sim_a);
        if (*pred) return run_predict(pred_a);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return Exit::other;
    }
    return Exit::other;
}
