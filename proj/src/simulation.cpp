#include "qfuse/simulation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "qfuse/errors.hpp"

namespace qfuse {

namespace {

constexpr std::uint64_t kEffectsStream = 0x6d75ULL << 48;
constexpr double kNoise = 0.1;

double sine(double x) { return std::sin(2.0 * std::numbers::pi * x); }

// Experiment 4 scale branches: 0 -> 0.4 + 0.8x, 1 -> 1.2 - 0.8x, 2 -> 0.4.
double branch_scale(int branch, double x) {
    switch (branch) {
        case 0: return 0.4 + 0.8 * x;
        case 1: return 1.2 - 0.8 * x;
        default: return 0.4;
    }
}
double branch_mean(int branch) { return branch == 2 ? 0.4 : 0.8; }
int lower_branch(int i) { return i < 30 ? 0 : 1; }
int upper_branch(int i) { return i < 20 ? 0 : (i < 40 ? 1 : 2); }

PanelMatrix truth_matrix(const DgpSpec& spec, const PanelMatrix& x) {
    PanelMatrix m(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index t = 0; t < x.cols(); ++t) m(i, t) = true_curve(spec, static_cast<int>(i), x(i, t));
    }
    return m;
}

SimulatedPanel sine_design(const DgpSpec& spec, Rng& rng, bool ar_covariates, bool t_errors) {
    spec.validate();
    const int n = spec.n, T = spec.T;
    PanelMatrix x(n, T), y(n, T);
    const double shift = t_errors ? student_t_quantile(spec.tau, 5) : normal_quantile(spec.tau);
    const double sd = std::sqrt(4.0 / 3.0);
    for (int i = 0; i < n; ++i) {
        double latent = 0.0;
        if (ar_covariates) {
            for (int b = 0; b < 200; ++b) latent = 0.5 * latent + rng.normal();
        }
        for (int t = 0; t < T; ++t) {
            if (ar_covariates) {
                latent = 0.5 * latent + rng.normal();
                x(i, t) = normal_cdf(latent / sd);
            } else {
                x(i, t) = rng.uniform();
            }
            const double eps = t_errors ? rng.student_t(5) : rng.normal();
            y(i, t) = spec.mu[i] + sine_amplitude(i, n) * sine(x(i, t)) + kNoise * (eps - shift);
        }
    }
    PanelMatrix truth = truth_matrix(spec, x);
    return {PanelData(std::move(y), std::move(x)), std::move(truth), true_labels(spec)};
}

}  // namespace

void DgpSpec::validate() const {
    if (experiment < 1 || experiment > 4) throw ConfigError("unknown experiment id " + std::to_string(experiment));
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    if (T < 2) throw ConfigError("T must be >= 2");
    if (experiment == 4) {
        if (n != 60) throw ConfigError("experiment 4 uses the fixed n = 60 partitions");
    } else if (n < 3 || n % 3 != 0) {
        throw ConfigError("n must be a positive multiple of 3");
    }
    if (mu.size() != n) throw ConfigError("individual effects do not match n");
}

DgpSpec make_dgp(int experiment, int n, int T, double tau, std::uint64_t seed) {
    DgpSpec spec{experiment, n, T, tau, seed, Vector::Zero(std::max(n, 0))};
    Rng rng(seed, kEffectsStream);
    for (int i = 0; i < n; ++i) spec.mu[i] = rng.normal();
    spec.validate();
    return spec;
}

double sine_amplitude(int i, int n) {
    const int third = n / 3;
    if (i < third) return 0.2;
    if (i < 2 * third) return 1.0;
    return 2.0;
}

std::vector<int> true_labels(const DgpSpec& spec) {
    std::vector<int> labels(spec.n);
    for (int i = 0; i < spec.n; ++i) {
        if (spec.experiment != 4) {
            labels[i] = i / (spec.n / 3);
        } else if (spec.tau < 0.5) {
            labels[i] = lower_branch(i);
        } else if (spec.tau > 0.5) {
            labels[i] = upper_branch(i);
        } else {
            labels[i] = 0;
        }
    }
    return labels;
}

double true_curve(const DgpSpec& spec, int i, double x) {
    if (spec.experiment != 4) return sine_amplitude(i, spec.n) * sine(x);
    if (spec.tau == 0.5) return sine(x);
    const int branch = spec.tau < 0.5 ? lower_branch(i) : upper_branch(i);
    return sine(x) + (branch_scale(branch, x) - branch_mean(branch)) * normal_quantile(spec.tau);
}

SimulatedPanel gen_experiment1(const DgpSpec& spec, Rng& rng) { return sine_design(spec, rng, false, false); }
SimulatedPanel gen_experiment2(const DgpSpec& spec, Rng& rng) { return sine_design(spec, rng, true, false); }
SimulatedPanel gen_experiment3(const DgpSpec& spec, Rng& rng) { return sine_design(spec, rng, false, true); }

SimulatedPanel gen_experiment4(const DgpSpec& spec, Rng& rng) {
    spec.validate();
    PanelMatrix x(spec.n, spec.T), y(spec.n, spec.T);
    for (int i = 0; i < spec.n; ++i) {
        for (int t = 0; t < spec.T; ++t) {
            x(i, t) = rng.uniform();
            const double eps = rng.normal();
            const int branch = eps < 0.0 ? lower_branch(i) : upper_branch(i);
            y(i, t) = spec.mu[i] + sine(x(i, t)) + branch_scale(branch, x(i, t)) * eps;
        }
    }
    PanelMatrix truth = truth_matrix(spec, x);
    return {PanelData(std::move(y), std::move(x)), std::move(truth), true_labels(spec)};
}

SimulatedPanel generate(const DgpSpec& spec, std::uint64_t rep) {
    Rng rng(spec.seed, rep);
    switch (spec.experiment) {
        case 1: return gen_experiment1(spec, rng);
        case 2: return gen_experiment2(spec, rng);
        case 3: return gen_experiment3(spec, rng);
        case 4: return gen_experiment4(spec, rng);
        default: throw ConfigError("unknown experiment id " + std::to_string(spec.experiment));
    }
}

double mse(const PanelMatrix& fitted, const PanelMatrix& truth) {
    if (fitted.rows() != truth.rows() || fitted.cols() != truth.cols()) throw InvalidInput("mse: dimension mismatch");
    if (fitted.size() == 0) throw InvalidInput("mse: empty input");
    return (fitted - truth).squaredNorm() / static_cast<double>(fitted.size());
}

namespace {

std::vector<double> coverage_of(const DgpSpec& spec, const BandResult& b, const std::vector<int>& labels) {
    std::vector<double> out(b.band.x.size(), 0.0);
    for (std::size_t g = 0; g < b.band.x.size(); ++g) {
        int hit = 0;
        for (int i = 0; i < spec.n; ++i) {
            const double m = true_curve(spec, i, b.band.x[g]);
            hit += (b.band.lower(labels[i], g) <= m && m <= b.band.upper(labels[i], g)) ? 1 : 0;
        }
        out[g] = static_cast<double>(hit) / static_cast<double>(spec.n);
    }
    return out;
}

}  // namespace

ReplicationResult run_replication(const DgpSpec& spec, int rep, const StudySettings& settings) {
    ReplicationResult res;
    res.replication = rep;
    try {
        const SimulatedPanel sim = generate(spec, static_cast<std::uint64_t>(rep));
        FitSettings fs = settings.fit;
        fs.bands = false;
        const QuantileFit fit = fit_quantile(sim.panel, spec.tau, fs);
        const FitResult& chosen = fit.selected();
        res.K_hat = fit.selection.K;
        std::vector<int> truth = sim.labels;
        res.correct = res.K_hat == canonicalize_labels(truth);
        res.lambda = fit.selection.lambda;
        res.inner_iterations = fit.path.total_inner_iterations;
        res.mse_raw = mse(fitted_curves(sim.panel, fit.spline, chosen.state.w.theta_matrix()), sim.truth);
        res.mse_penalized = mse(fitted_curves(sim.panel, fit.spline, fit.refit.individual_theta()), sim.truth);

        const GroupFit oracle = refit_oracle(sim.panel, fit.spline, spec.tau, truth);
        res.mse_oracle = mse(fitted_curves(sim.panel, fit.spline, oracle.individual_theta()), sim.truth);

        if (settings.coverage) {
            const BandResult est = build_band(sim.panel, fit.spline, spec.tau, fit.refit, settings.coverage_x,
                                              fs.level, fs.density);
            res.coverage_estimated = coverage_of(spec, est, fit.refit.labels);
            const BandResult tru = build_band(sim.panel, fit.spline, spec.tau, oracle, settings.coverage_x,
                                              fs.level, fs.density);
            res.coverage_true = coverage_of(spec, tru, oracle.labels);
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
    }
    return res;
}

StudyReport run_study(const DgpSpec& spec, const StudySettings& settings) {
    spec.validate();
    settings.fit.validate();
    if (settings.replications < 1) throw ConfigError("replications must be >= 1");
    for (double x : settings.coverage_x) {
        if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("coverage points must lie in [0,1]");
    }
    const auto start = std::chrono::steady_clock::now();

    StudyReport report;
    report.replications = settings.replications;
    report.coverage_x = settings.coverage_x;
    {
        std::vector<int> truth = true_labels(spec);
        report.true_K = canonicalize_labels(truth);
    }
    report.runs.resize(settings.replications);

    int threads = settings.threads > 0 ? settings.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, settings.replications);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int rep = next++; rep < settings.replications; rep = next++) {
            report.runs[rep] = run_replication(spec, rep, settings);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    }

    // fixed index order keeps the aggregate bit-reproducible
    const std::size_t G = settings.coverage_x.size();
    report.coverage_estimated.assign(settings.coverage ? G : 0, 0.0);
    report.coverage_true.assign(settings.coverage ? G : 0, 0.0);
    int ok = 0, correct = 0;
    for (const ReplicationResult& r : report.runs) {
        if (!r.ok) {
            ++report.failures;
            continue;
        }
        ++ok;
        correct += r.correct ? 1 : 0;
        report.mean_mse_penalized += r.mse_penalized;
        report.mean_mse_raw += r.mse_raw;
        report.mean_mse_oracle += r.mse_oracle;
        for (std::size_t g = 0; g < report.coverage_estimated.size(); ++g) {
            report.coverage_estimated[g] += r.coverage_estimated[g];
            report.coverage_true[g] += r.coverage_true[g];
        }
    }
    if (ok > 0) {
        report.percent_correct = 100.0 * correct / report.replications;
        report.mean_mse_penalized /= ok;
        report.mean_mse_raw /= ok;
        report.mean_mse_oracle /= ok;
        for (std::size_t g = 0; g < report.coverage_estimated.size(); ++g) {
            report.coverage_estimated[g] /= ok;
            report.coverage_true[g] /= ok;
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace qfuse
