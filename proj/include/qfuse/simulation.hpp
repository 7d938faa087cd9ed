#pragma once

// Data-generating processes for the four simulation designs and the
// replication driver.

#include <cstdint>
#include <string>
#include <vector>

#include "qfuse/distributions.hpp"
#include "qfuse/pipeline.hpp"

namespace qfuse {

struct DgpSpec {
    int experiment = 1;  // 1 iid, 2 AR(1) covariates, 3 t5 errors, 4 quantile-varying groups
    int n = 60;
    int T = 100;
    double tau = 0.5;
    std::uint64_t seed = 1;
    Vector mu;  // frozen individual effects, drawn once per study

    void validate() const;
};

/// Validates the design and draws mu_i ~ N(0,1) from the seed.
DgpSpec make_dgp(int experiment, int n, int T, double tau, std::uint64_t seed);

struct SimulatedPanel {
    PanelData panel;
    PanelMatrix truth;        // m_i(x_it)
    std::vector<int> labels;  // true groups at this tau
};

/// Slope c_i of the sine designs: 0.2, 1, 2 over consecutive thirds.
double sine_amplitude(int i, int n);
/// True number of groups and labels at the design's tau.
std::vector<int> true_labels(const DgpSpec& spec);
/// True centered quantile curve m_i(x).
double true_curve(const DgpSpec& spec, int i, double x);

SimulatedPanel gen_experiment1(const DgpSpec& spec, Rng& rng);
SimulatedPanel gen_experiment2(const DgpSpec& spec, Rng& rng);
SimulatedPanel gen_experiment3(const DgpSpec& spec, Rng& rng);
SimulatedPanel gen_experiment4(const DgpSpec& spec, Rng& rng);
/// Dispatches on spec.experiment with the stream for replication `rep`.
SimulatedPanel generate(const DgpSpec& spec, std::uint64_t rep);

/// (nT)^{-1} sum (fitted - truth)^2.
double mse(const PanelMatrix& fitted, const PanelMatrix& truth);

struct ReplicationResult {
    int replication = 0;
    bool ok = false;
    std::string error;
    int K_hat = 0;
    bool correct = false;
    double lambda = 0.0;
    double mse_penalized = 0.0;  // refit on the estimated groups
    double mse_oracle = 0.0;     // refit on the true groups
    double mse_raw = 0.0;        // unrefitted penalized coefficients at the selected lambda
    std::vector<double> coverage_estimated;  // per coverage point, fraction of individuals covered
    std::vector<double> coverage_true;
    long long inner_iterations = 0;
};

struct StudySettings {
    int replications = 100;
    int threads = 0;  // 0: hardware concurrency
    std::vector<double> coverage_x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    bool coverage = true;
    FitSettings fit;
};

struct StudyReport {
    int replications = 0;
    int failures = 0;
    int true_K = 0;
    double percent_correct = 0.0;
    double mean_mse_penalized = 0.0;
    double mean_mse_oracle = 0.0;
    double mean_mse_raw = 0.0;
    std::vector<double> coverage_x;
    std::vector<double> coverage_estimated;
    std::vector<double> coverage_true;
    std::vector<ReplicationResult> runs;
    double seconds = 0.0;  // wall time, not part of serialized output
};

ReplicationResult run_replication(const DgpSpec& spec, int rep, const StudySettings& settings);
StudyReport run_study(const DgpSpec& spec, const StudySettings& settings);

}  // namespace qfuse
