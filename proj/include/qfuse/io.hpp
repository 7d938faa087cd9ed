#pragma once

// Panel CSV ingestion, result bundles and plot-ready CSV output.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qfuse/config.hpp"
#include "qfuse/simulation.hpp"

namespace qfuse {

/// Panel in the units of the file: rows follow first appearance of each id,
/// columns follow increasing t.
struct RawPanel {
    std::vector<std::string> ids;
    std::vector<double> times;
    PanelMatrix y;
    PanelMatrix x;
};

/// Reads a `id,t,y,x` file. Throws DataError with the offending line or ids.
RawPanel read_panel_csv(const std::filesystem::path& path);
RawPanel parse_panel_csv(const std::string& text);
void write_panel_csv(const std::filesystem::path& path, const RawPanel& panel);

struct LoadedPanel {
    PanelData panel;  // covariates mapped onto [0,1]
    AffineMap map;
    std::vector<double> times;
};

LoadedPanel load_panel_csv(const std::filesystem::path& path);
LoadedPanel prepare_panel(const RawPanel& raw);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

struct PathRecord {
    double lambda = 0.0;
    int K = 0;
    double sic = 0.0;
    double total_loss = 0.0;
    std::optional<double> refit_loss;
    bool converged = false;
    bool settled = false;
    bool diverged = false;
    int outer_iterations = 0;
    long long inner_iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

struct BandRecord {
    double level = 0.95;
    std::vector<double> x;  // original covariate units
    Matrix estimate;        // K x grid
    Matrix se;
    Matrix lower;
    Matrix upper;
    std::string density_method;
    std::vector<double> bandwidth_x;
    std::vector<double> bandwidth_e;
    double density_floor = 0.0;
    long long floored = 0;
};

struct TauRecord {
    double tau = 0.5;
    std::vector<PathRecord> path;
    std::size_t selected = 0;
    double lambda = 0.0;
    int K = 0;
    std::vector<int> labels;
    Vector intercepts;               // n, from the pooled refit
    Matrix theta;                    // K x (H-1), from the pooled refit
    std::vector<double> curve_x;     // original covariate units
    Matrix curves;                   // K x curve_x
    std::optional<BandRecord> band;
    std::vector<std::size_t> excluded_unsettled;
    std::vector<std::size_t> excluded_kmax;
    bool factorization_ridge = false;
    long long inner_iterations = 0;
    long long outer_iterations = 0;
};

struct ResultBundle {
    static constexpr const char* kFormat = "qfuse-result-bundle";
    static constexpr int kVersion = 1;

    std::string format = kFormat;
    int version = kVersion;
    std::string config;  // canonical JSON of the run configuration
    std::vector<std::string> ids;
    long long T = 0;
    AffineMap covariate_map;
    int order = 4;
    int basis_dim = 0;
    std::vector<TauRecord> fits;

    /// Throws DataError when the bundle is internally inconsistent.
    void validate() const;
};

ResultBundle make_bundle(const RunConfig& config, const LoadedPanel& data, const std::vector<QuantileFit>& fits);
std::string serialize_bundle(const ResultBundle& bundle);
ResultBundle parse_bundle(const std::string& text);
void write_bundle(const std::filesystem::path& path, const ResultBundle& bundle);
ResultBundle load_bundle(const std::filesystem::path& path);

/// SIC path, group labels and fitted curves/bands, one CSV each per tau.
/// Returns the files written.
std::vector<std::filesystem::path> write_plot_csvs(const std::filesystem::path& dir, const ResultBundle& bundle);

struct Prediction {
    double tau = 0.5;
    std::vector<double> x;
    Matrix groups;                    // K x x.size(), m_k(x)
    std::optional<Vector> individual; // mu_i + m_{k(i)}(x) for a named individual
    std::vector<bool> extrapolated;   // x outside the training covariate range
};

/// Evaluates the fitted group curves of the tau entry at raw covariate values.
/// Points outside the training range use the boundary basis values.
Prediction predict(const ResultBundle& bundle, double tau, const std::vector<double>& x,
                   const std::optional<std::string>& individual = std::nullopt);

/// Report JSON and per-replication CSV of a Monte Carlo study.
std::string serialize_study(const DgpSpec& spec, const StudyReport& report, const std::string& config);
void write_study(const std::filesystem::path& dir, const DgpSpec& spec, const StudyReport& report,
                 const std::string& config);

}  // namespace qfuse
