#pragma once

// Warm-started lambda path, SIC, group extraction and oracle refitting.

#include <cstddef>
#include <optional>
#include <vector>

#include "qfuse/admm.hpp"

namespace qfuse {

enum class GridSpacing { linear, log };

/// Loss entering SIC: the penalized fit itself, or the pooled refit on its groups.
enum class SicLoss { penalized, refit };

/// M + 1 increasing values starting at 0. Log spacing places M geometric
/// points between log_min_ratio * lambda_max and lambda_max after the 0.
std::vector<double> lambda_grid(double lambda_max, int M, GridSpacing spacing, double log_min_ratio = 1e-2);

/// Canonical labels of the connected components of the graph with an edge
/// (i, j) whenever |v_ij| <= tol.
std::vector<int> fused_partition(const Vector& v, const DifferenceOperator& op, double tol);

/// Connected components of the graph with an edge (i, j) whenever the fused
/// difference block |v_ij| <= tol. Representatives average theta_i per group.
GroupStructure extract_groups(const Vector& v, const DifferenceOperator& op, const StackedParams& w, double tol);

/// log(total_loss) + K H log(nT) / (nT).
double sic(double total_loss, int K, int H, long long observations);
double sic(const PanelData& panel, const Spline& sys, const StackedParams& w, double tau, int K);

struct LambdaPath {
    std::vector<double> grid;
    std::vector<FitResult> fits;
    long long total_inner_iterations = 0;
    long long total_outer_iterations = 0;
};

struct PathSettings {
    std::optional<double> lambda_max;  // default: largest pairwise |theta_i - theta_j| at lambda = 0
    int grid_size = 40;                // M
    GridSpacing spacing = GridSpacing::linear;
    double log_min_ratio = 1e-2;
    double scad_a = 3.7;
    bool warm_start = true;
};

/// Largest pairwise distance between the unpenalized theta estimates.
double default_lambda_max(const StackedParams& unpenalized);

/// Solves along `grid` in order, each solve started from the previous solution
/// (or from zeros when warm_start is false). SIC and K are filled per entry.
LambdaPath run_path(const AdmmProblem& problem, const std::vector<double>& grid, double scad_a,
                    bool warm_start = true);

/// Solves lambda = 0, derives the grid from `settings`, then continues the path.
LambdaPath run_path(const AdmmProblem& problem, const PathSettings& settings);

/// Oracle (group-pooled) fit: shared theta per group, free intercepts.
struct GroupFit {
    int K = 0;
    std::vector<int> labels;
    Matrix theta;       // K x (H-1)
    Vector intercepts;  // n
    double total_loss = 0.0;
    bool converged = true;

    /// theta of each individual's group, n x (H-1).
    Matrix individual_theta() const;
    GroupStructure as_structure() const;
};

GroupFit refit_oracle(const PanelData& panel, const Spline& sys, double tau, const std::vector<int>& labels);

/// Replaces the SIC of every settled entry with K <= K_max by the SIC of the
/// pooled refit on its groups. Refits are shared between equal partitions.
void rescore_with_refit(LambdaPath& path, const PanelData& panel, const Spline& sys, double tau, int K_max);

struct SelectionReport {
    std::size_t index = 0;
    double lambda = 0.0;
    int K = 0;
    GroupStructure groups;
    std::vector<double> sic_table;
    std::vector<std::size_t> excluded_unsettled;
    std::vector<std::size_t> excluded_kmax;
};

/// Minimal SIC among settled entries with K <= K_max; ties go to larger lambda.
SelectionReport select(const LambdaPath& path, int K_max);

}  // namespace qfuse
