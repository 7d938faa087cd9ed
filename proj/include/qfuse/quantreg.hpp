#pragma once

// Linear quantile regression by the Frisch-Newton primal-dual interior point
// method with Mehrotra correction. The design is [E, Z]: E one-hot cluster
// intercepts (possibly none) and Z a dense slope block, which lets the normal
// equations be reduced to the slope block by a diagonal Schur complement.

#include <vector>

#include <Eigen/Dense>

namespace qfuse {

struct QuantRegOptions {
    int max_iterations = 100;
    double step_fraction = 0.99995;
    double gap_tolerance = 1e-10;  // relative to 1 + |objective|
};

struct QuantRegResult {
    Eigen::VectorXd intercepts;  // one per cluster
    Eigen::VectorXd slopes;      // one per column of Z
    double loss = 0.0;           // sum of check losses at the solution
    int iterations = 0;
    bool converged = false;
};

/// Minimizes sum_k rho_tau(y_k - a_{cluster[k]} - Z_k beta) over (a, beta).
/// `clusters` may be 0, in which case `cluster` is ignored and only beta is fit.
QuantRegResult quantile_regression(const Eigen::MatrixXd& Z, const std::vector<int>& cluster, int clusters,
                                   const Eigen::VectorXd& y, double tau, const QuantRegOptions& options = {});

/// Plain dense design, no cluster intercepts.
QuantRegResult quantile_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                                   const QuantRegOptions& options = {});

}  // namespace qfuse
