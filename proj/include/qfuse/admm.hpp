#pragma once

// Nested two-layer ADMM for the SCAD pairwise-fusion quantile objective at a
// fixed lambda. Outer layer: fusion constraint v = A w with dual u. Inner
// layer: residual constraint r = y - Pi w with dual h.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "qfuse/panel.hpp"

namespace qfuse {

struct AdmmConfig {
    double gamma = 1.0;         // outer augmentation
    double kappa = 1.0;         // inner augmentation
    int outer_max = 200;
    int inner_max = 10;
    double tol_primal = 1e-5;   // absolute tolerances
    double tol_dual = 1e-5;
    double tol_rel = 1e-4;
    int majorization_steps = 1;
    bool exact_scad_prox = false;
    int stability_window = 50;  // outer iterations with an unchanged partition that mark a fit as settled

    void validate() const;
};

/// Pairwise differences of theta blocks: row block k holds theta_i - theta_j for
/// the k-th pair (i, j), i < j, in lexicographic order. mu columns are zero.
class DifferenceOperator {
public:
    /// Allows n = 1 (no pairs); use build_difference_operator for the checked form.
    DifferenceOperator(Eigen::Index n, int block);

    Eigen::Index n() const noexcept { return n_; }
    int block() const noexcept { return block_; }
    Eigen::Index pairs() const noexcept { return static_cast<Eigen::Index>(pairs_.size()); }
    Eigen::Index rows() const noexcept { return pairs() * (block_ - 1); }
    Eigen::Index cols() const noexcept { return n_ * block_; }

    std::pair<int, int> pair(Eigen::Index k) const { return pairs_[k]; }
    Eigen::Index pair_index(int i, int j) const;

    Vector apply(const Vector& w) const;
    Vector apply_transpose(const Vector& v) const;
    void apply_transpose_into(const Vector& v, Vector& out) const;
    Eigen::SparseMatrix<double> to_sparse() const;

private:
    Eigen::Index n_;
    int block_;
    std::vector<std::pair<int, int>> pairs_;
};

DifferenceOperator build_difference_operator(Eigen::Index n, int block);

/// Block-diagonal design diag([1_T, Pi_1], ..., [1_T, Pi_n]); only the
/// nT x (H-1) stack of Pi(x_it)^T rows is stored.
class DesignMatrix {
public:
    DesignMatrix(const PanelData& panel, const Spline& sys);

    Eigen::Index n() const noexcept { return n_; }
    Eigen::Index T() const noexcept { return T_; }
    int block() const noexcept { return block_; }
    const Matrix& basis_rows() const noexcept { return rows_; }

    /// [1_T, Pi_i]
    Matrix block_matrix(Eigen::Index i) const;

    void apply_into(const Vector& w, Vector& out) const;
    Vector apply(const Vector& w) const;
    void apply_transpose_into(const Vector& r, Vector& out) const;
    Vector apply_transpose(const Vector& r) const;
    Matrix to_dense() const;

private:
    Eigen::Index n_;
    Eigen::Index T_;
    int block_;
    Matrix rows_;
};

DesignMatrix assemble_design(const PanelData& panel, const Spline& sys);

/// Cached factorization of the w-update normal matrix
///   M = kappa Pi^T Pi + gamma A^T A.
/// A^T A is the complete-graph Laplacian on theta blocks, so M is block
/// diagonal minus a rank-(H-1) term: each diagonal block is factorized by
/// Householder QR of [sqrt(kappa) [1,Pi_i]; sqrt(gamma n) S^T], and the coupling
/// is resolved through a small Cholesky-factored capacitance matrix.
class Factorization {
public:
    Factorization(const DesignMatrix& design, const DifferenceOperator& op, double gamma, double kappa);

    Vector solve(const Vector& rhs) const;
    double gamma() const noexcept { return gamma_; }
    double kappa() const noexcept { return kappa_; }
    bool ridge_applied() const noexcept { return ridge_; }

private:
    void solve_block(Eigen::Index i, Eigen::Ref<Vector> x) const;

    Eigen::Index n_;
    int block_;
    double gamma_;
    double kappa_;
    bool ridge_ = false;
    std::vector<Matrix> upper_;     // R_i, H x H upper triangular
    std::vector<Matrix> coupling_;  // B_i^{-1} S, H x (H-1)
    Eigen::LLT<Matrix> capacitance_;
};

std::shared_ptr<const Factorization> factorize(const DesignMatrix& design, const DifferenceOperator& op,
                                               double gamma, double kappa);

struct AdmmState {
    StackedParams w;
    Vector v;
    Vector u;
    Vector r;
    Vector h;
    int outer_iterations = 0;
    long long inner_iterations = 0;
    std::vector<double> primal_history;
    std::vector<double> dual_history;

    static AdmmState zeros(Eigen::Index n, Eigen::Index T, int block);
};

struct Residuals {
    double primal = 0.0;       // |A w - v|
    double dual = 0.0;         // gamma |A^T (v_new - v_old)|
    double inner_primal = 0.0; // |r + Pi w - y|
    double inner_dual = 0.0;   // kappa |Pi (w_new - w_old)|
    // norms entering the relative part of each tolerance
    double primal_scale = 0.0;        // max(|A w|, |v|)
    double dual_scale = 0.0;          // |A^T u|
    double inner_primal_scale = 0.0;  // max(|r|, |Pi w|, |y|)
    double inner_dual_scale = 0.0;    // |h|
    bool within(double eps_primal, double eps_dual, double eps_inner_primal, double eps_inner_dual) const;
};

struct FitResult {
    double lambda = 0.0;
    AdmmState state;
    GroupStructure groups;
    double total_loss = 0.0;  // sum of check losses of the penalized fit
    double sic = 0.0;
    std::optional<double> refit_loss;  // check loss of the pooled refit on this entry's groups
    bool converged = false;   // residual tolerances met
    bool settled = false;     // converged, or partition unchanged for stability_window outer iterations
    int stable_iterations = 0;
    bool diverged = false;
    bool ridge = false;
    Residuals final_residuals;
    std::string message;

    int K() const noexcept { return groups.K; }
};

/// Fixed problem data: panel, design, difference operator, cached factorization.
class AdmmProblem {
public:
    AdmmProblem(const PanelData& panel, const Spline& sys, double tau, AdmmConfig config);

    const PanelData& panel() const noexcept { return *panel_; }
    const Spline& spline() const noexcept { return *sys_; }
    double tau() const noexcept { return tau_; }
    const AdmmConfig& config() const noexcept { return config_; }
    const DesignMatrix& design() const noexcept { return design_; }
    const DifferenceOperator& difference() const noexcept { return op_; }
    const Factorization& factorization() const noexcept { return *factor_; }
    std::shared_ptr<const Factorization> factorization_handle() const noexcept { return factor_; }

    /// Weight of the summed check loss: C(n,2)/(nT) = (n-1)/(2T); 1/(2T) when n = 1.
    double loss_weight() const noexcept { return loss_weight_; }

private:
    const PanelData* panel_;
    const Spline* sys_;
    double tau_;
    AdmmConfig config_;
    DesignMatrix design_;
    DifferenceOperator op_;
    std::shared_ptr<const Factorization> factor_;
    double loss_weight_;
};

/// Runs the bounded inner loop (r, w, h updates) with v and u held fixed.
/// Returns the inner residuals of the final inner iteration.
Residuals inner_step(AdmmState& state, const AdmmProblem& problem);

/// v-update by SCAD majorization per pair, then dual ascent on u.
/// Returns (primal, dual) residuals.
Residuals outer_step(AdmmState& state, const AdmmProblem& problem, const ScadParams<double>& penalty);

/// Solves the penalized objective at one lambda from `init` (zeros when empty).
FitResult solve_fixed_lambda(const AdmmProblem& problem, double lambda, double scad_a,
                             const std::optional<AdmmState>& init = std::nullopt);

FitResult solve_fixed_lambda(const PanelData& panel, const Spline& sys, double tau, double lambda,
                             const std::optional<AdmmState>& init, const AdmmConfig& config,
                             double scad_a = 3.7);

/// Group extraction tolerance 1e-6 sqrt(H-1).
double default_fusion_tolerance(int block);

}  // namespace qfuse
