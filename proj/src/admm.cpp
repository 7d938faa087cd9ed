#include "qfuse/admm.hpp"

#include <cmath>
#include <string>

#include "qfuse/selection.hpp"

namespace qfuse {

void AdmmConfig::validate() const {
    if (!(gamma > 0.0)) throw InvalidInput("admm.gamma must be positive");
    if (!(kappa > 0.0)) throw InvalidInput("admm.kappa must be positive");
    if (outer_max < 1 || inner_max < 1) throw InvalidInput("ADMM iteration caps must be >= 1");
    if (!(tol_primal >= 0.0) || !(tol_dual >= 0.0) || !(tol_rel >= 0.0)) {
        throw InvalidInput("ADMM tolerances must be nonnegative");
    }
    if (majorization_steps < 1) throw InvalidInput("admm.majorization_steps must be >= 1");
    if (stability_window < 1) throw InvalidInput("admm.stability_window must be >= 1");
}

// ---------------------------------------------------------------------------
// Difference operator

DifferenceOperator::DifferenceOperator(Eigen::Index n, int block) : n_(n), block_(block) {
    if (n < 1) throw InvalidInput("difference operator needs n >= 1");
    if (block < 2) throw InvalidInput("difference operator needs block size H >= 2");
    pairs_.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) pairs_.emplace_back(i, j);
    }
}

Eigen::Index DifferenceOperator::pair_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= n_ || i == j) throw InvalidInput("invalid individual pair");
    // pairs before row i: sum_{r<i} (n - 1 - r)
    const Eigen::Index before = static_cast<Eigen::Index>(i) * (2 * n_ - i - 1) / 2;
    return before + (j - i - 1);
}

Vector DifferenceOperator::apply(const Vector& w) const {
    if (w.size() != cols()) throw InvalidInput("difference operator: length mismatch");
    const int d = block_ - 1;
    Vector out(rows());
    for (Eigen::Index k = 0; k < pairs(); ++k) {
        const auto [i, j] = pairs_[k];
        out.segment(k * d, d) = w.segment(i * block_ + 1, d) - w.segment(j * block_ + 1, d);
    }
    return out;
}

void DifferenceOperator::apply_transpose_into(const Vector& v, Vector& out) const {
    if (v.size() != rows()) throw InvalidInput("difference operator transpose: length mismatch");
    const int d = block_ - 1;
    out.setZero(cols());
    for (Eigen::Index k = 0; k < pairs(); ++k) {
        const auto [i, j] = pairs_[k];
        out.segment(i * block_ + 1, d) += v.segment(k * d, d);
        out.segment(j * block_ + 1, d) -= v.segment(k * d, d);
    }
}

Vector DifferenceOperator::apply_transpose(const Vector& v) const {
    Vector out;
    apply_transpose_into(v, out);
    return out;
}

Eigen::SparseMatrix<double> DifferenceOperator::to_sparse() const {
    const int d = block_ - 1;
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(2 * rows()));
    for (Eigen::Index k = 0; k < pairs(); ++k) {
        const auto [i, j] = pairs_[k];
        for (int c = 0; c < d; ++c) {
            entries.emplace_back(k * d + c, i * block_ + 1 + c, 1.0);
            entries.emplace_back(k * d + c, j * block_ + 1 + c, -1.0);
        }
    }
    Eigen::SparseMatrix<double> a(rows(), cols());
    a.setFromTriplets(entries.begin(), entries.end());
    return a;
}

DifferenceOperator build_difference_operator(Eigen::Index n, int block) {
    if (n < 2) throw InvalidInput("pairwise differences need at least two individuals");
    return DifferenceOperator(n, block);
}

// ---------------------------------------------------------------------------
// Design

DesignMatrix::DesignMatrix(const PanelData& panel, const Spline& sys)
    : n_(panel.n()), T_(panel.T()), block_(sys.dim()) {
    if (block_ < 2) throw InvalidInput("design needs a spline basis with H >= 2");
    rows_ = sys.eval_pi_rows(panel.x_stacked());
}

Matrix DesignMatrix::block_matrix(Eigen::Index i) const {
    Matrix b(T_, block_);
    b.col(0).setOnes();
    b.rightCols(block_ - 1) = rows_.middleRows(i * T_, T_);
    return b;
}

void DesignMatrix::apply_into(const Vector& w, Vector& out) const {
    if (w.size() != n_ * block_) throw InvalidInput("design apply: length mismatch");
    out.resize(n_ * T_);
    const int d = block_ - 1;
    for (Eigen::Index i = 0; i < n_; ++i) {
        out.segment(i * T_, T_).noalias() = rows_.middleRows(i * T_, T_) * w.segment(i * block_ + 1, d);
        out.segment(i * T_, T_).array() += w[i * block_];
    }
}

Vector DesignMatrix::apply(const Vector& w) const {
    Vector out;
    apply_into(w, out);
    return out;
}

void DesignMatrix::apply_transpose_into(const Vector& r, Vector& out) const {
    if (r.size() != n_ * T_) throw InvalidInput("design transpose: length mismatch");
    out.resize(n_ * block_);
    const int d = block_ - 1;
    for (Eigen::Index i = 0; i < n_; ++i) {
        const auto ri = r.segment(i * T_, T_);
        out[i * block_] = ri.sum();
        out.segment(i * block_ + 1, d).noalias() = rows_.middleRows(i * T_, T_).transpose() * ri;
    }
}

Vector DesignMatrix::apply_transpose(const Vector& r) const {
    Vector out;
    apply_transpose_into(r, out);
    return out;
}

Matrix DesignMatrix::to_dense() const {
    Matrix dense = Matrix::Zero(n_ * T_, n_ * block_);
    for (Eigen::Index i = 0; i < n_; ++i) dense.block(i * T_, i * block_, T_, block_) = block_matrix(i);
    return dense;
}

DesignMatrix assemble_design(const PanelData& panel, const Spline& sys) { return DesignMatrix(panel, sys); }

// ---------------------------------------------------------------------------
// Factorization

Factorization::Factorization(const DesignMatrix& design, const DifferenceOperator& op, double gamma, double kappa)
    : n_(design.n()), block_(design.block()), gamma_(gamma), kappa_(kappa) {
    if (!(gamma > 0.0) || !(kappa > 0.0)) throw InvalidInput("factorization needs gamma, kappa > 0");
    if (op.n() != n_ || op.block() != block_) throw InvalidInput("design and difference operator disagree");
    const int H = block_;
    const int d = H - 1;
    const Eigen::Index T = design.T();
    // Laplacian of the complete graph: A^T A = (n I - 1 1^T) (x) I_{H-1} on theta
    // coordinates. The diagonal part n gamma enters each block; the rank-d part
    // -gamma U U^T (U = 1_n (x) S) is handled by Woodbury.
    const double diag_weight = n_ > 1 ? gamma * static_cast<double>(n_) : 0.0;
    upper_.resize(n_);
    coupling_.resize(n_);
    Matrix capacitance = Matrix::Identity(d, d) / gamma;
    for (Eigen::Index i = 0; i < n_; ++i) {
        Matrix stacked = Matrix::Zero(T + (n_ > 1 ? d : 0), H);
        stacked.topRows(T) = std::sqrt(kappa) * design.block_matrix(i);
        if (n_ > 1) stacked.bottomRightCorner(d, d) = std::sqrt(diag_weight) * Matrix::Identity(d, d);
        Eigen::HouseholderQR<Matrix> qr(stacked);
        Matrix r = qr.matrixQR().topRows(H).triangularView<Eigen::Upper>();
        for (int k = 0; k < H; ++k) {
            if (std::abs(r(k, k)) < 1e-12 * std::sqrt(kappa)) {
                r(k, k) = r(k, k) >= 0.0 ? 1e-10 : -1e-10;
                ridge_ = true;
            }
        }
        upper_[i] = std::move(r);
        if (n_ > 1) {
            Matrix sel = Matrix::Zero(H, d);
            sel.bottomRows(d).setIdentity();
            upper_[i].transpose().triangularView<Eigen::Lower>().solveInPlace(sel);
            upper_[i].triangularView<Eigen::Upper>().solveInPlace(sel);
            coupling_[i] = std::move(sel);
            capacitance -= coupling_[i].bottomRows(d);
        }
    }
    if (n_ > 1) {
        capacitance = 0.5 * (capacitance + capacitance.transpose());
        capacitance_.compute(capacitance);
        if (capacitance_.info() != Eigen::Success ||
            capacitance_.matrixLLT().diagonal().minCoeff() < 1e-8 * std::sqrt(capacitance.diagonal().maxCoeff())) {
            capacitance.diagonal().array() += 1e-10;
            capacitance_.compute(capacitance);
            ridge_ = true;
        }
    }
}

void Factorization::solve_block(Eigen::Index i, Eigen::Ref<Vector> x) const {
    upper_[i].transpose().triangularView<Eigen::Lower>().solveInPlace(x);
    upper_[i].triangularView<Eigen::Upper>().solveInPlace(x);
}

Vector Factorization::solve(const Vector& rhs) const {
    if (rhs.size() != n_ * block_) throw InvalidInput("factorization solve: length mismatch");
    const int d = block_ - 1;
    Vector x = rhs;
    for (Eigen::Index i = 0; i < n_; ++i) solve_block(i, x.segment(i * block_, block_));
    if (n_ > 1) {
        Vector t = Vector::Zero(d);
        for (Eigen::Index i = 0; i < n_; ++i) t += x.segment(i * block_ + 1, d);
        const Vector s = capacitance_.solve(t);
        for (Eigen::Index i = 0; i < n_; ++i) x.segment(i * block_, block_).noalias() += coupling_[i] * s;
    }
    return x;
}

std::shared_ptr<const Factorization> factorize(const DesignMatrix& design, const DifferenceOperator& op,
                                               double gamma, double kappa) {
    return std::make_shared<const Factorization>(design, op, gamma, kappa);
}

// ---------------------------------------------------------------------------
// Iterations

AdmmState AdmmState::zeros(Eigen::Index n, Eigen::Index T, int block) {
    AdmmState s;
    s.w = StackedParams(n, block);
    const Eigen::Index fused = n * (n - 1) / 2 * (block - 1);
    s.v = Vector::Zero(fused);
    s.u = Vector::Zero(fused);
    s.r = Vector::Zero(n * T);
    s.h = Vector::Zero(n * T);
    return s;
}

bool Residuals::within(double eps_primal, double eps_dual, double eps_inner_primal, double eps_inner_dual) const {
    return primal <= eps_primal && dual <= eps_dual && inner_primal <= eps_inner_primal &&
           inner_dual <= eps_inner_dual;
}

AdmmProblem::AdmmProblem(const PanelData& panel, const Spline& sys, double tau, AdmmConfig config)
    : panel_(&panel),
      sys_(&sys),
      tau_(tau),
      config_(config),
      design_(panel, sys),
      op_(panel.n(), sys.dim()),
      factor_(factorize(design_, op_, config.gamma, config.kappa)) {
    detail::check_tau(tau);
    config_.validate();
    const double n = static_cast<double>(panel.n());
    const double T = static_cast<double>(panel.T());
    loss_weight_ = panel.n() > 1 ? (n - 1.0) / (2.0 * T) : 1.0 / (2.0 * T);
}

namespace {

void check_state(const AdmmState& s, const AdmmProblem& p) {
    const auto& panel = p.panel();
    if (s.w.n() != panel.n() || s.w.block() != p.design().block() || s.v.size() != p.difference().rows() ||
        s.u.size() != p.difference().rows() || s.r.size() != panel.size() || s.h.size() != panel.size()) {
        throw InvalidInput("ADMM state dimensions do not match the problem");
    }
}

}  // namespace

Residuals inner_step(AdmmState& state, const AdmmProblem& problem) {
    check_state(state, problem);
    const auto& cfg = problem.config();
    const auto& design = problem.design();
    const auto y = problem.panel().y_stacked();
    const double kappa = cfg.kappa;
    const double gamma = cfg.gamma;
    const double c = problem.loss_weight() / kappa;
    const double tau = problem.tau();

    Vector fixed = problem.difference().apply_transpose(gamma * state.v - state.u);
    Vector pw = design.apply(state.w.values());
    Vector pw_new(pw.size());
    Vector target(pw.size());
    Vector rhs;
    Residuals res;
    for (int j = 0; j < cfg.inner_max; ++j) {
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            const double zeta = y[k] - pw[k] - state.h[k] / kappa;
            state.r[k] = zeta > c * tau ? zeta - c * tau : (zeta < -c * (1.0 - tau) ? zeta + c * (1.0 - tau) : 0.0);
        }
        target = kappa * (y - state.r) - state.h;
        design.apply_transpose_into(target, rhs);
        rhs += fixed;
        state.w.values() = problem.factorization().solve(rhs);
        design.apply_into(state.w.values(), pw_new);
        state.h += kappa * (state.r + pw_new - y);
        res.inner_dual = kappa * (pw_new - pw).norm();
        pw.swap(pw_new);
        ++state.inner_iterations;
        if (!state.w.values().allFinite() || !state.h.allFinite()) {
            throw DivergenceError("non-finite iterate in inner loop at outer iteration " +
                                  std::to_string(state.outer_iterations + 1) + ", inner iteration " +
                                  std::to_string(j + 1));
        }
    }
    res.inner_primal = (state.r + pw - y).norm();
    res.inner_primal_scale = std::max({state.r.norm(), pw.norm(), y.norm()});
    res.inner_dual_scale = state.h.norm();
    return res;
}

Residuals outer_step(AdmmState& state, const AdmmProblem& problem, const ScadParams<double>& penalty) {
    check_state(state, problem);
    const auto& cfg = problem.config();
    const auto& op = problem.difference();
    const double gamma = cfg.gamma;
    const int d = op.block() - 1;
    const Vector aw = op.apply(state.w.values());
    Vector v_new(state.v.size());
    Vector z(d);
    for (Eigen::Index k = 0; k < op.pairs(); ++k) {
        z = aw.segment(k * d, d) + state.u.segment(k * d, d) / gamma;
        if (cfg.exact_scad_prox) {
            v_new.segment(k * d, d) = scad_group_prox(z, penalty, gamma);
        } else {
            Vector anchor = state.v.segment(k * d, d);
            for (int m = 0; m < cfg.majorization_steps; ++m) anchor = scad_group_update(z, anchor, penalty, gamma);
            v_new.segment(k * d, d) = anchor;
        }
    }
    Residuals res;
    const Vector gap = aw - v_new;
    state.u += gamma * gap;
    res.primal = gap.norm();
    res.dual = gamma * op.apply_transpose(v_new - state.v).norm();
    res.primal_scale = std::max(aw.norm(), v_new.norm());
    res.dual_scale = op.apply_transpose(state.u).norm();
    state.v.swap(v_new);
    if (!state.v.allFinite() || !state.u.allFinite()) {
        throw DivergenceError("non-finite iterate in fusion update at outer iteration " +
                              std::to_string(state.outer_iterations + 1));
    }
    return res;
}

double default_fusion_tolerance(int block) { return 1e-6 * std::sqrt(static_cast<double>(block - 1)); }

FitResult solve_fixed_lambda(const AdmmProblem& problem, double lambda, double scad_a,
                             const std::optional<AdmmState>& init) {
    const ScadParams<double> penalty{lambda, scad_a};
    penalty.validate();
    const auto& panel = problem.panel();
    const auto& cfg = problem.config();
    const int H = problem.design().block();

    FitResult fit;
    fit.lambda = lambda;
    fit.state = init ? *init : AdmmState::zeros(panel.n(), panel.T(), H);
    check_state(fit.state, problem);
    fit.state.outer_iterations = 0;
    fit.state.inner_iterations = 0;
    fit.state.primal_history.clear();
    fit.state.dual_history.clear();
    fit.ridge = problem.factorization().ridge_applied();

    const double sqrt_pairs = std::sqrt(static_cast<double>(problem.difference().rows()));
    const double sqrt_params = std::sqrt(static_cast<double>(panel.n() * H));
    const double sqrt_obs = std::sqrt(static_cast<double>(panel.size()));
    const double fusion_tol = default_fusion_tolerance(H);
    std::vector<int> partition = fused_partition(fit.state.v, problem.difference(), fusion_tol);
    try {
        for (int k = 0; k < cfg.outer_max; ++k) {
            const Residuals inner = inner_step(fit.state, problem);
            Residuals res = outer_step(fit.state, problem, penalty);
            res.inner_primal = inner.inner_primal;
            res.inner_dual = inner.inner_dual;
            res.inner_primal_scale = inner.inner_primal_scale;
            res.inner_dual_scale = inner.inner_dual_scale;
            ++fit.state.outer_iterations;
            fit.state.primal_history.push_back(res.primal);
            fit.state.dual_history.push_back(res.dual);
            fit.final_residuals = res;
            std::vector<int> next = fused_partition(fit.state.v, problem.difference(), fusion_tol);
            fit.stable_iterations = next == partition ? fit.stable_iterations + 1 : 0;
            partition.swap(next);
            const double eps_pri = sqrt_pairs * cfg.tol_primal + cfg.tol_rel * res.primal_scale;
            const double eps_dual = sqrt_params * cfg.tol_dual + cfg.tol_rel * res.dual_scale;
            const double eps_in_pri = sqrt_obs * cfg.tol_primal + cfg.tol_rel * res.inner_primal_scale;
            const double eps_in_dual = sqrt_obs * cfg.tol_dual + cfg.tol_rel * res.inner_dual_scale;
            if (res.within(eps_pri, eps_dual, eps_in_pri, eps_in_dual)) {
                fit.converged = true;
                break;
            }
        }
        fit.settled = fit.converged || fit.stable_iterations >= cfg.stability_window;
        if (!fit.converged) {
            fit.message = "reached outer iteration cap (" + std::to_string(cfg.outer_max) + ") without tolerance";
        }
    } catch (const DivergenceError& e) {
        fit.diverged = true;
        fit.converged = false;
        fit.message = e.what();
    }

    if (!fit.diverged) {
        const Vector fitted = problem.design().apply(fit.state.w.values());
        fit.total_loss = total_check_loss(panel.y_stacked() - fitted, problem.tau());
        fit.groups = extract_groups(fit.state.v, problem.difference(), fit.state.w, fusion_tol);
    }
    return fit;
}

FitResult solve_fixed_lambda(const PanelData& panel, const Spline& sys, double tau, double lambda,
                             const std::optional<AdmmState>& init, const AdmmConfig& config, double scad_a) {
    const AdmmProblem problem(panel, sys, tau, config);
    return solve_fixed_lambda(problem, lambda, scad_a, init);
}

}  // namespace qfuse
