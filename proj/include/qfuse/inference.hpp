#pragma once

// Pointwise confidence bands for group curves from the quantile sandwich
// variance, with kernel estimates of the conditional density at zero.

#include <optional>
#include <string>
#include <vector>

#include "qfuse/panel.hpp"
#include "qfuse/selection.hpp"

namespace qfuse {

enum class DensityMethod { nadaraya_watson, reweighted_nadaraya_watson };

std::string to_string(DensityMethod method);
DensityMethod parse_density_method(const std::string& name);

struct DensityOptions {
    DensityMethod method = DensityMethod::nadaraya_watson;
    std::optional<double> bandwidth_x;  // rule of thumb when empty
    std::optional<double> bandwidth_e;
    double floor = 1e-3;
    int grid_points = 201;  // x grid on which the estimate is evaluated, then interpolated
    void validate() const;
};

struct DensityEstimate {
    PanelMatrix values;  // f(0 | x_it), n x T, every entry >= floor
    std::vector<double> bandwidth_x;  // per group
    std::vector<double> bandwidth_e;
    std::string kernel = "gaussian";
    DensityMethod method = DensityMethod::nadaraya_watson;
    double floor = 1e-3;
    long long floored = 0;  // entries raised to the floor
};

/// Rule-of-thumb Gaussian bandwidth 1.06 min(sd, IQR/1.34) N^{-1/5}.
double rule_of_thumb_bandwidth(std::vector<double> sample);

/// Conditional density of the residual at 0 given x, pooled within each group.
DensityEstimate estimate_density_at_zero(const PanelData& panel, const PanelMatrix& residuals,
                                         const std::vector<int>& labels, const DensityOptions& options = {});

/// Per-group sandwich tau(1-tau) Pi^T G^{-1} (Z^T Z) G^{-1} Pi with G = Z^T f Z,
/// Z the stacked Pi rows of the group's members.
class SandwichVariance {
public:
    SandwichVariance(const PanelData& panel, const Spline& sys, const std::vector<int>& labels,
                     const DensityEstimate& density, double tau);

    int K() const noexcept { return static_cast<int>(gram_.size()); }
    double variance(int k, double x) const;
    double variance(int k, const Vector& pi) const;

private:
    const Spline* sys_;
    double scale_;
    std::vector<Eigen::LLT<Matrix>> weighted_;  // G_k
    std::vector<Matrix> gram_;                  // Cholesky factor L of Z^T Z, lower
};

/// Single-point convenience wrapper around SandwichVariance.
double variance_at(double x, const PanelData& panel, const Spline& sys, const std::vector<int>& labels, int k,
                   const DensityEstimate& density, double tau);

struct ConfidenceBand {
    std::vector<double> x;
    Matrix estimate;  // K x grid
    Matrix se;
    Matrix lower;
    Matrix upper;
    double level = 0.95;
};

/// 99 interior points 0.01, ..., 0.99.
std::vector<double> default_band_grid();

ConfidenceBand confidence_band(const std::vector<double>& xs, const Spline& sys, const Matrix& theta,
                               const SandwichVariance& variance, double level);

}  // namespace qfuse
