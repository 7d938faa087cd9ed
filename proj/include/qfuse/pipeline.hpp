#pragma once

// End-to-end estimation at one quantile level: spline basis, lambda path,
// SIC selection, oracle refit on the selected groups and optional bands.

#include <optional>
#include <vector>

#include "qfuse/inference.hpp"
#include "qfuse/selection.hpp"

namespace qfuse {

struct FitSettings {
    int order = 4;                  // q (4 = cubic)
    std::optional<int> basis_dim;   // H; default max(q + 2, round((nT)^{1/5}) + 2)
    AdmmConfig admm;
    PathSettings path;
    int kmax = 10;
    SicLoss sic_loss = SicLoss::refit;
    bool bands = true;
    double level = 0.95;
    std::vector<double> band_grid = default_band_grid();
    DensityOptions density;
    void validate() const;
};

/// H actually used for a panel of `observations` points.
int resolve_basis_dim(const FitSettings& settings, long long observations);
Spline make_spline(const FitSettings& settings, long long observations);

struct QuantileFit {
    double tau = 0.5;
    Spline spline;
    LambdaPath path;
    SelectionReport selection;
    GroupFit refit;  // pooled fit on the selected groups
    std::optional<DensityEstimate> density;
    std::optional<ConfidenceBand> band;
    bool factorization_ridge = false;

    const FitResult& selected() const { return path.fits[selection.index]; }
};

QuantileFit fit_quantile(const PanelData& panel, double tau, const FitSettings& settings);

/// Density, sandwich variance and band for a pooled group fit.
struct BandResult {
    DensityEstimate density;
    ConfidenceBand band;
};
BandResult build_band(const PanelData& panel, const Spline& sys, double tau, const GroupFit& fit,
                      const std::vector<double>& xs, double level, const DensityOptions& density);

}  // namespace qfuse
