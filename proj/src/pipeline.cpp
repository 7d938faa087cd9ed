#include "qfuse/pipeline.hpp"

#include <cmath>

#include "qfuse/errors.hpp"

namespace qfuse {

void FitSettings::validate() const {
    if (order < 1 || order > 16) throw ConfigError("spline order must lie in [1, 16]");
    if (basis_dim && *basis_dim < order + 1) throw ConfigError("basis dimension must be at least order + 1");
    admm.validate();
    if (path.grid_size < 1) throw ConfigError("lambda grid size must be >= 1");
    if (path.lambda_max && !(*path.lambda_max > 0.0)) throw ConfigError("lambda_max must be positive");
    if (!(path.scad_a > 2.0)) throw ConfigError("SCAD a must exceed 2");
    if (kmax < 1) throw ConfigError("kmax must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
    for (double x : band_grid) {
        if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("band grid points must lie in [0,1]");
    }
    try {
        density.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

int resolve_basis_dim(const FitSettings& settings, long long observations) {
    return settings.basis_dim.value_or(default_basis_dim(observations, settings.order));
}

Spline make_spline(const FitSettings& settings, long long observations) {
    const int H = resolve_basis_dim(settings, observations);
    return Spline(H - settings.order, settings.order);
}

BandResult build_band(const PanelData& panel, const Spline& sys, double tau, const GroupFit& fit,
                      const std::vector<double>& xs, double level, const DensityOptions& density) {
    const StackedParams w = StackedParams::from_blocks(fit.intercepts, fit.individual_theta());
    const PanelMatrix res = residuals(panel, sys, w);
    BandResult out{estimate_density_at_zero(panel, res, fit.labels, density), {}};
    const SandwichVariance variance(panel, sys, fit.labels, out.density, tau);
    out.band = confidence_band(xs, sys, fit.theta, variance, level);
    return out;
}

QuantileFit fit_quantile(const PanelData& panel, double tau, const FitSettings& settings) {
    settings.validate();
    QuantileFit out{tau, make_spline(settings, panel.size()), {}, {}, {}, {}, {}, false};
    const AdmmProblem problem(panel, out.spline, tau, settings.admm);
    out.factorization_ridge = problem.factorization().ridge_applied();
    out.path = run_path(problem, settings.path);
    if (settings.sic_loss == SicLoss::refit) rescore_with_refit(out.path, panel, out.spline, tau, settings.kmax);
    out.selection = select(out.path, settings.kmax);
    out.refit = refit_oracle(panel, out.spline, tau, out.selection.groups.labels);
    if (settings.bands) {
        BandResult b = build_band(panel, out.spline, tau, out.refit, settings.band_grid, settings.level,
                                  settings.density);
        out.density = std::move(b.density);
        out.band = std::move(b.band);
    }
    return out;
}

}  // namespace qfuse
