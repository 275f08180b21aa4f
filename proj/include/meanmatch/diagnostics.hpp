#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meanmatch/solver.hpp"

namespace meanmatch::diagnostics {

enum class Side { A, B };

/// Total unmatched mass of f(.,t_index) by the scheme's right-endpoint sum.
double unmatched_rate(const SpaceTimeField& f, const SpatialGrid& grid, std::size_t t_index);

/// f(x,t)/f0(x); empty when f0(x) == 0 (survival undefined there).
std::optional<double> survival_probability(const SpaceTimeField& f, std::span<const double> f0,
                                           std::size_t x_index, std::size_t t_index);

struct DiagnosticsOptions {
    double mass_floor = 1e-6;  // minimum matched density for a partner density
    RegionQuadrature region_quadrature = RegionQuadrature::Clipped;
};

/// Conditional density of the matched partner's quality for an agent of
/// quality x_index, given matching before the horizon. The time integral
/// uses the density update's own flux decomposition (region weights at t_k,
/// own survival density at t_{k+1}), so the nodal sum integrates to 1 up to
/// the solver residual.
struct PartnerDensity {
    double own_quality = 0.0;
    std::vector<double> partner_nodes;
    std::vector<double> density;  // nodal values over partner_nodes
    double matched_mass = 0.0;    // f0(x) - f(x,T)
    bool insufficient_mass = false;
};

PartnerDensity partner_density(const EquilibriumState& state, const MarketParams& params,
                               const Discretization& disc, std::size_t x_index, Side side,
                               const DiagnosticsOptions& options = {});

/// First moment of the partner density; throws if the density is unavailable.
double expected_partner_quality(const EquilibriumState& state, const MarketParams& params,
                                const Discretization& disc, std::size_t x_index, Side side,
                                const DiagnosticsOptions& options = {});

enum class BandQuantity { Survival, UnmatchedShare };

struct BandSummary {
    double p_lo = 0.0, p_hi = 1.0;
    double x_lo = 0.0, x_hi = 0.0;
    bool empty = false;          // no grid nodes with initial mass in the band
    std::vector<double> series;  // one value per time node
};

/// Initial-population-weighted band averages over time. Band edges are
/// quantiles of the discrete initial density on the grid; both quantities
/// reduce to (band unmatched mass at t) / (band initial mass).
std::vector<BandSummary> band_series(const EquilibriumState& state, const Discretization& disc,
                                     Side side, BandQuantity quantity,
                                     const std::vector<std::pair<double, double>>& bands);

struct FigureExport {
    std::vector<std::string> files;
    std::string manifest_path;
};

/// Writes the figure-data CSV set (value/density slices, unmatched rates,
/// density ratios, banded partner densities) plus a manifest.
FigureExport export_figure_data(const EquilibriumState& state, const MarketParams& params,
                                const Discretization& disc, const std::string& out_dir,
                                const std::string& config_hash,
                                const DiagnosticsOptions& options = {});

}  // namespace meanmatch::diagnostics
