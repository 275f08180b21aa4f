#include "meanmatch/market.hpp"

#include <cmath>
#include <stdexcept>

namespace meanmatch {

Utility Utility::linear(double slope) {
    if (slope < 0.0) throw std::invalid_argument("Utility: slope must be nonnegative");
    Utility u;
    u.slope_ = slope;
    return u;
}

Utility Utility::tabulated(std::vector<double> node_values) {
    if (node_values.size() < 2) throw std::invalid_argument("Utility: need >= 2 node values");
    if (node_values.front() != 0.0) {
        throw std::invalid_argument("Utility: tabulated profile must vanish at quality 0");
    }
    for (std::size_t i = 1; i < node_values.size(); ++i) {
        if (node_values[i] < node_values[i - 1]) {
            throw std::invalid_argument("Utility: tabulated profile must be nondecreasing");
        }
    }
    Utility u;
    u.tabulated_ = std::move(node_values);
    return u;
}

std::vector<double> Utility::profile(const SpatialGrid& grid) const {
    if (is_linear()) {
        std::vector<double> out(grid.n_nodes());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = slope_ * grid.node(i);
        return out;
    }
    if (tabulated_.size() != grid.n_nodes()) {
        throw std::invalid_argument("Utility: tabulated profile size does not match grid");
    }
    return tabulated_;
}

double Utility::lower_slope(const SpatialGrid& grid) const {
    if (is_linear()) return slope_;
    const auto p = profile(grid);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < p.size(); ++i) lo = std::min(lo, (p[i] - p[i - 1]) / grid.dx());
    return lo;
}

double Utility::upper_slope(const SpatialGrid& grid) const {
    if (is_linear()) return slope_;
    const auto p = profile(grid);
    double hi = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) hi = std::max(hi, (p[i] - p[i - 1]) / grid.dx());
    return hi;
}

double DensitySpec::pdf(double x, const SpatialGrid& grid) const {
    switch (family) {
        case DensityFamily::ParetoLogNormal:
            return income::plognorm_pdf(pln, x);
        case DensityFamily::GeneralizedPareto:
            return income::gpareto_pdf(gp, x);
        case DensityFamily::Tabulated: {
            if (tabulated.size() != grid.n_nodes()) {
                throw std::invalid_argument("DensitySpec: tabulated size does not match grid");
            }
            if (x < 0.0 || x > grid.x_max()) return 0.0;
            const std::size_t j = grid.cell_index(x);
            const double w = (x - grid.node(j)) / grid.dx();
            return tabulated[j] + w * (tabulated[j + 1] - tabulated[j]);
        }
    }
    return 0.0;
}

double DensitySpec::cdf(double x) const {
    switch (family) {
        case DensityFamily::ParetoLogNormal:
            return income::plognorm_cdf(pln, x);
        case DensityFamily::GeneralizedPareto:
            return income::gpareto_cdf(gp, x);
        case DensityFamily::Tabulated:
            throw std::logic_error("DensitySpec: closed-form cdf unavailable for tabulated family");
    }
    return 0.0;
}

double DensitySpec::quantile(double p) const {
    switch (family) {
        case DensityFamily::ParetoLogNormal:
            return income::plognorm_quantile(pln, p);
        case DensityFamily::GeneralizedPareto:
            return income::gpareto_quantile(gp, p);
        case DensityFamily::Tabulated:
            throw std::logic_error("DensitySpec: closed-form quantile unavailable for tabulated family");
    }
    return 0.0;
}

std::vector<double> DensitySpec::evaluate(const SpatialGrid& grid) const {
    std::vector<double> out(grid.n_nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pdf(grid.node(i), grid);
    if (normalize) {
        const double mass = riemann_sum_right(out, grid.dx());
        if (!(mass > 0.0)) throw std::invalid_argument("DensitySpec: zero mass on grid");
        for (double& v : out) v /= mass;
    }
    return out;
}

void MarketParams::validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("MarketParams: rho must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("MarketParams: horizon must be positive");
    if (!(side_a.lambda > 0.0) || !(side_b.lambda > 0.0)) {
        // lambda == 0 is allowed for decoupled experiments; negative is not
        if (side_a.lambda < 0.0 || side_b.lambda < 0.0) {
            throw std::invalid_argument("MarketParams: lambda must be nonnegative");
        }
    }
}

}  // namespace meanmatch
