#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meanmatch/grid.hpp"
#include "meanmatch/income.hpp"

namespace meanmatch {

/// Quality utility, either linear (slope * quality) or tabulated on the
/// side's grid nodes. Tabulated profiles must vanish at quality 0 and be
/// nondecreasing.
class Utility {
public:
    static Utility linear(double slope);
    static Utility tabulated(std::vector<double> node_values);

    bool is_linear() const { return tabulated_.empty(); }
    double slope() const { return slope_; }

    /// Nodal profile on the given grid.
    std::vector<double> profile(const SpatialGrid& grid) const;

    /// Bi-Lipschitz envelope (min/max difference quotient); for linear
    /// utilities both equal the slope.
    double lower_slope(const SpatialGrid& grid) const;
    double upper_slope(const SpatialGrid& grid) const;

private:
    double slope_ = 0.0;
    std::vector<double> tabulated_;
};

enum class DensityFamily { ParetoLogNormal, GeneralizedPareto, Tabulated };

/// Initial quality distribution of one market side.
struct DensitySpec {
    DensityFamily family = DensityFamily::ParetoLogNormal;
    income::ParetoLogNormalParams pln;
    income::GeneralizedParetoParams gp;
    std::vector<double> tabulated;  // nodal pdf values when family == Tabulated
    bool normalize = false;         // rescale so the discrete grid mass is 1

    double pdf(double x, const SpatialGrid& grid) const;
    double cdf(double x) const;        // closed-form families only
    double quantile(double p) const;   // closed-form families only

    /// Nodal pdf values; when `normalize` is set they are scaled so the
    /// right-endpoint grid mass equals 1.
    std::vector<double> evaluate(const SpatialGrid& grid) const;
};

/// One side's primitives: meeting intensity, running/terminal utilities and
/// the initial density.
struct MarketSideParams {
    double lambda = 1.0;  // partner arrivals per year
    Utility running = Utility::linear(0.0);
    Utility terminal = Utility::linear(0.0);
    DensitySpec density;
};

struct MarketParams {
    MarketSideParams side_a;
    MarketSideParams side_b;
    double rho = 0.04;  // discount rate per year
    double horizon = 1.0;

    void validate() const;  // throws std::invalid_argument on bad values
};

}  // namespace meanmatch
