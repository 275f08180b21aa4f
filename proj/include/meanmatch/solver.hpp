#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "meanmatch/grid.hpp"
#include "meanmatch/market.hpp"

namespace meanmatch {

/// Iterate ordering of the fixed-point sweeps. Jacobi uses iterate-n data
/// everywhere; GaussSeidelInTime additionally chains
/// already-updated time levels inside a sweep, which shortens the transient
/// but is kept out of acceptance runs.
enum class SweepMode { Jacobi, GaussSeidelInTime };

/// Quadrature of the nonlocal matching integrals. Nodal is the plain
/// per-node indicator sum; Clipped keeps the nodal
/// terms in the interior but gives the two boundary cells their fractional
/// overlap with [V_self, V_other^{-1}], making the fixed-point map
/// continuous in the value fields. The nodal map limit-cycles above any
/// tight tolerance on coarse grids (boundary membership flips excite the
/// forward density recursion), so Clipped is the default.
enum class RegionQuadrature { Clipped, Nodal };

struct SolverOptions {
    double tol = 1e-4;
    std::size_t max_iters = 5000;
    double denominator_floor = 1e-12;
    SweepMode sweep_mode = SweepMode::Jacobi;
    double damping = 1.0;  // omega in (0,1]; 1 = undamped
    RegionQuadrature region_quadrature = RegionQuadrature::Clipped;

    void validate() const;
};

/// Grids plus the nodal profiles every sweep consumes.
struct Discretization {
    SpatialGrid grid_a;
    SpatialGrid grid_b;
    TimeGrid time;
    std::vector<double> h_a, h_b;    // terminal utilities on nodes
    std::vector<double> r_a, r_b;    // running utilities on nodes
    std::vector<double> f_a0, f_b0;  // initial densities on nodes

    Discretization(const MarketParams& params, double x_max, std::size_t n_a,
                   std::size_t n_b, std::size_t n_t);
};

struct ResidualParts {
    double v_a = 0.0, v_b = 0.0, f_a = 0.0, f_b = 0.0;
    double total() const { return v_a + v_b + f_a + f_b; }
};

struct EquilibriumState {
    SpaceTimeField v_a, v_b, f_a, f_b;
    std::size_t iteration = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<ResidualParts> trace;  // one entry per iteration
};

/// Raised when a value profile stops being monotone beyond tolerance.
class SolverHealthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a sweep produces a non-finite cell.
class NumericalFault : public std::runtime_error {
public:
    NumericalFault(const std::string& field, std::size_t i, std::size_t k);
    std::string field;
    std::size_t i = 0, k = 0;
};

/// Mass of the partner density over the matching region at (x, t_index),
/// nodal membership: y_l in region iff V_self(x,t) <= y_l and
/// V_other(y_l,t) <= x. Checks monotonicity of V_other(.,t).
double region_mass(double x, std::size_t t_index, const SpaceTimeField& v_self,
                   const SpaceTimeField& v_other, const SpaceTimeField& f_other,
                   const Discretization& disc, bool self_is_a);

/// Same region, integrand (y_l - V_self(x,t)) * f_other(y_l,t).
double region_first_moment(double x, std::size_t t_index, const SpaceTimeField& v_self,
                           const SpaceTimeField& v_other, const SpaceTimeField& f_other,
                           const Discretization& disc, bool self_is_a);

/// One value-function update (both sides) from iterate-n fields.
void value_sweep(const EquilibriumState& state, const MarketParams& params,
                 const Discretization& disc, const SolverOptions& options,
                 SpaceTimeField& v_a_out, SpaceTimeField& v_b_out);

/// One density update (both sides) from iterate-n fields.
void density_sweep(const EquilibriumState& state, const MarketParams& params,
                   const Discretization& disc, const SolverOptions& options,
                   SpaceTimeField& f_a_out, SpaceTimeField& f_b_out);

/// The total relative error E of the iteration, with floored denominators.
ResidualParts relative_error(const EquilibriumState& prev, const EquilibriumState& next,
                             const SolverOptions& options, const Discretization& disc);

EquilibriumState solve_fixed_point(const MarketParams& params, const Discretization& disc,
                                   const SolverOptions& options);

/// Piecewise-linear inverse of V(.,t_index) at x, with empty/clamped flags.
MonotoneInverse threshold_inverse(const SpaceTimeField& v, const Discretization& disc,
                                  bool v_is_side_a, double x, std::size_t t_index);

/// Deterministic residual-trace CSV: "iter,E,E_VA,E_VB,E_fA,E_fB".
std::string residual_trace_to_csv(const std::vector<ResidualParts>& trace);

/// Block-partitioned parallel loop over [0, n); worker count is capped by
/// MEANMATCH_THREADS. Results must not depend on the partition.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace meanmatch
