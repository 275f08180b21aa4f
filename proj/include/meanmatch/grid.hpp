#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace meanmatch {

/// Uniform partition of [0, x_max] into n_cells intervals (n_cells+1 nodes,
/// node 0 pinned to exactly 0).
class SpatialGrid {
public:
    SpatialGrid(double x_max, std::size_t n_cells);

    double x_max() const { return x_max_; }
    std::size_t n_cells() const { return n_cells_; }
    std::size_t n_nodes() const { return n_cells_ + 1; }
    double dx() const { return dx_; }
    std::span<const double> nodes() const { return nodes_; }
    double node(std::size_t i) const { return nodes_[i]; }

    /// Index of the cell (node_j, node_{j+1}] containing x, clamped to [0, n_cells-1].
    std::size_t cell_index(double x) const;

private:
    double x_max_;
    std::size_t n_cells_;
    double dx_;
    std::vector<double> nodes_;
};

/// Uniform partition of [0, horizon] into n_steps intervals.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps);

    double horizon() const { return horizon_; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t n_nodes() const { return n_steps_ + 1; }
    double dt() const { return dt_; }
    std::span<const double> nodes() const { return nodes_; }
    double node(std::size_t k) const { return nodes_[k]; }

    /// Nearest-left node index for a time in [0, horizon].
    std::size_t left_index(double t) const;

private:
    double horizon_;
    std::size_t n_steps_;
    double dt_;
    std::vector<double> nodes_;
};

SpatialGrid build_grid(double x_max, std::size_t n_cells);

/// Scalar field on a (space x time) lattice. Storage is space-major: the
/// time series of one spatial node is contiguous.
class SpaceTimeField {
public:
    SpaceTimeField() = default;
    SpaceTimeField(const SpatialGrid& grid, const TimeGrid& time, double fill = 0.0);

    std::size_t n_space() const { return nx_; }   // nodes, N+1
    std::size_t n_time() const { return nt_; }    // nodes, N_t+1

    double& at(std::size_t i, std::size_t k) { return values_[i * nt_ + k]; }
    double at(std::size_t i, std::size_t k) const { return values_[i * nt_ + k]; }

    std::span<double> row(std::size_t i) { return {values_.data() + i * nt_, nt_}; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * nt_, nt_}; }

    std::span<double> raw() { return values_; }
    std::span<const double> raw() const { return values_; }

    /// Gathers the spatial profile at time index k into `out` (size n_space).
    void time_slice(std::size_t k, std::span<double> out) const;

    /// Overwrites the spatial profile at time index k.
    void set_time_slice(std::size_t k, std::span<const double> in);

    bool all_finite() const;
    /// Location of the first non-finite cell; returns false when all finite.
    bool find_non_finite(std::size_t& i_out, std::size_t& k_out) const;

private:
    std::size_t nx_ = 0;
    std::size_t nt_ = 0;
    std::vector<double> values_;
};

/// Piecewise-linear interpolation of a field in x at a fixed time index.
/// Exact at grid nodes. Throws std::domain_error for x outside [0, x_max].
double interpolate_time_slice(const SpaceTimeField& field, const SpatialGrid& grid,
                              double x, std::size_t t_index);

/// Right-endpoint Riemann sum dx * sum_{l=1..N} values[l] over a nodal vector
/// (node 0 excluded, matching the scheme's quadrature).
double riemann_sum_right(std::span<const double> node_values, double dx);

/// Trapezoid rule over all nodes; used only by diagnostics where the scheme
/// does not pin the quadrature.
double trapezoid_sum(std::span<const double> node_values, double dx);

/// Result of inverting a nondecreasing nodal profile at a query value.
struct MonotoneInverse {
    double value = 0.0;
    bool empty = false;    // query below profile at node 0: no pre-image
    bool clamped = false;  // query above profile at the last node: clamped to x_max
};

/// Piecewise-linear inverse of a nondecreasing profile given on grid nodes.
/// Throws std::invalid_argument if the profile is decreasing beyond
/// 1e-9 * max(1, max|profile|).
MonotoneInverse invert_monotone_profile(std::span<const double> profile,
                                        const SpatialGrid& grid, double query);

/// CSV export: header row "x,t_0,...", then one row per spatial node with 17
/// significant digits. Returns the serialized bytes (caller persists them).
std::string field_to_csv(const SpaceTimeField& field, const SpatialGrid& grid,
                         const TimeGrid& time);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace meanmatch
