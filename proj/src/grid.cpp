#include "meanmatch/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace meanmatch {

namespace {

std::vector<double> uniform_nodes(double upper, std::size_t n_cells) {
    std::vector<double> nodes(n_cells + 1);
    const double h = upper / static_cast<double>(n_cells);
    for (std::size_t i = 0; i <= n_cells; ++i) {
        nodes[i] = static_cast<double>(i) * h;
    }
    nodes.back() = upper;  // pin the right endpoint exactly
    return nodes;
}

}  // namespace

SpatialGrid::SpatialGrid(double x_max, std::size_t n_cells)
    : x_max_(x_max), n_cells_(n_cells) {
    if (!(x_max > 0.0) || !std::isfinite(x_max)) {
        throw std::invalid_argument("SpatialGrid: x_max must be positive and finite");
    }
    if (n_cells < 2) {
        throw std::invalid_argument("SpatialGrid: n_cells must be >= 2");
    }
    dx_ = x_max / static_cast<double>(n_cells);
    nodes_ = uniform_nodes(x_max, n_cells);
}

std::size_t SpatialGrid::cell_index(double x) const {
    if (x <= 0.0) return 0;
    std::size_t j = static_cast<std::size_t>(x / dx_);
    if (j >= n_cells_) j = n_cells_ - 1;
    // fix up rounding from the division
    if (nodes_[j] > x && j > 0) --j;
    if (j + 1 < n_cells_ && nodes_[j + 1] <= x && nodes_[j + 1] < x_max_) ++j;
    return j;
}

TimeGrid::TimeGrid(double horizon, std::size_t n_steps)
    : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
    }
    if (n_steps < 1) {
        throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    }
    dt_ = horizon / static_cast<double>(n_steps);
    nodes_ = uniform_nodes(horizon, n_steps);
}

std::size_t TimeGrid::left_index(double t) const {
    if (t <= 0.0) return 0;
    if (t >= horizon_) return n_steps_;
    std::size_t k = static_cast<std::size_t>(t / dt_);
    if (k > n_steps_) k = n_steps_;
    if (nodes_[k] > t && k > 0) --k;
    if (k + 1 <= n_steps_ && nodes_[k + 1] <= t) ++k;
    return k;
}

SpatialGrid build_grid(double x_max, std::size_t n_cells) {
    return SpatialGrid(x_max, n_cells);
}

SpaceTimeField::SpaceTimeField(const SpatialGrid& grid, const TimeGrid& time, double fill)
    : nx_(grid.n_nodes()), nt_(time.n_nodes()), values_(nx_ * nt_, fill) {}

void SpaceTimeField::time_slice(std::size_t k, std::span<double> out) const {
    for (std::size_t i = 0; i < nx_; ++i) out[i] = values_[i * nt_ + k];
}

void SpaceTimeField::set_time_slice(std::size_t k, std::span<const double> in) {
    for (std::size_t i = 0; i < nx_; ++i) values_[i * nt_ + k] = in[i];
}

bool SpaceTimeField::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool SpaceTimeField::find_non_finite(std::size_t& i_out, std::size_t& k_out) const {
    for (std::size_t i = 0; i < nx_; ++i) {
        for (std::size_t k = 0; k < nt_; ++k) {
            if (!std::isfinite(values_[i * nt_ + k])) {
                i_out = i;
                k_out = k;
                return true;
            }
        }
    }
    return false;
}

double interpolate_time_slice(const SpaceTimeField& field, const SpatialGrid& grid,
                              double x, std::size_t t_index) {
    if (!(x >= 0.0) || x > grid.x_max()) {
        throw std::domain_error("interpolate_time_slice: x outside [0, x_max]");
    }
    const std::size_t j = grid.cell_index(x);
    const double xj = grid.node(j);
    if (x == xj) return field.at(j, t_index);
    if (x == grid.node(j + 1)) return field.at(j + 1, t_index);
    const double w = (x - xj) / grid.dx();
    const double v0 = field.at(j, t_index);
    const double v1 = field.at(j + 1, t_index);
    return v0 + w * (v1 - v0);
}

double riemann_sum_right(std::span<const double> node_values, double dx) {
    double s = 0.0;
    for (std::size_t l = 1; l < node_values.size(); ++l) s += node_values[l];
    return s * dx;
}

double trapezoid_sum(std::span<const double> node_values, double dx) {
    if (node_values.size() < 2) return 0.0;
    double s = 0.5 * (node_values.front() + node_values.back());
    for (std::size_t l = 1; l + 1 < node_values.size(); ++l) s += node_values[l];
    return s * dx;
}

MonotoneInverse invert_monotone_profile(std::span<const double> profile,
                                        const SpatialGrid& grid, double query) {
    const std::size_t n = profile.size();
    double scale = 1.0;
    for (double v : profile) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;
    for (std::size_t i = 1; i < n; ++i) {
        if (profile[i] < profile[i - 1] - tol) {
            throw std::invalid_argument("invert_monotone_profile: profile decreases beyond tolerance");
        }
    }
    MonotoneInverse out;
    if (query < profile[0]) {
        out.empty = true;
        return out;
    }
    if (query >= profile[n - 1]) {
        out.value = grid.x_max();
        out.clamped = query > profile[n - 1];
        return out;
    }
    // last j with profile[j] <= query
    std::size_t j = static_cast<std::size_t>(
        std::upper_bound(profile.begin(), profile.end(), query) - profile.begin()) - 1;
    const double rise = profile[j + 1] - profile[j];
    double w = rise > 0.0 ? (query - profile[j]) / rise : 0.0;
    if (w < 0.0) w = 0.0;
    if (w > 1.0) w = 1.0;
    out.value = grid.node(j) + w * grid.dx();
    return out;
}

namespace {

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

std::string field_to_csv(const SpaceTimeField& field, const SpatialGrid& grid,
                         const TimeGrid& time) {
    std::string out;
    out.reserve(field.n_space() * (field.n_time() + 1) * 20);
    out += "x";
    for (std::size_t k = 0; k < time.n_nodes(); ++k) {
        out += ',';
        append_g17(out, time.node(k));
    }
    out += '\n';
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        append_g17(out, grid.node(i));
        for (std::size_t k = 0; k < time.n_nodes(); ++k) {
            out += ',';
            append_g17(out, field.at(i, k));
        }
        out += '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace meanmatch
