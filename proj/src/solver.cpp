#include "meanmatch/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <thread>

#include "meanmatch/kernels.hpp"

namespace meanmatch {

void SolverOptions::validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("SolverOptions: tol must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) {
        throw std::invalid_argument("SolverOptions: damping must be in (0,1]");
    }
    if (!(denominator_floor > 0.0)) {
        throw std::invalid_argument("SolverOptions: denominator_floor must be positive");
    }
    if (max_iters == 0) throw std::invalid_argument("SolverOptions: max_iters must be >= 1");
}

Discretization::Discretization(const MarketParams& params, double x_max, std::size_t n_a,
                               std::size_t n_b, std::size_t n_t)
    : grid_a(x_max, n_a), grid_b(x_max, n_b), time(params.horizon, n_t) {
    params.validate();
    h_a = params.side_a.terminal.profile(grid_a);
    h_b = params.side_b.terminal.profile(grid_b);
    r_a = params.side_a.running.profile(grid_a);
    r_b = params.side_b.running.profile(grid_b);
    f_a0 = params.side_a.density.evaluate(grid_a);
    f_b0 = params.side_b.density.evaluate(grid_b);
}

NumericalFault::NumericalFault(const std::string& field_name, std::size_t i_, std::size_t k_)
    : std::runtime_error("non-finite value in " + field_name + " at (i=" + std::to_string(i_) +
                         ", k=" + std::to_string(k_) + ")"),
      field(field_name), i(i_), k(k_) {}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    std::size_t workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char* env = std::getenv("MEANMATCH_THREADS")) {
        const long cap = std::atol(env);
        if (cap >= 1) workers = std::min<std::size_t>(workers, static_cast<std::size_t>(cap));
    }
    workers = std::min(workers, n);
    if (workers <= 1 || n < 16) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(body, begin, end);
    }
    for (auto& t : pool) t.join();
}

namespace {

// Contiguous per-time snapshots of a space-major field, time levels 0..n_t-1.
struct TimeSlices {
    std::size_t nx = 0;
    std::vector<double> data;  // [k * nx + l]

    void gather(const SpaceTimeField& f, std::size_t n_t_steps) {
        nx = f.n_space();
        data.resize(n_t_steps * nx);
        for (std::size_t l = 0; l < nx; ++l) {
            const auto row = f.row(l);
            for (std::size_t k = 0; k < n_t_steps; ++k) data[k * nx + l] = row[k];
        }
    }
    const double* col(std::size_t k) const { return data.data() + k * nx; }
};

void check_monotone_columns(const SpaceTimeField& v, const char* name) {
    double scale = 1.0;
    for (double x : v.raw()) scale = std::max(scale, std::abs(x));
    const double tol = 1e-9 * scale;
    const std::size_t nx = v.n_space(), nt = v.n_time();
    for (std::size_t k = 0; k < nt; ++k) {
        for (std::size_t i = 1; i < nx; ++i) {
            if (v.at(i, k) < v.at(i - 1, k) - tol) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "%s(.,t_%zu) decreases at node %zu beyond tolerance", name, k, i);
                throw SolverHealthError(buf);
            }
        }
    }
}

// Piecewise-linear inverse values b(i) = V_other^{-1}(x_i) for one time level,
// by a two-pointer merge of the (sorted) query nodes with the monotone column.
// b < 0 marks an empty pre-image.
void inverse_row(const double* v_col, std::size_t n_other_nodes, const SpatialGrid& other_grid,
                 const SpatialGrid& self_grid, double* b_out) {
    const std::size_t n_self = self_grid.n_nodes();
    const double dy = other_grid.dx();
    std::size_t j = 0;  // last index with v_col[j] <= x
    for (std::size_t i = 0; i < n_self; ++i) {
        const double x = self_grid.node(i);
        if (x < v_col[0]) {
            b_out[i] = -1.0;
            continue;
        }
        while (j + 1 < n_other_nodes && v_col[j + 1] <= x) ++j;
        if (j + 1 >= n_other_nodes) {
            b_out[i] = other_grid.x_max();
            continue;
        }
        const double rise = v_col[j + 1] - v_col[j];
        double w = rise > 0.0 ? (x - v_col[j]) / rise : 1.0;
        if (w < 0.0) w = 0.0;
        if (w > 1.0) w = 1.0;
        b_out[i] = other_grid.node(j) + w * dy;
    }
}

struct SideView {
    const SpatialGrid* self_grid;
    const SpatialGrid* other_grid;
    const std::vector<double>* h;
    const std::vector<double>* r;
    const std::vector<double>* f0;
    double lambda_other;  // intensity of the partner-side meeting process
};

// One full update of either the value rows, the density rows, or both, for
// one side. All nonlocal data comes from the iterate-n snapshots.
void sweep_side(const SideView& side, const SpaceTimeField& v_self_old,
                const SpaceTimeField& f_self_old, const TimeSlices& v_other_slices,
                const TimeSlices& f_other_slices, const std::vector<double>& inv_rows,
                const MarketParams& params, const SolverOptions& opt, const TimeGrid& time,
                SpaceTimeField* v_out, SpaceTimeField* f_out) {
    const std::size_t nx = side.self_grid->n_nodes();
    const std::size_t nt = time.n_steps();
    const double dt = time.dt();
    const double dy = side.other_grid->dx();
    const std::size_t n_other = side.other_grid->n_nodes();
    const double* y_nodes = side.other_grid->nodes().data();
    const bool clipped = opt.region_quadrature == RegionQuadrature::Clipped;
    const bool gauss_seidel = opt.sweep_mode == SweepMode::GaussSeidelInTime;

    parallel_for(nx, [&](std::size_t begin, std::size_t end) {
        std::vector<double> gain(nt), reduce_rate(nt);
        for (std::size_t i = begin; i < end; ++i) {
            const double x = side.self_grid->node(i);
            const auto v_row_old = v_self_old.row(i);
            const auto f_row_old = f_self_old.row(i);
            for (std::size_t k = 0; k < nt; ++k) {
                const double a = v_row_old[k];
                kernels::RegionSums sums;
                if (clipped) {
                    const double b = inv_rows[k * nx + i];
                    sums = kernels::region_sums_clipped(y_nodes + 1, f_other_slices.col(k) + 1,
                                                        n_other - 1, a, b, dy);
                } else {
                    sums = kernels::region_sums_nodal(y_nodes + 1, v_other_slices.col(k) + 1,
                                                      f_other_slices.col(k) + 1, n_other - 1, a, x);
                }
                gain[k] = side.lambda_other * (sums.moment * dy);
                reduce_rate[k] = std::max(side.lambda_other * (sums.mass * dy), 0.0);
            }
            if (v_out) {
                auto row = v_out->row(i);
                row[nt] = (*side.h)[i];
                const double denom = params.rho * dt + 1.0;
                for (std::size_t k_plus_1 = nt; k_plus_1 > 0; --k_plus_1) {
                    const std::size_t k = k_plus_1 - 1;
                    const double next = gauss_seidel ? row[k + 1] : v_row_old[k + 1];
                    row[k] = (next + (gain[k] + (*side.r)[i]) * dt) / denom;
                }
            }
            if (f_out) {
                auto row = f_out->row(i);
                row[0] = (*side.f0)[i];
                for (std::size_t k = 0; k < nt; ++k) {
                    const double prev = gauss_seidel ? row[k] : f_row_old[k];
                    row[k + 1] = prev / (dt * reduce_rate[k] + 1.0);
                }
            }
        }
    });
}

void blend_damped(SpaceTimeField& out, const SpaceTimeField& old_field, double omega) {
    if (omega >= 1.0) return;
    auto dst = out.raw();
    const auto src = old_field.raw();
    for (std::size_t n = 0; n < dst.size(); ++n) {
        dst[n] = omega * dst[n] + (1.0 - omega) * src[n];
    }
}

void pin_terminal(SpaceTimeField& v, const std::vector<double>& h, std::size_t nt) {
    for (std::size_t i = 0; i < v.n_space(); ++i) v.at(i, nt) = h[i];
}

void pin_initial(SpaceTimeField& f, const std::vector<double>& f0) {
    for (std::size_t i = 0; i < f.n_space(); ++i) f.at(i, 0) = f0[i];
}

void abort_on_non_finite(const SpaceTimeField& f, const char* name) {
    std::size_t i = 0, k = 0;
    if (f.find_non_finite(i, k)) throw NumericalFault(name, i, k);
}

struct SweepWorkspace {
    TimeSlices v_a_slices, v_b_slices, f_a_slices, f_b_slices;
    std::vector<double> inv_b_at_a;  // V_B^{-1}(x_i, t_k), [k * nxa + i]
    std::vector<double> inv_a_at_b;

    void prepare(const EquilibriumState& s, const Discretization& disc,
                 const SolverOptions& opt) {
        const std::size_t nt = disc.time.n_steps();
        v_a_slices.gather(s.v_a, nt);
        v_b_slices.gather(s.v_b, nt);
        f_a_slices.gather(s.f_a, nt);
        f_b_slices.gather(s.f_b, nt);
        if (opt.region_quadrature == RegionQuadrature::Clipped) {
            const std::size_t nxa = disc.grid_a.n_nodes();
            const std::size_t nxb = disc.grid_b.n_nodes();
            inv_b_at_a.resize(nt * nxa);
            inv_a_at_b.resize(nt * nxb);
            for (std::size_t k = 0; k < nt; ++k) {
                inverse_row(v_b_slices.col(k), nxb, disc.grid_b, disc.grid_a,
                            inv_b_at_a.data() + k * nxa);
                inverse_row(v_a_slices.col(k), nxa, disc.grid_a, disc.grid_b,
                            inv_a_at_b.data() + k * nxb);
            }
        }
    }
};

SideView side_a_view(const Discretization& disc, const MarketParams& p) {
    return {&disc.grid_a, &disc.grid_b, &disc.h_a, &disc.r_a, &disc.f_a0, p.side_b.lambda};
}
SideView side_b_view(const Discretization& disc, const MarketParams& p) {
    return {&disc.grid_b, &disc.grid_a, &disc.h_b, &disc.r_b, &disc.f_b0, p.side_a.lambda};
}

}  // namespace

double region_mass(double x, std::size_t t_index, const SpaceTimeField& v_self,
                   const SpaceTimeField& v_other, const SpaceTimeField& f_other,
                   const Discretization& disc, bool self_is_a) {
    const SpatialGrid& self_grid = self_is_a ? disc.grid_a : disc.grid_b;
    const SpatialGrid& other_grid = self_is_a ? disc.grid_b : disc.grid_a;
    const std::size_t n_other = other_grid.n_nodes();
    std::vector<double> v_col(n_other), f_col(n_other);
    v_other.time_slice(t_index, v_col);
    f_other.time_slice(t_index, f_col);
    check_monotone_columns(v_other, self_is_a ? "V_B" : "V_A");
    const double a = interpolate_time_slice(v_self, self_grid, x, t_index);
    const auto sums = kernels::region_sums_nodal(other_grid.nodes().data() + 1, v_col.data() + 1,
                                                 f_col.data() + 1, n_other - 1, a, x);
    return sums.mass * other_grid.dx();
}

double region_first_moment(double x, std::size_t t_index, const SpaceTimeField& v_self,
                           const SpaceTimeField& v_other, const SpaceTimeField& f_other,
                           const Discretization& disc, bool self_is_a) {
    const SpatialGrid& self_grid = self_is_a ? disc.grid_a : disc.grid_b;
    const SpatialGrid& other_grid = self_is_a ? disc.grid_b : disc.grid_a;
    const std::size_t n_other = other_grid.n_nodes();
    std::vector<double> v_col(n_other), f_col(n_other);
    v_other.time_slice(t_index, v_col);
    f_other.time_slice(t_index, f_col);
    check_monotone_columns(v_other, self_is_a ? "V_B" : "V_A");
    const double a = interpolate_time_slice(v_self, self_grid, x, t_index);
    const auto sums = kernels::region_sums_nodal(other_grid.nodes().data() + 1, v_col.data() + 1,
                                                 f_col.data() + 1, n_other - 1, a, x);
    return sums.moment * other_grid.dx();
}

void value_sweep(const EquilibriumState& state, const MarketParams& params,
                 const Discretization& disc, const SolverOptions& options,
                 SpaceTimeField& v_a_out, SpaceTimeField& v_b_out) {
    options.validate();
    SweepWorkspace ws;
    ws.prepare(state, disc, options);
    v_a_out = SpaceTimeField(disc.grid_a, disc.time);
    v_b_out = SpaceTimeField(disc.grid_b, disc.time);
    sweep_side(side_a_view(disc, params), state.v_a, state.f_a, ws.v_b_slices, ws.f_b_slices,
               ws.inv_b_at_a, params, options, disc.time, &v_a_out, nullptr);
    sweep_side(side_b_view(disc, params), state.v_b, state.f_b, ws.v_a_slices, ws.f_a_slices,
               ws.inv_a_at_b, params, options, disc.time, &v_b_out, nullptr);
    blend_damped(v_a_out, state.v_a, options.damping);
    blend_damped(v_b_out, state.v_b, options.damping);
    pin_terminal(v_a_out, disc.h_a, disc.time.n_steps());
    pin_terminal(v_b_out, disc.h_b, disc.time.n_steps());
    abort_on_non_finite(v_a_out, "V_A");
    abort_on_non_finite(v_b_out, "V_B");
}

void density_sweep(const EquilibriumState& state, const MarketParams& params,
                   const Discretization& disc, const SolverOptions& options,
                   SpaceTimeField& f_a_out, SpaceTimeField& f_b_out) {
    options.validate();
    SweepWorkspace ws;
    ws.prepare(state, disc, options);
    f_a_out = SpaceTimeField(disc.grid_a, disc.time);
    f_b_out = SpaceTimeField(disc.grid_b, disc.time);
    sweep_side(side_a_view(disc, params), state.v_a, state.f_a, ws.v_b_slices, ws.f_b_slices,
               ws.inv_b_at_a, params, options, disc.time, nullptr, &f_a_out);
    sweep_side(side_b_view(disc, params), state.v_b, state.f_b, ws.v_a_slices, ws.f_a_slices,
               ws.inv_a_at_b, params, options, disc.time, nullptr, &f_b_out);
    blend_damped(f_a_out, state.f_a, options.damping);
    blend_damped(f_b_out, state.f_b, options.damping);
    pin_initial(f_a_out, disc.f_a0);
    pin_initial(f_b_out, disc.f_b0);
    abort_on_non_finite(f_a_out, "f_A");
    abort_on_non_finite(f_b_out, "f_B");
}

namespace {

double field_residual(const SpaceTimeField& prev, const SpaceTimeField& next, double floor_eps,
                      double dx, double dt) {
    // right-endpoint double Riemann sum over nodes i>=1, k>=1
    double s = 0.0;
    const std::size_t nt = prev.n_time();
    for (std::size_t i = 1; i < prev.n_space(); ++i) {
        s += kernels::sq_rel_diff(prev.row(i).data() + 1, next.row(i).data() + 1, nt - 1,
                                  floor_eps);
    }
    return std::sqrt(s * dx * dt);
}

}  // namespace

ResidualParts relative_error(const EquilibriumState& prev, const EquilibriumState& next,
                             const SolverOptions& options, const Discretization& disc) {
    ResidualParts parts;
    const double dt = disc.time.dt();
    parts.v_a = field_residual(prev.v_a, next.v_a, options.denominator_floor, disc.grid_a.dx(), dt);
    parts.v_b = field_residual(prev.v_b, next.v_b, options.denominator_floor, disc.grid_b.dx(), dt);
    parts.f_a = field_residual(prev.f_a, next.f_a, options.denominator_floor, disc.grid_a.dx(), dt);
    parts.f_b = field_residual(prev.f_b, next.f_b, options.denominator_floor, disc.grid_b.dx(), dt);
    return parts;
}

EquilibriumState solve_fixed_point(const MarketParams& params, const Discretization& disc,
                                   const SolverOptions& options) {
    options.validate();
    params.validate();

    EquilibriumState state;
    state.v_a = SpaceTimeField(disc.grid_a, disc.time);
    state.v_b = SpaceTimeField(disc.grid_b, disc.time);
    state.f_a = SpaceTimeField(disc.grid_a, disc.time);
    state.f_b = SpaceTimeField(disc.grid_b, disc.time);
    // step (1): V^0 = terminal utility at every time level, f^0 = initial density
    const std::size_t nt = disc.time.n_steps();
    for (std::size_t i = 0; i < disc.grid_a.n_nodes(); ++i) {
        for (std::size_t k = 0; k <= nt; ++k) {
            state.v_a.at(i, k) = disc.h_a[i];
            state.f_a.at(i, k) = disc.f_a0[i];
        }
    }
    for (std::size_t i = 0; i < disc.grid_b.n_nodes(); ++i) {
        for (std::size_t k = 0; k <= nt; ++k) {
            state.v_b.at(i, k) = disc.h_b[i];
            state.f_b.at(i, k) = disc.f_b0[i];
        }
    }

    EquilibriumState next = state;
    SweepWorkspace ws;
    for (std::size_t n = 1; n <= options.max_iters; ++n) {
        check_monotone_columns(state.v_a, "V_A");
        check_monotone_columns(state.v_b, "V_B");
        ws.prepare(state, disc, options);
        sweep_side(side_a_view(disc, params), state.v_a, state.f_a, ws.v_b_slices, ws.f_b_slices,
                   ws.inv_b_at_a, params, options, disc.time, &next.v_a, &next.f_a);
        sweep_side(side_b_view(disc, params), state.v_b, state.f_b, ws.v_a_slices, ws.f_a_slices,
                   ws.inv_a_at_b, params, options, disc.time, &next.v_b, &next.f_b);
        blend_damped(next.v_a, state.v_a, options.damping);
        blend_damped(next.v_b, state.v_b, options.damping);
        blend_damped(next.f_a, state.f_a, options.damping);
        blend_damped(next.f_b, state.f_b, options.damping);
        pin_terminal(next.v_a, disc.h_a, nt);
        pin_terminal(next.v_b, disc.h_b, nt);
        pin_initial(next.f_a, disc.f_a0);
        pin_initial(next.f_b, disc.f_b0);
        abort_on_non_finite(next.v_a, "V_A");
        abort_on_non_finite(next.v_b, "V_B");
        abort_on_non_finite(next.f_a, "f_A");
        abort_on_non_finite(next.f_b, "f_B");

        const ResidualParts parts = relative_error(state, next, options, disc);
        state.trace.push_back(parts);
        std::swap(state.v_a, next.v_a);
        std::swap(state.v_b, next.v_b);
        std::swap(state.f_a, next.f_a);
        std::swap(state.f_b, next.f_b);
        state.iteration = n;
        state.residual = parts.total();
        if (state.residual < options.tol) {
            state.converged = true;
            break;
        }
    }
    return state;
}

MonotoneInverse threshold_inverse(const SpaceTimeField& v, const Discretization& disc,
                                  bool v_is_side_a, double x, std::size_t t_index) {
    const SpatialGrid& grid = v_is_side_a ? disc.grid_a : disc.grid_b;
    std::vector<double> col(grid.n_nodes());
    v.time_slice(t_index, col);
    return invert_monotone_profile(col, grid, x);
}

std::string residual_trace_to_csv(const std::vector<ResidualParts>& trace) {
    std::string out = "iter,E,E_VA,E_VB,E_fA,E_fB\n";
    char buf[160];
    for (std::size_t n = 0; n < trace.size(); ++n) {
        const auto& p = trace[n];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", n + 1, p.total(),
                      p.v_a, p.v_b, p.f_a, p.f_b);
        out += buf;
    }
    return out;
}

}  // namespace meanmatch
