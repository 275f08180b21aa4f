#include "meanmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"

#include "meanmatch/kernels.hpp"
#include "meanmatch/version.hpp"

namespace meanmatch::diagnostics {

double unmatched_rate(const SpaceTimeField& f, const SpatialGrid& grid, std::size_t t_index) {
    std::vector<double> col(grid.n_nodes());
    f.time_slice(t_index, col);
    return riemann_sum_right(col, grid.dx());
}

std::optional<double> survival_probability(const SpaceTimeField& f, std::span<const double> f0,
                                           std::size_t x_index, std::size_t t_index) {
    if (f0[x_index] <= 0.0) return std::nullopt;
    double s = f.at(x_index, t_index) / f0[x_index];
    if (s < 0.0) s = 0.0;
    if (s > 1.0) s = 1.0;
    return s;
}

namespace {

struct SideBundle {
    const SpaceTimeField* v_self;
    const SpaceTimeField* v_other;
    const SpaceTimeField* f_self;
    const SpaceTimeField* f_other;
    const SpatialGrid* self_grid;
    const SpatialGrid* other_grid;
    const std::vector<double>* f0_self;
    double lambda_other;
};

SideBundle bundle(const EquilibriumState& state, const MarketParams& params,
                  const Discretization& disc, Side side) {
    if (side == Side::A) {
        return {&state.v_a, &state.v_b, &state.f_a, &state.f_b,
                &disc.grid_a, &disc.grid_b, &disc.f_a0, params.side_b.lambda};
    }
    return {&state.v_b, &state.v_a, &state.f_b, &state.f_a,
            &disc.grid_b, &disc.grid_a, &disc.f_b0, params.side_a.lambda};
}

}  // namespace

PartnerDensity partner_density(const EquilibriumState& state, const MarketParams& params,
                               const Discretization& disc, std::size_t x_index, Side side,
                               const DiagnosticsOptions& opt) {
    const SideBundle s = bundle(state, params, disc, side);
    const std::size_t nt = disc.time.n_steps();
    const std::size_t ny = s.other_grid->n_nodes();
    const double dt = disc.time.dt();
    const double dy = s.other_grid->dx();
    const double x = s.self_grid->node(x_index);

    PartnerDensity out;
    out.own_quality = x;
    out.partner_nodes.assign(s.other_grid->nodes().begin(), s.other_grid->nodes().end());
    out.matched_mass = (*s.f0_self)[x_index] - s.f_self->at(x_index, nt);
    if (!(out.matched_mass > opt.mass_floor)) {
        out.insufficient_mass = true;
        return out;
    }

    std::vector<double> g(ny, 0.0);
    std::vector<double> v_other_col(ny), f_other_col(ny);
    for (std::size_t k = 0; k < nt; ++k) {
        s.v_other->time_slice(k, v_other_col);
        s.f_other->time_slice(k, f_other_col);
        const double a = s.v_self->at(x_index, k);
        const double f_next = s.f_self->at(x_index, k + 1);
        if (opt.region_quadrature == RegionQuadrature::Clipped) {
            const auto inv = invert_monotone_profile(v_other_col, *s.other_grid, x);
            const double b = inv.empty ? -1.0 : inv.value;
            const double inv_dy = 1.0 / dy;
            for (std::size_t l = 1; l < ny; ++l) {
                const double yl = out.partner_nodes[l];
                const double hi = std::min(b, yl);
                const double lo = std::max(a, yl - dy);
                double w = (hi - lo) * inv_dy;
                w = std::min(1.0, std::max(0.0, w));
                g[l] += f_next * f_other_col[l] * w * dt;
            }
        } else {
            for (std::size_t l = 1; l < ny; ++l) {
                const double yl = out.partner_nodes[l];
                if (yl >= a && v_other_col[l] <= x) g[l] += f_next * f_other_col[l] * dt;
            }
        }
    }
    const double scale = s.lambda_other / out.matched_mass;
    for (double& v : g) v *= scale;
    out.density = std::move(g);
    return out;
}

double expected_partner_quality(const EquilibriumState& state, const MarketParams& params,
                                const Discretization& disc, std::size_t x_index, Side side,
                                const DiagnosticsOptions& opt) {
    const PartnerDensity pd = partner_density(state, params, disc, x_index, side, opt);
    if (pd.insufficient_mass) {
        throw std::runtime_error("expected_partner_quality: insufficient matched mass");
    }
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t l = 1; l < pd.density.size(); ++l) {
        m0 += pd.density[l];
        m1 += pd.partner_nodes[l] * pd.density[l];
    }
    if (!(m0 > 0.0)) throw std::runtime_error("expected_partner_quality: zero density mass");
    return m1 / m0;  // the cell width cancels in the ratio
}

std::vector<BandSummary> band_series(const EquilibriumState& state, const Discretization& disc,
                                     Side side, BandQuantity quantity,
                                     const std::vector<std::pair<double, double>>& bands) {
    (void)quantity;  // both quantities reduce to the same mass ratio
    const SpatialGrid& grid = side == Side::A ? disc.grid_a : disc.grid_b;
    const SpaceTimeField& f = side == Side::A ? state.f_a : state.f_b;
    const std::vector<double>& f0 = side == Side::A ? disc.f_a0 : disc.f_b0;
    const std::size_t nx = grid.n_nodes();
    const std::size_t ntn = disc.time.n_nodes();

    for (std::size_t b = 0; b < bands.size(); ++b) {
        const auto& [lo, hi] = bands[b];
        if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) {
            throw std::invalid_argument("band_series: bands must satisfy 0 <= lo < hi <= 1");
        }
        if (b > 0 && bands[b - 1].second > lo) {
            throw std::invalid_argument("band_series: bands must not overlap");
        }
    }

    // discrete quantiles of the initial population on the grid
    std::vector<double> cum(nx, 0.0);
    for (std::size_t i = 1; i < nx; ++i) cum[i] = cum[i - 1] + f0[i] * grid.dx();
    const double total = cum.back();
    if (!(total > 0.0)) throw std::invalid_argument("band_series: empty initial density");
    auto grid_quantile = [&](double p) {
        const double target = p * total;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        if (it == cum.begin()) return 0.0;
        if (it == cum.end()) return grid.x_max();
        const std::size_t j = static_cast<std::size_t>(it - cum.begin());
        const double seg = cum[j] - cum[j - 1];
        const double w = seg > 0.0 ? (target - cum[j - 1]) / seg : 0.0;
        return grid.node(j - 1) + w * grid.dx();
    };

    std::vector<BandSummary> out;
    out.reserve(bands.size());
    for (std::size_t b = 0; b < bands.size(); ++b) {
        BandSummary bs;
        bs.p_lo = bands[b].first;
        bs.p_hi = bands[b].second;
        bs.x_lo = grid_quantile(bs.p_lo);
        bs.x_hi = grid_quantile(bs.p_hi);
        const bool last = b + 1 == bands.size();
        double mass0 = 0.0;
        std::vector<std::size_t> members;
        for (std::size_t i = 1; i < nx; ++i) {
            const double xi = grid.node(i);
            const bool inside = xi >= bs.x_lo && (last ? xi <= bs.x_hi : xi < bs.x_hi);
            if (inside && f0[i] > 0.0) {
                members.push_back(i);
                mass0 += f0[i];
            }
        }
        if (members.empty() || !(mass0 > 0.0)) {
            bs.empty = true;
            out.push_back(std::move(bs));
            continue;
        }
        bs.series.resize(ntn);
        for (std::size_t k = 0; k < ntn; ++k) {
            double mass_t = 0.0;
            for (std::size_t i : members) mass_t += f.at(i, k);
            bs.series[k] = mass_t / mass0;
        }
        out.push_back(std::move(bs));
    }
    return out;
}

namespace {

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

std::string header_comment(const std::string& config_hash) {
    return "# generated-by meanmatch " + std::string(kVersion) + " config-hash " + config_hash +
           "\n";
}

std::string slices_csv(const SpaceTimeField& f, const SpatialGrid& grid, const TimeGrid& time,
                       const std::vector<std::size_t>& t_indices, const std::string& hash) {
    std::string out = header_comment(hash);
    out += "x";
    for (std::size_t k : t_indices) {
        out += ",t=";
        append_g17(out, time.node(k));
    }
    out += '\n';
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        append_g17(out, grid.node(i));
        for (std::size_t k : t_indices) {
            out += ',';
            append_g17(out, f.at(i, k));
        }
        out += '\n';
    }
    return out;
}

}  // namespace

FigureExport export_figure_data(const EquilibriumState& state, const MarketParams& params,
                                const Discretization& disc, const std::string& out_dir,
                                const std::string& config_hash,
                                const DiagnosticsOptions& options) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("export_figure_data: cannot create " + out_dir);

    FigureExport result;
    const std::size_t nt = disc.time.n_steps();
    const std::vector<std::size_t> t_sel = {0, nt / 4, nt / 2, 3 * nt / 4, nt};

    auto emit = [&](const std::string& name, const std::string& contents) {
        const std::string path = (fs::path(out_dir) / name).string();
        write_text_file(path, contents);
        result.files.push_back(name);
    };

    emit("VA_slices.csv", slices_csv(state.v_a, disc.grid_a, disc.time, t_sel, config_hash));
    emit("VB_slices.csv", slices_csv(state.v_b, disc.grid_b, disc.time, t_sel, config_hash));
    emit("fA_slices.csv", slices_csv(state.f_a, disc.grid_a, disc.time, t_sel, config_hash));
    emit("fB_slices.csv", slices_csv(state.f_b, disc.grid_b, disc.time, t_sel, config_hash));

    {
        std::string out = header_comment(config_hash) + "t,F_A,F_B\n";
        for (std::size_t k = 0; k < disc.time.n_nodes(); ++k) {
            append_g17(out, disc.time.node(k));
            out += ',';
            append_g17(out, unmatched_rate(state.f_a, disc.grid_a, k));
            out += ',';
            append_g17(out, unmatched_rate(state.f_b, disc.grid_b, k));
            out += '\n';
        }
        emit("F.csv", out);
    }
    {
        std::string out = header_comment(config_hash) + "side,x,t,f,f0,ratio\n";
        auto rows = [&](char tag, const SpaceTimeField& f, const SpatialGrid& grid,
                        const std::vector<double>& f0) {
            for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
                for (std::size_t k : t_sel) {
                    out += tag;
                    out += ',';
                    append_g17(out, grid.node(i));
                    out += ',';
                    append_g17(out, disc.time.node(k));
                    out += ',';
                    append_g17(out, f.at(i, k));
                    out += ',';
                    append_g17(out, f0[i]);
                    out += ',';
                    append_g17(out, f0[i] > 0.0 ? f.at(i, k) / f0[i] : 0.0);
                    out += '\n';
                }
            }
        };
        rows('A', state.f_a, disc.grid_a, disc.f_a0);
        rows('B', state.f_b, disc.grid_b, disc.f_b0);
        emit("ratio.csv", out);
    }

    // partner densities at the default band representatives (population
    // percentile midpoints)
    const std::vector<double> reps = {0.10, 0.30, 0.50, 0.70, 0.90};
    auto g_bands = [&](Side side, const SpatialGrid& own_grid, const std::vector<double>& f0,
                       const SpatialGrid& partner_grid) {
        std::vector<double> cum(own_grid.n_nodes(), 0.0);
        for (std::size_t i = 1; i < own_grid.n_nodes(); ++i) {
            cum[i] = cum[i - 1] + f0[i] * own_grid.dx();
        }
        const double total = cum.back();
        std::vector<std::size_t> rep_idx;
        for (double p : reps) {
            const double target = p * total;
            std::size_t j = 1;
            while (j + 1 < cum.size() && cum[j] < target) ++j;
            rep_idx.push_back(j);
        }
        std::string out = header_comment(config_hash) + "y";
        std::vector<PartnerDensity> pds;
        for (std::size_t r = 0; r < reps.size(); ++r) {
            pds.push_back(partner_density(state, params, disc, rep_idx[r], side, options));
            char buf[64];
            std::snprintf(buf, sizeof(buf), ",p%02.0f_x=%.6g", reps[r] * 100.0,
                          own_grid.node(rep_idx[r]));
            out += buf;
        }
        out += '\n';
        for (std::size_t l = 0; l < partner_grid.n_nodes(); ++l) {
            append_g17(out, partner_grid.node(l));
            for (const auto& pd : pds) {
                out += ',';
                append_g17(out, pd.insufficient_mass ? std::nan("") : pd.density[l]);
            }
            out += '\n';
        }
        return out;
    };
    emit("gA_bands.csv", g_bands(Side::A, disc.grid_a, disc.f_a0, disc.grid_b));
    emit("gB_bands.csv", g_bands(Side::B, disc.grid_b, disc.f_b0, disc.grid_a));

    nlohmann::json manifest;
    manifest["generator"] = {{"tool", "meanmatch"},
                             {"version", kVersion},
                             {"config_hash", config_hash},
                             {"time_slices", t_sel},
                             {"band_representatives", reps}};
    manifest["files"] = result.files;
    const std::string mpath = (fs::path(out_dir) / "manifest.json").string();
    write_text_file(mpath, manifest.dump(2) + "\n");
    result.manifest_path = mpath;
    return result;
}

}  // namespace meanmatch::diagnostics
