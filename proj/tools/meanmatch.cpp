#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "meanmatch/config.hpp"
#include "meanmatch/diagnostics.hpp"
#include "meanmatch/income.hpp"
#include "meanmatch/kernels.hpp"
#include "meanmatch/mc.hpp"
#include "meanmatch/solver.hpp"
#include "meanmatch/theory.hpp"
#include "meanmatch/version.hpp"

namespace fs = std::filesystem;
using namespace meanmatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCalibration = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitNumericalFault = 4;

struct LoadedRun {
    RunConfig config;
    Discretization disc;
    EquilibriumState state;
};

LoadedRun load_run(const std::string& run_dir) {
    const auto manifest = manifest_from_json(read_text_file(run_dir + "/manifest.json"));
    RunConfig config = parse_config(manifest.config_echo.dump());
    Discretization disc(config.params, config.grid.x_max, config.grid.n_a, config.grid.n_b,
                        config.grid.n_t);
    EquilibriumState state;
    state.v_a = field_from_csv(read_text_file(run_dir + "/V_A.csv"), disc.grid_a, disc.time);
    state.v_b = field_from_csv(read_text_file(run_dir + "/V_B.csv"), disc.grid_b, disc.time);
    state.f_a = field_from_csv(read_text_file(run_dir + "/f_A.csv"), disc.grid_a, disc.time);
    state.f_b = field_from_csv(read_text_file(run_dir + "/f_B.csv"), disc.grid_b, disc.time);
    state.converged = manifest.converged;
    state.iteration = manifest.iterations;
    state.residual = manifest.residual;
    return {std::move(config), std::move(disc), std::move(state)};
}

int cmd_solve(const std::string& config_path, const std::string& out_dir, long long seed_override,
              bool quiet) {
    RunConfig config = parse_config_file(config_path);
    if (seed_override >= 0) {
        // seed participates in the canonical hash; rebuild through the parser
        nlohmann::json j = config.canonical;
        j["seed"] = static_cast<std::uint64_t>(seed_override);
        config = parse_config(j.dump());
    }
    Discretization disc(config.params, config.grid.x_max, config.grid.n_a, config.grid.n_b,
                        config.grid.n_t);

    const auto t0 = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.started_utc = utc_timestamp();

    EquilibriumState state = solve_fixed_point(config.params, disc, config.solver);

    manifest.finished_utc = utc_timestamp();
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.config_echo = config.canonical;
    manifest.config_hash = config.hash;
    manifest.version = kVersion;
    manifest.converged = state.converged;
    manifest.iterations = state.iteration;
    manifest.residual = state.residual;
    manifest.files = {"V_A.csv", "V_B.csv", "f_A.csv", "f_B.csv", "residuals.csv"};

    fs::create_directories(out_dir);
    write_text_file(out_dir + "/V_A.csv", field_to_csv(state.v_a, disc.grid_a, disc.time));
    write_text_file(out_dir + "/V_B.csv", field_to_csv(state.v_b, disc.grid_b, disc.time));
    write_text_file(out_dir + "/f_A.csv", field_to_csv(state.f_a, disc.grid_a, disc.time));
    write_text_file(out_dir + "/f_B.csv", field_to_csv(state.f_b, disc.grid_b, disc.time));
    write_text_file(out_dir + "/residuals.csv", residual_trace_to_csv(state.trace));
    write_text_file(out_dir + "/manifest.json", manifest.to_json());

    if (!quiet) {
        std::printf("solve: %s after %zu iterations, E = %.3e (kernel %s)\n",
                    state.converged ? "converged" : "NOT converged", state.iteration,
                    state.residual, kernels::isa_name(kernels::active_isa()));
        std::printf("outputs in %s\n", out_dir.c_str());
    }
    return state.converged ? kExitOk : kExitNoConvergence;
}

int cmd_calibrate(const std::string& data_path, const std::string& out_dir,
                  const std::string& family, const std::string& eval, std::size_t grid_cells,
                  double grid_xmax, bool quiet) {
    const std::string data_bytes = read_text_file(data_path);
    const auto data = income::quantile_data_from_csv(data_bytes);
    income::CalibrateOptions opt;
    opt.eval = eval == "closed" ? income::QuantileEval::ClosedForm : income::QuantileEval::GridCdf;
    opt.grid_cells = grid_cells;
    opt.grid_x_max = grid_xmax;

    RunManifest manifest;
    manifest.started_utc = utc_timestamp();
    manifest.version = kVersion;
    manifest.config_echo = {{"command", "calibrate"},
                            {"data", data_path},
                            {"family", family},
                            {"eval", eval},
                            {"grid_cells", grid_cells},
                            {"grid_xmax", grid_xmax}};
    manifest.config_hash = fnv1a_hex(manifest.config_echo.dump() + data_bytes);

    fs::create_directories(out_dir);
    bool all_converged = true;
    auto run_family = [&](income::Family fam, const char* tag) {
        const auto result = income::calibrate(fam, data, opt);
        write_text_file(out_dir + "/calibration_" + tag + ".json",
                        income::calibration_result_to_json(result));
        if (!quiet) {
            if (fam == income::Family::ParetoLogNormal) {
                std::printf("%-18s alpha=%-10.5f nu=%-10.5f tau=%-10.5f rrmse=%.4f%%  %s\n",
                            "pareto_lognormal", result.pln.alpha, result.pln.nu, result.pln.tau,
                            100.0 * result.rrmse, result.converged ? "converged" : "NOT converged");
            } else {
                std::printf("%-18s beta=%-10.5f mu=%-10.4f sigma=%-10.4f rrmse=%.4f%%  %s\n",
                            "generalized_pareto", result.gp.beta, result.gp.mu, result.gp.sigma,
                            100.0 * result.rrmse, result.converged ? "converged" : "NOT converged");
            }
        }
        all_converged = all_converged && result.converged;
    };
    if (family == "pln" || family == "both") {
        run_family(income::Family::ParetoLogNormal, "pln");
        manifest.files.push_back("calibration_pln.json");
    }
    if (family == "gp" || family == "both") {
        run_family(income::Family::GeneralizedPareto, "gp");
        manifest.files.push_back("calibration_gp.json");
    }
    manifest.converged = all_converged;
    manifest.finished_utc = utc_timestamp();
    write_text_file(out_dir + "/manifest.json", manifest.to_json());
    return all_converged ? kExitOk : kExitCalibration;
}

int cmd_check(const std::string& config_path, const std::string& audit_dir, double nu,
              bool quiet) {
    const RunConfig config = parse_config_file(config_path);
    Discretization disc(config.params, config.grid.x_max, config.grid.n_a, config.grid.n_b,
                        config.grid.n_t);
    const auto constants = theory::compute_constants(config.params, disc, nu);
    const auto no_match = theory::check_no_match(config.params, disc);
    const bool nonempty = theory::check_nonempty(constants);
    const auto unique = theory::check_uniqueness(constants, config.params);

    if (!quiet) {
        std::printf("constants (nu=%g):\n", nu);
        std::printf("  k_A=%.6g K_A=%.6g Pi_A=%.6g C_A=%.6g\n", constants.k_a, constants.K_a,
                    constants.Pi_a, constants.C_a);
        std::printf("  k_B=%.6g K_B=%.6g Pi_B=%.6g C_B=%.6g\n", constants.k_b, constants.K_b,
                    constants.Pi_b, constants.C_b);
        std::printf("  M_A=%.6g M_B=%.6g M2=%.6g M3=%.6g\n", constants.M_a, constants.M_b,
                    constants.M2, constants.M3);
        std::printf("  c_A=%.6g c_B=%.6g delta_1=%.6g delta_2=%.6g\n", constants.c_a,
                    constants.c_b, constants.delta_1, constants.delta_2);
        std::printf("conditions:\n");
        std::printf("  no-match (product > 1 at all t): %s\n",
                    no_match.holds_everywhere ? "true" : "false");
        std::printf("  nonempty region (K_A*K_B <= 1): %s (K_A*K_B = %.6g)\n",
                    nonempty ? "true" : "false", constants.K_a * constants.K_b);
        std::printf("  uniqueness C.I: %s (lhs = %.6g)\n",
                    unique.cond_time_horizon ? "true" : "false", unique.lhs_i);
        std::printf("  uniqueness C.II: %s (lhs = %.6g, rhs = %.6g)\n",
                    unique.cond_structural ? "true" : "false", unique.lhs_ii, unique.rhs_ii);
    }
    if (audit_dir.empty()) return kExitOk;

    const LoadedRun run = load_run(audit_dir);
    theory::AuditOptions audit_opt;
    audit_opt.tol = run.config.solver.tol;
    const auto report = theory::audit_solution(run.state, constants, run.disc, audit_opt);
    if (!quiet) {
        std::printf("audit:\n");
        for (const auto& c : report.checks) {
            std::printf("  [%s] %-44s worst=%.6g %s\n", c.pass ? "pass" : "FAIL", c.name.c_str(),
                        c.worst_value, c.worst_location.c_str());
        }
    }
    write_text_file(audit_dir + "/audit.json", theory::audit_report_to_json(report));
    return report.all_pass ? kExitOk : kExitNoConvergence;
}

// Quantile transform of the initial law conditioned on the truncated domain.
std::function<double(double)> truncated_quantile(const DensitySpec& density,
                                                 const SpatialGrid& grid,
                                                 const std::vector<double>& f0) {
    if (density.family != DensityFamily::Tabulated) {
        const double p_max = density.cdf(grid.x_max());
        const double x_max = grid.x_max();
        // numerical inversion can overshoot the upper bound by its tolerance
        return [density, p_max, x_max](double u) {
            return std::min(density.quantile(u * p_max), x_max);
        };
    }
    // discrete inversion of the grid cumulative
    std::vector<double> cum(grid.n_nodes(), 0.0);
    for (std::size_t i = 1; i < grid.n_nodes(); ++i) cum[i] = cum[i - 1] + f0[i] * grid.dx();
    const double total = cum.back();
    const double dx = grid.dx();
    return [cum, total, dx](double u) {
        const double target = u * total;
        std::size_t j = 1;
        while (j + 1 < cum.size() && cum[j] < target) ++j;
        const double seg = cum[j] - cum[j - 1];
        const double w = seg > 0.0 ? (target - cum[j - 1]) / seg : 0.0;
        return (static_cast<double>(j - 1) + w) * dx;
    };
}

int cmd_simulate(const std::string& run_dir, std::size_t agents, std::size_t replicates,
                 long long seed_override, std::size_t bins, bool log_events,
                 const std::string& out_dir_opt, bool quiet) {
    if (agents == 0) throw std::invalid_argument("simulate: --agents must be >= 1");
    const LoadedRun run = load_run(run_dir);
    const std::string out_dir = out_dir_opt.empty() ? run_dir : out_dir_opt;
    fs::create_directories(out_dir);
    const std::uint64_t seed =
        seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : run.config.seed;

    mc::SimConfig sim;
    sim.horizon = run.config.params.horizon;
    sim.lambda_a = run.config.params.side_a.lambda;
    sim.lambda_b = run.config.params.side_b.lambda;
    sim.threshold_a = {&run.state.v_a, &run.disc.grid_a, &run.disc.time, false};
    sim.threshold_b = {&run.state.v_b, &run.disc.grid_b, &run.disc.time, false};
    sim.available_a = diagnostics::unmatched_rate(run.state.f_a, run.disc.grid_a, 0);
    sim.available_b = diagnostics::unmatched_rate(run.state.f_b, run.disc.grid_b, 0);
    sim.log_events = log_events;

    const auto q_a =
        truncated_quantile(run.config.params.side_a.density, run.disc.grid_a, run.disc.f_a0);
    const auto q_b =
        truncated_quantile(run.config.params.side_b.density, run.disc.grid_b, run.disc.f_b0);

    std::vector<mc::SimResult> results(replicates);
    parallel_for(replicates, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            auto pop_a = mc::sample_population(q_a, agents, seed ^ (0x51ed2701ULL + 2 * r));
            auto pop_b = mc::sample_population(q_b, agents, seed ^ (0x51ed2702ULL + 2 * r));
            results[r] = mc::simulate_market(sim, std::move(pop_a), std::move(pop_b),
                                             seed + 7919 * (r + 1));
        }
    });

    auto edges = [&](const DensitySpec& d, const SpatialGrid& grid,
                     const std::vector<double>& f0) {
        const auto q = truncated_quantile(d, grid, f0);
        std::vector<double> e(bins + 1);
        e[0] = 0.0;
        e[bins] = grid.x_max();
        for (std::size_t b = 1; b < bins; ++b) {
            e[b] = q(static_cast<double>(b) / static_cast<double>(bins));
        }
        return e;
    };
    const auto report = mc::compare_to_pde(results, run.state, run.disc, bins,
                                           edges(run.config.params.side_a.density,
                                                 run.disc.grid_a, run.disc.f_a0),
                                           edges(run.config.params.side_b.density,
                                                 run.disc.grid_b, run.disc.f_b0));
    RunManifest manifest;
    manifest.version = kVersion;
    manifest.started_utc = utc_timestamp();
    manifest.config_echo = {{"command", "simulate"}, {"run", run_dir},
                            {"run_config_hash", run.config.hash}, {"seed", seed},
                            {"agents", agents}, {"replicates", replicates}, {"bins", bins},
                            {"mode", "mean_field_sampling"}};
    manifest.config_hash = fnv1a_hex(manifest.config_echo.dump());
    manifest.converged = report.fraction_within_3se >= 0.9;
    manifest.files = {"mc_report.json"};
    write_text_file(out_dir + "/mc_report.json", mc::compare_report_to_json(report));
    if (log_events) {
        std::string all;
        for (std::size_t r = 0; r < results.size(); ++r) {
            all += mc::events_to_csv(results[r].events);
        }
        write_text_file(out_dir + "/events.csv", all);
        manifest.files.push_back("events.csv");
    }
    manifest.finished_utc = utc_timestamp();
    write_text_file(out_dir + "/mc_manifest.json", manifest.to_json());
    if (!quiet) {
        std::printf("simulate: N=%zu x%zu replicates, seed=%llu\n", agents, replicates,
                    static_cast<unsigned long long>(seed));
        std::printf("  max|F_mc - F_pde|: A=%.4f B=%.4f\n", report.max_abs_dev_f_a,
                    report.max_abs_dev_f_b);
        std::printf("  survival cells within 3 SE: %.1f%% (%zu/%zu)\n",
                    100.0 * report.fraction_within_3se, report.cells_within, report.cells_total);
    }
    return report.fraction_within_3se >= 0.9 ? kExitOk : kExitNoConvergence;
}

int cmd_diagnose(const std::string& run_dir, const std::string& out_dir_opt, bool quiet) {
    const LoadedRun run = load_run(run_dir);
    const std::string out_dir = out_dir_opt.empty() ? run_dir + "/figures" : out_dir_opt;
    diagnostics::DiagnosticsOptions opt;
    opt.region_quadrature = run.config.solver.region_quadrature;
    const auto exported = diagnostics::export_figure_data(run.state, run.config.params, run.disc,
                                                          out_dir, run.config.hash, opt);
    if (!quiet) {
        std::printf("diagnose: wrote %zu files to %s\n", exported.files.size(), out_dir.c_str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean field matching equilibrium solver"};
    app.set_version_flag("--version", std::string("meanmatch ") + kVersion);
    app.require_subcommand(1);
    bool quiet = false;

    std::string config_path, out_dir = "out", data_path, family = "both", eval = "grid";
    std::string run_dir, audit_dir, sim_out;
    long long seed = -1;
    std::size_t agents = 50000, replicates = 8, bins = 20, grid_cells = 200;
    double grid_xmax = 7000.0, nu = 0.5;
    bool log_events = false;

    auto* solve = app.add_subcommand("solve", "solve the coupled value/density fixed point");
    solve->add_flag("--quiet", quiet, "suppress progress output");
    solve->add_option("--config", config_path, "run configuration JSON")->required();
    solve->add_option("--out", out_dir, "output directory");
    solve->add_option("--seed", seed, "seed override");

    auto* calibrate = app.add_subcommand("calibrate", "fit the initial income distributions");
    calibrate->add_flag("--quiet", quiet, "suppress progress output");
    calibrate->add_option("--data", data_path, "quantile CSV (prob,value rows)")->required();
    calibrate->add_option("--out", out_dir, "output directory");
    calibrate->add_option("--family", family, "pln, gp or both")
        ->check(CLI::IsMember({"pln", "gp", "both"}));
    calibrate->add_option("--eval", eval, "quantile evaluation: grid or closed")
        ->check(CLI::IsMember({"grid", "closed"}));
    calibrate->add_option("--grid-cells", grid_cells, "grid cells for grid evaluation");
    calibrate->add_option("--grid-xmax", grid_xmax, "grid upper bound for grid evaluation");

    auto* check = app.add_subcommand("check", "theory constants, conditions and solution audit");
    check->add_flag("--quiet", quiet, "suppress progress output");
    check->add_option("--config", config_path, "run configuration JSON")->required();
    check->add_option("--audit", audit_dir, "solved run directory to audit");
    check->add_option("--nu", nu, "tail exponent for the density envelope");

    auto* simulate = app.add_subcommand("simulate", "agent-based cross-validation of a run");
    simulate->add_flag("--quiet", quiet, "suppress progress output");
    simulate->add_option("--run", run_dir, "solved run directory")->required();
    simulate->add_option("--agents", agents, "agents per side")->check(CLI::PositiveNumber);
    simulate->add_option("--replicates", replicates, "independent replicates")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "seed override");
    simulate->add_option("--bins", bins, "quality bins for survival comparison")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--out", sim_out, "output directory (default: run dir)");
    simulate->add_flag("--log-events", log_events, "write the per-meeting event log");

    auto* diagnose = app.add_subcommand("diagnose", "export figure data for a solved run");
    diagnose->add_flag("--quiet", quiet, "suppress progress output");
    diagnose->add_option("--run", run_dir, "solved run directory")->required();
    diagnose->add_option("--out", sim_out, "output directory (default: RUN/figures)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (solve->parsed()) return cmd_solve(config_path, out_dir, seed, quiet);
        if (calibrate->parsed()) {
            return cmd_calibrate(data_path, out_dir, family, eval, grid_cells, grid_xmax, quiet);
        }
        if (check->parsed()) return cmd_check(config_path, audit_dir, nu, quiet);
        if (simulate->parsed()) {
            return cmd_simulate(run_dir, agents, replicates, seed, bins, log_events, sim_out,
                                quiet);
        }
        if (diagnose->parsed()) return cmd_diagnose(run_dir, sim_out, quiet);
    } catch (const NumericalFault& e) {
        std::fprintf(stderr, "numerical fault: %s\n", e.what());
        return kExitNumericalFault;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
