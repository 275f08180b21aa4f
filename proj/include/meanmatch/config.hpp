#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "meanmatch/market.hpp"
#include "meanmatch/solver.hpp"

namespace meanmatch {

struct GridConfig {
    double x_max = 7000.0;
    std::size_t n_a = 200;
    std::size_t n_b = 200;
    std::size_t n_t = 200;
};

/// A fully validated run configuration: market primitives, grid, solver
/// options and the seed, plus the canonical serialized form and its hash.
struct RunConfig {
    MarketParams params;
    GridConfig grid;
    SolverOptions solver;
    std::uint64_t seed = 0;

    nlohmann::json canonical;  // effective settings with defaults filled
    std::string hash;          // FNV-1a 64 over the canonical byte stream
};

/// Strict parse: unknown keys and invalid values are rejected with a
/// JSON-pointer path in the exception message. Defaults: grid 200/200/200
/// on [0,7000], tol 1e-4, Jacobi sweeps, damping 1, clipped region
/// quadrature, denominator floor 1e-12, seed 0.
RunConfig parse_config(const std::string& json_text);
RunConfig parse_config_file(const std::string& path);

std::string canonical_config_string(const RunConfig& config);
std::string fnv1a_hex(const std::string& bytes);

struct RunManifest {
    nlohmann::json config_echo;
    std::string config_hash;
    std::string version;
    std::string started_utc;
    std::string finished_utc;
    double wall_seconds = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<std::string> files;

    std::string to_json() const;
};

RunManifest manifest_from_json(const std::string& text);

std::string utc_timestamp();

/// Parses a field CSV produced by field_to_csv back onto the given grids;
/// throws if the node layout does not match.
SpaceTimeField field_from_csv(const std::string& csv_text, const SpatialGrid& grid,
                              const TimeGrid& time);

}  // namespace meanmatch
