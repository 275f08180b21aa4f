#include "meanmatch/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>
#include <stdexcept>

#include "meanmatch/grid.hpp"

namespace meanmatch {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
    throw std::invalid_argument("config error at " + pointer + ": " + what);
}

void reject_unknown(const json& obj, const std::string& pointer,
                    const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(pointer, "expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) fail(pointer + "/" + key, "unknown key");
    }
}

double require_number(const json& obj, const std::string& pointer, const std::string& key,
                      bool required, double fallback) {
    if (!obj.contains(key)) {
        if (required) fail(pointer + "/" + key, "missing required key");
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) fail(pointer + "/" + key, "expected a number");
    return v.get<double>();
}

std::size_t require_count(const json& obj, const std::string& pointer, const std::string& key,
                          std::size_t fallback, std::size_t min_value) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
        fail(pointer + "/" + key, "expected a nonnegative integer");
    }
    const long long n = v.get<long long>();
    if (n < static_cast<long long>(min_value)) {
        fail(pointer + "/" + key, "value below minimum " + std::to_string(min_value));
    }
    return static_cast<std::size_t>(n);
}

DensitySpec parse_density(const json& j, const std::string& pointer) {
    reject_unknown(j, pointer, {"family", "params", "normalize"});
    if (!j.contains("family") || !j.at("family").is_string()) {
        fail(pointer + "/family", "missing or non-string family");
    }
    const std::string family = j.at("family").get<std::string>();
    DensitySpec spec;
    if (j.contains("normalize")) {
        if (!j.at("normalize").is_boolean()) fail(pointer + "/normalize", "expected a boolean");
        spec.normalize = j.at("normalize").get<bool>();
    }
    if (!j.contains("params")) fail(pointer + "/params", "missing required key");
    const auto& pj = j.at("params");
    const std::string pp = pointer + "/params";
    if (family == "pareto_lognormal") {
        spec.family = DensityFamily::ParetoLogNormal;
        reject_unknown(pj, pp, {"alpha", "nu", "tau"});
        spec.pln.alpha = require_number(pj, pp, "alpha", true, 0.0);
        spec.pln.nu = require_number(pj, pp, "nu", true, 0.0);
        spec.pln.tau = require_number(pj, pp, "tau", true, 0.0);
        if (!spec.pln.valid()) fail(pp, "pareto_lognormal requires alpha > 0 and tau > 0");
    } else if (family == "generalized_pareto") {
        spec.family = DensityFamily::GeneralizedPareto;
        reject_unknown(pj, pp, {"beta", "mu", "sigma"});
        spec.gp.beta = require_number(pj, pp, "beta", true, 0.0);
        spec.gp.mu = require_number(pj, pp, "mu", true, 0.0);
        spec.gp.sigma = require_number(pj, pp, "sigma", true, 0.0);
        if (!spec.gp.valid()) {
            fail(pp, "generalized_pareto requires beta > 0, sigma > 0, mu >= 0");
        }
    } else if (family == "tabulated") {
        spec.family = DensityFamily::Tabulated;
        reject_unknown(pj, pp, {"values"});
        if (!pj.contains("values") || !pj.at("values").is_array()) {
            fail(pp + "/values", "tabulated density requires a values array");
        }
        for (const auto& v : pj.at("values")) {
            if (!v.is_number()) fail(pp + "/values", "expected numbers");
            spec.tabulated.push_back(v.get<double>());
            if (spec.tabulated.back() < 0.0) fail(pp + "/values", "density must be >= 0");
        }
    } else {
        fail(pointer + "/family", "unknown family '" + family + "'");
    }
    return spec;
}

MarketSideParams parse_side(const json& j, const std::string& pointer) {
    reject_unknown(j, pointer, {"lambda", "r_slope", "h_slope", "density"});
    MarketSideParams side;
    side.lambda = require_number(j, pointer, "lambda", true, 0.0);
    if (side.lambda < 0.0) fail(pointer + "/lambda", "must be nonnegative");
    const double r_slope = require_number(j, pointer, "r_slope", true, 0.0);
    const double h_slope = require_number(j, pointer, "h_slope", true, 0.0);
    if (r_slope < 0.0) fail(pointer + "/r_slope", "must be nonnegative");
    if (h_slope < 0.0) fail(pointer + "/h_slope", "must be nonnegative");
    side.running = Utility::linear(r_slope);
    side.terminal = Utility::linear(h_slope);
    if (!j.contains("density")) fail(pointer + "/density", "missing required key");
    side.density = parse_density(j.at("density"), pointer + "/density");
    return side;
}

json density_to_json(const DensitySpec& d) {
    json j;
    switch (d.family) {
        case DensityFamily::ParetoLogNormal:
            j["family"] = "pareto_lognormal";
            j["params"] = {{"alpha", d.pln.alpha}, {"nu", d.pln.nu}, {"tau", d.pln.tau}};
            break;
        case DensityFamily::GeneralizedPareto:
            j["family"] = "generalized_pareto";
            j["params"] = {{"beta", d.gp.beta}, {"mu", d.gp.mu}, {"sigma", d.gp.sigma}};
            break;
        case DensityFamily::Tabulated:
            j["family"] = "tabulated";
            j["params"] = {{"values", d.tabulated}};
            break;
    }
    j["normalize"] = d.normalize;
    return j;
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config error: invalid JSON: ") + e.what());
    }
    reject_unknown(j, "", {"rho", "T", "sideA", "sideB", "grid", "solver", "seed"});

    RunConfig cfg;
    cfg.params.rho = require_number(j, "", "rho", true, 0.0);
    if (!(cfg.params.rho > 0.0)) fail("/rho", "must be positive");
    cfg.params.horizon = require_number(j, "", "T", true, 0.0);
    if (!(cfg.params.horizon > 0.0)) fail("/T", "must be positive");

    if (!j.contains("sideA")) fail("/sideA", "missing required key");
    if (!j.contains("sideB")) fail("/sideB", "missing required key");
    cfg.params.side_a = parse_side(j.at("sideA"), "/sideA");
    cfg.params.side_b = parse_side(j.at("sideB"), "/sideB");

    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        reject_unknown(g, "/grid", {"xmax", "nA", "nB", "nT"});
        cfg.grid.x_max = require_number(g, "/grid", "xmax", false, cfg.grid.x_max);
        if (!(cfg.grid.x_max > 0.0)) fail("/grid/xmax", "must be positive");
        cfg.grid.n_a = require_count(g, "/grid", "nA", cfg.grid.n_a, 2);
        cfg.grid.n_b = require_count(g, "/grid", "nB", cfg.grid.n_b, 2);
        cfg.grid.n_t = require_count(g, "/grid", "nT", cfg.grid.n_t, 1);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        reject_unknown(s, "/solver",
                       {"tol", "max_iters", "sweep_mode", "damping", "denominator_floor",
                        "region_quadrature"});
        cfg.solver.tol = require_number(s, "/solver", "tol", false, cfg.solver.tol);
        cfg.solver.max_iters =
            require_count(s, "/solver", "max_iters", cfg.solver.max_iters, 1);
        cfg.solver.damping = require_number(s, "/solver", "damping", false, cfg.solver.damping);
        cfg.solver.denominator_floor = require_number(s, "/solver", "denominator_floor", false,
                                                      cfg.solver.denominator_floor);
        if (s.contains("sweep_mode")) {
            const std::string mode = s.at("sweep_mode").is_string()
                                         ? s.at("sweep_mode").get<std::string>()
                                         : std::string();
            if (mode == "jacobi") {
                cfg.solver.sweep_mode = SweepMode::Jacobi;
            } else if (mode == "gauss_seidel_time") {
                cfg.solver.sweep_mode = SweepMode::GaussSeidelInTime;
            } else {
                fail("/solver/sweep_mode", "expected 'jacobi' or 'gauss_seidel_time'");
            }
        }
        if (s.contains("region_quadrature")) {
            const std::string q = s.at("region_quadrature").is_string()
                                      ? s.at("region_quadrature").get<std::string>()
                                      : std::string();
            if (q == "clipped") {
                cfg.solver.region_quadrature = RegionQuadrature::Clipped;
            } else if (q == "nodal") {
                cfg.solver.region_quadrature = RegionQuadrature::Nodal;
            } else {
                fail("/solver/region_quadrature", "expected 'clipped' or 'nodal'");
            }
        }
        try {
            cfg.solver.validate();
        } catch (const std::exception& e) {
            fail("/solver", e.what());
        }
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
            fail("/seed", "expected a nonnegative integer");
        }
        const long long seed = j.at("seed").get<long long>();
        if (seed < 0) fail("/seed", "expected a nonnegative integer");
        cfg.seed = static_cast<std::uint64_t>(seed);
    }
    try {
        cfg.params.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config error: ") + e.what());
    }

    // canonical echo with every default filled in
    json canon;
    canon["rho"] = cfg.params.rho;
    canon["T"] = cfg.params.horizon;
    auto side_json = [](const MarketSideParams& s) {
        json out;
        out["lambda"] = s.lambda;
        out["r_slope"] = s.running.slope();
        out["h_slope"] = s.terminal.slope();
        out["density"] = density_to_json(s.density);
        return out;
    };
    canon["sideA"] = side_json(cfg.params.side_a);
    canon["sideB"] = side_json(cfg.params.side_b);
    canon["grid"] = {{"xmax", cfg.grid.x_max},
                     {"nA", cfg.grid.n_a},
                     {"nB", cfg.grid.n_b},
                     {"nT", cfg.grid.n_t}};
    canon["solver"] = {
        {"tol", cfg.solver.tol},
        {"max_iters", cfg.solver.max_iters},
        {"sweep_mode", cfg.solver.sweep_mode == SweepMode::Jacobi ? "jacobi" : "gauss_seidel_time"},
        {"damping", cfg.solver.damping},
        {"denominator_floor", cfg.solver.denominator_floor},
        {"region_quadrature",
         cfg.solver.region_quadrature == RegionQuadrature::Clipped ? "clipped" : "nodal"}};
    canon["seed"] = cfg.seed;
    cfg.canonical = canon;
    cfg.hash = fnv1a_hex(canon.dump());
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    return parse_config(read_text_file(path));
}

std::string canonical_config_string(const RunConfig& config) { return config.canonical.dump(); }

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config"] = config_echo;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["started_utc"] = started_utc;
    j["finished_utc"] = finished_utc;
    j["wall_seconds"] = wall_seconds;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["residual"] = residual;
    j["files"] = files;
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.config_echo = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.started_utc = j.value("started_utc", "");
    m.finished_utc = j.value("finished_utc", "");
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.converged = j.at("converged").get<bool>();
    m.iterations = j.at("iterations").get<std::size_t>();
    m.residual = j.at("residual").get<double>();
    if (j.contains("files")) m.files = j.at("files").get<std::vector<std::string>>();
    return m;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

SpaceTimeField field_from_csv(const std::string& csv_text, const SpatialGrid& grid,
                              const TimeGrid& time) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("field CSV: empty");
    SpaceTimeField field(grid, time);
    std::size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (i >= grid.n_nodes()) throw std::invalid_argument("field CSV: too many rows");
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) throw std::invalid_argument("field CSV: bad row");
        const double x = std::stod(cell);
        if (std::abs(x - grid.node(i)) > 1e-9 * std::max(1.0, grid.x_max())) {
            throw std::invalid_argument("field CSV: node mismatch at row " + std::to_string(i));
        }
        std::size_t k = 0;
        while (std::getline(row, cell, ',')) {
            if (k >= time.n_nodes()) throw std::invalid_argument("field CSV: too many columns");
            field.at(i, k) = std::stod(cell);
            ++k;
        }
        if (k != time.n_nodes()) throw std::invalid_argument("field CSV: column count mismatch");
        ++i;
    }
    if (i != grid.n_nodes()) throw std::invalid_argument("field CSV: row count mismatch");
    return field;
}

}  // namespace meanmatch
