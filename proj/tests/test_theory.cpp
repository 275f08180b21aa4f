#include <cmath>

#include "doctest.h"
#include "meanmatch/theory.hpp"

using namespace meanmatch;
using namespace meanmatch::theory;

namespace {

MarketParams reference_params() {
    MarketParams p;
    p.rho = 0.04;
    p.horizon = 1.0;
    p.side_a.lambda = 20.0;
    p.side_b.lambda = 26.0;
    p.side_a.running = Utility::linear(0.013);
    p.side_a.terminal = Utility::linear(0.6);
    p.side_b.running = Utility::linear(0.05);
    p.side_b.terminal = Utility::linear(1.1);
    p.side_a.density.family = DensityFamily::ParetoLogNormal;
    p.side_a.density.pln = {1.8644, 6.5492, 0.44209};
    p.side_b.density.family = DensityFamily::GeneralizedPareto;
    p.side_b.density.gp = {8.6348, 459.4388, 835.2216};
    return p;
}

}  // namespace

TEST_CASE("envelope constant: tight envelope, zero density, dense-scan stability") {
    const double nu = 0.5;
    const SpatialGrid g(50.0, 100);
    std::vector<double> f0(g.n_nodes());
    for (std::size_t i = 0; i < f0.size(); ++i) {
        f0[i] = 1.0 / (1.0 + std::pow(g.node(i), 2.0 + nu));
    }
    CHECK(envelope_constant(f0, g.nodes(), nu) == doctest::Approx(1.0 + 1e-9).epsilon(1e-12));

    std::vector<double> zeros(g.n_nodes(), 0.0);
    CHECK(envelope_constant(zeros, g.nodes(), nu) == 1.0 + 1e-9);

    // calibrated GP density: tenfold finer scan moves the certified constant
    // by less than one percent
    const auto p = reference_params();
    auto scan = [&](std::size_t cells) {
        const SpatialGrid grid(7000.0, cells);
        const auto vals = p.side_b.density.evaluate(grid);
        return envelope_constant(vals, grid.nodes(), nu);
    };
    const double coarse = scan(200);
    const double fine = scan(2000);
    CHECK(coarse > 1.0);
    CHECK(std::abs(fine - coarse) / coarse < 0.01);
}

TEST_CASE("constants match direct arithmetic at the reference parameters") {
    const auto p = reference_params();
    Discretization disc(p, 7000.0, 200, 200, 10);
    const auto c = compute_constants(p, disc, 0.5);
    CHECK(c.k_a == doctest::Approx(0.013 / 26.04).epsilon(1e-12));
    CHECK(c.k_a == doctest::Approx(4.9923e-4).epsilon(1e-4));
    CHECK(c.k_b == doctest::Approx(0.05 / 20.04).epsilon(1e-12));
    CHECK(c.k_b == doctest::Approx(2.4950e-3).epsilon(1e-4));
    CHECK(c.K_a == doctest::Approx(std::max(26.0 * c.C_b / (0.04 * c.k_b) + 0.013 / 0.04, 0.6)));
    CHECK(c.Pi_a ==
          doctest::Approx(std::max(26.0 / 0.04 * (std::pow(2.0, 1.5) * c.C_b / 0.5 + 0.013), 0.6)));
    CHECK(c.M_a == doctest::Approx(std::max(2.0, (1 + c.C_a) * (1 + c.k_a) / (c.k_a * c.k_a))));
    CHECK(c.M2 == doctest::Approx(std::max(20.0 + 26.0 * std::pow(2.0, 1.5) * c.C_a / 0.5,
                                           26.0 + 20.0 * std::pow(2.0, 1.5) * c.C_b / 0.5)));
    CHECK(c.c_a == doctest::Approx(26.0 * std::pow(2.0, 1.5) * c.C_a / 0.5));
    CHECK(c.delta_1 > 0.0);
    CHECK(c.delta_1 <= 1.0 / (4.0 * 26.0));
    CHECK(c.delta_2 > 0.0);
    CHECK(c.delta_2 <= 1.0);

    // lambda -> 0 limit: k_I -> min(gamma/rho, l)
    auto p0 = p;
    p0.side_a.lambda = 1e-12;
    p0.side_b.lambda = 1e-12;
    Discretization disc0(p0, 7000.0, 200, 200, 10);
    const auto c0 = compute_constants(p0, disc0, 0.5);
    CHECK(c0.k_a == doctest::Approx(std::min(0.013 / 0.04, 0.6)).epsilon(1e-9));
}

TEST_CASE("no-match condition evaluation") {
    // h = 2 quality and r = 2 rho quality: both brackets are identically 2
    MarketParams p = reference_params();
    p.side_a.running = Utility::linear(0.08);
    p.side_a.terminal = Utility::linear(2.0);
    p.side_b.running = Utility::linear(0.08);
    p.side_b.terminal = Utility::linear(2.0);
    Discretization disc(p, 7000.0, 40, 40, 16);
    const auto check = check_no_match(p, disc);
    CHECK(check.holds_everywhere);
    for (double prod : check.product) CHECK(prod == doctest::Approx(4.0).epsilon(1e-12));

    // the reference utilities do not satisfy it: at t = T the product is 0.66
    const auto ref = reference_params();
    Discretization pd(ref, 7000.0, 40, 40, 16);
    const auto pc = check_no_match(ref, pd);
    CHECK_FALSE(pc.holds_everywhere);
    CHECK(pc.product.back() == doctest::Approx(0.6 * 1.1).epsilon(1e-12));

    // zero lower bounds: product 0
    auto z = reference_params();
    z.side_a.running = Utility::linear(0.0);
    z.side_a.terminal = Utility::linear(0.0);
    Discretization zd(z, 7000.0, 40, 40, 8);
    CHECK_FALSE(check_no_match(z, zd).holds_everywhere);
}

TEST_CASE("nonempty-region and uniqueness conditions") {
    TheoryConstants c;
    c.K_a = 1.0;
    c.K_b = 1.0;
    CHECK(check_nonempty(c));
    c.K_a = 0.5;
    c.K_b = 1.9;
    CHECK(check_nonempty(c));
    c.K_a = 1.2;
    c.K_b = 0.9;
    CHECK_FALSE(check_nonempty(c));

    const auto p = reference_params();
    Discretization disc(p, 7000.0, 200, 200, 10);
    const auto pc = compute_constants(p, disc, 0.5);
    CHECK_FALSE(check_nonempty(pc));  // K_A carries lambda C / (rho k), far above 1

    // small-intensity limit drives condition (C.I) toward zero
    auto tiny = p;
    tiny.side_a.lambda = 1e-9;
    tiny.side_b.lambda = 1e-9;
    Discretization td(tiny, 7000.0, 200, 200, 10);
    const auto tc = compute_constants(tiny, td, 0.5);
    const auto tu = check_uniqueness(tc, tiny);
    CHECK(tu.cond_time_horizon);
    CHECK(tu.lhs_i < 1.0);

    // rho below M2 makes the structural right side negative
    const auto pu = check_uniqueness(pc, p);
    CHECK(pu.rhs_ii < 0.0);
    CHECK_FALSE(pu.cond_structural);
    CHECK_FALSE(pu.cond_time_horizon);  // the reference regime sits outside both
}

TEST_CASE("audit passes on a no-match solution and catches corruption") {
    MarketParams p = reference_params();
    p.side_a.running = Utility::linear(0.08);
    p.side_a.terminal = Utility::linear(2.0);
    p.side_b.running = Utility::linear(0.08);
    p.side_b.terminal = Utility::linear(2.0);
    p.side_a.density.normalize = true;
    p.side_b.density.normalize = true;
    Discretization disc(p, 7000.0, 48, 48, 24);
    SolverOptions opt;
    const auto state = solve_fixed_point(p, disc, opt);
    REQUIRE(state.converged);
    const auto constants = compute_constants(p, disc, 0.5);
    const auto report = audit_solution(state, constants, disc);
    CHECK(report.all_pass);

    // the decoupled value slopes follow the explicit discounted form within O(dt)
    const double t0 = 0.0;
    const double expected_slope =
        2.0 * std::exp(-p.rho * (p.horizon - t0)) +
        0.08 * (1.0 - std::exp(-p.rho * (p.horizon - t0))) / p.rho;
    const double slope =
        (state.v_a.at(10, 0) - state.v_a.at(9, 0)) / disc.grid_a.dx();
    CHECK(slope == doctest::Approx(expected_slope).epsilon(1e-3));

    auto corrupted = state;
    corrupted.f_a.at(5, 3) = -1e-6;
    const auto bad = audit_solution(corrupted, constants, disc);
    CHECK_FALSE(bad.all_pass);
    bool found = false;
    for (const auto& chk : bad.checks) {
        if (!chk.pass && chk.name.find("f_A") != std::string::npos) {
            found = true;
            const bool at_cell = chk.worst_location == "(i=5,k=3)" ||
                                 chk.worst_location == "(i=5,k=4)";
            CHECK(at_cell);
        }
    }
    CHECK(found);
}
