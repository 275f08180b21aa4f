#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "meanmatch/grid.hpp"

using namespace meanmatch;

TEST_CASE("build_grid produces uniform nodes pinned at both ends") {
    const auto g = build_grid(1.0, 2);
    REQUIRE(g.n_nodes() == 3);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.node(2) == 1.0);
    CHECK(g.dx() == doctest::Approx(0.5));

    const auto wide = build_grid(7000.0, 200);
    REQUIRE(wide.n_nodes() == 201);
    CHECK(wide.dx() == doctest::Approx(35.0));
    CHECK(wide.node(200) == 7000.0);
    for (std::size_t i = 1; i < wide.n_nodes(); ++i) {
        CHECK(std::abs(wide.node(i) - wide.node(i - 1) - wide.dx()) <= 1e-12 * 7000.0);
    }

    const auto five = build_grid(10.0, 5);
    for (std::size_t i = 0; i <= 5; ++i) CHECK(five.node(i) == doctest::Approx(2.0 * i));

    CHECK_THROWS_AS(build_grid(-1.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(1.0, 1), std::invalid_argument);
}

TEST_CASE("time grid hits the horizon exactly") {
    const TimeGrid t(1.0, 200);
    CHECK(t.node(200) == 1.0);
    CHECK(t.dt() == doctest::Approx(0.005));
    CHECK(t.left_index(0.0) == 0);
    CHECK(t.left_index(0.0051) == 1);
    CHECK(t.left_index(1.0) == 200);
}

TEST_CASE("interpolation is exact at nodes and linear between them") {
    const SpatialGrid g(10.0, 10);
    const TimeGrid t(1.0, 4);
    SpaceTimeField f(g, t);
    for (std::size_t i = 0; i < g.n_nodes(); ++i) {
        for (std::size_t k = 0; k < t.n_nodes(); ++k) f.at(i, k) = g.node(i);
    }
    for (std::size_t i = 0; i < g.n_nodes(); ++i) {
        CHECK(interpolate_time_slice(f, g, g.node(i), 2) == f.at(i, 2));
    }
    // slope-2 profile: midpoint of the first cell
    for (std::size_t i = 0; i < g.n_nodes(); ++i) f.at(i, 1) = 2.0 * g.node(i);
    CHECK(interpolate_time_slice(f, g, 0.5, 1) == doctest::Approx(1.0));

    // linear terminal utility h(x) = 0.6 x evaluated off-grid
    const SpatialGrid gp(7000.0, 200);
    SpaceTimeField hfield(gp, t);
    for (std::size_t i = 0; i < gp.n_nodes(); ++i) {
        for (std::size_t k = 0; k < t.n_nodes(); ++k) hfield.at(i, k) = 0.6 * gp.node(i);
    }
    CHECK(interpolate_time_slice(hfield, gp, 100.0, 0) == doctest::Approx(60.0).epsilon(1e-12));

    CHECK_THROWS_AS(interpolate_time_slice(f, g, -0.1, 0), std::domain_error);
    CHECK_THROWS_AS(interpolate_time_slice(f, g, 10.5, 0), std::domain_error);
}

TEST_CASE("right-endpoint sum excludes node zero and is exact for constants") {
    const SpatialGrid g(1.0, 10);
    std::vector<double> ones(11, 1.0);
    CHECK(riemann_sum_right(ones, g.dx()) == doctest::Approx(1.0).epsilon(1e-14));

    const SpatialGrid q(1.0, 4);
    std::vector<double> vals(5);
    for (std::size_t i = 0; i < 5; ++i) vals[i] = q.node(i);
    CHECK(riemann_sum_right(vals, q.dx()) == doctest::Approx(0.625));

    std::vector<double> zeros(7, 0.0);
    CHECK(riemann_sum_right(zeros, 0.1) == 0.0);
}

TEST_CASE("right-endpoint sum: monotone in inputs, nonnegative, O(dx) accurate") {
    // monotonicity property over random pointwise-ordered pairs
    std::uint64_t s = 42;
    auto rnd = [&]() {
        s = s * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(s >> 11) * 0x1.0p-53;
    };
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> lo(33), hi(33);
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = rnd();
            hi[i] = lo[i] + rnd();
        }
        const double slo = riemann_sum_right(lo, 0.03125);
        const double shi = riemann_sum_right(hi, 0.03125);
        CHECK(slo >= 0.0);
        CHECK(shi >= slo);
    }

    // convergence rate on f(x) = x^2 over [0,1]: halving dx halves the error
    auto sum_for = [](std::size_t n) {
        const SpatialGrid g(1.0, n);
        std::vector<double> v(n + 1);
        for (std::size_t i = 0; i <= n; ++i) v[i] = g.node(i) * g.node(i);
        return riemann_sum_right(v, g.dx());
    };
    const double e1 = std::abs(sum_for(64) - 1.0 / 3.0);
    const double e2 = std::abs(sum_for(128) - 1.0 / 3.0);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("monotone profile inversion with flags") {
    const SpatialGrid g(10.0, 10);
    std::vector<double> profile(11);
    for (std::size_t i = 0; i < 11; ++i) profile[i] = 3.0 * g.node(i);  // V(y) = 3y

    auto inv = invert_monotone_profile(profile, g, 15.0);
    CHECK_FALSE(inv.empty);
    CHECK(inv.value == doctest::Approx(5.0).epsilon(1e-12));

    // below the profile at node 0 => empty
    std::vector<double> shifted(profile);
    for (double& v : shifted) v += 1.0;
    CHECK(invert_monotone_profile(shifted, g, 0.5).empty);

    // above the top => clamped to x_max
    auto top = invert_monotone_profile(profile, g, 100.0);
    CHECK(top.clamped);
    CHECK(top.value == 10.0);

    std::vector<double> bad = {0.0, 1.0, 0.5, 2.0};
    const SpatialGrid g3(3.0, 3);
    CHECK_THROWS_AS(invert_monotone_profile(bad, g3, 0.7), std::invalid_argument);
}

TEST_CASE("field CSV round trip is lossless at 17 significant digits") {
    const SpatialGrid g(7.0, 3);
    const TimeGrid t(1.0, 2);
    SpaceTimeField f(g, t);
    f.at(0, 0) = 1.0 / 3.0;
    f.at(1, 1) = 0.1;
    f.at(2, 2) = 12345.678901234567;
    f.at(3, 0) = -2e-15;
    const std::string csv = field_to_csv(f, g, t);
    CHECK(csv.substr(0, 2) == "x,");
    CHECK(csv == field_to_csv(f, g, t));  // deterministic bytes
}

TEST_CASE("trapezoid sum (diagnostics-side quadrature)") {
    const SpatialGrid g(1.0, 10);
    std::vector<double> v(11);
    for (std::size_t i = 0; i <= 10; ++i) v[i] = g.node(i);
    CHECK(trapezoid_sum(v, g.dx()) == doctest::Approx(0.5).epsilon(1e-14));
    std::vector<double> ones(11, 1.0);
    CHECK(trapezoid_sum(ones, g.dx()) == doctest::Approx(1.0).epsilon(1e-14));
}
