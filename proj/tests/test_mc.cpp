#include <cmath>

#include "doctest.h"
#include "meanmatch/mc.hpp"
#include "support/quadrature.hpp"

using namespace meanmatch;
using namespace meanmatch::mc;

namespace {

struct Fixture {
    MarketParams params;
    Discretization disc;
    EquilibriumState state;

    explicit Fixture(double v_a_level, double v_b_level)
        : params(make_params()), disc(params, 1.0, 20, 20, 10) {
        state.v_a = SpaceTimeField(disc.grid_a, disc.time, v_a_level);
        state.v_b = SpaceTimeField(disc.grid_b, disc.time, v_b_level);
        state.f_a = SpaceTimeField(disc.grid_a, disc.time, 1.0);
        state.f_b = SpaceTimeField(disc.grid_b, disc.time, 1.0);
    }

    static MarketParams make_params() {
        MarketParams p;
        p.rho = 0.04;
        p.horizon = 1.0;
        p.side_a.lambda = 1.0;
        p.side_b.lambda = 1.0;
        p.side_a.running = Utility::linear(0.0);
        p.side_a.terminal = Utility::linear(1.0);
        p.side_b.running = Utility::linear(0.0);
        p.side_b.terminal = Utility::linear(1.0);
        DensitySpec d;
        d.family = DensityFamily::Tabulated;
        d.normalize = true;
        d.tabulated.assign(21, 1.0);
        p.side_a.density = d;
        p.side_b.density = d;
        return p;
    }

    SimConfig config(double lambda_a, double lambda_b) const {
        SimConfig c;
        c.horizon = 1.0;
        c.lambda_a = lambda_a;
        c.lambda_b = lambda_b;
        c.threshold_a = {&state.v_a, &disc.grid_a, &disc.time, false};
        c.threshold_b = {&state.v_b, &disc.grid_b, &disc.time, false};
        return c;
    }
};

AgentPopulation uniform_pop(std::size_t n, std::uint64_t seed) {
    return sample_population([](double u) { return u; }, n, seed);
}

}  // namespace

TEST_CASE("rng streams are deterministic and label-separated") {
    auto a1 = Rng::stream(7, "population");
    auto a2 = Rng::stream(7, "population");
    auto b = Rng::stream(7, "market");
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a1.next_u64();
        all_equal = all_equal && (x == a2.next_u64());
        any_diff = any_diff || (x != b.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);

    auto u = Rng::stream(1, "u");
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform01();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
    auto idx = Rng::stream(1, "idx");
    for (int i = 0; i < 1000; ++i) CHECK(idx.index(17) < 17);
}

TEST_CASE("population sampling: determinism and moment agreement with quadrature") {
    income::GeneralizedParetoParams gp{8.6348, 459.4388, 835.2216};
    auto quantile = [&](double u) { return income::gpareto_quantile(gp, u); };
    const std::size_t n = 100000;
    const auto pop = sample_population(quantile, n, 2024);
    const auto pop2 = sample_population(quantile, n, 2024);
    CHECK(pop.quality == pop2.quality);
    for (std::size_t i = 0; i < n; ++i) CHECK(pop.quality[i] >= gp.mu);
    CHECK(pop.matched[0] == 0);
    CHECK(std::isinf(pop.match_time[0]));

    // empirical mean against the quadrature of y * pdf
    auto integrand = [&](double y) { return y * income::gpareto_pdf(gp, y); };
    double mean_oracle = 0.0;
    const double cuts[] = {gp.mu, 1e3, 1e4, 1e5, 1e6, 1e8};
    for (std::size_t s = 0; s + 1 < std::size(cuts); ++s) {
        mean_oracle += testsupport::integrate(integrand, cuts[s], cuts[s + 1], 1e-10);
    }
    double mean = 0.0, sq = 0.0;
    for (double q : pop.quality) {
        mean += q;
        sq += q * q;
    }
    mean /= static_cast<double>(n);
    const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    const double se = sd / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - mean_oracle) <= 3.0 * se);

    // sample median near the closed-form median
    auto sorted = pop.quality;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted[n / 2] == doctest::Approx(income::gpareto_quantile(gp, 0.5)).epsilon(0.01));
}

TEST_CASE("market simulation: no intensity means no events") {
    Fixture fx(0.0, 0.0);
    auto cfg = fx.config(0.0, 0.0);
    const auto res = simulate_market(cfg, uniform_pop(100, 1), uniform_pop(100, 2), 3);
    CHECK(res.counters_a.rings == 0);
    CHECK(res.counters_b.rings == 0);
    for (auto m : res.pop_a.matched) CHECK(m == 0);
}

TEST_CASE("market simulation: prohibitive thresholds never match") {
    Fixture fx(100.0, 100.0);  // far above every quality in [0,1]
    auto cfg = fx.config(5.0, 5.0);
    const auto res = simulate_market(cfg, uniform_pop(500, 1), uniform_pop(500, 2), 3);
    CHECK(res.counters_a.rings > 0);
    CHECK(res.counters_a.matches == 0);
    CHECK(res.counters_b.matches == 0);
    for (auto m : res.pop_a.matched) CHECK(m == 0);
}

TEST_CASE("frozen partner side: survival matches the exponential closed form") {
    // zero thresholds, B agents never initiate (lambda_A = 0), every draw
    // accepts: each A agent faces a constant hazard lambda_B
    Fixture fx(0.0, 0.0);
    const double c = 3.0;
    auto cfg = fx.config(0.0, c);
    const std::size_t n = 20000;
    const auto res = simulate_market(cfg, uniform_pop(n, 11), uniform_pop(n, 12), 13);
    double unmatched = 0.0;
    for (auto m : res.pop_a.matched) unmatched += m == 0 ? 1.0 : 0.0;
    const double p_hat = unmatched / static_cast<double>(n);
    const double p_true = std::exp(-c * 1.0);
    const double se = std::sqrt(p_true * (1.0 - p_true) / static_cast<double>(n));
    CHECK(std::abs(p_hat - p_true) <= 3.0 * se);
    // B agents never flip in mean-field sampling
    for (auto m : res.pop_b.matched) CHECK(m == 0);
    // effective-meeting accounting: all rings are effective here (everyone
    // stays unmatched on the sampled side), so matches+threshold = rings
    CHECK(res.counters_a.status_failures == 0);
    CHECK(res.counters_a.matches + res.counters_a.threshold_failures ==
          res.counters_a.rings);
}

TEST_CASE("ambient availability thins the effective hazard") {
    Fixture fx(0.0, 0.0);
    const double c = 3.0;
    auto cfg = fx.config(0.0, c);
    cfg.available_b = 0.5;
    const std::size_t n = 20000;
    const auto res = simulate_market(cfg, uniform_pop(n, 21), uniform_pop(n, 22), 23);
    double unmatched = 0.0;
    for (auto m : res.pop_a.matched) unmatched += m == 0 ? 1.0 : 0.0;
    const double p_hat = unmatched / static_cast<double>(n);
    const double p_true = std::exp(-0.5 * c);
    const double se = std::sqrt(p_true * (1.0 - p_true) / static_cast<double>(n));
    CHECK(std::abs(p_hat - p_true) <= 3.0 * se);
}

TEST_CASE("simulation is deterministic per seed and matches are monotone") {
    Fixture fx(0.3, 0.3);
    auto cfg = fx.config(4.0, 5.0);
    const auto r1 = simulate_market(cfg, uniform_pop(3000, 5), uniform_pop(3000, 6), 7);
    const auto r2 = simulate_market(cfg, uniform_pop(3000, 5), uniform_pop(3000, 6), 7);
    CHECK(r1.pop_a.match_time == r2.pop_a.match_time);
    CHECK(r1.pop_b.match_time == r2.pop_b.match_time);
    CHECK(r1.counters_a.rings == r2.counters_a.rings);
    for (std::size_t i = 0; i < r1.pop_a.size(); ++i) {
        if (r1.pop_a.matched[i]) {
            CHECK(r1.pop_a.match_time[i] <= 1.0);
        } else {
            CHECK(std::isinf(r1.pop_a.match_time[i]));
        }
    }
}

TEST_CASE("physical pairing consumes both sides") {
    Fixture fx(0.0, 0.0);
    auto cfg = fx.config(0.0, 2.0);
    cfg.mode = PairingMode::PhysicalPairing;
    const auto res = simulate_market(cfg, uniform_pop(4000, 31), uniform_pop(4000, 32), 33);
    std::size_t a_matched = 0, b_matched = 0;
    for (auto m : res.pop_a.matched) a_matched += m;
    for (auto m : res.pop_b.matched) b_matched += m;
    CHECK(a_matched == b_matched);  // every match consumed one partner
    CHECK(a_matched > 0);
}

TEST_CASE("empirical survival curves: start at one, flat when nothing matches") {
    auto pop = uniform_pop(1000, 41);
    const std::vector<double> edges = {0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
    const auto curves = empirical_survival(pop, edges, times);
    for (std::size_t b = 0; b < 4; ++b) {
        CHECK(curves.bin_counts[b] > 0);
        for (std::size_t k = 0; k < times.size(); ++k) CHECK(curves.survival[b][k] == 1.0);
    }
}

TEST_CASE("pde comparison of an unmatched simulation against a frozen state is exact") {
    Fixture fx(100.0, 100.0);
    auto cfg = fx.config(3.0, 3.0);
    std::vector<SimResult> reps;
    for (std::uint64_t r = 0; r < 3; ++r) {
        reps.push_back(
            simulate_market(cfg, uniform_pop(2000, 100 + r), uniform_pop(2000, 200 + r), r));
    }
    std::vector<double> edges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    const auto report = compare_to_pde(reps, fx.state, fx.disc, 5, edges, edges);
    CHECK(report.max_abs_dev_f_a == 0.0);
    CHECK(report.max_abs_dev_f_b == 0.0);
    CHECK(report.fraction_within_3se == 1.0);
    CHECK(report.l1_survival_distance == 0.0);
}

TEST_CASE("nearest-left time evaluation of thresholds") {
    Fixture fx(0.0, 0.0);
    // make V_A increase stepwise in time: V(x, t_k) = k
    for (std::size_t i = 0; i < fx.state.v_a.n_space(); ++i) {
        for (std::size_t k = 0; k < fx.state.v_a.n_time(); ++k) {
            fx.state.v_a.at(i, k) = static_cast<double>(k);
        }
    }
    ThresholdField th{&fx.state.v_a, &fx.disc.grid_a, &fx.disc.time, false};
    CHECK(th.eval(0.5, 0.0) == 0.0);
    CHECK(th.eval(0.5, 0.05) == 0.0);       // inside the first step
    CHECK(th.eval(0.5, 0.1000001) == 1.0);  // just past t_1
    ThresholdField lin{&fx.state.v_a, &fx.disc.grid_a, &fx.disc.time, true};
    CHECK(lin.eval(0.5, 0.05) == doctest::Approx(0.5));
}

TEST_CASE("effective meetings run at the partner unmatched fraction") {
    // half the partner pool is pre-matched and static (no B clocks, no
    // acceptable matches); the status-pass share of rings estimates F_B
    Fixture fx(100.0, 100.0);
    auto cfg = fx.config(0.0, 4.0);
    auto pop_a = uniform_pop(5000, 61);
    auto pop_b = uniform_pop(5000, 62);
    for (std::size_t j = 0; j < pop_b.size(); j += 2) pop_b.matched[j] = 1;
    const auto res = simulate_market(cfg, std::move(pop_a), std::move(pop_b), 63);
    const double rings = static_cast<double>(res.counters_a.rings);
    const double effective = static_cast<double>(res.counters_a.threshold_failures +
                                                 res.counters_a.matches);
    const double p = 0.5;
    const double se = std::sqrt(p * (1.0 - p) / rings);
    CHECK(std::abs(effective / rings - p) <= 3.0 * se);
}
