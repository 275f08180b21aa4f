#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "meanmatch/kernels.hpp"

using namespace meanmatch::kernels;

namespace {

struct Inputs {
    std::vector<double> y, v, f;
    double dy;
};

Inputs random_inputs(std::mt19937_64& gen, std::size_t n) {
    Inputs in;
    in.dy = 35.0;
    in.y.resize(n);
    in.v.resize(n);
    in.f.resize(n);
    std::uniform_real_distribution<double> fu(0.0, 1e-3);
    double vmono = 0.0;
    std::uniform_real_distribution<double> step(0.0, 80.0);
    for (std::size_t l = 0; l < n; ++l) {
        in.y[l] = in.dy * static_cast<double>(l + 1);
        vmono += step(gen);
        in.v[l] = vmono;
        in.f[l] = fu(gen);
    }
    return in;
}

}  // namespace

TEST_CASE("nodal region sums match a direct node enumeration") {
    std::mt19937_64 gen(7);
    const auto in = random_inputs(gen, 200);
    for (double a : {0.0, 100.0, 3333.0, 9000.0}) {
        for (double x : {0.0, 500.0, 4200.0, 7000.0}) {
            double mass = 0.0, moment = 0.0;
            for (std::size_t l = 0; l < in.y.size(); ++l) {
                if (in.y[l] >= a && in.v[l] <= x) {
                    mass += in.f[l];
                    moment += (in.y[l] - a) * in.f[l];
                }
            }
            const auto got = detail::region_sums_nodal_scalar(in.y.data(), in.v.data(),
                                                              in.f.data(), in.y.size(), a, x);
            CHECK(got.mass == doctest::Approx(mass).epsilon(1e-14));
            CHECK(got.moment == doctest::Approx(moment).epsilon(1e-14));
        }
    }
}

TEST_CASE("clipped region sums: interior nodal terms, fractional boundary cells") {
    std::mt19937_64 gen(11);
    const auto in = random_inputs(gen, 64);
    const double a = 100.0, b = 1500.0;
    const auto got = detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), in.y.size(), a,
                                                        b, in.dy);
    double mass = 0.0, moment = 0.0;
    for (std::size_t l = 0; l < in.y.size(); ++l) {
        const double lo = std::max(a, in.y[l] - in.dy);
        const double hi = std::min(b, in.y[l]);
        const double w = std::clamp((hi - lo) / in.dy, 0.0, 1.0);
        mass += in.f[l] * w;
        moment += (in.y[l] - a) * in.f[l] * w;
    }
    CHECK(got.mass == doctest::Approx(mass).epsilon(1e-14));
    CHECK(got.moment == doctest::Approx(moment).epsilon(1e-14));

    // full-interval weights reduce to the plain nodal sum
    const auto full = detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), in.y.size(),
                                                         0.0, in.y.back(), in.dy);
    double nodal_mass = 0.0;
    for (double fv : in.f) nodal_mass += fv;
    CHECK(full.mass == doctest::Approx(nodal_mass).epsilon(1e-13));

    // empty interval
    const auto empty = detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), in.y.size(),
                                                          500.0, 400.0, in.dy);
    CHECK(empty.mass == 0.0);
    CHECK(empty.moment == 0.0);

    // continuity in b across a node boundary
    const double yl = in.y[10];
    const auto below = detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), in.y.size(),
                                                          0.0, yl - 1e-9, in.dy);
    const auto above = detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), in.y.size(),
                                                          0.0, yl + 1e-9, in.dy);
    CHECK(std::abs(above.mass - below.mass) <= 1e-10);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
    if (!detail::avx2_supported()) {
        MESSAGE("avx2 not available; dispatch falls back to scalar");
        return;
    }
    std::mt19937_64 gen(13);
    for (std::size_t n : {1u, 3u, 8u, 17u, 200u, 201u}) {
        const auto in = random_inputs(gen, n);
        std::uniform_real_distribution<double> au(0.0, in.y.back() * 1.1);
        for (int rep = 0; rep < 20; ++rep) {
            const double a = au(gen), x = au(gen), b = au(gen);
            const auto ns = detail::region_sums_nodal_scalar(in.y.data(), in.v.data(),
                                                             in.f.data(), n, a, x);
            const auto nv = detail::region_sums_nodal_avx2(in.y.data(), in.v.data(), in.f.data(),
                                                           n, a, x);
            CHECK(nv.mass == doctest::Approx(ns.mass).epsilon(1e-12));
            CHECK(nv.moment == doctest::Approx(ns.moment).epsilon(1e-12));
            const auto cs =
                detail::region_sums_clipped_scalar(in.y.data(), in.f.data(), n, a, b, in.dy);
            const auto cv =
                detail::region_sums_clipped_avx2(in.y.data(), in.f.data(), n, a, b, in.dy);
            CHECK(cv.mass == doctest::Approx(cs.mass).epsilon(1e-12));
            CHECK(cv.moment == doctest::Approx(cs.moment).epsilon(1e-12));
        }
        std::vector<double> prev(n), next(n);
        std::uniform_real_distribution<double> pu(-1.0, 1.0);
        for (std::size_t l = 0; l < n; ++l) {
            prev[l] = pu(gen) * 1e-6;
            next[l] = prev[l] + pu(gen) * 1e-9;
        }
        const double ds = detail::sq_rel_diff_scalar(prev.data(), next.data(), n, 1e-12);
        const double dv = detail::sq_rel_diff_avx2(prev.data(), next.data(), n, 1e-12);
        CHECK(dv == doctest::Approx(ds).epsilon(1e-11));
    }
}

TEST_CASE("dispatch override") {
    force_isa(Isa::Scalar);
    CHECK(active_isa() == Isa::Scalar);
    force_isa(Isa::Avx2);
    if (detail::avx2_supported()) {
        CHECK(active_isa() == Isa::Avx2);
    } else {
        CHECK(active_isa() == Isa::Scalar);
    }
    reset_isa();
}

TEST_CASE("floored relative difference") {
    const double prev[] = {2.0, 0.0, -4.0};
    const double next[] = {2.5, 1e-13, -4.0};
    // (0.5/2)^2 + (1e-13/1e-12)^2 + 0
    const double got = detail::sq_rel_diff_scalar(prev, next, 3, 1e-12);
    CHECK(got == doctest::Approx(0.0625 + 0.01).epsilon(1e-12));
}
