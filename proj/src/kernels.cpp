#include "meanmatch/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(__i386__)
#define MEANMATCH_X86 1
#include <immintrin.h>
#else
#define MEANMATCH_X86 0
#endif

namespace meanmatch::kernels {

namespace detail {

RegionSums region_sums_nodal_scalar(const double* y, const double* v_other, const double* f,
                                    std::size_t n, double a, double x) {
    double mass = 0.0, moment = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        if (y[l] >= a && v_other[l] <= x) {
            mass += f[l];
            moment += (y[l] - a) * f[l];
        }
    }
    return {mass, moment};
}

RegionSums region_sums_clipped_scalar(const double* y, const double* f, std::size_t n,
                                      double a, double b, double dy) {
    const double inv_dy = 1.0 / dy;
    double mass = 0.0, moment = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const double hi = std::min(b, y[l]);
        const double lo = std::max(a, y[l] - dy);
        double w = (hi - lo) * inv_dy;
        w = std::min(1.0, std::max(0.0, w));
        const double fw = f[l] * w;
        mass += fw;
        moment += (y[l] - a) * fw;
    }
    return {mass, moment};
}

double sq_rel_diff_scalar(const double* prev, const double* next, std::size_t n,
                          double floor_eps) {
    double s = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const double denom = std::max(std::abs(prev[l]), floor_eps);
        const double d = (next[l] - prev[l]) / denom;
        s += d * d;
    }
    return s;
}

bool avx2_supported() {
#if MEANMATCH_X86 && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

#if MEANMATCH_X86

__attribute__((target("avx2,fma")))
RegionSums region_sums_nodal_avx2(const double* y, const double* v_other, const double* f,
                                  std::size_t n, double a, double x) {
    const __m256d av = _mm256_set1_pd(a);
    const __m256d xv = _mm256_set1_pd(x);
    __m256d mass0 = _mm256_setzero_pd(), mass1 = _mm256_setzero_pd();
    __m256d mom0 = _mm256_setzero_pd(), mom1 = _mm256_setzero_pd();
    std::size_t l = 0;
    for (; l + 8 <= n; l += 8) {
        const __m256d ya = _mm256_loadu_pd(y + l);
        const __m256d yb = _mm256_loadu_pd(y + l + 4);
        const __m256d va = _mm256_loadu_pd(v_other + l);
        const __m256d vb = _mm256_loadu_pd(v_other + l + 4);
        const __m256d fa = _mm256_loadu_pd(f + l);
        const __m256d fb = _mm256_loadu_pd(f + l + 4);
        const __m256d ma = _mm256_and_pd(_mm256_cmp_pd(ya, av, _CMP_GE_OQ),
                                         _mm256_cmp_pd(va, xv, _CMP_LE_OQ));
        const __m256d mb = _mm256_and_pd(_mm256_cmp_pd(yb, av, _CMP_GE_OQ),
                                         _mm256_cmp_pd(vb, xv, _CMP_LE_OQ));
        const __m256d fma_ = _mm256_and_pd(fa, ma);
        const __m256d fmb = _mm256_and_pd(fb, mb);
        mass0 = _mm256_add_pd(mass0, fma_);
        mass1 = _mm256_add_pd(mass1, fmb);
        mom0 = _mm256_fmadd_pd(_mm256_sub_pd(ya, av), fma_, mom0);
        mom1 = _mm256_fmadd_pd(_mm256_sub_pd(yb, av), fmb, mom1);
    }
    alignas(32) double tmp[4];
    RegionSums out;
    const __m256d mass = _mm256_add_pd(mass0, mass1);
    const __m256d mom = _mm256_add_pd(mom0, mom1);
    _mm256_store_pd(tmp, mass);
    out.mass = (tmp[0] + tmp[1]) + (tmp[2] + tmp[3]);
    _mm256_store_pd(tmp, mom);
    out.moment = (tmp[0] + tmp[1]) + (tmp[2] + tmp[3]);
    for (; l < n; ++l) {
        if (y[l] >= a && v_other[l] <= x) {
            out.mass += f[l];
            out.moment += (y[l] - a) * f[l];
        }
    }
    return out;
}

__attribute__((target("avx2,fma")))
RegionSums region_sums_clipped_avx2(const double* y, const double* f, std::size_t n,
                                    double a, double b, double dy) {
    const __m256d av = _mm256_set1_pd(a);
    const __m256d bv = _mm256_set1_pd(b);
    const __m256d dyv = _mm256_set1_pd(dy);
    const __m256d inv_dy = _mm256_set1_pd(1.0 / dy);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    __m256d mass0 = _mm256_setzero_pd(), mass1 = _mm256_setzero_pd();
    __m256d mom0 = _mm256_setzero_pd(), mom1 = _mm256_setzero_pd();
    std::size_t l = 0;
    for (; l + 8 <= n; l += 8) {
        const __m256d ya = _mm256_loadu_pd(y + l);
        const __m256d yb = _mm256_loadu_pd(y + l + 4);
        const __m256d fa = _mm256_loadu_pd(f + l);
        const __m256d fb = _mm256_loadu_pd(f + l + 4);
        const __m256d hia = _mm256_min_pd(bv, ya);
        const __m256d hib = _mm256_min_pd(bv, yb);
        const __m256d loa = _mm256_max_pd(av, _mm256_sub_pd(ya, dyv));
        const __m256d lob = _mm256_max_pd(av, _mm256_sub_pd(yb, dyv));
        __m256d wa = _mm256_mul_pd(_mm256_sub_pd(hia, loa), inv_dy);
        __m256d wb = _mm256_mul_pd(_mm256_sub_pd(hib, lob), inv_dy);
        wa = _mm256_min_pd(one, _mm256_max_pd(zero, wa));
        wb = _mm256_min_pd(one, _mm256_max_pd(zero, wb));
        const __m256d fwa = _mm256_mul_pd(fa, wa);
        const __m256d fwb = _mm256_mul_pd(fb, wb);
        mass0 = _mm256_add_pd(mass0, fwa);
        mass1 = _mm256_add_pd(mass1, fwb);
        mom0 = _mm256_fmadd_pd(_mm256_sub_pd(ya, av), fwa, mom0);
        mom1 = _mm256_fmadd_pd(_mm256_sub_pd(yb, av), fwb, mom1);
    }
    alignas(32) double tmp[4];
    RegionSums out;
    const __m256d mass = _mm256_add_pd(mass0, mass1);
    const __m256d mom = _mm256_add_pd(mom0, mom1);
    _mm256_store_pd(tmp, mass);
    out.mass = (tmp[0] + tmp[1]) + (tmp[2] + tmp[3]);
    _mm256_store_pd(tmp, mom);
    out.moment = (tmp[0] + tmp[1]) + (tmp[2] + tmp[3]);
    const double inv_dy_s = 1.0 / dy;
    for (; l < n; ++l) {
        const double hi = std::min(b, y[l]);
        const double lo = std::max(a, y[l] - dy);
        double w = (hi - lo) * inv_dy_s;
        w = std::min(1.0, std::max(0.0, w));
        const double fw = f[l] * w;
        out.mass += fw;
        out.moment += (y[l] - a) * fw;
    }
    return out;
}

__attribute__((target("avx2,fma")))
double sq_rel_diff_avx2(const double* prev, const double* next, std::size_t n,
                        double floor_eps) {
    const __m256d floor_v = _mm256_set1_pd(floor_eps);
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    std::size_t l = 0;
    for (; l + 8 <= n; l += 8) {
        const __m256d pa = _mm256_loadu_pd(prev + l);
        const __m256d pb = _mm256_loadu_pd(prev + l + 4);
        const __m256d na = _mm256_loadu_pd(next + l);
        const __m256d nb = _mm256_loadu_pd(next + l + 4);
        const __m256d da = _mm256_div_pd(_mm256_sub_pd(na, pa),
                                         _mm256_max_pd(_mm256_andnot_pd(sign_mask, pa), floor_v));
        const __m256d db = _mm256_div_pd(_mm256_sub_pd(nb, pb),
                                         _mm256_max_pd(_mm256_andnot_pd(sign_mask, pb), floor_v));
        acc0 = _mm256_fmadd_pd(da, da, acc0);
        acc1 = _mm256_fmadd_pd(db, db, acc1);
    }
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, _mm256_add_pd(acc0, acc1));
    double s = (tmp[0] + tmp[1]) + (tmp[2] + tmp[3]);
    for (; l < n; ++l) {
        const double denom = std::max(std::abs(prev[l]), floor_eps);
        const double d = (next[l] - prev[l]) / denom;
        s += d * d;
    }
    return s;
}

#else  // !MEANMATCH_X86

RegionSums region_sums_nodal_avx2(const double* y, const double* v_other, const double* f,
                                  std::size_t n, double a, double x) {
    return region_sums_nodal_scalar(y, v_other, f, n, a, x);
}
RegionSums region_sums_clipped_avx2(const double* y, const double* f, std::size_t n,
                                    double a, double b, double dy) {
    return region_sums_clipped_scalar(y, f, n, a, b, dy);
}
double sq_rel_diff_avx2(const double* prev, const double* next, std::size_t n,
                        double floor_eps) {
    return sq_rel_diff_scalar(prev, next, n, floor_eps);
}

#endif

}  // namespace detail

namespace {

Isa pick_default_isa() {
    if (const char* env = std::getenv("MEANMATCH_KERNEL")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0 && detail::avx2_supported()) return Isa::Avx2;
    }
    return detail::avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa> g_isa{pick_default_isa()};

}  // namespace

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && !detail::avx2_supported()) isa = Isa::Scalar;
    g_isa.store(isa, std::memory_order_relaxed);
}

void reset_isa() { g_isa.store(pick_default_isa(), std::memory_order_relaxed); }

RegionSums region_sums_nodal(const double* y, const double* v_other, const double* f,
                             std::size_t n, double a, double x) {
    if (active_isa() == Isa::Avx2) return detail::region_sums_nodal_avx2(y, v_other, f, n, a, x);
    return detail::region_sums_nodal_scalar(y, v_other, f, n, a, x);
}

RegionSums region_sums_clipped(const double* y, const double* f, std::size_t n,
                               double a, double b, double dy) {
    if (active_isa() == Isa::Avx2) return detail::region_sums_clipped_avx2(y, f, n, a, b, dy);
    return detail::region_sums_clipped_scalar(y, f, n, a, b, dy);
}

double sq_rel_diff(const double* prev, const double* next, std::size_t n, double floor_eps) {
    if (active_isa() == Isa::Avx2) return detail::sq_rel_diff_avx2(prev, next, n, floor_eps);
    return detail::sq_rel_diff_scalar(prev, next, n, floor_eps);
}

}  // namespace meanmatch::kernels
