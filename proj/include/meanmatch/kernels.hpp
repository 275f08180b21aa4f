#pragma once

#include <cstddef>

// Inner-loop kernels for the solver: masked partner-quality reductions and
// the floored squared-relative-difference reduction behind the E metric.
// Each kernel has a scalar reference implementation and an AVX2 variant;
// the active variant is selected once at startup from CPU capabilities and
// can be overridden (tests, MEANMATCH_KERNEL=scalar|avx2).

namespace meanmatch::kernels {

struct RegionSums {
    double mass = 0.0;    // sum f_l * w_l
    double moment = 0.0;  // sum (y_l - a) * f_l * w_l
};

// Nodal membership (the scheme's literal indicator): w_l = 1 iff
// y_l >= a and v_other_l <= x. Arrays run over l = 0..n-1 (node 0 of the
// partner grid is excluded by the caller). Sums are unscaled by dy.
RegionSums region_sums_nodal(const double* y, const double* v_other, const double* f,
                             std::size_t n, double a, double x);

// Fractional membership: w_l is the overlap fraction of the partner cell
// (y_l - dy, y_l] with the interval [a, b]; interior cells get weight 1,
// the two boundary cells get their clipped fraction. Continuous in (a, b).
RegionSums region_sums_clipped(const double* y, const double* f, std::size_t n,
                               double a, double b, double dy);

// sum_l ((next_l - prev_l) / max(|prev_l|, floor))^2
double sq_rel_diff(const double* prev, const double* next, std::size_t n, double floor_eps);

enum class Isa { Scalar, Avx2 };

Isa active_isa();
const char* isa_name(Isa isa);

// Overrides dispatch; Avx2 requests fall back to Scalar when unsupported.
void force_isa(Isa isa);
void reset_isa();

// Direct entry points for equivalence tests.
namespace detail {
RegionSums region_sums_nodal_scalar(const double* y, const double* v_other, const double* f,
                                    std::size_t n, double a, double x);
RegionSums region_sums_clipped_scalar(const double* y, const double* f, std::size_t n,
                                      double a, double b, double dy);
double sq_rel_diff_scalar(const double* prev, const double* next, std::size_t n,
                          double floor_eps);
bool avx2_supported();
RegionSums region_sums_nodal_avx2(const double* y, const double* v_other, const double* f,
                                  std::size_t n, double a, double x);
RegionSums region_sums_clipped_avx2(const double* y, const double* f, std::size_t n,
                                    double a, double b, double dy);
double sq_rel_diff_avx2(const double* prev, const double* next, std::size_t n,
                        double floor_eps);
}  // namespace detail

}  // namespace meanmatch::kernels
