#pragma once

#include <cmath>
#include <functional>

// Test-only adaptive Simpson quadrature, used as the independent oracle for
// the distribution functions. Kept separate from the library on purpose.
namespace testsupport {

inline double simpson(const std::function<double(double)>& f, double a, double b) {
    const double m = 0.5 * (a + b);
    return (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double left = simpson(f, a, m);
    const double right = simpson(f, m, b);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, left, eps / 2.0, depth - 1) +
           adaptive_simpson_rec(f, m, b, right, eps / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double eps = 1e-12, int depth = 40) {
    return adaptive_simpson_rec(f, a, b, simpson(f, a, b), eps, depth);
}

}  // namespace testsupport
