#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

#include "nlchns/core.hpp"

namespace nlchns {

/// Adaptive Gauss–Kronrod (61-point) on [a, b]; infinite limits allowed.
/// Returns NaN when the integral does not converge to a finite value.
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-13, double* error = nullptr) {
    if (a == b) return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    const double v =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, tol, &err, &l1);
    if (error) *error = err;
    if (!std::isfinite(v) || !std::isfinite(err)) return std::numeric_limits<double>::quiet_NaN();
    return v;
}

}  // namespace nlchns
