#pragma once

#include <cmath>
#include <vector>

#include "nlchns/core.hpp"

namespace nlchns {

struct CgResult {
    int iterations = 0;
    double residual = 0.0;  ///< final ||b - A x|| / max(||b||, 1e-300)
    bool converged = false;
};

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
/// `apply(x, y)` computes y = A x. x holds the initial guess; its residual is
/// checked before the first iteration so an exact guess is returned untouched.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, const std::vector<double>& b, const std::vector<double>& diag,
                            std::vector<double>& x, double rel_tol, int max_iter) {
    const std::size_t n = b.size();
    std::vector<double> r(n), z(n), p(n), Ap(n);
    apply(x, Ap);
    for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - Ap[k];
    const double bnorm = std::sqrt(kahan_dot(b, b));
    const double scale = std::max(bnorm, 1e-300);
    CgResult res;
    double rnorm = std::sqrt(kahan_dot(r, r));
    res.residual = rnorm / scale;
    if (rnorm <= rel_tol * bnorm || rnorm == 0.0) {
        res.converged = true;
        return res;
    }
    for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / diag[k];
    p = z;
    double rz = kahan_dot(r, z);
    for (int it = 1; it <= max_iter; ++it) {
        apply(p, Ap);
        const double pAp = kahan_dot(p, Ap);
        if (!(pAp > 0.0)) break;
        const double alpha = rz / pAp;
        for (std::size_t k = 0; k < n; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * Ap[k];
        }
        rnorm = std::sqrt(kahan_dot(r, r));
        res.iterations = it;
        res.residual = rnorm / scale;
        if (rnorm <= rel_tol * bnorm) {
            res.converged = true;
            return res;
        }
        for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / diag[k];
        const double rz2 = kahan_dot(r, z);
        const double beta = rz2 / rz;
        rz = rz2;
        for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    return res;
}

}  // namespace nlchns
