#pragma once

// Discrete Neumann operator N: the zero-mean solution of -div(grad u) = f
// for the 5-point stencil with no-flux walls, via the cosine transform that
// diagonalizes it on a uniform grid. Also the H^{-1} norm sqrt(<f, N f>).

#include <cmath>
#include <sstream>
#include <vector>

#include "nlchns/fft.hpp"
#include "nlchns/grid.hpp"

namespace nlchns {

/// -div(grad f): the SPD-on-zero-mean Neumann Laplacian.
inline ScalarField neg_laplacian(const ScalarField& f) {
    ScalarField r = div(grad(f));
    r *= -1.0;
    return r;
}

/// Eigenvalue of -div grad for the cosine mode k on n cells of width h.
inline double neumann_eigenvalue_1d(int k, int n, double h) {
    return 2.0 / (h * h) * (1.0 - std::cos(kPi * k / n));
}

class NeumannSolver {
public:
    explicit NeumannSolver(const Grid2D& g) : grid_(g), dct_(g.ny, g.nx), inv_lambda_(g.cells(), 0.0) {
        for (int ky = 0; ky < g.ny; ++ky) {
            const double ly = neumann_eigenvalue_1d(ky, g.ny, g.hy());
            for (int kx = 0; kx < g.nx; ++kx) {
                const double lam = neumann_eigenvalue_1d(kx, g.nx, g.hx()) + ly;
                inv_lambda_[g.cell(kx, ky)] = (kx == 0 && ky == 0) ? 0.0 : 1.0 / lam;
            }
        }
    }

    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }

    /// Relative tolerance on |mean(rhs)| / max|rhs| for accepting a right-hand side.
    static constexpr double kCompatibilityTol = 1e-10;

    /// Returns N(rhs). The round-off mean of an accepted rhs is removed before solving.
    /// If residual is non-null it receives ||A sol - rhs||_inf / ||rhs||_inf.
    /// `term_scale` bounds the size of the terms rhs was assembled from, so a
    /// round-off mean of a cancelling rhs (a divergence) is not rejected.
    [[nodiscard]] ScalarField solve(const ScalarField& rhs, double* residual = nullptr, double term_scale = 0.0) const {
        require_same_grid(grid_, rhs.grid(), "neumann_poisson");
        const double scale = rhs.max_abs();
        const double m = rhs.mean();
        if (std::abs(m) > kCompatibilityTol * std::max(scale, term_scale)) {
            std::ostringstream os;
            os << "neumann_poisson: incompatible right-hand side, mean = " << m << " (max |rhs| = " << scale << ")";
            throw ValidationError(os.str());
        }
        const std::size_t n = grid_.cells();
        auto a = fft::alloc_real(n);
        auto b = fft::alloc_real(n);
        for (std::size_t k = 0; k < n; ++k) a[k] = rhs[k] - m;
        dct_.forward(a.get(), b.get());
        const double norm = 1.0 / (4.0 * grid_.nx * grid_.ny);
        for (std::size_t k = 0; k < n; ++k) b[k] *= inv_lambda_[k] * norm;
        dct_.inverse(b.get(), a.get());
        ScalarField sol(grid_);
        for (std::size_t k = 0; k < n; ++k) sol[k] = a[k];
        const double sm = sol.mean();
        for (std::size_t k = 0; k < n; ++k) sol[k] -= sm;
        if (residual) {
            ScalarField r = neg_laplacian(sol);
            double e = 0.0;
            for (std::size_t k = 0; k < n; ++k) e = std::max(e, std::abs(r[k] - (rhs[k] - m)));
            *residual = scale > 0.0 ? e / scale : e;
        }
        return sol;
    }

private:
    Grid2D grid_;
    fft::CosineTransform2D dct_;
    std::vector<double> inv_lambda_;
};

/// N(rhs) for a zero-mean rhs.
inline ScalarField neumann_poisson(const ScalarField& rhs, double* residual = nullptr) {
    return NeumannSolver(rhs.grid()).solve(rhs, residual);
}

/// sqrt(<f, N f>) for a zero-mean f.
inline double hminus1_norm(const ScalarField& f, const NeumannSolver& solver) {
    ScalarField nf = solver.solve(f);
    return std::sqrt(std::max(0.0, inner(f, nf)));
}

inline double hminus1_norm(const ScalarField& f) { return hminus1_norm(f, NeumannSolver(f.grid())); }

}  // namespace nlchns
