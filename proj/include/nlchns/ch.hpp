#pragma once

// Convective nonlocal Cahn–Hilliard step on the cell grid.
//
// Sign convention: J denotes the mass flux, phi_t = -div J. Every flux is
// zero on boundary faces.
//
// Degenerate mode (no chemical potential needed):
//   J = -D_f grad phi^{n+1} - m_f (phi_f grad a - (grad J * phi^n)_f) + C
//   D = mF''(c) + m(c) a,  m = m(c),  c = clamp(phi^n, -1, 1)
// Regularized mode (stabilized explicit mu):
//   J = -D_f grad (phi^{n+1} - phi^n) - m_f grad mu^n + C
//   D = m_eps (F_eps'' + a),  mu = a phi - J*phi + F_eps'(phi)
// Convection: C = u_f (phi_up - phi_ref), first-order upwind or van Leer.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "nlchns/cg.hpp"
#include "nlchns/grid.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/material.hpp"

namespace nlchns {

enum class ChMode { degenerate, regularized };

inline const char* to_string(ChMode m) { return m == ChMode::degenerate ? "degenerate" : "regularized"; }

struct ChOptions {
    ChMode mode = ChMode::degenerate;
    double eps = 0.05;
    double cfl_safety = 0.9;
    bool van_leer = false;
    double cg_rel_tol = 1e-13;
    int cg_max_iter = 10000;
};

struct ChState {
    ScalarField phi;
    double t = 0.0;
};

/// Everything a step used, for the diagnostics.
struct ChStepInfo {
    double dt = 0.0;
    FaceField D_face;      ///< diffusion coefficient on faces
    FaceField m_face;      ///< mobility on faces
    FaceField drift;       ///< degenerate: -m_f (phi_f grad a - grad J*phi); regularized: -m_f grad mu^n
    FaceField convective;  ///< C
    FaceField total_flux;  ///< J actually applied
    ScalarField mu;        ///< regularized: mu^n; degenerate: empty
    int cg_iterations = 0;
    double cg_residual = 0.0;
};

class ChModel {
public:
    /// Cells this close to +-1 refuse the chemical potential in degenerate mode.
    static constexpr double kSingularGuard = 1e-9;

    ChModel(const DiscreteKernel& kernel, const MaterialModel& material, ChOptions opt)
        : kernel_(&kernel), material_(material), opt_(opt) {
        if (opt_.mode == ChMode::regularized) reg_.emplace(material_, opt_.eps, detect_eps0(material_));
        if (!(opt_.cfl_safety > 0.0 && opt_.cfl_safety <= 1.0))
            throw ValidationError("cfl_safety must lie in (0, 1]");
    }

    [[nodiscard]] const DiscreteKernel& kernel() const noexcept { return *kernel_; }
    [[nodiscard]] const MaterialModel& material() const noexcept { return material_; }
    [[nodiscard]] const RegularizedModel* regularized() const noexcept { return reg_ ? &*reg_ : nullptr; }
    [[nodiscard]] const ChOptions& options() const noexcept { return opt_; }
    [[nodiscard]] ChMode mode() const noexcept { return opt_.mode; }

    /// mu = a phi - J*phi + F'(phi) (F_eps' in regularized mode).
    [[nodiscard]] ScalarField chemical_potential(const ScalarField& phi) const {
        require_same_grid(kernel_->grid(), phi.grid(), "chemical_potential");
        ScalarField mu = kernel_->convolve(phi);
        const ScalarField& a = kernel_->a();
        for (std::size_t k = 0; k < mu.size(); ++k) {
            double dF;
            if (reg_) {
                dF = reg_->potential(phi[k]).dF;
            } else {
                if (material_.singular() && !(std::abs(phi[k]) < 1.0 - kSingularGuard))
                    throw DomainError("chemical_potential: |phi| reaches 1 in degenerate mode; use the flux form");
                dF = material_.potential(phi[k]).dF;
            }
            mu[k] = a[k] * phi[k] - mu[k] + dF;
        }
        return mu;
    }

    /// Cell values of the diffusion coefficient D and mobility m.
    [[nodiscard]] std::pair<ScalarField, ScalarField> coefficients(const ScalarField& phi) const {
        const Grid2D& g = phi.grid();
        ScalarField D(g), m(g);
        const ScalarField& a = kernel_->a();
        for (std::size_t k = 0; k < phi.size(); ++k) {
            if (reg_) {
                const double mm = reg_->mobility(phi[k]);
                m[k] = mm;
                D[k] = mm * (reg_->potential(phi[k]).d2F + a[k]);
            } else {
                const double c = std::clamp(phi[k], -1.0, 1.0);
                const double mm = material_.mobility(c);
                m[k] = mm;
                D[k] = material_.mFpp(c) + mm * a[k];
            }
        }
        return {std::move(D), std::move(m)};
    }

    /// Degenerate mass flux -[mF'' + m a]_f grad phi - m_f (phi_f grad a - (grad J*phi)_f).
    [[nodiscard]] FaceField degenerate_flux(const ScalarField& phi) const {
        auto [D, m] = coefficients_degenerate(phi);
        FaceField Df = face_average(D), mf = face_average(m);
        FaceField J = drift_flux(phi, mf);
        FaceField gp = grad(phi);
        for (std::size_t k = 0; k < J.x().size(); ++k) J.x()[k] -= Df.x()[k] * gp.x()[k];
        for (std::size_t k = 0; k < J.y().size(); ++k) J.y()[k] -= Df.y()[k] * gp.y()[k];
        J.zero_boundary_normal();
        return J;
    }

    /// Regularized mass flux -m_eps(phi)_f grad mu_eps.
    [[nodiscard]] FaceField regularized_flux(const ScalarField& phi) const {
        if (!reg_) throw ValidationError("regularized_flux: model is not in regularized mode");
        ScalarField m(phi.grid());
        for (std::size_t k = 0; k < phi.size(); ++k) m[k] = reg_->mobility(phi[k]);
        FaceField J = hadamard(face_average(m), grad(chemical_potential(phi)));
        J *= -1.0;
        J.zero_boundary_normal();
        return J;
    }

    /// Largest dt allowed by the guard CFL * min(h/|u|, h^2/max D, h/max drift speed).
    [[nodiscard]] double max_stable_dt(const ScalarField& phi, const FaceField& u) const {
        const Grid2D& g = phi.grid();
        const double h = std::min(g.hx(), g.hy());
        auto [D, m] = coefficients(phi);
        double lim = std::numeric_limits<double>::infinity();
        const double umax = u.max_abs();
        if (umax > 0.0) lim = std::min(lim, h / umax);
        const double Dmax = D.max();
        if (Dmax > 0.0) lim = std::min(lim, h * h / Dmax);
        auto [gx, gy] = kernel_->convolve_grad_cells(phi);
        const ScalarField& ax = kernel_->grad_a_x();
        const ScalarField& ay = kernel_->grad_a_y();
        double speed = 0.0;
        for (std::size_t k = 0; k < phi.size(); ++k) {
            const double dm = reg_ ? reg_->dmobility(phi[k]) : material_.dmobility(std::clamp(phi[k], -1.0, 1.0));
            const double field = std::hypot(ax[k], ay[k]) + std::hypot(gx[k], gy[k]);
            speed = std::max(speed, (m[k] + std::abs(dm)) * field);
        }
        if (speed > 0.0) lim = std::min(lim, h / speed);
        return opt_.cfl_safety * lim;
    }

    /// Advances state by dt with velocity u (discretely divergence-free,
    /// zero normal component on the walls). phi_ref is any constant; the
    /// mean-preserving choice is the initial mean.
    ChStepInfo step(ChState& state, const FaceField& u, double dt, double phi_ref, bool check_cfl = true) const {
        const Grid2D& g = state.phi.grid();
        require_same_grid(kernel_->grid(), g, "ch_step");
        if (!(dt > 0.0)) throw ValidationError("ch_step: dt must be positive");
        if (check_cfl) {
            const double lim = max_stable_dt(state.phi, u);
            if (dt > lim * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "ch_step: dt = " << dt << " violates the stability guard; suggested dt <= " << lim;
                throw CflError(os.str(), lim);
            }
        }
        const ScalarField& phi = state.phi;
        ChStepInfo info;
        info.dt = dt;
        auto [D, m] = coefficients(phi);
        info.D_face = face_average(D);
        info.m_face = face_average(m);
        info.D_face.zero_boundary_normal();
        info.m_face.zero_boundary_normal();
        info.convective = convective_flux(phi, u, phi_ref);

        FaceField explicit_flux(g);
        if (reg_) {
            info.mu = chemical_potential(phi);
            info.drift = hadamard(info.m_face, grad(info.mu));
            info.drift *= -1.0;
        } else {
            info.drift = drift_flux(phi, info.m_face);
        }
        explicit_flux = info.drift + info.convective;
        explicit_flux.zero_boundary_normal();

        // (I - dt div D grad) x = b; degenerate: x = phi^{n+1}, regularized: x = phi^{n+1} - phi^n.
        const ScalarField div_e = div(explicit_flux);
        std::vector<double> b(phi.size()), x(phi.size());
        for (std::size_t k = 0; k < b.size(); ++k) {
            b[k] = (reg_ ? 0.0 : phi[k]) - dt * div_e[k];
            x[k] = reg_ ? 0.0 : phi[k];
        }
        const FaceField& Df = info.D_face;
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            apply_helmholtz(g, Df, dt, in, out);
        };
        std::vector<double> diag(phi.size());
        helmholtz_diagonal(g, Df, dt, diag);
        const CgResult cg = conjugate_gradient(apply, b, diag, x, opt_.cg_rel_tol, opt_.cg_max_iter);
        info.cg_iterations = cg.iterations;
        info.cg_residual = cg.residual;
        if (!cg.converged) {
            std::ostringstream os;
            os << "ch_step: linear solve did not converge (relative residual " << cg.residual << " after "
               << cg.iterations << " iterations)";
            throw NumericalError(os.str());
        }
        ScalarField xs(g);
        xs.raw() = std::move(x);

        // Rebuild phi^{n+1} from the applied face fluxes so mass telescopes exactly.
        FaceField diff = hadamard(Df, grad(xs));
        info.total_flux = explicit_flux - diff;
        info.total_flux.zero_boundary_normal();
        ScalarField dphi = div(info.total_flux);
        ScalarField next(g);
        for (std::size_t k = 0; k < next.size(); ++k) next[k] = phi[k] - dt * dphi[k];
        if (!next.all_finite()) throw NumericalError("ch_step: non-finite order parameter");
        state.phi = std::move(next);
        state.t += dt;
        return info;
    }

    /// C = u_f (phi_face - phi_ref) with upwind (optionally van Leer limited) face values.
    [[nodiscard]] FaceField convective_flux(const ScalarField& phi, const FaceField& u, double phi_ref) const {
        const Grid2D& g = phi.grid();
        FaceField C(g);
        auto face_value = [&](double uf, double lm2, double lm1, double rp1, double rp2, bool has_far_l,
                              bool has_far_r) {
            // lm1 | rp1 are the cells adjacent to the face.
            const double up = uf >= 0 ? lm1 : rp1;
            if (!opt_.van_leer) return up;
            const double dn = uf >= 0 ? rp1 : lm1;
            const bool far = uf >= 0 ? has_far_l : has_far_r;
            if (!far) return up;
            const double upup = uf >= 0 ? lm2 : rp2;
            const double d1 = dn - up, d0 = up - upup;
            if (d1 == 0.0) return up;
            const double r = d0 / d1;
            const double psi = (r + std::abs(r)) / (1.0 + std::abs(r));
            return up + 0.5 * psi * d1;
        };
        for (int j = 0; j < g.ny; ++j)
            for (int i = 1; i < g.nx; ++i) {
                const double uf = u.xf(i, j);
                if (uf == 0.0) continue;
                const double v = face_value(uf, i >= 2 ? phi(i - 2, j) : 0.0, phi(i - 1, j), phi(i, j),
                                            i + 1 < g.nx ? phi(i + 1, j) : 0.0, i >= 2, i + 1 < g.nx);
                C.xf(i, j) = uf * (v - phi_ref);
            }
        for (int j = 1; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double uf = u.yf(i, j);
                if (uf == 0.0) continue;
                const double v = face_value(uf, j >= 2 ? phi(i, j - 2) : 0.0, phi(i, j - 1), phi(i, j),
                                            j + 1 < g.ny ? phi(i, j + 1) : 0.0, j >= 2, j + 1 < g.ny);
                C.yf(i, j) = uf * (v - phi_ref);
            }
        return C;
    }

private:
    [[nodiscard]] std::pair<ScalarField, ScalarField> coefficients_degenerate(const ScalarField& phi) const {
        const Grid2D& g = phi.grid();
        ScalarField D(g), m(g);
        const ScalarField& a = kernel_->a();
        for (std::size_t k = 0; k < phi.size(); ++k) {
            const double c = std::clamp(phi[k], -1.0, 1.0);
            m[k] = material_.mobility(c);
            D[k] = material_.mFpp(c) + m[k] * a[k];
        }
        return {std::move(D), std::move(m)};
    }

    // -m_f (phi_f grad a_f - (grad J * phi)_f)
    [[nodiscard]] FaceField drift_flux(const ScalarField& phi, const FaceField& mf) const {
        FaceField G = kernel_->convolve_grad(phi);
        FaceField pf = face_average(phi);
        const FaceField& ga = kernel_->grad_a();
        FaceField W(phi.grid());
        for (std::size_t k = 0; k < W.x().size(); ++k)
            W.x()[k] = -mf.x()[k] * (pf.x()[k] * ga.x()[k] - G.x()[k]);
        for (std::size_t k = 0; k < W.y().size(); ++k)
            W.y()[k] = -mf.y()[k] * (pf.y()[k] * ga.y()[k] - G.y()[k]);
        W.zero_boundary_normal();
        return W;
    }

    static void apply_helmholtz(const Grid2D& g, const FaceField& Df, double dt, const std::vector<double>& in,
                                std::vector<double>& out) {
        const double cx = dt / (g.hx() * g.hx()), cy = dt / (g.hy() * g.hy());
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t k = g.cell(i, j);
                double v = in[k];
                if (i > 0) v += cx * Df.xf(i, j) * (in[k] - in[k - 1]);
                if (i + 1 < g.nx) v += cx * Df.xf(i + 1, j) * (in[k] - in[k + 1]);
                if (j > 0) v += cy * Df.yf(i, j) * (in[k] - in[k - g.nx]);
                if (j + 1 < g.ny) v += cy * Df.yf(i, j + 1) * (in[k] - in[k + g.nx]);
                out[k] = v;
            }
    }

    static void helmholtz_diagonal(const Grid2D& g, const FaceField& Df, double dt, std::vector<double>& d) {
        const double cx = dt / (g.hx() * g.hx()), cy = dt / (g.hy() * g.hy());
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                double v = 1.0;
                if (i > 0) v += cx * Df.xf(i, j);
                if (i + 1 < g.nx) v += cx * Df.xf(i + 1, j);
                if (j > 0) v += cy * Df.yf(i, j);
                if (j + 1 < g.ny) v += cy * Df.yf(i, j + 1);
                d[g.cell(i, j)] = v;
            }
    }

    const DiscreteKernel* kernel_;
    MaterialModel material_;
    ChOptions opt_;
    std::optional<RegularizedModel> reg_;
};

}  // namespace nlchns
