#pragma once

// Incompressible Navier–Stokes on the MAC grid with no-slip walls.
//
// One step: u* = u - dt A(u) (conservative upwind advection),
// (I - dt L_nu) u** = u* (implicit viscosity, ghost u = -u beyond walls),
// u*** = u** + dt (force + h), u = P u*** (Chorin projection).

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nlchns/cg.hpp"
#include "nlchns/grid.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/poisson.hpp"

namespace nlchns {

/// Capillary force (a phi - J*phi) grad phi with the prefactor averaged to faces.
/// Finite at pure phases; zero wherever phi is locally constant.
inline FaceField korteweg_force(const ScalarField& phi, const DiscreteKernel& kernel) {
    require_same_grid(kernel.grid(), phi.grid(), "korteweg_force");
    ScalarField s = kernel.convolve(phi);
    const ScalarField& a = kernel.a();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = a[k] * phi[k] - s[k];
    FaceField f = hadamard(face_average(s), grad(phi));
    f.zero_boundary_normal();
    return f;
}

/// mu grad phi on faces with mu_f = (a phi - J*phi)_f + (F(phi_R) - F(phi_L)) / (phi_R - phi_L).
/// The difference-quotient part equals grad F(phi) exactly, so this force and
/// korteweg_force have the same projection. `model` provides potential(s).F and .dF.
template <class Model>
FaceField mu_grad_phi_force(const ScalarField& phi, const DiscreteKernel& kernel, const Model& model) {
    const Grid2D& g = phi.grid();
    FaceField f = korteweg_force(phi, kernel);
    ScalarField F(g);
    for (std::size_t k = 0; k < phi.size(); ++k) F[k] = model.potential(phi[k]).F;
    auto dq = [&](std::size_t l, std::size_t r) {
        const double d = phi[r] - phi[l];
        if (d == 0.0) return model.potential(phi[l]).dF;
        return (F[r] - F[l]) / d;
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i)
            f.xf(i, j) += dq(g.cell(i - 1, j), g.cell(i, j)) * (phi(i, j) - phi(i - 1, j)) / g.hx();
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            f.yf(i, j) += dq(g.cell(i, j - 1), g.cell(i, j)) * (phi(i, j) - phi(i, j - 1)) / g.hy();
    return f;
}

struct ProjectionResult {
    FaceField u;
    ScalarField psi;  ///< u = u_star - grad psi, zero mean
    double div_max = 0.0;
};

/// Discrete Leray projection. u_star must have zero boundary-normal components.
inline ProjectionResult project(const FaceField& u_star, const NeumannSolver& solver) {
    const Grid2D& g = u_star.grid();
    require_same_grid(solver.grid(), g, "project");
    if (u_star.boundary_normal_max() != 0.0)
        throw ValidationError("project: input has nonzero boundary-normal velocity");
    ScalarField rhs = div(u_star);
    rhs *= -1.0;
    ProjectionResult r;
    const double terms = u_star.max_abs() * (2.0 / g.hx() + 2.0 / g.hy());
    r.psi = solver.solve(rhs, nullptr, terms);
    r.u = u_star - grad(r.psi);
    r.u.zero_boundary_normal();
    r.div_max = div(r.u).max_abs();
    return r;
}

inline ProjectionResult project(const FaceField& u_star) { return project(u_star, NeumannSolver(u_star.grid())); }

/// Reads a face field from lines "x|y,i,j,value" indexing x-faces (i in 0..nx,
/// j in 0..ny-1) or y-faces (i in 0..nx-1, j in 0..ny). Unlisted faces are 0;
/// an optional "component,i,j,value" header and '#' comments are skipped.
inline FaceField read_face_table(const std::string& path, const Grid2D& g) {
    std::ifstream is(path);
    if (!is) throw ValidationError("face table: cannot open '" + path + "'");
    FaceField f(g);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string comp, si, sj, sv;
        if (!std::getline(ls, comp, ',') || !std::getline(ls, si, ',') || !std::getline(ls, sj, ',') ||
            !std::getline(ls, sv))
            throw ValidationError("face table: malformed line " + std::to_string(lineno) + " in '" + path + "'");
        if (comp == "component") continue;
        int i = 0, j = 0;
        double v = 0.0;
        try {
            i = std::stoi(si);
            j = std::stoi(sj);
            v = std::stod(sv);
        } catch (const std::exception&) {
            throw ValidationError("face table: malformed line " + std::to_string(lineno) + " in '" + path + "'");
        }
        if (comp == "x" && i >= 0 && i <= g.nx && j >= 0 && j < g.ny) {
            f.xf(i, j) = v;
        } else if (comp == "y" && i >= 0 && i < g.nx && j >= 0 && j <= g.ny) {
            f.yf(i, j) = v;
        } else {
            throw ValidationError("face table: entry out of range on line " + std::to_string(lineno) + " in '" +
                                  path + "'");
        }
    }
    if (!f.all_finite()) throw ValidationError("face table: non-finite value in '" + path + "'");
    return f;
}

enum class ForcingKind { zero, constant, table };

/// Time-independent body force h on faces; boundary-normal entries are dropped.
struct Forcing {
    ForcingKind kind = ForcingKind::zero;
    double hx = 0.0;
    double hy = 0.0;
    std::string table_path;

    static Forcing zero() { return {}; }
    static Forcing constant(double x, double y) { return {ForcingKind::constant, x, y, {}}; }
    static Forcing table(std::string path) { return {ForcingKind::table, 0.0, 0.0, std::move(path)}; }

    [[nodiscard]] FaceField sample(const Grid2D& g) const {
        FaceField h(g);
        if (kind == ForcingKind::constant) {
            for (double& v : h.x()) v = hx;
            for (double& v : h.y()) v = hy;
        } else if (kind == ForcingKind::table) {
            h = read_face_table(table_path, g);
        }
        h.zero_boundary_normal();
        if (!h.all_finite()) throw ValidationError("forcing: non-finite value");
        return h;
    }
};

struct NsOptions {
    double nu = 1.0;
    double cfl_safety = 0.9;
    double cg_rel_tol = 1e-13;
    int cg_max_iter = 10000;
    /// Optional phi-dependent viscosity; when set, step() needs the phase field.
    std::function<double(double)> viscosity_of_phi;
};

struct NsState {
    FaceField u;
    ScalarField pressure;  ///< zero mean, diagnostic only
    double t = 0.0;
};

struct NsStepInfo {
    double dt = 0.0;
    FaceField advection;  ///< A(u^n)
    FaceField viscous;    ///< u** after the implicit viscous solve
    double visc_diss = 0.0;  ///< -<L_nu u**, u**> >= 0
    double div_max = 0.0;
    int cg_iterations = 0;
};

class NsModel {
public:
    NsModel(const Grid2D& g, NsOptions opt, Forcing h = Forcing::zero())
        : grid_(g), opt_(std::move(opt)), solver_(g), h_(h.sample(g)) {
        if (!(opt_.nu > 0.0 && std::isfinite(opt_.nu))) throw ValidationError("ns: viscosity must be positive");
        if (!(opt_.cfl_safety > 0.0 && opt_.cfl_safety <= 1.0))
            throw ValidationError("ns: cfl_safety must lie in (0, 1]");
    }

    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }
    [[nodiscard]] const NsOptions& options() const noexcept { return opt_; }
    [[nodiscard]] const FaceField& forcing() const noexcept { return h_; }
    [[nodiscard]] const NeumannSolver& solver() const noexcept { return solver_; }

    [[nodiscard]] NsState initial_state(FaceField u0) const {
        require_same_grid(grid_, u0.grid(), "ns_initial_state");
        NsState s;
        s.u = project(u0, solver_).u;
        s.pressure = ScalarField(grid_);
        return s;
    }

    /// Advective limit CFL * h / max|u| (infinite for u = 0).
    [[nodiscard]] double max_stable_dt(const FaceField& u) const {
        const double umax = u.max_abs();
        if (!(umax > 0.0)) return std::numeric_limits<double>::infinity();
        return opt_.cfl_safety * std::min(grid_.hx(), grid_.hy()) / umax;
    }

    /// Conservative upwind momentum advection div(u ⊗ u) on the MAC control volumes.
    [[nodiscard]] FaceField advection(const FaceField& u) const {
        const Grid2D& g = grid_;
        const int nx = g.nx, ny = g.ny;
        FaceField A(g);
        auto up = [](double vel, double lo, double hi) { return vel * (vel >= 0.0 ? lo : hi); };
        // x-momentum
        for (int j = 0; j < ny; ++j)
            for (int i = 1; i < nx; ++i) {
                auto fx = [&](int c) { return up(0.5 * (u.xf(c, j) + u.xf(c + 1, j)), u.xf(c, j), u.xf(c + 1, j)); };
                auto fy = [&](int n) {
                    if (n == 0 || n == ny) return 0.0;
                    return up(0.5 * (u.yf(i - 1, n) + u.yf(i, n)), u.xf(i, n - 1), u.xf(i, n));
                };
                A.xf(i, j) = (fx(i) - fx(i - 1)) / g.hx() + (fy(j + 1) - fy(j)) / g.hy();
            }
        // y-momentum
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                auto fy = [&](int c) { return up(0.5 * (u.yf(i, c) + u.yf(i, c + 1)), u.yf(i, c), u.yf(i, c + 1)); };
                auto fx = [&](int n) {
                    if (n == 0 || n == nx) return 0.0;
                    return up(0.5 * (u.xf(n, j - 1) + u.xf(n, j)), u.yf(n - 1, j), u.yf(n, j));
                };
                A.yf(i, j) = (fx(i + 1) - fx(i)) / g.hx() + (fy(j) - fy(j - 1)) / g.hy();
            }
        return A;
    }

    /// L_nu u = div(nu grad u) componentwise with no-slip ghosts; symmetric negative definite.
    /// nu_cells empty means the constant viscosity.
    [[nodiscard]] FaceField viscous_operator(const FaceField& u, const ScalarField* nu_cells = nullptr) const {
        FaceField out(grid_);
        apply_laplacian(u.x(), u.y(), out.x(), out.y(), nu_cells);
        return out;
    }

    /// nu ||grad u||^2 = -<L_nu u, u>.
    [[nodiscard]] double viscous_dissipation(const FaceField& u, const ScalarField* nu_cells = nullptr) const {
        return -inner(viscous_operator(u, nu_cells), u);
    }

    NsStepInfo step(NsState& state, const FaceField& force, double dt, const ScalarField* phi = nullptr,
                    bool check_cfl = true) const {
        const Grid2D& g = grid_;
        require_same_grid(g, state.u.grid(), "ns_step");
        require_same_grid(g, force.grid(), "ns_step");
        if (!(dt > 0.0)) throw ValidationError("ns_step: dt must be positive");
        if (check_cfl) {
            const double lim = max_stable_dt(state.u);
            if (dt > lim * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "ns_step: dt = " << dt << " violates the advective CFL; suggested dt <= " << lim;
                throw CflError(os.str(), lim);
            }
        }
        ScalarField nu_cells;
        const ScalarField* nu_ptr = nullptr;
        if (opt_.viscosity_of_phi) {
            if (!phi) throw ValidationError("ns_step: phi-dependent viscosity needs the phase field");
            nu_cells = ScalarField(g);
            for (std::size_t k = 0; k < nu_cells.size(); ++k) nu_cells[k] = opt_.viscosity_of_phi((*phi)[k]);
            nu_ptr = &nu_cells;
        }

        NsStepInfo info;
        info.dt = dt;
        info.advection = advection(state.u);
        FaceField ustar = state.u;
        for (std::size_t k = 0; k < ustar.x().size(); ++k) ustar.x()[k] -= dt * info.advection.x()[k];
        for (std::size_t k = 0; k < ustar.y().size(); ++k) ustar.y()[k] -= dt * info.advection.y()[k];
        ustar.zero_boundary_normal();

        // (I - dt L) u** = u*, unknowns are all faces (boundary rows are identity with zero rhs).
        const std::size_t nxf = ustar.x().size();
        std::vector<double> b(nxf + ustar.y().size());
        std::copy(ustar.x().begin(), ustar.x().end(), b.begin());
        std::copy(ustar.y().begin(), ustar.y().end(), b.begin() + static_cast<std::ptrdiff_t>(nxf));
        std::vector<double> x(b.size());
        std::copy(state.u.x().begin(), state.u.x().end(), x.begin());
        std::copy(state.u.y().begin(), state.u.y().end(), x.begin() + static_cast<std::ptrdiff_t>(nxf));
        std::vector<double> lx(nxf), ly(b.size() - nxf), tx(nxf), ty(b.size() - nxf);
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(nxf), tx.begin());
            std::copy(in.begin() + static_cast<std::ptrdiff_t>(nxf), in.end(), ty.begin());
            apply_laplacian(tx, ty, lx, ly, nu_ptr);
            for (std::size_t k = 0; k < nxf; ++k) out[k] = in[k] - dt * lx[k];
            for (std::size_t k = 0; k < ly.size(); ++k) out[nxf + k] = in[nxf + k] - dt * ly[k];
        };
        std::vector<double> diag(b.size());
        {
            FaceField d = laplacian_diagonal(nu_ptr);
            for (std::size_t k = 0; k < nxf; ++k) diag[k] = 1.0 - dt * d.x()[k];
            for (std::size_t k = 0; k < d.y().size(); ++k) diag[nxf + k] = 1.0 - dt * d.y()[k];
        }
        const CgResult cg = conjugate_gradient(apply, b, diag, x, opt_.cg_rel_tol, opt_.cg_max_iter);
        info.cg_iterations = cg.iterations;
        if (!cg.converged) {
            std::ostringstream os;
            os << "ns_step: viscous solve did not converge (relative residual " << cg.residual << ")";
            throw NumericalError(os.str());
        }
        FaceField uss(g);
        std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nxf), uss.x().begin());
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(nxf), x.end(), uss.y().begin());
        uss.zero_boundary_normal();
        info.viscous = uss;
        info.visc_diss = viscous_dissipation(uss, nu_ptr);

        FaceField u3 = uss;
        for (std::size_t k = 0; k < u3.x().size(); ++k) u3.x()[k] += dt * (force.x()[k] + h_.x()[k]);
        for (std::size_t k = 0; k < u3.y().size(); ++k) u3.y()[k] += dt * (force.y()[k] + h_.y()[k]);
        u3.zero_boundary_normal();

        ProjectionResult pr = project(u3, solver_);
        info.div_max = pr.div_max;
        if (!pr.u.all_finite()) throw NumericalError("ns_step: non-finite velocity");
        state.u = std::move(pr.u);
        state.pressure = std::move(pr.psi);
        state.pressure *= 1.0 / dt;
        state.t += dt;
        return info;
    }

private:
    // Cell viscosity, or the constant.
    [[nodiscard]] double nu_cell(const ScalarField* nu, int i, int j) const {
        return nu ? (*nu)(i, j) : opt_.nu;
    }
    // Node viscosity: mean over the (up to four) cells touching node (i, j).
    [[nodiscard]] double nu_node(const ScalarField* nu, int i, int j) const {
        if (!nu) return opt_.nu;
        double s = 0.0;
        int c = 0;
        for (int q = j - 1; q <= j; ++q)
            for (int p = i - 1; p <= i; ++p)
                if (p >= 0 && p < grid_.nx && q >= 0 && q < grid_.ny) {
                    s += (*nu)(p, q);
                    ++c;
                }
        return s / c;
    }

    void apply_laplacian(const std::vector<double>& ux, const std::vector<double>& uy, std::vector<double>& ox,
                         std::vector<double>& oy, const ScalarField* nu) const {
        const Grid2D& g = grid_;
        const int nx = g.nx, ny = g.ny;
        const double ix2 = 1.0 / (g.hx() * g.hx()), iy2 = 1.0 / (g.hy() * g.hy());
        std::fill(ox.begin(), ox.end(), 0.0);
        std::fill(oy.begin(), oy.end(), 0.0);
        auto X = [&](int i, int j) { return ux[g.xface(i, j)]; };
        auto Y = [&](int i, int j) { return uy[g.yface(i, j)]; };
        for (int j = 0; j < ny; ++j)
            for (int i = 1; i < nx; ++i) {
                const double c = X(i, j);
                double v = (nu_cell(nu, i, j) * (X(i + 1, j) - c) - nu_cell(nu, i - 1, j) * (c - X(i - 1, j))) * ix2;
                const double top = j + 1 < ny ? X(i, j + 1) - c : -2.0 * c;
                const double bot = j > 0 ? c - X(i, j - 1) : 2.0 * c;
                v += (nu_node(nu, i, j + 1) * top - nu_node(nu, i, j) * bot) * iy2;
                ox[g.xface(i, j)] = v;
            }
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double c = Y(i, j);
                double v = (nu_cell(nu, i, j) * (Y(i, j + 1) - c) - nu_cell(nu, i, j - 1) * (c - Y(i, j - 1))) * iy2;
                const double right = i + 1 < nx ? Y(i + 1, j) - c : -2.0 * c;
                const double left = i > 0 ? c - Y(i - 1, j) : 2.0 * c;
                v += (nu_node(nu, i + 1, j) * right - nu_node(nu, i, j) * left) * ix2;
                oy[g.yface(i, j)] = v;
            }
    }

    [[nodiscard]] FaceField laplacian_diagonal(const ScalarField* nu) const {
        const Grid2D& g = grid_;
        const int nx = g.nx, ny = g.ny;
        const double ix2 = 1.0 / (g.hx() * g.hx()), iy2 = 1.0 / (g.hy() * g.hy());
        FaceField d(g);
        // Boundary-normal faces are identity rows of I - dt L.
        for (int j = 0; j < ny; ++j)
            for (int i = 1; i < nx; ++i) {
                double v = -(nu_cell(nu, i, j) + nu_cell(nu, i - 1, j)) * ix2;
                v -= nu_node(nu, i, j + 1) * (j + 1 < ny ? 1.0 : 2.0) * iy2;
                v -= nu_node(nu, i, j) * (j > 0 ? 1.0 : 2.0) * iy2;
                d.xf(i, j) = v;
            }
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                double v = -(nu_cell(nu, i, j) + nu_cell(nu, i, j - 1)) * iy2;
                v -= nu_node(nu, i + 1, j) * (i + 1 < nx ? 1.0 : 2.0) * ix2;
                v -= nu_node(nu, i, j) * (i > 0 ? 1.0 : 2.0) * ix2;
                d.yf(i, j) = v;
            }
        return d;
    }

    Grid2D grid_;
    NsOptions opt_;
    NeumannSolver solver_;
    FaceField h_;
};

}  // namespace nlchns
