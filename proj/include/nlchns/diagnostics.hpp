#pragma once

// Energy, entropy and dissipation bookkeeping for the coupled scheme.
//
// All time derivatives are backward differences over one accepted step.
// Residuals pair every flux the scheme applied with the field it does work
// on, so they measure the time-discretization error of the budget and
// vanish as O(dt).

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlchns/assumptions.hpp"
#include "nlchns/ch.hpp"
#include "nlchns/grid.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/material.hpp"
#include "nlchns/ns.hpp"

namespace nlchns {

struct EnergyBreakdown {
    double kinetic = 0.0;
    double nonlocal = 0.0;
    double potential = 0.0;
    double total = 0.0;
};

/// 1/4 double integral of J (phi(x) - phi(y))^2, as 1/2 <a phi, phi> - 1/2 <phi, J*phi>.
inline double nonlocal_energy(const ScalarField& phi, const DiscreteKernel& kernel) {
    require_same_grid(kernel.grid(), phi.grid(), "nonlocal_energy");
    const ScalarField conv = kernel.convolve(phi);
    const ScalarField& a = kernel.a();
    KahanSum s;
    for (std::size_t k = 0; k < phi.size(); ++k) s.add(phi[k] * (a[k] * phi[k] - conv[k]));
    return 0.5 * s.value() * phi.grid().cell_volume();
}

namespace diagnostics_detail {

inline EnergyBreakdown assemble(const FaceField* u, const ScalarField& phi, const DiscreteKernel& kernel,
                                double potential) {
    EnergyBreakdown e;
    e.kinetic = u ? 0.5 * inner(*u, *u) : 0.0;
    e.nonlocal = nonlocal_energy(phi, kernel);
    e.potential = potential;
    e.total = e.kinetic + e.nonlocal + e.potential;
    return e;
}

}  // namespace diagnostics_detail

/// Degenerate energy: F evaluated at clamp(phi, -1, 1). A potential that is
/// unbounded at +-1 yields an infinite potential component.
inline EnergyBreakdown energy(const FaceField* u, const ScalarField& phi, const DiscreteKernel& kernel,
                              const MaterialModel& mat) {
    KahanSum s;
    bool unbounded = false;
    for (double v : phi.values()) {
        const double F = mat.F_closed(std::clamp(v, -1.0, 1.0));
        if (!std::isfinite(F)) {
            unbounded = true;
            continue;
        }
        s.add(F);
    }
    const double pot = unbounded ? std::numeric_limits<double>::infinity() : s.value() * phi.grid().cell_volume();
    return diagnostics_detail::assemble(u, phi, kernel, pot);
}

/// Regularized energy with F_eps (finite for every phi).
inline EnergyBreakdown energy(const FaceField* u, const ScalarField& phi, const DiscreteKernel& kernel,
                              const RegularizedModel& reg) {
    KahanSum s;
    for (double v : phi.values()) s.add(reg.potential(v).F);
    return diagnostics_detail::assemble(u, phi, kernel, s.value() * phi.grid().cell_volume());
}

struct BoundsMass {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double overshoot = 0.0;  ///< max(|phi| - 1)_+
};

inline BoundsMass bounds_mass_report(const ScalarField& phi) {
    BoundsMass r;
    r.mean = phi.mean();
    r.min = phi.min();
    r.max = phi.max();
    r.overshoot = std::max({0.0, r.max - 1.0, -1.0 - r.min});
    return r;
}

struct DissipationTerms {
    double visc = 0.0;       ///< nu ||grad u||^2
    double chem_reg = 0.0;   ///< <m_eps grad mu, grad mu>
    double chem_deg = 0.0;   ///< <(mF'' + m a)_f grad phi, grad phi>
    double flux_form = 0.0;  ///< ||J / sqrt(m)||^2 with a mobility floor; diagnostic only
};

inline constexpr double kMobilityFloor = 1e-14;

/// sum_f J_f^2 / max(m_f, floor) over faces.
inline double flux_form_dissipation(const FaceField& J, const FaceField& m_face) {
    FaceField w = J;
    for (std::size_t k = 0; k < w.x().size(); ++k) w.x()[k] /= std::max(m_face.x()[k], kMobilityFloor);
    for (std::size_t k = 0; k < w.y().size(); ++k) w.y()[k] /= std::max(m_face.y()[k], kMobilityFloor);
    return inner(w, J);
}

/// What one coupled (or CH-only) step used and produced.
struct StepFields {
    const ScalarField* phi0 = nullptr;
    const ScalarField* phi1 = nullptr;
    const ChStepInfo* ch = nullptr;
    // Velocity side; all null in CH-only runs.
    const FaceField* u0 = nullptr;
    const FaceField* u1 = nullptr;
    const NsStepInfo* ns = nullptr;
    const FaceField* force = nullptr;
    const FaceField* h = nullptr;
};

struct EnergyResidual {
    double residual = 0.0;
    DissipationTerms dissipation;
    double exchange = 0.0;  ///< total work of convection, advection and forcing terms
};

namespace diagnostics_detail {

// (1/2)(|u1|^2 - |u0|^2)/dt + visc + <A(u0), u0> - <force + h, u1>, plus the dissipation it used.
inline double kinetic_budget(const StepFields& s, double dt, DissipationTerms& d, double& exchange) {
    if (!s.ns) return 0.0;
    d.visc = s.ns->visc_diss;
    double work = inner(s.ns->advection, *s.u0);
    if (s.force) work -= inner(*s.force, *s.u1);
    if (s.h) work -= inner(*s.h, *s.u1);
    exchange += work;
    return 0.5 * (inner(*s.u1, *s.u1) - inner(*s.u0, *s.u0)) / dt + d.visc + work;
}

}  // namespace diagnostics_detail

/// Residual of 1/2 d/dt(|u|^2 + |phi|^2) + <D grad phi, grad phi> - <drift, grad phi>
/// - <convection, grad phi> + nu |grad u|^2 + <A(u), u> = <force + h, u>,
/// with phi terms at the new level.
inline EnergyResidual degenerate_energy_residual(const StepFields& s) {
    const ChStepInfo& ch = *s.ch;
    const double dt = ch.dt;
    EnergyResidual r;
    const FaceField g1 = grad(*s.phi1);
    r.dissipation.chem_deg = inner(hadamard(ch.D_face, g1), g1);
    r.dissipation.flux_form = flux_form_dissipation(ch.total_flux, ch.m_face);
    const double drift = inner(ch.drift, g1);
    const double conv = inner(ch.convective, g1);
    r.exchange = -conv;
    const double phi_part =
        0.5 * (inner(*s.phi1, *s.phi1) - inner(*s.phi0, *s.phi0)) / dt + r.dissipation.chem_deg - drift - conv;
    r.residual = phi_part + diagnostics_detail::kinetic_budget(s, dt, r.dissipation, r.exchange);
    return r;
}

/// Residual of dE/dt + nu |grad u|^2 + <m_eps grad mu, grad mu> - <convection, grad mu>
/// + <A(u), u> = <force + h, u>, mu taken at the old level as in the step.
inline EnergyResidual regularized_energy_residual(const StepFields& s, const DiscreteKernel& kernel,
                                                  const RegularizedModel& reg) {
    const ChStepInfo& ch = *s.ch;
    const double dt = ch.dt;
    EnergyResidual r;
    const FaceField gmu = grad(ch.mu);
    r.dissipation.chem_reg = inner(hadamard(ch.m_face, gmu), gmu);
    r.dissipation.flux_form = flux_form_dissipation(ch.total_flux, ch.m_face);
    const double conv = inner(ch.convective, gmu);
    r.exchange = -conv;
    const double dE = energy(nullptr, *s.phi1, kernel, reg).total - energy(nullptr, *s.phi0, kernel, reg).total;
    r.residual = dE / dt + r.dissipation.chem_reg - conv;
    r.residual += diagnostics_detail::kinetic_budget(s, dt, r.dissipation, r.exchange);
    return r;
}

/// int M_eps(phi).
inline double entropy_integral(const ScalarField& phi, const RegularizedModel& reg) {
    KahanSum s;
    for (double v : phi.values()) s.add(reg.entropy(v).M);
    return s.value() * phi.grid().cell_volume();
}

struct EntropyBalance {
    double M0 = 0.0;
    double M1 = 0.0;
    double lhs = 0.0;  ///< (M1 - M0)/dt + c0/2 |grad phi1|^2
    double rhs = 0.0;  ///< c_J |phi1|^2
    double tol = 0.0;
    bool holds = false;
};

inline constexpr double kEntropySlack = 1e-8;

/// Slack of the entropy inequality; a function of the logged columns only.
inline double entropy_tolerance(double lhs, double rhs, double rel_tol = kEntropySlack) {
    return rel_tol * std::max({std::abs(lhs), std::abs(rhs), 1.0});
}

inline EntropyBalance entropy_balance(const ScalarField& phi0, const ScalarField& phi1, double dt,
                                      const RegularizedModel& reg, double c0, double c_J,
                                      double rel_tol = kEntropySlack) {
    EntropyBalance b;
    b.M0 = entropy_integral(phi0, reg);
    b.M1 = entropy_integral(phi1, reg);
    const FaceField g = grad(phi1);
    const double rate = (b.M1 - b.M0) / dt;
    const double grad_term = 0.5 * c0 * inner(g, g);
    b.lhs = rate + grad_term;
    b.rhs = c_J * inner(phi1, phi1);
    b.tol = entropy_tolerance(b.lhs, b.rhs, rel_tol);
    b.holds = b.lhs <= b.rhs + b.tol;
    return b;
}

/// Constants of the H^-1 contraction estimate. With delta = (1 - rho) alpha0 / 8
/// and Young's inequality xy <= delta x^2 + y^2 / (4 delta):
/// C1 = (m* b)^2/(4 delta), C2 = (2 m** b)^2/(4 delta), C3 = (2 m* b)^2/(4 delta),
/// C4 = 1/(4 delta), C5 = 2 max(C1 + C2 + C3, C4).
struct GronwallConstants {
    double rho = 0.0;
    double alpha0 = 0.0;
    double m_star = 0.0;
    double m_star2 = 0.0;
    double b = 0.0;
    double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0, C5 = 0.0;
};

inline GronwallConstants gronwall_constants(const AssumptionReport& rep, const MaterialModel& mat,
                                            const KernelConstants& kc) {
    GronwallConstants g;
    g.rho = rep.constant("cond-1", "rho");
    g.alpha0 = rep.constant("cond0", "alpha0");
    g.m_star = rep.constant("mobility", "m_max");
    g.b = kc.b_const;
    const std::size_t n = 20001;
    for (std::size_t k = 0; k < n; ++k) {
        const double s = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n - 1);
        g.m_star2 = std::max(g.m_star2, std::abs(mat.dmobility(s)));
    }
    const double delta = (1.0 - g.rho) * g.alpha0 / 8.0;
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        g.C1 = g.C2 = g.C3 = g.C4 = g.C5 = std::numeric_limits<double>::infinity();
        return g;
    }
    g.C1 = std::pow(g.m_star * g.b, 2) / (4.0 * delta);
    g.C2 = std::pow(2.0 * g.m_star2 * g.b, 2) / (4.0 * delta);
    g.C3 = std::pow(2.0 * g.m_star * g.b, 2) / (4.0 * delta);
    g.C4 = 1.0 / (4.0 * delta);
    g.C5 = 2.0 * std::max(g.C1 + g.C2 + g.C3, g.C4);
    return g;
}

/// Least-squares fit E(t) ~ A exp(-k (t - t0)) + C (A, C linear, k by Brent on log k),
/// then the envelope E(t) <= E(t0) exp(-k (t - t0)) + floor + K is checked.
/// K_ls = C - floor is the fitted constant; K is the least K >= K_ls for which the
/// envelope holds at every sample. raw_violations counts samples above the K_ls envelope.
struct EnvelopeFit {
    double k = 0.0;
    double A = 0.0;
    double C = 0.0;
    double floor = 0.0;
    double K_ls = 0.0;
    double K = 0.0;
    double rss = 0.0;
    int raw_violations = 0;
    int violations = 0;
};

inline EnvelopeFit dissipative_envelope(const std::vector<double>& t, const std::vector<double>& E, double floor,
                                        double k_guess = 1.0) {
    if (t.size() != E.size() || t.size() < 3) throw ValidationError("envelope: need at least 3 samples");
    if (!(k_guess > 0.0)) throw ValidationError("envelope: k_guess must be positive");
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i]) || !std::isfinite(E[i])) throw ValidationError("envelope: non-finite sample");
    const double t0 = t.front();
    const std::size_t n = t.size();

    struct Linear {
        double A, C, rss;
    };
    auto solve_linear = [&](double k) {
        KahanSum s11, s12, s1, sy1, sy;
        for (std::size_t i = 0; i < n; ++i) {
            const double b = std::exp(-k * (t[i] - t0));
            s11.add(b * b);
            s12.add(b);
            sy1.add(b * E[i]);
            sy.add(E[i]);
        }
        const double nn = static_cast<double>(n);
        const double det = s11.value() * nn - s12.value() * s12.value();
        Linear L{0.0, sy.value() / nn, 0.0};
        if (std::abs(det) > 1e-14 * s11.value() * nn) {
            L.A = (sy1.value() * nn - s12.value() * sy.value()) / det;
            L.C = (s11.value() * sy.value() - s12.value() * sy1.value()) / det;
        }
        KahanSum r;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = E[i] - L.A * std::exp(-k * (t[i] - t0)) - L.C;
            r.add(e * e);
        }
        L.rss = r.value();
        return L;
    };

    // Coarse scan over log k, then Brent inside the best bracket.
    const double lo = std::log(k_guess) - 12.0, hi = std::log(k_guess) + 12.0;
    const int scan = 240;
    int best = 0;
    double best_rss = std::numeric_limits<double>::infinity();
    for (int q = 0; q <= scan; ++q) {
        const double rss = solve_linear(std::exp(lo + (hi - lo) * q / scan)).rss;
        if (rss < best_rss) {
            best_rss = rss;
            best = q;
        }
    }
    const double a = lo + (hi - lo) * std::max(0, best - 1) / scan;
    const double b = lo + (hi - lo) * std::min(scan, best + 1) / scan;
    auto obj = [&](double lk) { return solve_linear(std::exp(lk)).rss; };
    const auto res = boost::math::tools::brent_find_minima(obj, a, b, std::numeric_limits<double>::digits);

    EnvelopeFit f;
    f.k = std::exp(res.first);
    const Linear L = solve_linear(f.k);
    f.A = L.A;
    f.C = L.C;
    f.rss = L.rss;
    f.floor = floor;
    f.K_ls = L.C - floor;
    const double tol = 1e-10 * std::max(1.0, max_abs(E));
    double need = f.K_ls;
    for (std::size_t i = 0; i < n; ++i) {
        const double gap = E[i] - E.front() * std::exp(-f.k * (t[i] - t0)) - floor;
        if (gap > f.K_ls + tol) ++f.raw_violations;
        need = std::max(need, gap);
    }
    f.K = need;
    for (std::size_t i = 0; i < n; ++i)
        if (E[i] > E.front() * std::exp(-f.k * (t[i] - t0)) + floor + f.K + tol) ++f.violations;
    return f;
}

/// One CSV row; NaN fields are written blank.
struct DiagnosticsRecord {
    double t = 0.0;
    double mass_mean = 0.0;
    double overshoot = 0.0;
    double E_total = 0.0;
    double E_kin = 0.0;
    double E_nonlocal = 0.0;
    double E_pot = 0.0;
    double visc_diss = 0.0;
    double chem_diss = 0.0;
    double residual_energy = 0.0;
    double entropy_M = std::numeric_limits<double>::quiet_NaN();
    double entropy_lhs = std::numeric_limits<double>::quiet_NaN();
    double entropy_rhs = std::numeric_limits<double>::quiet_NaN();
    double hminus1_twin = std::numeric_limits<double>::quiet_NaN();

    static constexpr const char* kHeader =
        "t,mass_mean,overshoot,E_total,E_kin,E_nonlocal,E_pot,visc_diss,chem_diss,residual_energy,entropy_M,"
        "entropy_lhs,entropy_rhs,hminus1_twin";

    [[nodiscard]] std::array<double, 14> values() const {
        return {t,         mass_mean,       overshoot, E_total,     E_kin,       E_nonlocal, E_pot,
                visc_diss, chem_diss, residual_energy, entropy_M, entropy_lhs, entropy_rhs, hminus1_twin};
    }
    static DiagnosticsRecord from_values(const std::array<double, 14>& v) {
        DiagnosticsRecord r;
        r.t = v[0];
        r.mass_mean = v[1];
        r.overshoot = v[2];
        r.E_total = v[3];
        r.E_kin = v[4];
        r.E_nonlocal = v[5];
        r.E_pot = v[6];
        r.visc_diss = v[7];
        r.chem_diss = v[8];
        r.residual_energy = v[9];
        r.entropy_M = v[10];
        r.entropy_lhs = v[11];
        r.entropy_rhs = v[12];
        r.hminus1_twin = v[13];
        return r;
    }
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return {};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_record(std::ostream& os, const DiagnosticsRecord& r) {
    const auto v = r.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) os << ',';
        os << format_double(v[k]);
    }
    os << '\n';
}

inline std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("diagnostics: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != DiagnosticsRecord::kHeader)
        throw ValidationError("diagnostics: unexpected header in '" + path + "'");
    std::vector<DiagnosticsRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::array<double, 14> v{};
        std::size_t pos = 0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const std::size_t end = line.find(',', pos);
            const std::string cell = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
            v[k] = cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell);
            if (end == std::string::npos && k + 1 < v.size())
                throw ValidationError("diagnostics: short row in '" + path + "'");
            pos = end + 1;
        }
        out.push_back(DiagnosticsRecord::from_values(v));
    }
    return out;
}

}  // namespace nlchns
