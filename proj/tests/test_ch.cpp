#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nlchns/ch.hpp"

using namespace nlchns;

namespace {

MaterialModel log_material() {
    return MaterialModel(PotentialSpec::logarithmic(0.3, 1.0), MobilitySpec::quadratic(1.0));
}

// Divergence-free cellular flow from a node stream function vanishing on the walls.
FaceField cellular_flow(const Grid2D& g, double amp) {
    auto psi = [&](int i, int j) {
        if (i == 0 || j == 0 || i == g.nx || j == g.ny) return 0.0;
        const double x = i * g.hx(), y = j * g.hy();
        return amp * std::pow(std::sin(kPi * x) * std::sin(kPi * y), 2);
    };
    FaceField u(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) u.xf(i, j) = (psi(i, j + 1) - psi(i, j)) / g.hy();
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) u.yf(i, j) = -(psi(i + 1, j) - psi(i, j)) / g.hx();
    return u;
}

ScalarField random_field(const Grid2D& g, double lo, double hi, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(lo, hi);
    ScalarField f(g);
    for (auto& v : f.values()) v = U(rng);
    return f;
}

ScalarField smooth_blob(const Grid2D& g, double peak) {
    return sample_cells(g, [peak](double x, double y) {
        return peak * std::cos(kPi * x) * std::cos(kPi * y);
    });
}

}  // namespace

TEST(Ch, ConstantStateIsStationaryWithoutFlow) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChModel ch(k, log_material(), {});
    ChState s{ScalarField(g, 0.2), 0.0};
    FaceField u(g);
    for (int n = 0; n < 5; ++n) ch.step(s, u, 1e-4, 0.2);
    for (double v : s.phi.values()) EXPECT_NEAR(v, 0.2, 1e-12);
}

TEST(Ch, CellularFlowIsDiscretelyDivergenceFree) {
    Grid2D g(20, 12);
    FaceField u = cellular_flow(g, 0.5);
    EXPECT_LT(div(u).max_abs(), 1e-12);
    EXPECT_EQ(u.boundary_normal_max(), 0.0);
}

TEST(Ch, MassIsConservedEveryStep) {
    for (ChMode mode : {ChMode::degenerate, ChMode::regularized}) {
        for (bool vl : {false, true}) {
            Grid2D g(24, 24);
            DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
            ChOptions opt;
            opt.mode = mode;
            opt.van_leer = vl;
            ChModel ch(k, log_material(), opt);
            ChState s{random_field(g, -0.8, 0.8, 7), 0.0};
            const double m0 = s.phi.integral();
            FaceField u = cellular_flow(g, 1.0);
            const double dt = 0.5 * ch.max_stable_dt(s.phi, u);
            for (int n = 0; n < 10; ++n) {
                ch.step(s, u, dt, m0);
                EXPECT_NEAR(s.phi.integral(), m0, 1e-13);
            }
        }
    }
}

TEST(Ch, PurePhaseIsFrozenExactly) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChModel ch(k, log_material(), {});
    for (double c : {1.0, -1.0}) {
        ChState s{ScalarField(g, c), 0.0};
        FaceField u = cellular_flow(g, 2.0);
        const double dt = ch.max_stable_dt(s.phi, u);
        for (int n = 0; n < 10; ++n) ch.step(s, u, dt, c);
        for (double v : s.phi.values()) EXPECT_EQ(v, c);
    }
}

TEST(Ch, ChemicalPotentialMatchesDirectSum) {
    Grid2D g(10, 8);
    DiscreteKernel k = build_kernel(KernelSpec::truncated_power(2.0, 0.3, 4.0), g);
    MaterialModel mat = log_material();
    ChModel ch(k, mat, {});
    ScalarField phi = random_field(g, -0.9, 0.9, 3);
    ScalarField mu = ch.chemical_potential(phi);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            long double conv = 0.0L, a = 0.0L;
            for (int q = 0; q < g.ny; ++q)
                for (int p = 0; p < g.nx; ++p) {
                    const long double w = k.cell_avg(i - p, j - q) * g.cell_volume();
                    conv += w * phi(p, q);
                    a += w;
                }
            const double th = 0.3;
            const double x = phi(i, j);
            const double dF = th * 0.5 * std::log((1 + x) / (1 - x)) - x;
            const double expect = static_cast<double>(a * x - conv) + dF;
            EXPECT_NEAR(mu(i, j), expect, 1e-11 * (1.0 + std::abs(expect)));
        }
}

TEST(Ch, ConstantStateHasPotentialFPrime) {
    Grid2D g(12, 12);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    MaterialModel mat = log_material();
    ChModel ch(k, mat, {});
    ScalarField mu = ch.chemical_potential(ScalarField(g, -0.4));
    const double dF = mat.potential(-0.4).dF;
    for (double v : mu.values()) EXPECT_NEAR(v, dF, 1e-11);
}

TEST(Ch, DegenerateModeRefusesPotentialAtPureState) {
    Grid2D g(8, 8);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 10.0), g);
    ChModel ch(k, log_material(), {});
    ScalarField phi(g, 0.0);
    phi(3, 3) = 1.0;
    EXPECT_THROW((void)ch.chemical_potential(phi), DomainError);
}

TEST(Ch, RegularizedFluxApproachesDegenerateFlux) {
    // Fine enough that the O(h^2) gap between the two flux forms sits below the eps effect.
    Grid2D g(128, 128);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    MaterialModel mat = log_material();
    ScalarField phi = smooth_blob(g, 0.9995);
    ChModel deg(k, mat, {});
    const FaceField Jd = deg.degenerate_flux(phi);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        ChOptions opt;
        opt.mode = ChMode::regularized;
        opt.eps = eps;
        ChModel reg(k, mat, opt);
        const double d = l2_norm(reg.regularized_flux(phi) - Jd);
        EXPECT_LE(d, prev * (1.0 + 1e-9)) << "eps = " << eps;
        prev = d;
    }
}

TEST(Ch, FluxFormsAgreeAwayFromPureStatesUnderRefinement) {
    // Both discretize -m grad mu; the gap is a consistency error that shrinks with h.
    MaterialModel mat = log_material();
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {16, 32, 64}) {
        Grid2D g(n, n);
        DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
        ScalarField phi = smooth_blob(g, 0.6);
        ChOptions opt;
        opt.mode = ChMode::regularized;
        ChModel reg(k, mat, opt);
        ChModel deg(k, mat, {});
        const FaceField Jd = deg.degenerate_flux(phi);
        const double d = l2_norm(reg.regularized_flux(phi) - Jd) / l2_norm(Jd);
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 0.02);
}

TEST(Ch, OversizedStepIsRejectedWithSuggestion) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChModel ch(k, log_material(), {});
    ChState s{smooth_blob(g, 0.5), 0.0};
    FaceField u = cellular_flow(g, 5.0);
    double suggested = 0.0;
    try {
        ch.step(s, u, 10.0, 0.0);
        FAIL() << "expected CflError";
    } catch (const CflError& e) {
        suggested = e.suggested_dt;
    }
    EXPECT_GT(suggested, 0.0);
    EXPECT_EQ(s.t, 0.0);
    EXPECT_NO_THROW(ch.step(s, u, suggested, 0.0));
}

TEST(Ch, VanLeerReproducesLinearProfileInInterior) {
    Grid2D g(12, 6);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 1.0), g);
    ChOptions opt;
    opt.van_leer = true;
    ChModel ch(k, log_material(), opt);
    ScalarField phi = sample_cells(g, [](double x, double) { return 0.5 * x - 0.2; });
    FaceField u(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) u.xf(i, j) = 1.0;
    FaceField C = ch.convective_flux(phi, u, 0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 2; i < g.nx - 1; ++i) EXPECT_NEAR(C.xf(i, j), 0.5 * (i * g.hx()) - 0.2, 1e-14);
}

TEST(Ch, ConvectionOfReferenceStateVanishes) {
    Grid2D g(10, 10);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 1.0), g);
    ChModel ch(k, log_material(), {});
    FaceField C = ch.convective_flux(ScalarField(g, 0.3), cellular_flow(g, 1.0), 0.3);
    EXPECT_EQ(l2_norm(C), 0.0);
}

TEST(Ch, RegularizedModeRejectsEpsOutsideWindow) {
    Grid2D g(8, 8);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 1.0), g);
    ChOptions opt;
    opt.mode = ChMode::regularized;
    opt.eps = 0.6;
    EXPECT_THROW(ChModel(k, log_material(), opt), ValidationError);
}
