#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nlchns/diagnostics.hpp"

using namespace nlchns;

namespace {

MaterialModel log_material() {
    return MaterialModel(PotentialSpec::logarithmic(0.3, 1.0), MobilitySpec::quadratic(1.0));
}

ScalarField random_field(const Grid2D& g, double lo, double hi, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(lo, hi);
    ScalarField f(g);
    for (auto& v : f.values()) v = U(rng);
    return f;
}

ScalarField smooth_ic(const Grid2D& g) {
    return sample_cells(g, [](double x, double y) {
        return 0.1 + 0.6 * std::cos(kPi * x) * std::cos(2 * kPi * y) + 0.2 * std::sin(kPi * y);
    });
}

FaceField vortex(const Grid2D& g, double amp) {
    auto psi = [&](int i, int j) {
        if (i == 0 || j == 0 || i == g.nx || j == g.ny) return 0.0;
        return amp * std::pow(std::sin(kPi * i * g.hx()) * std::sin(kPi * j * g.hy()), 2);
    };
    FaceField u(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) u.xf(i, j) = (psi(i, j + 1) - psi(i, j)) / g.hy();
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) u.yf(i, j) = -(psi(i + 1, j) - psi(i, j)) / g.hx();
    return u;
}

// O(N^4) brute force of 1/4 sum_x sum_y J(x-y) (phi(x) - phi(y))^2 |cell|^2.
double nonlocal_double_sum(const ScalarField& phi, const DiscreteKernel& k) {
    const Grid2D& g = phi.grid();
    long double s = 0.0L;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int q = 0; q < g.ny; ++q)
                for (int p = 0; p < g.nx; ++p) {
                    const long double d = phi(i, j) - phi(p, q);
                    s += static_cast<long double>(k.cell_avg(i - p, j - q)) * d * d;
                }
    return static_cast<double>(0.25L * s) * g.cell_volume() * g.cell_volume();
}

// Accumulated L1 residual of a CH-only run with prescribed u over [0, T].
double accumulated_residual(int steps, ChMode mode, double T) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChOptions opt;
    opt.mode = mode;
    ChModel ch(k, log_material(), opt);
    ChState s{smooth_ic(g), 0.0};
    const double ref = s.phi.mean();
    const FaceField u = vortex(g, 0.2);
    const double dt = T / steps;
    double acc = 0.0;
    for (int n = 0; n < steps; ++n) {
        const ScalarField phi0 = s.phi;
        const ChStepInfo info = ch.step(s, u, dt, ref);
        StepFields f;
        f.phi0 = &phi0;
        f.phi1 = &s.phi;
        f.ch = &info;
        const double r = mode == ChMode::degenerate ? degenerate_energy_residual(f).residual
                                                    : regularized_energy_residual(f, k, *ch.regularized()).residual;
        acc += std::abs(r) * dt;
    }
    return acc;
}

}  // namespace

TEST(Diagnostics, ConstantStateEnergyIsAreaTimesF) {
    Grid2D g(12, 12, 1.0, 2.0);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    MaterialModel mat = log_material();
    const EnergyBreakdown e = energy(nullptr, ScalarField(g, 0.3), k, mat);
    EXPECT_NEAR(e.nonlocal, 0.0, 1e-12);
    EXPECT_NEAR(e.total, 2.0 * mat.potential(0.3).F, 1e-12);
    EXPECT_EQ(e.kinetic, 0.0);
}

TEST(Diagnostics, NonlocalEnergyMatchesDoubleSum) {
    Grid2D g(16, 16);
    for (const KernelSpec& spec : {KernelSpec::gaussian(0.1, 100.0), KernelSpec::log2d(1.0),
                                   KernelSpec::truncated_power(2.0, 0.3, 5.0)}) {
        DiscreteKernel k = build_kernel(spec, g);
        const ScalarField phi = random_field(g, -1.0, 1.0, 17);
        const double fast = nonlocal_energy(phi, k);
        const double slow = nonlocal_double_sum(phi, k);
        EXPECT_LE(std::abs(fast - slow), 1e-10 * (1.0 + std::abs(slow))) << to_string(spec.family);
    }
}

TEST(Diagnostics, PurePhaseEnergyIsFinite) {
    Grid2D g(10, 10);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    FaceField u(g);
    u.xf(4, 4) = 0.5;
    const EnergyBreakdown e = energy(&u, ScalarField(g, 1.0), k, log_material());
    const double F1 = -0.5 + 0.3 * std::log(2.0);
    EXPECT_NEAR(e.potential, F1, 1e-14);
    EXPECT_NEAR(e.total, 0.5 * inner(u, u) + F1, 1e-12);
}

TEST(Diagnostics, UnboundedPotentialAtPureStateIsInfinite) {
    Grid2D g(8, 8);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 1.0), g);
    auto f1 = [](double s) -> Jet { return {-std::log(1 - s * s), 2 * s / (1 - s * s), 0.0, 0.0}; };
    MaterialModel mat(PotentialSpec::custom(f1, {0.0}), MobilitySpec::quadratic(1.0));
    ScalarField phi(g, 0.0);
    phi(2, 2) = 1.0;
    EXPECT_TRUE(std::isinf(energy(nullptr, phi, k, mat).potential));
}

TEST(Diagnostics, BoundsAndMass) {
    Grid2D g(8, 8);
    BoundsMass b = bounds_mass_report(ScalarField(g, 0.3));
    EXPECT_DOUBLE_EQ(b.mean, 0.3);
    EXPECT_EQ(b.overshoot, 0.0);
    ScalarField phi(g, 0.0);
    phi(1, 5) = 1.002;
    b = bounds_mass_report(phi);
    EXPECT_NEAR(b.overshoot, 0.002, 1e-15);
    phi(1, 5) = -1.01;
    EXPECT_NEAR(bounds_mass_report(phi).overshoot, 0.01, 1e-15);
}

TEST(Diagnostics, EquilibriumResidualsVanish) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    for (ChMode mode : {ChMode::degenerate, ChMode::regularized}) {
        ChOptions opt;
        opt.mode = mode;
        ChModel ch(k, log_material(), opt);
        ChState s{ScalarField(g, -0.2), 0.0};
        const ScalarField phi0 = s.phi;
        const ChStepInfo info = ch.step(s, FaceField(g), 1e-3, -0.2);
        StepFields f{&phi0, &s.phi, &info};
        const double r = mode == ChMode::degenerate ? degenerate_energy_residual(f).residual
                                                    : regularized_energy_residual(f, k, *ch.regularized()).residual;
        EXPECT_NEAR(r, 0.0, 1e-9);
    }
}

TEST(Diagnostics, PurePhaseResidualTermsAreZero) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChModel ch(k, log_material(), {});
    ChState s{ScalarField(g, 1.0), 0.0};
    const ScalarField phi0 = s.phi;
    const FaceField u = vortex(g, 1.0);
    const ChStepInfo info = ch.step(s, u, 0.5 * ch.max_stable_dt(s.phi, u), 1.0);
    StepFields f{&phi0, &s.phi, &info};
    const EnergyResidual r = degenerate_energy_residual(f);
    EXPECT_EQ(r.residual, 0.0);
    EXPECT_EQ(r.dissipation.chem_deg, 0.0);
    EXPECT_EQ(r.exchange, 0.0);
}

TEST(Diagnostics, RegularizedEnergyDecreasesWithoutFlow) {
    Grid2D g(32, 32);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    ChOptions opt;
    opt.mode = ChMode::regularized;
    ChModel ch(k, log_material(), opt);
    ChState s{random_field(g, -0.05, 0.05, 3), 0.0};
    const double ref = s.phi.mean();
    const FaceField u(g);
    double E = energy(nullptr, s.phi, k, *ch.regularized()).total;
    for (int n = 0; n < 100; ++n) {
        ch.step(s, u, 0.5 * ch.max_stable_dt(s.phi, u), ref);
        const double next = energy(nullptr, s.phi, k, *ch.regularized()).total;
        EXPECT_LE(next, E + 1e-12 * std::abs(E)) << "step " << n;
        E = next;
    }
}

TEST(Diagnostics, EnergyResidualConvergesFirstOrderInTime) {
    for (ChMode mode : {ChMode::degenerate, ChMode::regularized}) {
        const double r1 = accumulated_residual(40, mode, 0.02);
        const double r2 = accumulated_residual(80, mode, 0.02);
        const double r3 = accumulated_residual(160, mode, 0.02);
        EXPECT_GE(std::log2(r1 / r2), 0.9) << to_string(mode);
        EXPECT_GE(std::log2(r2 / r3), 0.9) << to_string(mode);
    }
}

TEST(Diagnostics, EntropyInequalityOnConstantAndSpinodalStates) {
    Grid2D g(32, 32);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    MaterialModel mat = log_material();
    ChOptions opt;
    opt.mode = ChMode::regularized;
    ChModel ch(k, mat, opt);
    const AssumptionReport rep = check_regularized(*ch.regularized(), KernelConstants::of(k));
    const ScalarField c(g, 0.4);
    const EntropyBalance eq = entropy_balance(c, c, 1e-3, *ch.regularized(), rep.c0, rep.c_J);
    EXPECT_EQ(eq.M1 - eq.M0, 0.0);
    EXPECT_TRUE(eq.holds);

    ChState s{random_field(g, -0.05, 0.05, 9), 0.0};
    const double ref = s.phi.mean();
    const FaceField u(g);
    for (int n = 0; n < 50; ++n) {
        const ScalarField phi0 = s.phi;
        const ChStepInfo info = ch.step(s, u, 0.5 * ch.max_stable_dt(s.phi, u), ref);
        EXPECT_TRUE(entropy_balance(phi0, s.phi, info.dt, *ch.regularized(), rep.c0, rep.c_J).holds);
    }
}

TEST(Diagnostics, EnvelopeRecoversSyntheticRate) {
    std::vector<double> t, E;
    for (int i = 0; i <= 200; ++i) {
        t.push_back(0.05 * i);
        E.push_back(2.0 * std::exp(-t.back()) + 1.0);
    }
    const EnvelopeFit f = dissipative_envelope(t, E, 1.0, 0.3);
    EXPECT_NEAR(f.k, 1.0, 1e-6);
    EXPECT_NEAR(f.A, 2.0, 1e-6);
    EXPECT_NEAR(f.K_ls, 0.0, 1e-6);
    EXPECT_EQ(f.violations, 0);
    EXPECT_EQ(f.raw_violations, 0);
}

TEST(Diagnostics, EnvelopeOfEquilibriumSeries) {
    std::vector<double> t, E;
    for (int i = 0; i < 50; ++i) {
        t.push_back(0.1 * i);
        E.push_back(-0.7);
    }
    const EnvelopeFit f = dissipative_envelope(t, E, -0.9);
    EXPECT_GT(f.k, 0.0);
    EXPECT_GE(f.K, -0.7 + 0.9 - 1e-12);
    EXPECT_EQ(f.violations, 0);
}

TEST(Diagnostics, GronwallConstantsFollowYoungSplit) {
    Grid2D g(16, 16);
    DiscreteKernel k = build_kernel(KernelSpec::gaussian(0.1, 100.0), g);
    const KernelConstants kc = KernelConstants::of(k);
    MaterialModel mat = log_material();
    const GronwallConstants c = gronwall_constants(check_degenerate(mat, kc), mat, kc);
    const double delta = (1.0 - c.rho) * c.alpha0 / 8.0;
    EXPECT_NEAR(c.m_star, 1.0, 1e-9);
    EXPECT_NEAR(c.m_star2, 2.0, 1e-12);
    EXPECT_NEAR(c.C4, 1.0 / (4.0 * delta), 1e-12 * c.C4);
    EXPECT_NEAR(c.C5, 2.0 * std::max(c.C1 + c.C2 + c.C3, c.C4), 1e-12 * c.C5);
    EXPECT_TRUE(std::isfinite(c.C5));

    MaterialModel quartic(PotentialSpec::quartic(), MobilitySpec::quadratic(1.0));
    EXPECT_TRUE(std::isinf(gronwall_constants(check_degenerate(quartic, kc), quartic, kc).C5));
}

TEST(Diagnostics, CsvRoundTripKeepsBlanks) {
    DiagnosticsRecord r;
    r.t = 0.125;
    r.E_total = -1.0 / 3.0;
    r.entropy_M = 2.5;
    std::ostringstream os;
    os << DiagnosticsRecord::kHeader << '\n';
    write_record(os, r);
    const std::string text = os.str();
    EXPECT_NE(text.find(",,"), std::string::npos);
    const std::string path = ::testing::TempDir() + "diag.csv";
    {
        std::ofstream f(path);
        f << text;
    }
    const auto back = read_diagnostics_csv(path);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].E_total, r.E_total);
    EXPECT_EQ(back[0].entropy_M, 2.5);
    EXPECT_TRUE(std::isnan(back[0].hminus1_twin));
    std::remove(path.c_str());
}
