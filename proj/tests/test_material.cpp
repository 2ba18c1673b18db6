#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "nlchns/assumptions.hpp"

using namespace nlchns;

namespace {

const MaterialModel& canonical() {
    static const MaterialModel m(PotentialSpec::logarithmic(0.5, 1.0), MobilitySpec::quadratic(1.0));
    return m;
}

double oracle(const std::function<double(double)>& f, double a, double b) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(f, a, b);
}

}  // namespace

TEST(Potential, LogDerivativesAtZero) {
    const auto& m = canonical();
    const auto v = m.potential(0.0);
    EXPECT_EQ(v.dF, 0.0);
    const double h = 1e-4;
    const double fd2 = (m.potential(h).F - 2 * v.F + m.potential(-h).F) / (h * h);
    EXPECT_NEAR(v.d2F, 0.5 - 1.0, 1e-14);
    EXPECT_NEAR(fd2, v.d2F, 1e-6);
    const double fd1 = (m.potential(0.3 + 1e-6).F - m.potential(0.3 - 1e-6).F) / 2e-6;
    EXPECT_NEAR(fd1, m.potential(0.3).dF, 1e-8);
}

TEST(Potential, SplitAndOddDerivative) {
    const auto& m = canonical();
    for (double s = -0.99; s < 1.0; s += 0.0137) {
        const auto v = m.potential(s);
        EXPECT_EQ(v.F, v.F1 + v.F2);
        EXPECT_NEAR(m.potential(-s).dF, -v.dF, 1e-13 * (1 + std::abs(v.dF)));
    }
}

TEST(Potential, SingularDomain) {
    EXPECT_THROW((void)canonical().potential(1.0), DomainError);
    EXPECT_THROW((void)canonical().potential(-1.5), DomainError);
    EXPECT_NEAR(canonical().F_closed(1.0), -0.5 + 0.5 * std::log(2.0), 1e-15);
    EXPECT_NEAR(canonical().F_closed(1.0 - 1e-12), canonical().F_closed(1.0), 1e-10);
}

TEST(Potential, QuarticWells) {
    MaterialModel q(PotentialSpec::quartic(), MobilitySpec::quadratic(1.0));
    for (double s : {-1.0, 1.0}) {
        EXPECT_EQ(q.potential(s).F, 0.0);
        EXPECT_EQ(q.potential(s).dF, 0.0);
    }
    EXPECT_NEAR(q.potential(0.5).F, 0.5625, 1e-15);
}

TEST(Potential, RejectsBadParameters) {
    EXPECT_THROW(MaterialModel(PotentialSpec::logarithmic(1.2, 1.0), MobilitySpec::quadratic(1.0)), ValidationError);
    EXPECT_THROW(MaterialModel(PotentialSpec::logarithmic(0.5, 1.0), MobilitySpec::quadratic(-1.0)), ValidationError);
}

TEST(Regularization, IdentityRegion) {
    RegularizedModel r(canonical(), 0.1, detect_eps0(canonical()));
    EXPECT_EQ(r.potential(0.5).F, canonical().potential(0.5).F);
    EXPECT_EQ(r.mobility(0.5), canonical().mobility(0.5));
}

TEST(Regularization, ClampedSecondDerivative) {
    RegularizedModel r(canonical(), 0.1, 0.25);
    EXPECT_EQ(r.potential(1.2).d2F, canonical().potential(0.9).d2F);
    EXPECT_EQ(r.potential(-3.0).d2F, canonical().potential(-0.9).d2F);
    EXPECT_EQ(r.mobility(1.2), canonical().mobility(0.9));
    EXPECT_GT(r.m1(), 0.0);
    // C^1 matching at the junction.
    const double a = r.potential(0.9 - 1e-9).dF, b = r.potential(0.9 + 1e-9).dF;
    EXPECT_NEAR(a, b, 1e-7);
}

TEST(Regularization, RejectsEpsOutsideWindow) {
    EXPECT_THROW(RegularizedModel(canonical(), 0.0, 0.25), ValidationError);
    EXPECT_THROW(RegularizedModel(canonical(), 0.3, 0.25), ValidationError);
}

TEST(Regularization, BelowAndMonotoneInEps) {
    RegularizedModel coarse(canonical(), 0.1, 0.25), fine(canonical(), 0.05, 0.25);
    for (double s = -0.999; s < 1.0; s += 0.001) {
        const double F1 = canonical().potential(s).F1;
        EXPECT_LE(coarse.potential(s).F1, F1 + 1e-14);
        EXPECT_GE(fine.potential(s).F1, coarse.potential(s).F1 - 1e-14);
        EXPECT_LE(coarse.entropy(s).M, canonical().entropy(s).M + 1e-14);
    }
}

TEST(Entropy, ClosedFormMatchesQuadrature) {
    const auto& m = canonical();
    EXPECT_EQ(m.entropy(0.0).M, 0.0);
    EXPECT_EQ(m.entropy(0.0).dM, 0.0);
    const double s = 0.5;
    const double M = oracle([&](double x) { return (s - x) / (1.0 - x * x); }, 0.0, s);
    EXPECT_NEAR(m.entropy(s).M, M, 1e-13);
    const double dM = oracle([&](double x) { return 1.0 / (1.0 - x * x); }, 0.0, s);
    EXPECT_NEAR(m.entropy(s).dM, dM, 1e-13);
}

TEST(Entropy, QuadratureFallback) {
    MaterialModel m(PotentialSpec::logarithmic(0.5, 1.0), MobilitySpec::strongly_degenerate(2.0, 2.0));
    const double s = -0.6;
    const double M = oracle([&](double x) { return (s - x) / (2.0 * std::pow(1 - x * x, 2)); }, 0.0, s);
    EXPECT_NEAR(m.entropy(s).M, M, 1e-11);
}

TEST(Products, CanonicalMobilityTimesCurvature) {
    const auto& m = canonical();
    for (double s : {-1.0, -0.7, 0.0, 0.3, 1.0}) EXPECT_NEAR(m.mF1pp(s), 0.5, 1e-14);
    const auto p0 = m.products(0.0);
    EXPECT_EQ(p0.Lambda1, 0.0);
    EXPECT_EQ(p0.Lambda2, 0.0);
    EXPECT_EQ(p0.Gamma, 0.0);
    const double L1 = oracle([&](double x) { return (1 - x * x) * 0.5 / (1 - x * x); }, 0.0, 0.5);
    EXPECT_NEAR(m.Lambda1(0.5), L1, 1e-10);
    const double L2 = oracle([&](double x) { return (1 - x * x) * -1.0; }, 0.0, 0.5);
    EXPECT_NEAR(m.Lambda2(0.5), L2, 1e-12);
    EXPECT_NEAR(m.Gamma(0.5), oracle([](double x) { return 1 - x * x; }, 0.0, 0.5), 1e-12);
}

TEST(Products, ContinuousAtEndpoints) {
    for (const auto& m : {canonical(), MaterialModel(PotentialSpec::logarithmic(0.4, 1.0),
                                                     MobilitySpec::strongly_degenerate(1.5, 2.0))}) {
        for (int side = -1; side <= 1; side += 2) {
            const double lim = m.mobility(side * (1 - 1e-9)) * m.potential(side * (1 - 1e-9)).d2F;
            EXPECT_NEAR(m.mFpp(side), lim, 1e-8);
        }
    }
}

TEST(Products, GenericPrimitiveByQuadrature) {
    auto sampler = [](double s) -> Jet {
        const double q = 1 - s * s;
        return {0.25 * ((1 + s) * std::log1p(s) + (1 - s) * std::log1p(-s)), 0.25 * std::atanh(s), 0.25 / q,
                0.5 * s / (q * q)};
    };
    MaterialModel m(PotentialSpec::custom(sampler, {0.0, 0.0, -0.4}), MobilitySpec::strongly_degenerate(1.0, 2.0));
    const double ref = oracle([](double x) { return (1 - x * x) * (1 - x * x) * 0.25 / (1 - x * x); }, 0.0, 0.5);
    EXPECT_NEAR(m.Lambda1(0.5), ref, 1e-10);
    EXPECT_NEAR(m.mF1pp(1.0), 0.0, 1e-8);
}

TEST(Assumptions, LogCriterionPasses) {
    auto rep = check_degenerate(canonical(), {0.6, 0.8, 1.0, 0.0});
    EXPECT_TRUE(rep.passed("A4"));
    EXPECT_GE(rep.c0, 0.1 - 1e-9);
    EXPECT_LE(rep.c0, 0.1 + 1e-9);
    EXPECT_TRUE(rep.all_pass({"mobility", "A1", "A2", "A3", "A4", "cond-1", "cond0", "cond1", "cond2"}));
    EXPECT_NEAR(rep.constant("cond0", "alpha0"), 0.5, 1e-12);
    EXPECT_NEAR(rep.constant("cond-1", "rho"), 0.8, 1e-6);
    EXPECT_NEAR(rep.c_J, 2.0 / rep.c0 + 1.0, 1e-12);
    EXPECT_GE(rep.grid_size, 10000u);
    EXPECT_TRUE(rep.to_json()["hypotheses"]["A4"]["pass"].get<bool>());
}

TEST(Assumptions, LogCriterionFails) {
    auto rep = check_degenerate(canonical(), {0.3, 0.5, 1.0, 0.0});
    EXPECT_FALSE(rep.passed("A4"));
    EXPECT_FALSE(rep.passed("cond-1"));
}

TEST(Assumptions, RegularizedBoundHolds) {
    KernelConstants kc{0.6, 0.8, 1.0, 0.0};
    auto rep = check_degenerate(canonical(), kc);
    RegularizedModel r(canonical(), 0.05, rep.eps0);
    for (double s = -5; s <= 5; s += 0.001) EXPECT_GE(r.potential(s).d2F + kc.a_low, rep.c0 - 1e-12);
    auto reg = check_regularized(r, kc);
    EXPECT_TRUE(reg.all_pass({"H1", "H2", "H3", "H4", "H5", "H6"}));
    EXPECT_EQ(reg.constant("H5", "r"), 2.0);
}

TEST(Assumptions, QuarticRegularized) {
    MaterialModel q(PotentialSpec::quartic(), MobilitySpec::quadratic(1.0));
    RegularizedModel r(q, 0.05, 0.25);
    auto weak = check_regularized(r, {3.0, 3.5, 1.0, 0.0});
    EXPECT_TRUE(weak.passed("H5"));
    const double rr = weak.constant("H5", "r");
    EXPECT_GT(rr, 1.0);
    EXPECT_LE(rr, 2.0);
    EXPECT_FALSE(weak.passed("H3"));
    auto strong = check_regularized(r, {4.5, 5.0, 1.0, 0.0});
    EXPECT_TRUE(strong.passed("H3"));
    EXPECT_TRUE(strong.passed("H7"));
}

TEST(Assumptions, LambdaSlopeBounds) {
    auto rep = check_degenerate(canonical(), {0.6, 0.8, 1.0, 0.0});
    const double a0 = rep.constant("cond0", "alpha0");
    double prev = canonical().Lambda1(-1.0);
    for (double s = -0.99; s <= 1.0; s += 0.01) {
        const double v = canonical().Lambda1(s);
        EXPECT_GT(v, prev);
        EXPECT_GE((v - prev) / 0.01, a0 - 1e-9);
        prev = v;
    }
}
