#pragma once

// Potentials F = F1 + F2, mobilities m, their products, the entropy
// function M (m M'' = 1, M(0) = M'(0) = 0), the primitives
// Lambda1 = int_0^s m F1'', Lambda2 = int_0^s m F2'', Gamma = int_0^s m,
// and the eps-regularized pair (F_eps, m_eps).

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nlchns/core.hpp"
#include "nlchns/quadrature.hpp"

namespace nlchns {

/// Polynomial with ascending coefficients.
struct Polynomial {
    std::vector<double> c;

    [[nodiscard]] double derivative(double s, int order) const {
        double v = 0.0;
        for (int k = static_cast<int>(c.size()) - 1; k >= order; --k) {
            double f = 1.0;
            for (int q = 0; q < order; ++q) f *= (k - q);
            v = v * s + c[static_cast<std::size_t>(k)] * f;
        }
        return v;
    }
    [[nodiscard]] double operator()(double s) const { return derivative(s, 0); }
    [[nodiscard]] int degree() const {
        for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k)
            if (c[static_cast<std::size_t>(k)] != 0.0) return k;
        return -1;
    }
};

enum class PotentialKind { log, quartic, custom };
enum class SingularPart { none, log };

/// Values and derivatives 0..3 of a scalar function.
using Jet = std::array<double, 4>;

struct PotentialSpec {
    PotentialKind kind = PotentialKind::log;
    double theta = 0.5;
    double theta_c = 1.0;
    /// Singular part: none, the logarithmic entropy (theta), or a sampler.
    SingularPart singular = SingularPart::log;
    std::function<Jet(double)> f1_sampler;  ///< custom F1 on (-1,1), overrides `singular`
    Polynomial f2;

    static PotentialSpec logarithmic(double theta, double theta_c) {
        PotentialSpec p;
        p.kind = PotentialKind::log;
        p.theta = theta;
        p.theta_c = theta_c;
        p.singular = SingularPart::log;
        p.f2.c = {0.0, 0.0, -0.5 * theta_c};
        return p;
    }
    /// Regular double well sum_k c_k s^k; default (s^2 - 1)^2.
    static PotentialSpec quartic(std::vector<double> coefficients = {1.0, 0.0, -2.0, 0.0, 1.0}) {
        PotentialSpec p;
        p.kind = PotentialKind::quartic;
        p.singular = SingularPart::none;
        p.f2.c = std::move(coefficients);
        return p;
    }
    static PotentialSpec custom(std::function<Jet(double)> f1, std::vector<double> f2_coefficients) {
        PotentialSpec p;
        p.kind = PotentialKind::custom;
        p.singular = SingularPart::none;
        p.f1_sampler = std::move(f1);
        p.f2.c = std::move(f2_coefficients);
        return p;
    }

    [[nodiscard]] bool has_singular_part() const { return static_cast<bool>(f1_sampler) || singular == SingularPart::log; }

    void validate() const {
        if (kind == PotentialKind::log && !(theta > 0.0 && theta < theta_c))
            throw ValidationError("potential: log kind requires 0 < theta < theta_c");
        if (singular == SingularPart::log && !(theta > 0.0 && std::isfinite(theta)))
            throw ValidationError("potential: theta must be positive");
        for (double v : f2.c)
            if (!std::isfinite(v)) throw ValidationError("potential: non-finite coefficient");
    }
};

enum class MobilityKind { degenerate_quadratic, strongly_degenerate, constant };

/// degenerate_quadratic: k1 (1 - s^2); strongly_degenerate: k (1 - s^2)^exponent;
/// constant: m0. Degenerate kinds are evaluated at clamp(s, -1, 1).
struct MobilitySpec {
    MobilityKind kind = MobilityKind::degenerate_quadratic;
    double k = 1.0;
    double exponent = 1.0;

    static MobilitySpec quadratic(double k1) { return {MobilityKind::degenerate_quadratic, k1, 1.0}; }
    static MobilitySpec strongly_degenerate(double k, double exponent) {
        return {MobilityKind::strongly_degenerate, k, exponent};
    }
    static MobilitySpec constant(double m0) { return {MobilityKind::constant, m0, 0.0}; }

    [[nodiscard]] bool degenerate() const { return kind != MobilityKind::constant; }
    [[nodiscard]] double power() const { return kind == MobilityKind::degenerate_quadratic ? 1.0 : exponent; }

    void validate() const {
        if (!(k > 0.0 && std::isfinite(k))) throw ValidationError("mobility: coefficient must be positive");
        if (kind == MobilityKind::strongly_degenerate && !(exponent >= 1.0))
            throw ValidationError("mobility: exponent must be >= 1");
    }
};

struct PotentialValue {
    double F, dF, d2F;
    double F1, dF1, d2F1, d3F1;
    double F2, dF2, d2F2;
};

struct ProductTerms {
    double mF2;        ///< m F''
    double mF1_2;      ///< m F1''
    double m2F1_3;     ///< m^2 F1'''
    double Lambda1;
    double Lambda2;
    double Gamma;
};

struct EntropyValue {
    double M;
    double dM;
};

/// Exact (degenerate) constitutive model.
class MaterialModel {
public:
    /// Arguments closer than this to +-1 are refused by singular evaluators.
    static constexpr double kSingularGuard = 1e-9;

    MaterialModel(PotentialSpec p, MobilitySpec m) : pot_(std::move(p)), mob_(m) {
        pot_.validate();
        mob_.validate();
    }

    [[nodiscard]] const PotentialSpec& potential_spec() const noexcept { return pot_; }
    [[nodiscard]] const MobilitySpec& mobility_spec() const noexcept { return mob_; }
    [[nodiscard]] bool singular() const { return pot_.has_singular_part(); }

    /// Singular part jet on (-1,1); zero when there is none.
    [[nodiscard]] Jet f1(double s) const {
        if (pot_.f1_sampler) {
            if (!(std::abs(s) < 1.0)) throw DomainError("F1 evaluated outside (-1,1)");
            return pot_.f1_sampler(s);
        }
        if (pot_.singular == SingularPart::none) return {0.0, 0.0, 0.0, 0.0};
        if (!(std::abs(s) < 1.0)) throw DomainError("logarithmic F1 evaluated at |s| >= 1");
        const double th = pot_.theta;
        const double q = (1.0 - s) * (1.0 + s);
        return {0.5 * th * ((1.0 + s) * std::log1p(s) + (1.0 - s) * std::log1p(-s)), th * std::atanh(s), th / q,
                2.0 * th * s / (q * q)};
    }

    [[nodiscard]] Jet f2(double s) const {
        return {pot_.f2(s), pot_.f2.derivative(s, 1), pot_.f2.derivative(s, 2), pot_.f2.derivative(s, 3)};
    }

    [[nodiscard]] PotentialValue potential(double s) const {
        if (singular() && !(std::abs(s) < 1.0))
            throw DomainError("potential: singular potential evaluated at |s| >= 1");
        const Jet a = f1(s), b = f2(s);
        return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[0], a[1], a[2], a[3], b[0], b[1], b[2]};
    }

    /// F on [-1,1] including the endpoints (the log F1 extends continuously
    /// to theta log 2); singular F outside [-1,1] is +inf.
    [[nodiscard]] double F_closed(double s) const {
        if (!singular()) return pot_.f2(s);
        if (std::abs(s) > 1.0) return std::numeric_limits<double>::infinity();
        if (std::abs(s) < 1.0) return potential(s).F;
        if (pot_.f1_sampler) return std::numeric_limits<double>::quiet_NaN();
        return pot_.theta * std::log(2.0) + pot_.f2(s);
    }

    [[nodiscard]] double mobility(double s) const {
        if (mob_.kind == MobilityKind::constant) return mob_.k;
        const double c = std::clamp(s, -1.0, 1.0);
        const double q = (1.0 - c) * (1.0 + c);
        return mob_.kind == MobilityKind::degenerate_quadratic ? mob_.k * q : mob_.k * std::pow(q, mob_.exponent);
    }

    [[nodiscard]] double dmobility(double s) const {
        if (mob_.kind == MobilityKind::constant || std::abs(s) > 1.0) return 0.0;
        const double q = (1.0 - s) * (1.0 + s);
        const double n = mob_.power();
        return -2.0 * n * mob_.k * s * (n == 1.0 ? 1.0 : std::pow(q, n - 1.0));
    }

    /// m F1'' with its continuous extension to [-1,1] (s clamped).
    [[nodiscard]] double mF1pp(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        if (!singular()) return 0.0;
        if (!pot_.f1_sampler && mob_.degenerate()) {
            const double q = (1.0 - c) * (1.0 + c);
            const double n = mob_.power();
            return pot_.theta * mob_.k * (n == 1.0 ? 1.0 : std::pow(q, n - 1.0));
        }
        if (std::abs(c) < 1.0 - 1e-6) return mobility(c) * f1(c)[2];
        return edge_limit(c, [this](double x) { return mobility(x) * f1(x)[2]; });
    }

    /// m F'' on [-1,1] (s clamped).
    [[nodiscard]] double mFpp(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        return mF1pp(c) + mobility(c) * pot_.f2.derivative(c, 2);
    }

    /// m^2 F1''' on [-1,1] (s clamped).
    [[nodiscard]] double m2F1ppp(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        if (!singular()) return 0.0;
        if (!pot_.f1_sampler && mob_.degenerate()) {
            const double q = (1.0 - c) * (1.0 + c);
            const double n = mob_.power();
            return 2.0 * pot_.theta * mob_.k * mob_.k * c * (n == 1.0 ? 1.0 : std::pow(q, 2.0 * n - 2.0));
        }
        if (std::abs(c) < 1.0 - 1e-6) {
            const double m = mobility(c);
            return m * m * f1(c)[3];
        }
        return edge_limit(c, [this](double x) {
            const double m = mobility(x);
            return m * m * f1(x)[3];
        });
    }

    [[nodiscard]] double Lambda1(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        if (!singular()) return 0.0;
        if (!pot_.f1_sampler && mob_.kind == MobilityKind::degenerate_quadratic) return pot_.theta * mob_.k * c;
        return integrate([this](double x) { return mF1pp(x); }, 0.0, c);
    }

    [[nodiscard]] double Lambda2(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        if (mob_.kind == MobilityKind::degenerate_quadratic && pot_.f2.degree() <= 2) {
            const double f2pp = pot_.f2.derivative(0.0, 2);
            return f2pp * mob_.k * (c - c * c * c / 3.0);
        }
        return integrate([this](double x) { return mobility(x) * pot_.f2.derivative(x, 2); }, 0.0, c);
    }

    [[nodiscard]] double Gamma(double s) const {
        const double c = std::clamp(s, -1.0, 1.0);
        switch (mob_.kind) {
            case MobilityKind::degenerate_quadratic: return mob_.k * (c - c * c * c / 3.0);
            case MobilityKind::constant: return mob_.k * c;
            case MobilityKind::strongly_degenerate: break;
        }
        return integrate([this](double x) { return mobility(x); }, 0.0, c);
    }

    [[nodiscard]] ProductTerms products(double s) const {
        return {mFpp(s), mF1pp(s), m2F1ppp(s), Lambda1(s), Lambda2(s), Gamma(s)};
    }

    /// Entropy M with m M'' = 1, M(0) = M'(0) = 0. Requires |s| < 1 for
    /// degenerate mobilities.
    [[nodiscard]] EntropyValue entropy(double s) const {
        if (mob_.kind == MobilityKind::constant) return {0.5 * s * s / mob_.k, s / mob_.k};
        if (!(std::abs(s) < 1.0)) throw DomainError("entropy: degenerate mobility requires |s| < 1");
        if (mob_.kind == MobilityKind::degenerate_quadratic) {
            const double c = 0.5 / mob_.k;
            return {c * ((1.0 + s) * std::log1p(s) + (1.0 - s) * std::log1p(-s)), c * (std::log1p(s) - std::log1p(-s))};
        }
        const double dM = integrate([this](double x) { return 1.0 / mobility(x); }, 0.0, s);
        const double M = integrate([this, s](double x) { return (s - x) / mobility(x); }, 0.0, s);
        return {M, dM};
    }

private:
    // One-sided limit at c = +-1 by linear extrapolation from the interior.
    template <class Fn>
    static double edge_limit(double c, Fn&& fn) {
        const double sgn = c > 0 ? 1.0 : -1.0;
        const double d = 1e-6;
        const double x1 = sgn * (1.0 - d), x2 = sgn * (1.0 - 2 * d);
        const double f1v = fn(x1), f2v = fn(x2);
        const double dist = std::abs(c - x1);
        return f1v + (f1v - f2v) * dist / d;
    }

    PotentialSpec pot_;
    MobilitySpec mob_;
};

/// Upper cap on the regularization window.
inline constexpr double kEps0Cap = 0.25;

/// Largest eps <= 0.25 such that F1'' is non-decreasing on [1-eps, 1) and
/// non-increasing on (-1, -1+eps], detected on a dense sample.
inline double detect_eps0(const MaterialModel& mat) {
    if (!mat.singular()) return kEps0Cap;
    const std::size_t n = 20000;
    double eps = kEps0Cap;
    for (int side = -1; side <= 1; side += 2) {
        double prev = mat.f1(side * (1.0 - 1e-9))[2];
        for (std::size_t k = 1; k <= n; ++k) {
            const double d = kEps0Cap * static_cast<double>(k) / static_cast<double>(n);
            const double v = mat.f1(side * (1.0 - d))[2];
            if (v > prev * (1.0 + 1e-14) + 1e-300) {
                eps = std::min(eps, kEps0Cap * static_cast<double>(k - 1) / static_cast<double>(n));
                break;
            }
            prev = v;
        }
    }
    return eps;
}

/// The eps-regularized pair: F_eps'' = F''(clamp(s, -1+eps, 1-eps)) with
/// value and slope continuous at +-(1-eps); m_eps = m(clamp(s, -1+eps, 1-eps)).
/// Potentials without a singular part are left unchanged.
class RegularizedModel {
public:
    RegularizedModel(const MaterialModel& base, double eps, double eps_max)
        : base_(base), eps_(eps), s0_(1.0 - eps) {
        if (!(eps > 0.0 && eps <= eps_max))
            throw ValidationError("regularize: eps must lie in (0, " + std::to_string(eps_max) + "]");
        lo_ = base_.potential(-s0_);
        hi_ = base_.potential(s0_);
        if (base_.mobility_spec().degenerate()) {
            Mlo_ = base_.entropy(-s0_);
            Mhi_ = base_.entropy(s0_);
        }
    }

    [[nodiscard]] double eps() const noexcept { return eps_; }
    [[nodiscard]] const MaterialModel& base() const noexcept { return base_; }
    [[nodiscard]] bool clamps_potential() const { return base_.singular(); }

    [[nodiscard]] PotentialValue potential(double s) const {
        if (!clamps_potential() || std::abs(s) <= s0_) return base_.potential(s);
        const PotentialValue& e = s > 0 ? hi_ : lo_;
        const double d = s - (s > 0 ? s0_ : -s0_);
        auto ext = [d](double v, double dv, double d2v) { return v + dv * d + 0.5 * d2v * d * d; };
        PotentialValue r{};
        r.F1 = ext(e.F1, e.dF1, e.d2F1);
        r.dF1 = e.dF1 + e.d2F1 * d;
        r.d2F1 = e.d2F1;
        r.d3F1 = 0.0;
        r.F2 = ext(e.F2, e.dF2, e.d2F2);
        r.dF2 = e.dF2 + e.d2F2 * d;
        r.d2F2 = e.d2F2;
        r.F = r.F1 + r.F2;
        r.dF = r.dF1 + r.dF2;
        r.d2F = r.d2F1 + r.d2F2;
        return r;
    }

    [[nodiscard]] double mobility(double s) const {
        if (!base_.mobility_spec().degenerate()) return base_.mobility(s);
        return base_.mobility(std::clamp(s, -s0_, s0_));
    }
    [[nodiscard]] double dmobility(double s) const {
        if (std::abs(s) >= s0_) return 0.0;
        return base_.dmobility(s);
    }
    [[nodiscard]] double m1() const { return std::min(mobility(s0_), mobility(-s0_)); }

    [[nodiscard]] EntropyValue entropy(double s) const {
        if (!base_.mobility_spec().degenerate() || std::abs(s) <= s0_) return base_.entropy(s);
        const EntropyValue& e = s > 0 ? Mhi_ : Mlo_;
        const double d = s - (s > 0 ? s0_ : -s0_);
        const double m = mobility(s);
        return {e.M + e.dM * d + 0.5 * d * d / m, e.dM + d / m};
    }

private:
    MaterialModel base_;
    double eps_;
    double s0_;
    PotentialValue lo_{}, hi_{};
    EntropyValue Mlo_{}, Mhi_{};
};

}  // namespace nlchns
