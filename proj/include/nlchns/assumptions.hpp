#pragma once

// Runnable checker for the structural hypotheses on (F, m, J). Every
// constant is a sampled bound on a dense s-grid, padded by half the local
// sample spread at the extremizer: certified up to grid resolution.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/material.hpp"

namespace nlchns {

/// Kernel-derived constants used by the checker.
struct KernelConstants {
    double a_low = 0.0;
    double a_star = 0.0;
    double b_const = 0.0;
    double evenness_defect = 0.0;

    static KernelConstants of(const DiscreteKernel& k) {
        return {k.a_low(), k.a_star(), k.b_const(), k.evenness_defect()};
    }
};

enum class CheckMode { degenerate, regularized };

struct HypothesisResult {
    std::string name;
    bool pass = false;
    std::map<std::string, double> constants;
    std::string note;
};

struct AssumptionReport {
    CheckMode mode = CheckMode::degenerate;
    std::size_t grid_size = 0;
    double window_lo = -1.0;
    double window_hi = 1.0;
    std::vector<HypothesisResult> items;
    double c0 = 0.0;   ///< inf (F'' + a) over the sampled window
    double c_J = 0.0;  ///< 2 b^2 / c0 + b
    double eps0 = 0.0; ///< (A3) monotonicity window of F1'' (caps the regularization parameter)

    [[nodiscard]] const HypothesisResult& get(const std::string& name) const {
        for (const auto& h : items)
            if (h.name == name) return h;
        throw ValidationError("assumption report: no entry '" + name + "'");
    }
    [[nodiscard]] bool passed(const std::string& name) const { return get(name).pass; }
    [[nodiscard]] double constant(const std::string& name, const std::string& key) const {
        const auto& c = get(name).constants;
        auto it = c.find(key);
        if (it == c.end()) throw ValidationError("assumption report: no constant '" + key + "' in " + name);
        return it->second;
    }
    [[nodiscard]] bool all_pass(const std::vector<std::string>& names) const {
        for (const auto& n : names)
            if (!passed(n)) return false;
        return true;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["mode"] = mode == CheckMode::degenerate ? "degenerate" : "regularized";
        j["certification"] = "certified up to grid resolution";
        j["grid_size"] = grid_size;
        j["window"] = {window_lo, window_hi};
        j["c0"] = c0;
        j["c_J"] = c_J;
        j["eps0"] = eps0;
        nlohmann::json h = nlohmann::json::object();
        for (const auto& it : items) {
            nlohmann::json e;
            e["pass"] = it.pass;
            nlohmann::json c = nlohmann::json::object();
            for (const auto& [k, v] : it.constants) {
                if (std::isfinite(v))
                    c[k] = v;
                else
                    c[k] = v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
            }
            e["constants"] = c;
            if (!it.note.empty()) e["note"] = it.note;
            h[it.name] = e;
        }
        j["hypotheses"] = h;
        return j;
    }
};

namespace assumptions_detail {

struct Extremum {
    double value;  // padded bound
    double at;
};

// Padded minimum of samples f(s_k) over the grid.
template <class Fn>
Extremum certified_min(const std::vector<double>& s, Fn&& f) {
    std::vector<double> v(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) v[k] = f(s[k]);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] < v[arg] || std::isnan(v[k])) arg = k;
    double pad = 0.0;
    if (arg > 0) pad = std::max(pad, std::abs(v[arg - 1] - v[arg]));
    if (arg + 1 < v.size()) pad = std::max(pad, std::abs(v[arg + 1] - v[arg]));
    return {v[arg] - 0.5 * pad, s[arg]};
}

template <class Fn>
Extremum certified_max(const std::vector<double>& s, Fn&& f) {
    auto e = certified_min(s, [&](double x) { return -f(x); });
    return {-e.value, e.at};
}

inline std::vector<double> uniform(double lo, double hi, std::size_t n, bool open) {
    std::vector<double> s;
    s.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        if (open && (k == 0 || k == n)) continue;
        const double t = static_cast<double>(k) / static_cast<double>(n);
        s.push_back(k == n / 2 && lo == -hi ? 0.0 : lo + (hi - lo) * t);
    }
    return s;
}

}  // namespace assumptions_detail

/// Sampling density of the checker (intervals on the base window).
inline constexpr std::size_t kAssumptionSamples = 200000;
/// Degenerate hypotheses (A1)-(A4), (H2), (H6), the mobility structure and
/// the regularity conditions (cond-1)-(cond2).
inline AssumptionReport check_degenerate(const MaterialModel& mat, const KernelConstants& kc, double h_norm = 0.0) {
    using namespace assumptions_detail;
    AssumptionReport rep;
    rep.mode = CheckMode::degenerate;
    rep.grid_size = kAssumptionSamples + 1;
    const auto closed = uniform(-1.0, 1.0, kAssumptionSamples, false);
    const auto open = uniform(-1.0, 1.0, kAssumptionSamples, true);
    const bool sing = mat.singular();
    auto Fpp = [&](double s) { return mat.potential(s).d2F; };
    auto F1pp = [&](double s) { return mat.f1(s)[2]; };
    auto F2pp = [&](double s) { return mat.f2(s)[2]; };

    {
        HypothesisResult r{"mobility", true, {}, ""};
        const auto& ms = mat.mobility_spec();
        const auto mn = certified_min(open, [&](double s) { return mat.mobility(s); });
        r.constants["m_max"] = certified_max(closed, [&](double s) { return mat.mobility(s); }).value;
        r.constants["m_min_interior"] = mn.value;
        r.constants["m_at_plus1"] = mat.mobility(1.0);
        r.constants["m_at_minus1"] = mat.mobility(-1.0);
        r.pass = ms.degenerate() && mat.mobility(1.0) == 0.0 && mat.mobility(-1.0) == 0.0;
        for (double s : open)
            if (!(mat.mobility(s) > 0.0)) r.pass = false;
        if (!ms.degenerate()) r.note = "mobility does not vanish at +-1";
        rep.items.push_back(r);
    }
    {
        HypothesisResult r{"A1", true, {}, ""};
        const auto sup = certified_max(closed, [&](double s) { return std::abs(mat.mFpp(s)); });
        r.constants["sup_abs_mFpp"] = sup.value;
        double jump = 0.0;
        for (int side = -1; side <= 1; side += 2) {
            const double edge = mat.mFpp(side);
            const double inner = mat.mobility(side * (1 - 1e-7)) *
                                 (sing ? mat.potential(side * (1 - 1e-7)).d2F : F2pp(side * (1 - 1e-7)));
            jump = std::max(jump, std::abs(edge - inner));
        }
        r.constants["edge_jump"] = jump;
        r.pass = std::isfinite(sup.value) && jump <= 1e-5 * (1.0 + sup.value);
        rep.items.push_back(r);
    }
    const double b2 = certified_min(closed, F2pp).value;
    const double gap = kc.a_star - kc.a_low;
    rep.eps0 = detect_eps0(mat);
    {
        HypothesisResult r{"A3", rep.eps0 > 0.0, {{"eps0", rep.eps0}}, ""};
        if (!sing) r.note = "no singular part";
        rep.items.push_back(r);
    }
    {
        HypothesisResult r{"A2", false, {}, ""};
        const double required = 4.0 * (gap - b2);
        r.constants["b2"] = b2;
        r.constants["required_a2"] = required;
        if (sing && rep.eps0 > 0.0) {
            // F1'' is monotone on the end windows, so its infimum there is the
            // value at +-(1-eps). Search the largest eps that clears the bound.
            auto edge_min = [&](double e) { return std::min(F1pp(1.0 - e), F1pp(-1.0 + e)); };
            double eps = rep.eps0;
            if (edge_min(eps) <= required) {
                double lo = 0.0, hi = eps;
                for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (mid > 0.0 && edge_min(mid) > required) lo = mid; else hi = mid;
                }
                eps = lo;
            }
            if (eps > 0.0 && edge_min(eps) > required) {
                r.pass = true;
                r.constants["a2"] = edge_min(eps);
                r.constants["eps0"] = eps;
            }
        } else {
            r.note = "no singular part";
        }
        rep.items.push_back(r);
    }
    {
        HypothesisResult r{"A4", false, {}, ""};
        const auto mn = sing ? certified_min(open, Fpp) : certified_min(closed, Fpp);
        rep.c0 = mn.value + kc.a_low;
        r.constants["inf_Fpp"] = mn.value;
        r.constants["a_low"] = kc.a_low;
        r.constants["c0"] = rep.c0;
        r.pass = rep.c0 > 0.0;
        rep.items.push_back(r);
    }
    {
        HypothesisResult r{"H2", kc.a_low >= 0.0 && std::isfinite(kc.a_star) && std::isfinite(kc.b_const), {}, ""};
        r.constants = {{"a_star", kc.a_star}, {"a_low", kc.a_low}, {"b", kc.b_const}, {"evenness_defect", kc.evenness_defect}};
        if (kc.a_low < 0.0) r.note = "a(x) < 0 somewhere";
        rep.items.push_back(r);
    }
    rep.items.push_back({"H6", std::isfinite(h_norm), {{"h_norm", h_norm}}, ""});
    {
        HypothesisResult r{"cond-1", false, {}, ""};
        double rho = 0.0;
        bool ok = true;
        for (double s : open) {
            const double need = -F2pp(s) - kc.a_low;
            if (need <= 0.0) continue;
            const double f1 = sing ? F1pp(s) : 0.0;
            if (!(f1 > 0.0)) {
                ok = false;
                break;
            }
            rho = std::max(rho, need / f1);
        }
        r.constants["rho"] = ok ? rho : std::numeric_limits<double>::infinity();
        r.pass = ok && rho < 1.0;
        rep.items.push_back(r);
    }
    {
        const auto a0 = certified_min(closed, [&](double s) { return mat.mF1pp(s); });
        rep.items.push_back({"cond0", a0.value > 0.0, {{"alpha0", a0.value}}, ""});
        const auto b0 = certified_max(closed, [&](double s) { return std::abs(mat.m2F1ppp(s)); });
        rep.items.push_back({"cond1", std::isfinite(b0.value), {{"beta0", b0.value}}, ""});
        const auto c2 = certified_min(open, [&](double s) {
            if (!sing) return 0.0;
            const Jet j = mat.f1(s);
            return j[1] * j[3];
        });
        rep.items.push_back({"cond2", c2.value >= -1e-9, {{"inf_F1p_F1ppp", c2.value}}, ""});
    }
    rep.c_J = rep.c0 > 0.0 ? 2.0 * kc.b_const * kc.b_const / rep.c0 + kc.b_const
                           : std::numeric_limits<double>::infinity();
    return rep;
}

/// (H1)-(H7) for the regularized pair (F_eps, m_eps) on a window of R.
inline AssumptionReport check_regularized(const RegularizedModel& reg, const KernelConstants& kc, double h_norm = 0.0) {
    using namespace assumptions_detail;
    AssumptionReport rep;
    rep.mode = CheckMode::regularized;
    const bool clamped = reg.clamps_potential();
    const double W = clamped ? 20.0 : 10.0;
    rep.window_lo = -W;
    rep.window_hi = W;
    // Dense on [-1, 1], coarser on the tails.
    std::vector<double> s;
    {
        const std::size_t tail = kAssumptionSamples / 10;
        for (std::size_t k = tail; k >= 1; --k) s.push_back(-1.0 - (W - 1.0) * static_cast<double>(k) / tail);
        for (double x : uniform(-1.0, 1.0, kAssumptionSamples, false)) s.push_back(x);
        for (std::size_t k = 1; k <= tail; ++k) s.push_back(1.0 + (W - 1.0) * static_cast<double>(k) / tail);
    }
    rep.grid_size = s.size();
    rep.eps0 = detect_eps0(reg.base());
    auto P = [&](double x) { return reg.potential(x); };

    {
        const auto m1 = certified_min(s, [&](double x) { return reg.mobility(x); });
        const auto m2 = certified_max(s, [&](double x) { return reg.mobility(x); });
        rep.items.push_back({"H1", m1.value > 0.0, {{"m1", m1.value}, {"m2", m2.value}}, ""});
    }
    {
        HypothesisResult r{"H2", kc.a_low >= 0.0 && std::isfinite(kc.a_star) && std::isfinite(kc.b_const), {}, ""};
        r.constants = {{"a_star", kc.a_star}, {"a_low", kc.a_low}, {"b", kc.b_const}, {"evenness_defect", kc.evenness_defect}};
        rep.items.push_back(r);
    }
    {
        const auto mn = certified_min(s, [&](double x) { return P(x).d2F; });
        rep.c0 = mn.value + kc.a_low;
        rep.items.push_back({"H3", rep.c0 > 0.0, {{"inf_Fpp", mn.value}, {"c0", rep.c0}}, ""});
    }
    {
        HypothesisResult r{"H4", false, {}, ""};
        const double target = 0.5 * (kc.a_star - kc.a_low);
        double growth;
        if (clamped) {
            growth = 0.5 * std::min(P(W).d2F, P(-W).d2F);
        } else {
            const auto& p = reg.base().potential_spec().f2;
            const int deg = p.degree();
            const double lead = deg >= 0 ? p.c[static_cast<std::size_t>(deg)] : 0.0;
            growth = (deg > 2 && deg % 2 == 0 && lead > 0) ? std::numeric_limits<double>::infinity()
                     : deg == 2                           ? lead
                                                          : -std::numeric_limits<double>::infinity();
        }
        r.constants["required_c1_above"] = target;
        r.constants["quadratic_growth"] = growth;
        if (growth > target) {
            const double c1 = target + 0.5 * std::min(1.0, growth - target);
            double c2 = certified_max(s, [&](double x) { return c1 * x * x - P(x).F; }).value;
            if (clamped) {
                // Quadratic tails beyond the window: exact maximum of c1 s^2 - F_eps.
                for (int side = -1; side <= 1; side += 2) {
                    const double s0 = side * W;
                    const auto e = P(s0);
                    const double C = e.d2F, B = e.dF, A = e.F;
                    double best = c1 * s0 * s0 - A;
                    if (2 * c1 - C != 0.0) {
                        const double st = (B - C * s0) / (2 * c1 - C);
                        if ((st - s0) * side > 0) {
                            const double d = st - s0;
                            best = std::max(best, c1 * st * st - (A + B * d + 0.5 * C * d * d));
                        }
                    }
                    c2 = std::max(c2, best);
                }
            }
            r.constants["c1"] = c1;
            r.constants["c2"] = c2;
            r.pass = std::isfinite(c2);
        }
        rep.items.push_back(r);
    }
    {
        HypothesisResult r{"H5", false, {}, ""};
        for (int k = 20; k >= 11 && !r.pass; --k) {
            const double rr = k / 10.0;
            auto ratio = [&](double x) {
                const auto e = P(x);
                return std::pow(std::abs(e.dF), rr) / (std::abs(e.F) + 1.0);
            };
            double slope = -std::numeric_limits<double>::infinity();
            for (int side = -1; side <= 1; side += 2)
                slope = std::max(slope, std::log(ratio(side * W) / ratio(side * W / 2)) / std::log(2.0));
            if (!(slope <= 0.05)) continue;
            double tail = 0.0;
            for (double x : s)
                if (std::abs(x) >= W / 2) tail = std::max(tail, ratio(x));
            const double c3 = std::max(2.0 * tail, 1e-12);
            const double c4 = std::max(0.0, certified_max(s, [&](double x) {
                                                const auto e = P(x);
                                                return std::pow(std::abs(e.dF), rr) - c3 * std::abs(e.F);
                                            }).value);
            r.pass = true;
            r.constants = {{"r", rr}, {"c3", c3}, {"c4", c4}, {"tail_log_slope", slope}};
        }
        if (!r.pass) r.note = "no r in (1,2] with bounded tail ratio";
        rep.items.push_back(r);
    }
    rep.items.push_back({"H6", std::isfinite(h_norm), {{"h_norm", h_norm}}, ""});
    {
        HypothesisResult r{"H7", false, {}, ""};
        auto g = [&](double x) { return P(x).d2F + kc.a_low; };
        for (double p : {6.0, 5.0, 4.0, 3.5, 3.0, 2.5, 2.1}) {
            double c5 = std::numeric_limits<double>::infinity();
            for (double x : s)
                if (std::abs(x) >= W / 2) c5 = std::min(c5, g(x) / std::pow(std::abs(x), p - 2.0));
            double slope = std::numeric_limits<double>::infinity();
            for (int side = -1; side <= 1; side += 2)
                slope = std::min(slope, std::log(g(side * W) / g(side * W / 2)) / std::log(2.0));
            if (!(c5 > 0.0) || !(slope >= (p - 2.0) * 0.95)) continue;
            c5 *= 0.5;
            const double c6 = std::max(
                0.0, certified_max(s, [&](double x) { return c5 * std::pow(std::abs(x), p - 2.0) - g(x); }).value);
            r.pass = true;
            r.constants = {{"p", p}, {"c5", c5}, {"c6", std::max(c6, 1e-300)}};
            break;
        }
        if (!r.pass) r.note = "F'' + a has no superquadratic growth";
        rep.items.push_back(r);
    }
    rep.c_J = rep.c0 > 0.0 ? 2.0 * kc.b_const * kc.b_const / rep.c0 + kc.b_const
                           : std::numeric_limits<double>::infinity();
    return rep;
}

}  // namespace nlchns
