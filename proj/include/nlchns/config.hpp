#pragma once

// Run configuration: a versioned JSON document. Every error names the
// offending key as a JSON pointer, e.g. "/kernel/width".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlchns/ch.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/material.hpp"
#include "nlchns/ns.hpp"
#include "nlchns/snapshot.hpp"

namespace nlchns {

inline constexpr int kSchemaVersion = 1;

enum class Coupling { coupled, ch_only };

enum class VelocityKind { zero, constant, vortex, table };

/// Initial velocity (coupled) or prescribed velocity (ch_only).
struct VelocitySpec {
    VelocityKind kind = VelocityKind::zero;
    double ux = 0.0;
    double uy = 0.0;
    double umax = 1.0;  ///< vortex: exact max |u| over faces
    std::string path;   ///< table: face CSV
};

enum class IcKind { constant, spinodal, pure_phase, snapshot, cosine };

struct IcSpec {
    IcKind kind = IcKind::constant;
    double value = 0.0;       ///< constant level, or the sign of a pure phase
    double mean = 0.0;        ///< spinodal and cosine
    double amplitude = 0.0;   ///< spinodal noise half-width, cosine amplitude
    std::uint64_t seed = 0;   ///< spinodal
    int noise_nx = 0;         ///< spinodal: noise drawn on this grid and prolonged (0: simulation grid)
    int noise_ny = 0;
    int kx = 1;               ///< cosine mode numbers
    int ky = 1;
    std::string path;         ///< snapshot
};

struct OutputSpec {
    std::string directory;    ///< empty: no files
    int cadence_steps = 0;    ///< snapshot every this many steps (0: initial and final only)
};

struct Tolerances {
    double mass = 1e-12;
    double projection = 1e-10;
    double poisson = 1e-11;
    double entropy = 1e-8;
    double overshoot = 1e-2;
    double energy_slack = 1e-10;  ///< relative to |E(0)|
};

struct SimConfig {
    int schema_version = kSchemaVersion;
    int nx = 64, ny = 64;
    double Lx = 1.0, Ly = 1.0;
    KernelSpec kernel = KernelSpec::gaussian(0.1, 100.0);
    std::string kernel_table_path;
    PotentialSpec potential = PotentialSpec::logarithmic(0.3, 1.0);
    MobilitySpec mobility = MobilitySpec::quadratic(1.0);
    ChMode mode = ChMode::degenerate;
    double eps = 0.05;
    Coupling coupling = Coupling::coupled;
    double nu = 1.0;
    Forcing h = Forcing::zero();
    VelocitySpec velocity;
    bool ch_enabled = true;  ///< false: NS only, phi frozen and no capillary force
    double dt = 1e-4;
    double T = 1e-2;
    double cfl_safety = 0.9;
    bool van_leer = false;
    int retry_budget = 0;
    IcSpec ic;
    OutputSpec output;
    Tolerances tol;

    [[nodiscard]] Grid2D grid() const { return Grid2D(nx, ny, Lx, Ly); }
    [[nodiscard]] MaterialModel material() const { return MaterialModel(potential, mobility); }
    [[nodiscard]] ChOptions ch_options() const {
        ChOptions o;
        o.mode = mode;
        o.eps = eps;
        o.cfl_safety = cfl_safety;
        o.van_leer = van_leer;
        return o;
    }
    [[nodiscard]] NsOptions ns_options() const {
        NsOptions o;
        o.nu = nu;
        o.cfl_safety = cfl_safety;
        return o;
    }

    /// Number of steps to reach T; the last one may be shorter.
    [[nodiscard]] long steps() const {
        const double n = T / dt;
        const double r = std::round(n);
        return static_cast<long>(std::abs(n - r) <= 1e-9 * std::max(1.0, n) ? r : std::ceil(n));
    }

    void validate() const;
};

namespace config_detail {

/// JSON object view that remembers its pointer path and rejects unknown keys.
class Node {
public:
    Node(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ValidationError("config " + at() + ": " + msg); }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ValidationError("config " + path_ + "/" + key + ": " + msg);
    }
    [[nodiscard]] std::string at() const { return path_.empty() ? std::string("/") : path_; }
    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    void allow(std::initializer_list<const char*> keys) const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) fail(it.key(), "unknown key");
        }
    }

    [[nodiscard]] Node child(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        if (!j_.at(key).is_object()) fail(key, "expected an object");
        return Node(j_.at(key), path_ + "/" + key);
    }

    [[nodiscard]] double number(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        const auto& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "must be finite");
        return d;
    }
    [[nodiscard]] double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    [[nodiscard]] double positive(const std::string& key, double fallback) const {
        const double v = number(key, fallback);
        if (!(v > 0.0)) fail(key, "must be positive");
        return v;
    }
    [[nodiscard]] long integer(const std::string& key, long fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<long>();
    }
    [[nodiscard]] bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }
    [[nodiscard]] std::string string(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        const auto& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }
    [[nodiscard]] std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }
    [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
        if (!has(key)) fail(key, "missing");
        const auto& v = j_.at(key);
        if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail(key + "/" + std::to_string(i), "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

private:
    const nlohmann::json& j_;
    std::string path_;
};

// Re-throws a library ValidationError with the key that caused it.
template <class Fn>
void with_key(const Node& n, Fn&& fn) {
    try {
        fn();
    } catch (const ValidationError& e) {
        n.fail(e.what());
    }
}

inline void parse_kernel(const Node& n, SimConfig& c) {
    n.allow({"family", "width", "amplitude", "scale", "strength", "core_radius", "exponent", "cutoff", "table_path",
             "quadrature"});
    const std::string fam = n.string("family");
    KernelSpec k;
    if (fam == "gaussian") {
        k = KernelSpec::gaussian(n.number("width"), n.number("amplitude", 1.0), n.number("scale", 1.0));
    } else if (fam == "log2d") {
        k = KernelSpec::log2d(n.number("strength"), n.number("core_radius", 1.0), n.number("amplitude", 1.0));
    } else if (fam == "truncated_power") {
        k = KernelSpec::truncated_power(n.number("exponent"), n.number("cutoff"), n.number("amplitude", 1.0),
                                        n.number("scale", 1.0));
    } else if (fam == "table") {
        k.family = KernelFamily::table;
        k.amplitude = n.number("amplitude", 1.0);
        c.kernel_table_path = n.string("table_path");
    } else {
        n.fail("family", "unknown kernel family '" + fam + "'");
    }
    const std::string q = n.string("quadrature", "cell_average");
    if (q == "cell_average") k.quadrature = KernelQuadrature::cell_average;
    else if (q == "point") k.quadrature = KernelQuadrature::point;
    else n.fail("quadrature", "expected cell_average or point");
    with_key(n, [&] { k.validate(); });
    c.kernel = k;
}

inline void parse_potential(const Node& n, SimConfig& c) {
    n.allow({"kind", "theta", "theta_c", "coefficients"});
    const std::string kind = n.string("kind");
    if (kind == "log") {
        const double th = n.positive("theta", 0.3);
        const double tc = n.number("theta_c", 1.0);
        if (!(tc > th)) n.fail("theta_c", "must exceed theta (otherwise there is no phase separation)");
        c.potential = PotentialSpec::logarithmic(th, tc);
    } else if (kind == "quartic") {
        c.potential = n.has("coefficients") ? PotentialSpec::quartic(n.numbers("coefficients")) : PotentialSpec::quartic();
    } else {
        n.fail("kind", "expected log or quartic");
    }
}

inline void parse_mobility(const Node& n, SimConfig& c) {
    n.allow({"kind", "k", "exponent"});
    const std::string kind = n.string("kind");
    if (kind == "quadratic") c.mobility = MobilitySpec::quadratic(n.positive("k", 1.0));
    else if (kind == "strongly_degenerate") c.mobility = MobilitySpec::strongly_degenerate(n.positive("k", 1.0), n.number("exponent"));
    else if (kind == "constant") c.mobility = MobilitySpec::constant(n.positive("k", 1.0));
    else n.fail("kind", "expected quadratic, strongly_degenerate or constant");
    with_key(n, [&] { c.mobility.validate(); });
}

inline VelocitySpec parse_velocity(const Node& n) {
    n.allow({"kind", "x", "y", "umax", "path"});
    VelocitySpec v;
    const std::string kind = n.string("kind");
    if (kind == "zero") {
        v.kind = VelocityKind::zero;
    } else if (kind == "constant") {
        v.kind = VelocityKind::constant;
        v.ux = n.number("x", 0.0);
        v.uy = n.number("y", 0.0);
    } else if (kind == "vortex") {
        v.kind = VelocityKind::vortex;
        v.umax = n.number("umax", 1.0);
        if (!(v.umax >= 0.0)) n.fail("umax", "must be >= 0");
    } else if (kind == "table") {
        v.kind = VelocityKind::table;
        v.path = n.string("path");
    } else {
        n.fail("kind", "expected zero, constant, vortex or table");
    }
    return v;
}

inline void parse_coupling(const Node& n, SimConfig& c) {
    const std::string type = n.string("type");
    if (type == "coupled") {
        n.allow({"type", "nu", "h", "u0", "ch_enabled"});
        c.coupling = Coupling::coupled;
        c.nu = n.positive("nu", 1.0);
        c.ch_enabled = n.boolean("ch_enabled", true);
        if (n.has("u0")) c.velocity = parse_velocity(n.child("u0"));
        if (n.has("h")) {
            const Node h = n.child("h");
            h.allow({"kind", "x", "y", "path"});
            const std::string kind = h.string("kind");
            if (kind == "zero") c.h = Forcing::zero();
            else if (kind == "constant") c.h = Forcing::constant(h.number("x", 0.0), h.number("y", 0.0));
            else if (kind == "table") c.h = Forcing::table(h.string("path"));
            else h.fail("kind", "expected zero, constant or table");
        }
    } else if (type == "ch_only") {
        n.allow({"type", "u"});
        c.coupling = Coupling::ch_only;
        if (n.has("u")) c.velocity = parse_velocity(n.child("u"));
    } else {
        n.fail("type", "expected coupled or ch_only");
    }
}

inline void parse_ic(const Node& n, SimConfig& c) {
    const std::string kind = n.string("kind");
    IcSpec ic;
    if (kind == "constant") {
        n.allow({"kind", "value"});
        ic.kind = IcKind::constant;
        ic.value = n.number("value");
        if (std::abs(ic.value) > 1.0) n.fail("value", "must lie in [-1, 1]");
    } else if (kind == "spinodal") {
        n.allow({"kind", "mean", "amplitude", "seed", "noise_nx", "noise_ny"});
        ic.kind = IcKind::spinodal;
        ic.mean = n.number("mean", 0.0);
        ic.amplitude = n.number("amplitude", 0.05);
        const long seed = n.integer("seed", -1);
        if (seed < 0) n.fail("seed", "a non-negative seed is required for reproducibility");
        ic.seed = static_cast<std::uint64_t>(seed);
        ic.noise_nx = static_cast<int>(n.integer("noise_nx", 0));
        ic.noise_ny = static_cast<int>(n.integer("noise_ny", ic.noise_nx));
        if (!(ic.amplitude >= 0.0)) n.fail("amplitude", "must be >= 0");
        if (std::abs(ic.mean) + ic.amplitude > 1.0) n.fail("amplitude", "mean +- amplitude leaves [-1, 1]");
        if (ic.noise_nx < 0 || ic.noise_ny < 0) n.fail("noise_nx", "must be >= 0");
    } else if (kind == "pure_phase") {
        n.allow({"kind", "sign"});
        ic.kind = IcKind::pure_phase;
        ic.value = n.number("sign", 1.0);
        if (ic.value != 1.0 && ic.value != -1.0) n.fail("sign", "must be 1 or -1");
    } else if (kind == "snapshot") {
        n.allow({"kind", "path"});
        ic.kind = IcKind::snapshot;
        ic.path = n.string("path");
    } else if (kind == "cosine") {
        n.allow({"kind", "mean", "amplitude", "kx", "ky"});
        ic.kind = IcKind::cosine;
        ic.mean = n.number("mean", 0.0);
        ic.amplitude = n.number("amplitude", 0.5);
        ic.kx = static_cast<int>(n.integer("kx", 1));
        ic.ky = static_cast<int>(n.integer("ky", 1));
        if (std::abs(ic.mean) + std::abs(ic.amplitude) > 1.0) n.fail("amplitude", "mean +- amplitude leaves [-1, 1]");
    } else {
        n.fail("kind", "expected constant, spinodal, pure_phase, snapshot or cosine");
    }
    c.ic = ic;
}

}  // namespace config_detail

inline void SimConfig::validate() const {
    if (schema_version != kSchemaVersion) throw ValidationError("config /schema_version: unsupported version");
    (void)grid();
    if (!(dt > 0.0 && std::isfinite(dt))) throw ValidationError("config /dt: must be positive");
    if (!(T >= dt * (1.0 - 1e-12))) throw ValidationError("config /T: must be >= dt");
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw ValidationError("config /cfl_safety: must lie in (0, 1]");
    if (retry_budget < 0) throw ValidationError("config /retry_budget: must be >= 0");
    if (output.cadence_steps < 0) throw ValidationError("config /output/cadence_steps: must be >= 0");
    if (mode == ChMode::regularized) {
        const double e0 = detect_eps0(material());
        if (!(eps > 0.0 && eps <= e0))
            throw ValidationError("config /mode/eps: must lie in (0, " + std::to_string(e0) + "]");
    }
}

inline SimConfig parse_config(const nlohmann::json& j) {
    using config_detail::Node;
    const Node root(j, "");
    root.allow({"schema_version", "grid", "kernel", "potential", "mobility", "mode", "coupling", "dt", "T",
                "cfl_safety", "van_leer", "retry_budget", "ic", "output", "tolerances", "description"});
    SimConfig c;
    c.schema_version = static_cast<int>(root.integer("schema_version", -1));
    if (c.schema_version != kSchemaVersion)
        root.fail("schema_version", "expected " + std::to_string(kSchemaVersion));
    {
        const Node g = root.child("grid");
        g.allow({"nx", "ny", "Lx", "Ly"});
        c.nx = static_cast<int>(g.integer("nx", 64));
        c.ny = static_cast<int>(g.integer("ny", c.nx));
        c.Lx = g.positive("Lx", 1.0);
        c.Ly = g.positive("Ly", 1.0);
        config_detail::with_key(g, [&] { (void)c.grid(); });
    }
    if (root.has("kernel")) config_detail::parse_kernel(root.child("kernel"), c);
    if (root.has("potential")) config_detail::parse_potential(root.child("potential"), c);
    if (root.has("mobility")) config_detail::parse_mobility(root.child("mobility"), c);
    if (root.has("mode")) {
        const Node m = root.child("mode");
        m.allow({"type", "eps"});
        const std::string type = m.string("type");
        if (type == "degenerate") c.mode = ChMode::degenerate;
        else if (type == "regularized") c.mode = ChMode::regularized;
        else m.fail("type", "expected degenerate or regularized");
        c.eps = m.positive("eps", c.eps);
        if (c.mode == ChMode::regularized) {
            const double e0 = detect_eps0(c.material());
            if (c.eps > e0) m.fail("eps", "must lie in (0, " + std::to_string(e0) + "]");
        }
    }
    if (root.has("coupling")) config_detail::parse_coupling(root.child("coupling"), c);
    c.dt = root.positive("dt", c.dt);
    c.T = root.positive("T", c.T);
    if (c.T < c.dt * (1.0 - 1e-12)) root.fail("T", "must be >= dt");
    c.cfl_safety = root.number("cfl_safety", c.cfl_safety);
    if (!(c.cfl_safety > 0.0 && c.cfl_safety <= 1.0)) root.fail("cfl_safety", "must lie in (0, 1]");
    c.van_leer = root.boolean("van_leer", false);
    c.retry_budget = static_cast<int>(root.integer("retry_budget", 0));
    if (c.retry_budget < 0) root.fail("retry_budget", "must be >= 0");
    config_detail::parse_ic(root.child("ic"), c);
    if (root.has("output")) {
        const Node o = root.child("output");
        o.allow({"directory", "cadence_steps"});
        c.output.directory = o.string("directory", "");
        c.output.cadence_steps = static_cast<int>(o.integer("cadence_steps", 0));
        if (c.output.cadence_steps < 0) o.fail("cadence_steps", "must be >= 0");
    }
    if (root.has("tolerances")) {
        const Node t = root.child("tolerances");
        t.allow({"mass", "projection", "poisson", "entropy", "overshoot", "energy_slack"});
        c.tol.mass = t.positive("mass", c.tol.mass);
        c.tol.projection = t.positive("projection", c.tol.projection);
        c.tol.poisson = t.positive("poisson", c.tol.poisson);
        c.tol.entropy = t.positive("entropy", c.tol.entropy);
        c.tol.overshoot = t.positive("overshoot", c.tol.overshoot);
        c.tol.energy_slack = t.positive("energy_slack", c.tol.energy_slack);
    }
    return c;
}

inline SimConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config: malformed JSON in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Field construction from the specs.

/// Bilinear prolongation of cell data from a coarse grid onto g (same domain).
inline ScalarField prolong(const ScalarField& coarse, const Grid2D& g) {
    const Grid2D& c = coarse.grid();
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    return sample_cells(g, [&](double x, double y) {
        const double fx = x / c.hx() - 0.5, fy = y / c.hy() - 0.5;
        const int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
        const double tx = std::clamp(fx - i0, 0.0, 1.0), ty = std::clamp(fy - j0, 0.0, 1.0);
        auto v = [&](int i, int j) { return coarse(clampi(i, c.nx), clampi(j, c.ny)); };
        return (1 - ty) * ((1 - tx) * v(i0, j0) + tx * v(i0 + 1, j0)) + ty * ((1 - tx) * v(i0, j0 + 1) + tx * v(i0 + 1, j0 + 1));
    });
}

inline ScalarField make_initial_phi(const IcSpec& ic, const Grid2D& g) {
    switch (ic.kind) {
        case IcKind::constant:
        case IcKind::pure_phase:
            return ScalarField(g, ic.value);
        case IcKind::cosine:
            return sample_cells(g, [&](double x, double y) {
                return ic.mean + ic.amplitude * std::cos(kPi * ic.kx * x / g.Lx) * std::cos(kPi * ic.ky * y / g.Ly);
            });
        case IcKind::spinodal: {
            const int nx = ic.noise_nx > 0 ? ic.noise_nx : g.nx;
            const int ny = ic.noise_ny > 0 ? ic.noise_ny : g.ny;
            const Grid2D ng(nx, ny, g.Lx, g.Ly);
            // mt19937_64 output is fixed by the standard; the transform to [-1, 1) is ours, so
            // the field is identical across platforms.
            std::mt19937_64 rng(ic.seed);
            ScalarField noise(ng);
            for (auto& v : noise.values()) v = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
            const double nm = noise.mean();
            for (auto& v : noise.values()) v = ic.mean + ic.amplitude * (v - nm);
            ScalarField phi = (nx == g.nx && ny == g.ny) ? noise : prolong(noise, g);
            const double shift = ic.mean - phi.mean();
            for (auto& v : phi.values()) v = std::clamp(v + shift, -1.0, 1.0);
            return phi;
        }
        case IcKind::snapshot: {
            ScalarField f = snapshot::read(ic.path);
            const Grid2D& s = f.grid();
            if (s.nx != g.nx || s.ny != g.ny || s.Lx != g.Lx || s.Ly != g.Ly)
                throw ValidationError("config /ic/path: snapshot grid does not match the configured grid");
            if (f.max_abs() > 1.0) throw ValidationError("config /ic/path: snapshot leaves [-1, 1]");
            return f;
        }
    }
    throw ValidationError("config /ic/kind: unsupported");
}

/// Divergence-free interior recirculation from the stream function
/// sin^2(pi x/Lx) sin^2(pi y/Ly), scaled so max |u| over faces is umax exactly.
inline FaceField vortex_velocity(const Grid2D& g, double umax) {
    auto psi = [&](int i, int j) {
        if (i == 0 || j == 0 || i == g.nx || j == g.ny) return 0.0;
        return std::pow(std::sin(kPi * i / g.nx) * std::sin(kPi * j / g.ny), 2);
    };
    FaceField u(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) u.xf(i, j) = (psi(i, j + 1) - psi(i, j)) / g.hy();
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) u.yf(i, j) = -(psi(i + 1, j) - psi(i, j)) / g.hx();
    const double m = u.max_abs();
    if (m > 0.0) u *= umax / m;
    return u;
}

/// Face velocity for a spec. Constant and table fields are projected onto
/// the discretely divergence-free space; the vortex already lies in it.
inline FaceField make_velocity(const VelocitySpec& v, const Grid2D& g) {
    switch (v.kind) {
        case VelocityKind::zero:
            return FaceField(g);
        case VelocityKind::vortex:
            return vortex_velocity(g, v.umax);
        case VelocityKind::constant: {
            FaceField u(g);
            for (auto& x : u.x()) x = v.ux;
            for (auto& y : u.y()) y = v.uy;
            u.zero_boundary_normal();
            return project(u).u;
        }
        case VelocityKind::table:
            return project(read_face_table(v.path, g)).u;
    }
    return FaceField(g);
}

inline DiscreteKernel make_kernel(const SimConfig& c) {
    KernelSpec k = c.kernel;
    if (k.family == KernelFamily::table) {
        try {
            k.table = read_kernel_table(c.kernel_table_path);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config /kernel/table_path: ") + e.what());
        }
    }
    return build_kernel(k, c.grid());
}

}  // namespace nlchns
