#pragma once

// Orchestration: one coupled or CH-only run (Lie splitting, velocity first,
// capillary force from phi^n), its files, and the canned experiments.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlchns/assumptions.hpp"
#include "nlchns/ch.hpp"
#include "nlchns/config.hpp"
#include "nlchns/diagnostics.hpp"
#include "nlchns/ns.hpp"
#include "nlchns/snapshot.hpp"

namespace nlchns {

/// FNV-1a over the bytes of both face arrays.
inline std::uint64_t fnv1a(const FaceField& u) {
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&](const std::vector<double>& v) {
        for (double d : v) {
            unsigned char b[sizeof(double)];
            std::memcpy(b, &d, sizeof(double));
            for (unsigned char c : b) {
                h ^= c;
                h *= 1099511628211ull;
            }
        }
    };
    feed(u.x());
    feed(u.y());
    return h;
}

/// One row of velocity.csv.
struct VelocityRecord {
    long step = 0;
    double t = 0.0;
    double E_kin = 0.0;
    double u_max = 0.0;
    double div_max = 0.0;
    double visc_diss = 0.0;
    std::uint64_t u_hash = 0;

    static constexpr const char* kHeader = "step,t,E_kin,u_max,div_max,visc_diss,u_hash";
};

inline void write_record(std::ostream& os, const VelocityRecord& r) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.u_hash));
    os << r.step << ',' << format_double(r.t) << ',' << format_double(r.E_kin) << ',' << format_double(r.u_max)
       << ',' << format_double(r.div_max) << ',' << format_double(r.visc_diss) << ',' << hash << '\n';
}

inline std::vector<VelocityRecord> read_velocity_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("velocity csv: cannot open '" + path + "'");
    std::string line;
    std::getline(is, line);
    if (line != VelocityRecord::kHeader) throw ValidationError("velocity csv: unexpected header in '" + path + "'");
    std::vector<VelocityRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (cells.size() != 7) throw ValidationError("velocity csv: malformed row in '" + path + "'");
        auto num = [](const std::string& s) {
            return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        VelocityRecord r;
        r.step = std::stol(cells[0]);
        r.t = num(cells[1]);
        r.E_kin = num(cells[2]);
        r.u_max = num(cells[3]);
        r.div_max = num(cells[4]);
        r.visc_diss = num(cells[5]);
        r.u_hash = std::stoull(cells[6], nullptr, 16);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checks that depend only on the logged rows.

struct RunChecks {
    long rows = 0;
    double max_mass_drift = 0.0;
    double max_overshoot = 0.0;
    double max_abs_residual = 0.0;
    double max_energy_increase = 0.0;  ///< max_n E^n - E^{n-1}
    double min_chem_diss = std::numeric_limits<double>::infinity();
    double max_div = 0.0;              ///< max div_max / (u_max / h), velocity rows only
    int entropy_checked = 0;
    int entropy_violations = 0;
    bool mass_conserved = true;
    bool bounded = true;
    bool energy_nonincreasing = true;
    bool entropy_holds = true;
    bool chem_diss_nonnegative = true;
    bool divergence_free = true;

    [[nodiscard]] nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        return {{"rows", rows},
                {"max_mass_drift", num(max_mass_drift)},
                {"max_overshoot", num(max_overshoot)},
                {"max_abs_residual", num(max_abs_residual)},
                {"max_energy_increase", num(max_energy_increase)},
                {"min_chem_diss", num(min_chem_diss)},
                {"max_relative_divergence", num(max_div)},
                {"entropy_checked", entropy_checked},
                {"entropy_violations", entropy_violations},
                {"flags",
                 {{"mass_conserved", mass_conserved},
                  {"bounded", bounded},
                  {"energy_nonincreasing", energy_nonincreasing},
                  {"entropy_holds", entropy_holds},
                  {"chem_diss_nonnegative", chem_diss_nonnegative},
                  {"divergence_free", divergence_free}}}};
    }
};

/// Flags from the diagnostics rows (and velocity rows when given; h is the
/// smallest grid spacing). simulate() and recheck_outputs() both use this.
inline RunChecks evaluate_records(const std::vector<DiagnosticsRecord>& rows, const Tolerances& tol,
                                  const std::vector<VelocityRecord>* vel = nullptr, double h = 1.0) {
    RunChecks c;
    c.rows = static_cast<long>(rows.size());
    if (rows.empty()) return c;
    const double m0 = rows.front().mass_mean;
    const double E0 = rows.front().E_total;
    for (std::size_t n = 0; n < rows.size(); ++n) {
        const auto& r = rows[n];
        c.max_mass_drift = std::max(c.max_mass_drift, std::abs(r.mass_mean - m0));
        c.max_overshoot = std::max(c.max_overshoot, r.overshoot);
        if (std::isfinite(r.residual_energy)) c.max_abs_residual = std::max(c.max_abs_residual, std::abs(r.residual_energy));
        if (std::isfinite(r.chem_diss)) c.min_chem_diss = std::min(c.min_chem_diss, r.chem_diss);
        if (n > 0 && std::isfinite(r.E_total) && std::isfinite(rows[n - 1].E_total)) {
            const double inc = r.E_total - rows[n - 1].E_total;
            c.max_energy_increase = n == 1 ? inc : std::max(c.max_energy_increase, inc);
            if (inc > tol.energy_slack * std::abs(E0)) c.energy_nonincreasing = false;
        }
        if (std::isfinite(r.entropy_lhs) && std::isfinite(r.entropy_rhs)) {
            ++c.entropy_checked;
            if (r.entropy_lhs > r.entropy_rhs + entropy_tolerance(r.entropy_lhs, r.entropy_rhs, tol.entropy))
                ++c.entropy_violations;
        }
    }
    c.mass_conserved = c.max_mass_drift <= tol.mass;
    c.bounded = c.max_overshoot <= tol.overshoot;
    c.entropy_holds = c.entropy_violations == 0;
    c.chem_diss_nonnegative = !(c.min_chem_diss < 0.0);
    if (vel) {
        for (const auto& v : *vel) {
            const double scale = std::max(v.u_max, 1e-300) / h;
            c.max_div = std::max(c.max_div, v.div_max / scale);
        }
        c.divergence_free = c.max_div <= tol.projection;
    }
    return c;
}

// ---------------------------------------------------------------------------

/// Hypotheses a run depends on; --strict turns a failure into an error.
inline std::vector<std::string> required_hypotheses(ChMode mode) {
    if (mode == ChMode::degenerate) return {"A1", "A2", "A3", "A4", "H2"};
    return {"H1", "H2", "H3"};
}

/// A run advanced one accepted step at a time.
class Simulation {
public:
    explicit Simulation(const SimConfig& cfg, std::optional<ScalarField> phi0 = std::nullopt)
        : cfg_(cfg), grid_((cfg.validate(), cfg.grid())), kernel_(std::make_unique<DiscreteKernel>(make_kernel(cfg))),
          ch_(*kernel_, cfg.material(), cfg.ch_options()) {
        FaceField h(grid_);
        if (cfg_.coupling == Coupling::coupled) {
            ns_.emplace(grid_, cfg_.ns_options(), cfg_.h);
            h = ns_->forcing();
            self_check_poisson();
        }
        const KernelConstants kc = KernelConstants::of(*kernel_);
        report_ = ch_.regularized() ? check_regularized(*ch_.regularized(), kc, l2_norm(h))
                                    : check_degenerate(ch_.material(), kc, l2_norm(h));
        ch_state_.phi = phi0 ? std::move(*phi0) : make_initial_phi(cfg_.ic, grid_);
        require_same_grid(grid_, ch_state_.phi.grid(), "simulation initial phi");
        if (ch_state_.phi.max_abs() > 1.0) throw ValidationError("config /ic: initial phi leaves [-1, 1]");
        phi_ref_ = ch_state_.phi.mean();
        const FaceField u0 = make_velocity(cfg_.velocity, grid_);
        if (ns_) {
            ns_state_ = ns_->initial_state(u0);
        } else {
            ns_state_.u = u0;
            ns_state_.pressure = ScalarField(grid_);
        }
        record_ = initial_record();
        vrecord_ = velocity_record(std::numeric_limits<double>::quiet_NaN(), 0.0);
        vrecord_.div_max = div(u()).max_abs();
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    [[nodiscard]] const SimConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }
    [[nodiscard]] const DiscreteKernel& kernel() const noexcept { return *kernel_; }
    [[nodiscard]] const ChModel& ch() const noexcept { return ch_; }
    [[nodiscard]] const NsModel* ns() const noexcept { return ns_ ? &*ns_ : nullptr; }
    [[nodiscard]] const AssumptionReport& assumptions() const noexcept { return report_; }
    [[nodiscard]] bool assumptions_ok() const { return report_.all_pass(required_hypotheses(cfg_.mode)); }
    [[nodiscard]] const ScalarField& phi() const noexcept { return ch_state_.phi; }
    [[nodiscard]] const FaceField& u() const noexcept { return ns_state_.u; }
    [[nodiscard]] double t() const noexcept { return ch_state_.t; }
    [[nodiscard]] long steps() const noexcept { return steps_; }
    [[nodiscard]] long rejected() const noexcept { return rejected_; }
    [[nodiscard]] double last_dt() const noexcept { return last_dt_; }
    [[nodiscard]] double phi_ref() const noexcept { return phi_ref_; }
    [[nodiscard]] const DiagnosticsRecord& record() const noexcept { return record_; }
    [[nodiscard]] const VelocityRecord& velocity() const noexcept { return vrecord_; }
    [[nodiscard]] bool finished() const { return t() >= cfg_.T * (1.0 - 1e-12); }

    /// One accepted step. A rejected step is retried with a smaller dt up to
    /// retry_budget times; after that the CflError propagates.
    void advance() {
        const double remaining = cfg_.T - t();
        double dt = remaining < cfg_.dt * (1.0 + 1e-9) ? remaining : cfg_.dt;
        for (int tries = 0;; ++tries) {
            try {
                attempt(dt);
                return;
            } catch (const CflError& e) {
                ++rejected_;
                if (tries >= cfg_.retry_budget) throw;
                dt = std::min(e.suggested_dt, 0.5 * dt);
            }
        }
    }

private:
    void self_check_poisson() const {
        ScalarField f = sample_cells(grid_, [&](double x, double y) {
            return std::cos(kPi * x / grid_.Lx) + std::cos(2.0 * kPi * y / grid_.Ly) * std::sin(kPi * x / grid_.Lx);
        });
        const double m = f.mean();
        for (auto& v : f.values()) v -= m;
        double res = 0.0;
        (void)ns_->solver().solve(f, &res);
        if (!(res <= cfg_.tol.poisson)) {
            std::ostringstream os;
            os << "poisson self-check: relative residual " << res << " exceeds " << cfg_.tol.poisson;
            throw NumericalError(os.str());
        }
    }

    [[nodiscard]] EnergyBreakdown energy_of(const ScalarField& phi, const FaceField& u) const {
        const FaceField* up = ns_ ? &u : nullptr;
        return ch_.regularized() ? energy(up, phi, *kernel_, *ch_.regularized())
                                 : energy(up, phi, *kernel_, ch_.material());
    }

    [[nodiscard]] bool entropy_enabled() const {
        return ch_.regularized() && cfg_.mobility.degenerate() && report_.c0 > 0.0 && std::isfinite(report_.c_J);
    }

    [[nodiscard]] DiagnosticsRecord initial_record() const {
        DiagnosticsRecord r;
        fill_state(r, phi(), u());
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        r.visc_diss = r.chem_diss = r.residual_energy = nan;
        if (entropy_enabled()) r.entropy_M = entropy_integral(phi(), *ch_.regularized());
        return r;
    }

    void fill_state(DiagnosticsRecord& r, const ScalarField& phi, const FaceField& u) const {
        const EnergyBreakdown e = energy_of(phi, u);
        const BoundsMass b = bounds_mass_report(phi);
        r.t = t();
        r.mass_mean = b.mean;
        r.overshoot = b.overshoot;
        r.E_total = e.total;
        r.E_kin = e.kinetic;
        r.E_nonlocal = e.nonlocal;
        r.E_pot = e.potential;
    }

    [[nodiscard]] VelocityRecord velocity_record(double visc, double div_max) const {
        VelocityRecord v;
        v.step = steps_;
        v.t = t();
        v.E_kin = 0.5 * inner(u(), u());
        v.u_max = u().max_abs();
        v.div_max = div_max;
        v.visc_diss = visc;
        v.u_hash = fnv1a(u());
        return v;
    }

    void attempt(double dt) {
        const ScalarField& phi0 = ch_state_.phi;
        const FaceField& u0 = ns_state_.u;
        NsState ns_next = ns_state_;
        NsStepInfo nsinfo;
        FaceField force(grid_);
        if (ns_) {
            if (cfg_.ch_enabled) force = korteweg_force(phi0, *kernel_);
            nsinfo = ns_->step(ns_next, force, dt, &phi0);
        }
        ChState ch_next = ch_state_;
        ChStepInfo chinfo;
        if (cfg_.ch_enabled) {
            chinfo = ch_.step(ch_next, ns_next.u, dt, phi_ref_);
        } else {
            ch_next.t += dt;
        }
        if (!ns_) ns_next.t += dt;

        // Residual before committing, it needs both levels.
        StepFields f;
        f.phi0 = &phi0;
        f.phi1 = &ch_next.phi;
        f.ch = &chinfo;
        if (ns_) {
            f.u0 = &u0;
            f.u1 = &ns_next.u;
            f.ns = &nsinfo;
            f.force = &force;
            f.h = &ns_->forcing();
        }
        DiagnosticsRecord r;
        if (cfg_.ch_enabled) {
            const EnergyResidual er = ch_.regularized()
                                          ? regularized_energy_residual(f, *kernel_, *ch_.regularized())
                                          : degenerate_energy_residual(f);
            r.residual_energy = er.residual;
            r.chem_diss = ch_.regularized() ? er.dissipation.chem_reg : er.dissipation.chem_deg;
        } else {
            DissipationTerms d;
            double ex = 0.0;
            r.residual_energy = diagnostics_detail::kinetic_budget(f, dt, d, ex);
            r.chem_diss = 0.0;
        }
        r.visc_diss = ns_ ? nsinfo.visc_diss : 0.0;
        if (entropy_enabled()) {
            const EntropyBalance eb =
                entropy_balance(phi0, ch_next.phi, dt, *ch_.regularized(), report_.c0, report_.c_J, cfg_.tol.entropy);
            r.entropy_M = eb.M1;
            r.entropy_lhs = eb.lhs;
            r.entropy_rhs = eb.rhs;
        }

        ch_state_ = std::move(ch_next);
        ns_state_ = std::move(ns_next);
        ++steps_;
        last_dt_ = dt;
        fill_state(r, phi(), u());
        record_ = r;
        vrecord_ = velocity_record(r.visc_diss, ns_ ? nsinfo.div_max : div(u()).max_abs());
    }

    SimConfig cfg_;
    Grid2D grid_;
    std::unique_ptr<DiscreteKernel> kernel_;
    ChModel ch_;
    std::optional<NsModel> ns_;
    AssumptionReport report_;
    ChState ch_state_;
    NsState ns_state_;
    double phi_ref_ = 0.0;
    long steps_ = 0;
    long rejected_ = 0;
    double last_dt_ = 0.0;
    DiagnosticsRecord record_;
    VelocityRecord vrecord_;
};

// ---------------------------------------------------------------------------

enum class RunStatus { ok, numerical_failure };

struct RunSummary {
    RunStatus status = RunStatus::ok;
    std::string message;
    long steps = 0;
    long rejected = 0;
    double t_final = 0.0;
    DiagnosticsRecord final_record;
    RunChecks checks;
    bool assumptions_ok = false;
    std::string output_dir;
    std::vector<DiagnosticsRecord> records;
    std::vector<VelocityRecord> velocity;

    [[nodiscard]] int exit_code() const { return status == RunStatus::ok ? 0 : 3; }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["status"] = status == RunStatus::ok ? "ok" : "numerical_failure";
        if (!message.empty()) j["message"] = message;
        j["steps"] = steps;
        j["rejected_steps"] = rejected;
        j["t_final"] = t_final;
        nlohmann::json fr = nlohmann::json::object();
        const auto v = final_record.values();
        std::stringstream hs(DiagnosticsRecord::kHeader);
        std::string name;
        for (std::size_t k = 0; std::getline(hs, name, ','); ++k)
            fr[name] = std::isfinite(v[k]) ? nlohmann::json(v[k]) : nlohmann::json(nullptr);
        j["final"] = fr;
        j["checks"] = checks.to_json();
        j["assumptions_ok"] = assumptions_ok;
        return j;
    }
};

struct RunOptions {
    bool strict = false;
    std::ostream* log = nullptr;  ///< progress and warnings; null is silent
};

namespace driver_detail {

inline std::string snapshot_name(long step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "phi_%06ld.bin", step);
    return buf;
}

/// Files of one run; inactive when the directory is empty.
class RunWriter {
public:
    explicit RunWriter(const std::string& dir) : dir_(dir) {
        if (dir_.empty()) return;
        std::filesystem::create_directories(dir_);
        diag_.open(path("diagnostics.csv"));
        vel_.open(path("velocity.csv"));
        if (!diag_ || !vel_) throw ValidationError("output: cannot write to '" + dir_ + "'");
        diag_ << DiagnosticsRecord::kHeader << '\n';
        vel_ << VelocityRecord::kHeader << '\n';
    }
    [[nodiscard]] bool active() const { return !dir_.empty(); }
    [[nodiscard]] std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

    void row(const DiagnosticsRecord& r, const VelocityRecord& v) {
        if (!active()) return;
        write_record(diag_, r);
        write_record(vel_, v);
    }
    void snapshot(long step, const ScalarField& phi) {
        if (active()) snapshot::write(path(snapshot_name(step)), phi);
    }
    void json(const std::string& name, const nlohmann::json& j) {
        if (!active()) return;
        std::ofstream os(path(name));
        os << j.dump(2) << '\n';
    }
    void flush() {
        if (!active()) return;
        diag_.flush();
        vel_.flush();
    }

private:
    std::string dir_;
    std::ofstream diag_;
    std::ofstream vel_;
};

}  // namespace driver_detail

/// Runs cfg to T. Numerical failures end the run early with partial outputs
/// and a summary whose status says so; validation errors propagate.
inline RunSummary simulate(const SimConfig& cfg, const RunOptions& opt = {}) {
    Simulation sim(cfg);
    RunSummary s;
    s.assumptions_ok = sim.assumptions_ok();
    if (!s.assumptions_ok) {
        std::string failed;
        for (const auto& name : required_hypotheses(cfg.mode))
            if (!sim.assumptions().passed(name)) failed += (failed.empty() ? "" : ", ") + name;
        if (opt.strict) throw ValidationError("assumptions: " + failed + " failed (strict mode)");
        if (opt.log) *opt.log << "warning: assumptions " << failed << " not certified\n";
    }
    driver_detail::RunWriter out(cfg.output.directory);
    s.output_dir = cfg.output.directory;
    out.json("assumptions.json", sim.assumptions().to_json());
    out.row(sim.record(), sim.velocity());
    out.snapshot(0, sim.phi());
    s.records.push_back(sim.record());
    s.velocity.push_back(sim.velocity());
    try {
        while (!sim.finished()) {
            sim.advance();
            out.row(sim.record(), sim.velocity());
            s.records.push_back(sim.record());
            s.velocity.push_back(sim.velocity());
            if (cfg.output.cadence_steps > 0 && sim.steps() % cfg.output.cadence_steps == 0)
                out.snapshot(sim.steps(), sim.phi());
        }
    } catch (const NumericalError& e) {
        s.status = RunStatus::numerical_failure;
        s.message = e.what();
        if (opt.log) *opt.log << "error: " << e.what() << '\n';
    } catch (const DomainError& e) {
        s.status = RunStatus::numerical_failure;
        s.message = e.what();
        if (opt.log) *opt.log << "error: " << e.what() << '\n';
    }
    if (cfg.output.cadence_steps == 0 || sim.steps() % cfg.output.cadence_steps != 0) out.snapshot(sim.steps(), sim.phi());
    out.flush();
    s.steps = sim.steps();
    s.rejected = sim.rejected();
    s.t_final = sim.t();
    s.final_record = sim.record();
    const Grid2D& g = sim.grid();
    s.checks = evaluate_records(s.records, cfg.tol, sim.ns() ? &s.velocity : nullptr, std::min(g.hx(), g.hy()));
    out.json("summary.json", s.to_json());
    return s;
}

/// The checks of a finished run from its output directory alone.
inline RunChecks recheck_outputs(const std::string& dir, const SimConfig& cfg) {
    const auto rows = read_diagnostics_csv((std::filesystem::path(dir) / "diagnostics.csv").string());
    const Grid2D g = cfg.grid();
    if (cfg.coupling == Coupling::coupled) {
        const auto vel = read_velocity_csv((std::filesystem::path(dir) / "velocity.csv").string());
        return evaluate_records(rows, cfg.tol, &vel, std::min(g.hx(), g.hy()));
    }
    return evaluate_records(rows, cfg.tol);
}

// ---------------------------------------------------------------------------
// Experiments

struct EpsilonRow {
    double eps = 0.0;
    double distance = std::numeric_limits<double>::quiet_NaN();  ///< ||phi_eps - phi_deg|| in L2(Q_T)
    double max_abs_phi = 0.0;  ///< largest |phi_eps| reached
    bool ok = false;
    std::string note;
};

struct EpsilonStudy {
    std::vector<EpsilonRow> rows;
    double reference_max_abs_phi = 0.0;
    bool partial = false;
    bool strictly_decreasing = false;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["partial"] = partial;
        j["strictly_decreasing"] = strictly_decreasing;
        j["reference_max_abs_phi"] = reference_max_abs_phi;
        for (const auto& r : rows) {
            nlohmann::json e{{"eps", r.eps}, {"ok", r.ok}, {"max_abs_phi", r.max_abs_phi}};
            e["distance"] = std::isfinite(r.distance) ? nlohmann::json(r.distance) : nlohmann::json(nullptr);
            if (!r.note.empty()) e["note"] = r.note;
            j["rows"].push_back(e);
        }
        return j;
    }
};

/// One regularized run per eps and one degenerate run on the same grid,
/// initial data and step sequence; distances sqrt(sum_n dt_n |phi_eps^n - phi_deg^n|^2).
inline EpsilonStudy experiment_epsilon(const SimConfig& cfg, const std::vector<double>& eps_list) {
    if (eps_list.empty()) throw ValidationError("eps-study: empty eps list");
    const double eps0 = detect_eps0(cfg.material());
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0 && eps_list[i] <= eps0))
            throw ValidationError("eps-study: eps " + std::to_string(eps_list[i]) + " outside (0, " + std::to_string(eps0) + "]");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ValidationError("eps-study: eps list must be strictly decreasing");
    }
    SimConfig ref = cfg;
    ref.mode = ChMode::degenerate;
    ref.output.directory.clear();
    std::vector<ScalarField> traj;
    std::vector<double> times;
    EpsilonStudy study;
    {
        Simulation sim(ref);
        while (!sim.finished()) {
            sim.advance();
            traj.push_back(sim.phi());
            times.push_back(sim.t());
            study.reference_max_abs_phi = std::max(study.reference_max_abs_phi, sim.phi().max_abs());
        }
    }
    for (double eps : eps_list) {
        EpsilonRow row;
        row.eps = eps;
        SimConfig c = cfg;
        c.mode = ChMode::regularized;
        c.eps = eps;
        c.output.directory.clear();
        try {
            Simulation sim(c);
            KahanSum acc;
            std::size_t n = 0;
            while (!sim.finished()) {
                sim.advance();
                if (n >= traj.size() || std::abs(sim.t() - times[n]) > 1e-12 * std::max(1.0, times[n]))
                    throw NumericalError("step sequence differs from the degenerate reference");
                const ScalarField d = sim.phi() - traj[n];
                acc.add(sim.last_dt() * inner(d, d));
                row.max_abs_phi = std::max(row.max_abs_phi, sim.phi().max_abs());
                ++n;
            }
            row.distance = std::sqrt(acc.value());
            row.ok = true;
        } catch (const NumericalError& e) {
            row.note = e.what();
            study.partial = true;
        }
        study.rows.push_back(row);
    }
    study.strictly_decreasing = !study.partial;
    for (std::size_t i = 1; i < study.rows.size(); ++i)
        if (!(study.rows[i].distance < study.rows[i - 1].distance)) study.strictly_decreasing = false;
    return study;
}

struct RefineStudy {
    std::vector<double> dt;                ///< time-halving levels on the base grid
    std::vector<double> residual;          ///< sum_n |residual_n| dt_n
    std::vector<double> orders;            ///< log2 of successive residual ratios
    std::vector<int> n;                    ///< space-time levels (grid size)
    std::vector<double> overshoot;         ///< max overshoot per space-time level
    bool overshoot_nonincreasing = false;
    std::vector<bool> energy_nonincreasing;  ///< per time-halving level
    std::vector<bool> chem_diss_nonnegative; ///< per time-halving level

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["dt"] = dt;
        j["accumulated_residual"] = residual;
        j["orders"] = orders;
        j["grid"] = n;
        j["overshoot"] = overshoot;
        j["overshoot_nonincreasing"] = overshoot_nonincreasing;
        j["energy_nonincreasing"] = energy_nonincreasing;
        j["chem_diss_nonnegative"] = chem_diss_nonnegative;
        return j;
    }
};

/// dt-halving (levels times) on the configured grid, and, if space_levels > 0,
/// joint (h, dt) halving of the same run up to the same T.
inline RefineStudy experiment_refine(const SimConfig& cfg, int time_levels = 3, int space_levels = 3) {
    RefineStudy st;
    for (int l = 0; l < time_levels; ++l) {
        SimConfig c = cfg;
        c.dt = cfg.dt / std::ldexp(1.0, l);
        c.output.directory.clear();
        const RunSummary s = simulate(c);
        if (s.status != RunStatus::ok) throw NumericalError("refine: level dt = " + std::to_string(c.dt) + ": " + s.message);
        KahanSum acc;
        for (std::size_t k = 1; k < s.records.size(); ++k)
            acc.add(std::abs(s.records[k].residual_energy) * (s.records[k].t - s.records[k - 1].t));
        st.dt.push_back(c.dt);
        st.residual.push_back(acc.value());
        st.energy_nonincreasing.push_back(s.checks.energy_nonincreasing);
        st.chem_diss_nonnegative.push_back(s.checks.chem_diss_nonnegative);
        if (l > 0) st.orders.push_back(std::log2(st.residual[l - 1] / st.residual[l]));
    }
    for (int l = 0; l < space_levels; ++l) {
        SimConfig c = cfg;
        const double f = std::ldexp(1.0, l);
        c.nx = cfg.nx * static_cast<int>(f);
        c.ny = cfg.ny * static_cast<int>(f);
        c.dt = cfg.dt / f;
        c.output.directory.clear();
        if (c.ic.kind == IcKind::spinodal && c.ic.noise_nx == 0) {
            // Same continuum data on every level: noise on the base grid, prolonged.
            c.ic.noise_nx = cfg.nx;
            c.ic.noise_ny = cfg.ny;
        }
        const RunSummary s = simulate(c);
        if (s.status != RunStatus::ok) throw NumericalError("refine: level n = " + std::to_string(c.nx) + ": " + s.message);
        st.n.push_back(c.nx);
        st.overshoot.push_back(s.checks.max_overshoot);
    }
    st.overshoot_nonincreasing = !st.overshoot.empty();
    for (std::size_t l = 1; l < st.overshoot.size(); ++l)
        if (st.overshoot[l] > st.overshoot[l - 1]) st.overshoot_nonincreasing = false;
    return st;
}

struct ContractionStudy {
    std::vector<double> t;
    std::vector<double> dist2;  ///< |N^{1/2}(phi_a - phi_b)|^2
    std::vector<double> rate;   ///< d log dist2 / dt per step (NaN when undefined)
    double umax = 0.0;
    double C5 = 0.0;            ///< from the hypothesis constants
    double C5_empirical = 0.0;  ///< smallest constant that bounds every logged rate
    double bound = 0.0;         ///< C5 (1 + umax^2)
    int violations = 0;
    bool identically_zero = false;

    [[nodiscard]] bool holds() const { return std::isfinite(C5) && violations == 0; }

    [[nodiscard]] nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        nlohmann::json j{{"umax", umax},         {"C5", num(C5)},          {"C5_empirical", num(C5_empirical)},
                         {"bound", num(bound)},  {"violations", violations}, {"holds", holds()},
                         {"identically_zero", identically_zero}};
        return j;
    }
};

/// Twin CH-only runs from phi0 and phi0 + amplitude * p, p a zero-mean
/// cosine mode with max |p| = 1. Checks d log|N^{1/2} dphi|^2/dt <= C5 (1 + |u|_inf^2) per step.
inline ContractionStudy experiment_contraction(const SimConfig& cfg_in, double amplitude, long steps) {
    if (cfg_in.coupling != Coupling::ch_only) throw ValidationError("contract: needs coupling type ch_only");
    if (steps < 1) throw ValidationError("contract: steps must be >= 1");
    SimConfig cfg = cfg_in;
    cfg.T = cfg.dt * static_cast<double>(steps);
    cfg.output.directory.clear();
    const Grid2D g = cfg.grid();
    const ScalarField phi_a = make_initial_phi(cfg.ic, g);
    ScalarField p = sample_cells(g, [&](double x, double y) { return std::cos(kPi * x / g.Lx) * std::cos(kPi * y / g.Ly); });
    const double pm = p.mean();
    for (auto& v : p.values()) v -= pm;
    p *= 1.0 / p.max_abs();
    ScalarField phi_b = phi_a;
    for (std::size_t k = 0; k < phi_b.size(); ++k) phi_b[k] += amplitude * p[k];
    if (phi_b.max_abs() > 1.0) throw ValidationError("contract: perturbed data leaves [-1, 1]");
    if (std::abs(phi_b.mean() - phi_a.mean()) > 1e-14 * std::max(1.0, std::abs(phi_a.mean())))
        throw ValidationError("contract: twin means differ");

    Simulation a(cfg, phi_a), b(cfg, phi_b);
    ContractionStudy st;
    st.umax = a.u().max_abs();
    {
        SimConfig dc = cfg;
        dc.mode = ChMode::degenerate;
        const MaterialModel mat = cfg.material();
        const KernelConstants kc = KernelConstants::of(a.kernel());
        st.C5 = gronwall_constants(check_degenerate(mat, kc), mat, kc).C5;
    }
    st.bound = st.C5 * (1.0 + st.umax * st.umax);
    const NeumannSolver solver(g);
    auto distance = [&] {
        ScalarField d = a.phi() - b.phi();
        const double m = d.mean();
        for (auto& v : d.values()) v -= m;
        const double n = hminus1_norm(d, solver);
        return n * n;
    };
    st.t.push_back(0.0);
    st.dist2.push_back(distance());
    st.rate.push_back(std::numeric_limits<double>::quiet_NaN());
    st.identically_zero = st.dist2.back() == 0.0;
    for (long n = 0; n < steps && !a.finished(); ++n) {
        a.advance();
        b.advance();
        if (a.last_dt() != b.last_dt()) throw NumericalError("contract: twin step sequences differ");
        const double d2 = distance();
        const double prev = st.dist2.back();
        double r = std::numeric_limits<double>::quiet_NaN();
        if (prev > 0.0 && d2 > 0.0) r = (std::log(d2) - std::log(prev)) / a.last_dt();
        if (d2 != 0.0) st.identically_zero = false;
        if (std::isfinite(r)) {
            st.C5_empirical = std::max(st.C5_empirical, r / (1.0 + st.umax * st.umax));
            if (!(r <= st.bound)) ++st.violations;
        } else if (prev > 0.0) {
            ++st.violations;  // distance collapsed or blew up
        }
        st.t.push_back(a.t());
        st.dist2.push_back(d2);
        st.rate.push_back(r);
    }
    return st;
}

struct LocalLimitRow {
    double scale = 0.0;
    double nonlocal = 0.0;   ///< sum_x sum_y J_m(x - y) (phi(x) - phi(y))^2 |cell|^2
    double dirichlet = 0.0;  ///< sigma/2 |grad phi|^2
    double gap = 0.0;        ///< |nonlocal - dirichlet| / dirichlet
};

struct LocalLimitStudy {
    std::vector<LocalLimitRow> rows;
    double sigma = 0.0;
    bool decreasing = false;

    [[nodiscard]] double finest_gap() const { return rows.empty() ? 0.0 : rows.back().gap; }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j{{"sigma", sigma}, {"decreasing", decreasing}, {"finest_gap", finest_gap()}};
        for (const auto& r : rows)
            j["rows"].push_back({{"scale", r.scale}, {"nonlocal", r.nonlocal}, {"dirichlet", r.dirichlet}, {"gap", r.gap}});
        return j;
    }
};

/// Smooth bump exp(1 - 1/(1 - r^2/R^2)) centred in the domain, zero outside radius R.
inline ScalarField bump(const Grid2D& g, double radius, double height = 1.0) {
    const double cx = 0.5 * g.Lx, cy = 0.5 * g.Ly;
    return sample_cells(g, [&](double x, double y) {
        const double q = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
        return q < 1.0 ? height * std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
    });
}

/// Nonlocal energy of phi under J_m for each scale m against sigma/2 |grad phi|^2.
/// support_radius is the radius of the support of phi around the domain centre; it must
/// stay 5 kernel widths (at the smallest scale) away from the walls.
inline LocalLimitStudy experiment_local_limit(const KernelSpec& base, const std::vector<double>& scales,
                                              const ScalarField& phi, double support_radius) {
    if (scales.empty()) throw ValidationError("local-limit: empty scale list");
    for (std::size_t i = 1; i < scales.size(); ++i)
        if (!(scales[i] > scales[i - 1])) throw ValidationError("local-limit: scales must increase");
    if (!(scales.front() > 0.0)) throw ValidationError("local-limit: scales must be positive");
    double width = 0.0;
    switch (base.family) {
        case KernelFamily::gaussian: width = base.width; break;
        case KernelFamily::truncated_power: width = base.cutoff; break;
        default: throw ValidationError("local-limit: needs a gaussian or truncated_power kernel");
    }
    const Grid2D& g = phi.grid();
    const double clearance = std::min(0.5 * g.Lx, 0.5 * g.Ly) - support_radius;
    if (clearance < 5.0 * width / scales.front())
        throw ValidationError("local-limit: support closer to the boundary than 5 kernel widths");
    LocalLimitStudy st;
    st.sigma = local_limit_sigma(base);
    const FaceField gp = grad(phi);
    const double dir = 0.5 * st.sigma * inner(gp, gp);
    for (double m : scales) {
        KernelSpec k = base;
        k.scale = m;
        k.quadrature = KernelQuadrature::point;
        const DiscreteKernel dk = build_kernel(k, g);
        LocalLimitRow r;
        r.scale = m;
        r.nonlocal = 4.0 * nonlocal_energy(phi, dk);
        r.dirichlet = dir;
        r.gap = dir > 0.0 ? std::abs(r.nonlocal - dir) / dir : std::abs(r.nonlocal);
        st.rows.push_back(r);
    }
    st.decreasing = true;
    for (std::size_t i = 1; i < st.rows.size(); ++i)
        if (!(st.rows[i].gap < st.rows[i - 1].gap)) st.decreasing = false;
    return st;
}

}  // namespace nlchns
