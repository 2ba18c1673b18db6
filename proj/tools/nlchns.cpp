// nlchns command line: run, check, experiments, snapshot dump.
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlchns/driver.hpp"

using namespace nlchns;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void emit(const nlohmann::json& j, const std::string& out_path) {
    std::cout << j.dump(2) << '\n';
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw ValidationError("cannot write '" + out_path + "'");
        os << j.dump(2) << '\n';
    }
}

void print_report(const AssumptionReport& rep) {
    for (const auto& h : rep.items) {
        std::cout << '(' << h.name << ") " << (h.pass ? "PASS" : "FAIL");
        for (const auto& [k, v] : h.constants) std::cout << ' ' << k << '=' << v;
        if (!h.note.empty()) std::cout << "  # " << h.note;
        std::cout << '\n';
    }
    std::cout << "c0=" << rep.c0 << " c_J=" << rep.c_J << " eps0=" << rep.eps0 << '\n';
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ValidationError("malformed number '" + item + "' in list '" + s + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal Cahn-Hilliard-Navier-Stokes solver with degenerate mobility"};
    app.require_subcommand(1);
    bool strict = false;
    app.add_flag("--strict", strict, "treat failed hypotheses as errors");

    std::string config_path, out_path, snapshot_path, eps_list = "0.1,0.05,0.025", scales = "2,4,8,16";
    double amplitude = 1e-3, width = 0.1, radius = 0.25;
    long steps = 400;
    int time_levels = 3, space_levels = 3, n = 256;

    auto* run = app.add_subcommand("run", "run a simulation from a JSON config");
    run->add_option("config", config_path, "config file")->required();

    auto* check = app.add_subcommand("check", "print the hypothesis report for a config");
    check->add_option("config", config_path, "config file")->required();

    auto* eps = app.add_subcommand("eps-study", "regularized vs degenerate trajectory distances");
    eps->add_option("config", config_path, "config file")->required();
    eps->add_option("--eps", eps_list, "strictly decreasing comma-separated list");
    eps->add_option("--out", out_path, "also write the table as JSON");

    auto* refine = app.add_subcommand("refine", "dt halving residual orders and (h, dt) overshoot trend");
    refine->add_option("config", config_path, "config file")->required();
    refine->add_option("--time-levels", time_levels, "number of dt levels")->check(CLI::Range(2, 8));
    refine->add_option("--space-levels", space_levels, "number of (h, dt) levels, 0 to skip")->check(CLI::Range(0, 5));
    refine->add_option("--out", out_path, "also write the result as JSON");

    auto* contract = app.add_subcommand("contract", "twin-run H^-1 contraction check (ch_only config)");
    contract->add_option("config", config_path, "config file")->required();
    contract->add_option("--amplitude", amplitude, "perturbation amplitude");
    contract->add_option("--steps", steps, "number of steps")->check(CLI::PositiveNumber);
    contract->add_option("--out", out_path, "also write the series as JSON");

    auto* local = app.add_subcommand("local-limit", "nonlocal energy vs sigma/2 Dirichlet energy (gaussian)");
    local->add_option("--width", width, "gaussian width at unit scale")->check(CLI::PositiveNumber);
    local->add_option("--scales", scales, "increasing comma-separated scales");
    local->add_option("--n", n, "grid cells per side")->check(CLI::Range(16, 4096));
    local->add_option("--radius", radius, "bump radius")->check(CLI::PositiveNumber);
    local->add_option("--out", out_path, "also write the table as JSON");

    auto* dump = app.add_subcommand("snapshot-dump", "print a snapshot as CSV");
    dump->add_option("file", snapshot_path, "snapshot file")->required();
    dump->add_option("-o,--out", out_path, "write CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitValidation;
    }

    try {
        if (*run) {
            const SimConfig cfg = load_config(config_path);
            RunOptions opt;
            opt.strict = strict;
            opt.log = &std::cerr;
            const RunSummary s = simulate(cfg, opt);
            std::cout << s.to_json().dump(2) << '\n';
            return s.exit_code();
        }
        if (*check) {
            const SimConfig cfg = load_config(config_path);
            const Simulation sim(cfg);
            print_report(sim.assumptions());
            if (strict && !sim.assumptions_ok()) return kExitValidation;
            return 0;
        }
        if (*eps) {
            const EpsilonStudy st = experiment_epsilon(load_config(config_path), parse_list(eps_list));
            emit(st.to_json(), out_path);
            return st.partial ? kExitNumerical : 0;
        }
        if (*refine) {
            emit(experiment_refine(load_config(config_path), time_levels, space_levels).to_json(), out_path);
            return 0;
        }
        if (*contract) {
            const ContractionStudy st = experiment_contraction(load_config(config_path), amplitude, steps);
            nlohmann::json j = st.to_json();
            j["t"] = st.t;
            j["dist2"] = st.dist2;
            emit(j, out_path);
            return 0;
        }
        if (*local) {
            const Grid2D g(n, n);
            const LocalLimitStudy st =
                experiment_local_limit(KernelSpec::gaussian(width), parse_list(scales), bump(g, radius), radius);
            emit(st.to_json(), out_path);
            return 0;
        }
        if (*dump) {
            const ScalarField f = snapshot::read(snapshot_path);
            if (out_path.empty()) {
                snapshot::dump_csv(std::cout, f);
            } else {
                std::ofstream os(out_path);
                if (!os) throw ValidationError("cannot write '" + out_path + "'");
                snapshot::dump_csv(os, f);
            }
            return 0;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const CflError& e) {
        std::cerr << "error: " << e.what() << " (suggested dt " << e.suggested_dt << ")\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
