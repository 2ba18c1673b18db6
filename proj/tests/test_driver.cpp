#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nlchns/nlchns.hpp"

using namespace nlchns;
namespace fs = std::filesystem;

namespace {

nlohmann::json minimal_json() {
    return nlohmann::json::parse(R"({
        "schema_version": 1,
        "grid": {"nx": 16, "ny": 16},
        "dt": 1e-4,
        "T": 1e-3,
        "ic": {"kind": "constant", "value": 0.2}
    })");
}

std::string error_of(const nlohmann::json& j) {
    try {
        (void)parse_config(j);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::path(::testing::TempDir()) / ("nlchns_" + name);
    fs::remove_all(d);
    return d;
}

SimConfig small_coupled(int n, double dt, int steps) {
    SimConfig c;
    c.nx = c.ny = n;
    c.dt = dt;
    c.T = dt * steps;
    c.nu = 0.1;
    return c;
}

struct Cli {
    int code;
    std::string out;
};

Cli run_cli(const std::string& args) {
    const std::string cmd = std::string(NLCHNS_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    Cli r{-1, {}};
    if (!p) return r;
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

}  // namespace

TEST(Config, MinimalDocumentParsesWithDefaults) {
    const SimConfig c = parse_config(minimal_json());
    EXPECT_EQ(c.nx, 16);
    EXPECT_EQ(c.mode, ChMode::degenerate);
    EXPECT_EQ(c.coupling, Coupling::coupled);
    EXPECT_EQ(c.steps(), 10);
    EXPECT_EQ(c.tol.mass, 1e-12);
    EXPECT_EQ(c.tol.projection, 1e-10);
    EXPECT_EQ(c.tol.poisson, 1e-11);
    EXPECT_EQ(c.tol.entropy, 1e-8);
}

TEST(Config, ErrorsNameTheOffendingKey) {
    auto j = minimal_json();
    j["kernel"] = {{"family", "gaussian"}, {"widht", 0.1}};
    EXPECT_NE(error_of(j).find("/kernel/widht"), std::string::npos) << error_of(j);

    j = minimal_json();
    j["kernel"] = {{"family", "gaussian"}, {"width", -1.0}};
    EXPECT_NE(error_of(j).find("/kernel"), std::string::npos);

    j = minimal_json();
    j["grid"]["nx"] = "sixteen";
    EXPECT_NE(error_of(j).find("/grid/nx"), std::string::npos);

    j = minimal_json();
    j.erase("ic");
    EXPECT_NE(error_of(j).find("/ic"), std::string::npos);

    j = minimal_json();
    j["schema_version"] = 2;
    EXPECT_NE(error_of(j).find("/schema_version"), std::string::npos);

    j = minimal_json();
    j["mode"] = {{"type", "regularized"}, {"eps", 0.5}};
    EXPECT_NE(error_of(j).find("/mode/eps"), std::string::npos);

    j = minimal_json();
    j["T"] = 1e-5;
    EXPECT_NE(error_of(j).find("/T"), std::string::npos);

    j = minimal_json();
    j["ic"] = {{"kind", "spinodal"}, {"mean", 0.0}};
    EXPECT_NE(error_of(j).find("/ic/seed"), std::string::npos);

    j = minimal_json();
    j["ic"] = {{"kind", "constant"}, {"value", 1.5}};
    EXPECT_NE(error_of(j).find("/ic/value"), std::string::npos);

    j = minimal_json();
    j["coupling"] = {{"type", "ch_only"}, {"u", {{"kind", "swirl"}}}};
    EXPECT_NE(error_of(j).find("/coupling/u/kind"), std::string::npos);
}

TEST(Config, ShippedConfigsParse) {
    int seen = 0;
    for (const auto& e : fs::directory_iterator(fs::path(NLCHNS_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        EXPECT_NO_THROW((void)load_config(e.path().string())) << e.path();
        ++seen;
    }
    EXPECT_GE(seen, 5);
}

TEST(Config, SpinodalNoiseIsSeededAndMeanExact) {
    IcSpec ic;
    ic.kind = IcKind::spinodal;
    ic.mean = -0.2;
    ic.amplitude = 0.05;
    ic.seed = 42;
    const Grid2D g(32, 32);
    const ScalarField a = make_initial_phi(ic, g), b = make_initial_phi(ic, g);
    EXPECT_EQ(a.raw(), b.raw());
    EXPECT_NEAR(a.mean(), -0.2, 1e-15);
    EXPECT_LE(a.max(), -0.2 + 0.05 * 1.1);  // centring shifts the draw by its sample mean
    ic.seed = 43;
    EXPECT_NE(make_initial_phi(ic, g).raw(), a.raw());

    // Noise drawn on a coarse grid: refinement sees the same continuum data.
    ic.noise_nx = ic.noise_ny = 8;
    const ScalarField f1 = make_initial_phi(ic, Grid2D(16, 16));
    const ScalarField f2 = make_initial_phi(ic, Grid2D(64, 64));
    EXPECT_NEAR(f1.mean(), f2.mean(), 1e-15);
    EXPECT_NEAR(f1(7, 7), f2(29, 29), 0.05);
}

TEST(Config, VortexIsDivergenceFreeWithExactPeak) {
    const Grid2D g(24, 20);
    const FaceField u = vortex_velocity(g, 0.7);
    EXPECT_DOUBLE_EQ(u.max_abs(), 0.7);
    EXPECT_LT(div(u).max_abs(), 1e-12);
    EXPECT_EQ(u.boundary_normal_max(), 0.0);
}

TEST(Driver, ConstantStateStaysPut) {
    SimConfig c = small_coupled(16, 1e-3, 10);
    c.ic.value = 0.2;
    Simulation sim(c);
    while (!sim.finished()) sim.advance();
    EXPECT_EQ(sim.steps(), 10);
    EXPECT_NEAR(sim.t(), 1e-2, 1e-15);
    for (double v : sim.phi().values()) EXPECT_NEAR(v, 0.2, 1e-13);
    EXPECT_LE(sim.u().max_abs(), 1e-13);
}

TEST(Driver, SpinodalRunConservesMass) {
    SimConfig c = small_coupled(64, 5e-5, 500);
    c.ic.kind = IcKind::spinodal;
    c.ic.amplitude = 0.05;
    c.ic.mean = 0.1;
    c.ic.seed = 3;
    c.velocity.kind = VelocityKind::vortex;
    c.velocity.umax = 0.5;
    const RunSummary s = simulate(c);
    ASSERT_EQ(s.status, RunStatus::ok) << s.message;
    EXPECT_EQ(s.steps, 500);
    EXPECT_LE(s.checks.max_mass_drift, 1e-12);
    EXPECT_TRUE(s.checks.mass_conserved);
    EXPECT_TRUE(s.checks.divergence_free);
    EXPECT_TRUE(s.checks.chem_diss_nonnegative);
    EXPECT_GE(s.checks.max_overshoot, 0.0);
}

TEST(Driver, PurePhaseVelocityMatchesFlowOnlyRunBitForBit) {
    SimConfig c = small_coupled(16, 2e-4, 50);
    c.ic.kind = IcKind::pure_phase;
    c.ic.value = 1.0;
    c.velocity.kind = VelocityKind::vortex;
    c.velocity.umax = 1.0;
    c.output.directory = fresh_dir("pure").string();
    const RunSummary a = simulate(c);
    ASSERT_EQ(a.status, RunStatus::ok) << a.message;
    EXPECT_EQ(a.checks.max_overshoot, 0.0);

    SimConfig d = c;
    d.ch_enabled = false;
    d.output.directory = fresh_dir("flow_only").string();
    ASSERT_EQ(simulate(d).status, RunStatus::ok);
    const std::string va = slurp(fs::path(c.output.directory) / "velocity.csv");
    EXPECT_GT(va.size(), 1000u);
    EXPECT_EQ(va, slurp(fs::path(d.output.directory) / "velocity.csv"));
    const ScalarField last = snapshot::read((fs::path(c.output.directory) / "phi_000050.bin").string());
    for (double v : last.values()) EXPECT_EQ(v, 1.0);
}

TEST(Driver, RunsAreBitReproducibleAndRecheckable) {
    SimConfig c = small_coupled(32, 1e-4, 20);
    c.mode = ChMode::regularized;
    c.ic.kind = IcKind::spinodal;
    c.ic.amplitude = 0.1;
    c.ic.seed = 11;
    c.velocity.kind = VelocityKind::vortex;
    c.output.cadence_steps = 5;
    c.output.directory = fresh_dir("repro_a").string();
    const RunSummary a = simulate(c);
    ASSERT_EQ(a.status, RunStatus::ok) << a.message;
    SimConfig d = c;
    d.output.directory = fresh_dir("repro_b").string();
    ASSERT_EQ(simulate(d).status, RunStatus::ok);
    for (const char* f : {"diagnostics.csv", "velocity.csv", "phi_000000.bin", "phi_000010.bin", "phi_000020.bin"}) {
        const std::string x = slurp(fs::path(c.output.directory) / f);
        EXPECT_FALSE(x.empty()) << f;
        EXPECT_EQ(x, slurp(fs::path(d.output.directory) / f)) << f;
    }
    const RunChecks r = recheck_outputs(c.output.directory, c);
    EXPECT_EQ(r.to_json(), a.checks.to_json());
    EXPECT_EQ(r.entropy_checked, 20);
    EXPECT_TRUE(fs::exists(fs::path(c.output.directory) / "summary.json"));
    EXPECT_TRUE(fs::exists(fs::path(c.output.directory) / "assumptions.json"));
}

TEST(Driver, ChOnlyWithoutFlowHasZeroVelocityColumns) {
    SimConfig c = small_coupled(16, 1e-4, 5);
    c.coupling = Coupling::ch_only;
    c.ic.kind = IcKind::cosine;
    c.ic.amplitude = 0.5;
    const RunSummary s = simulate(c);
    ASSERT_EQ(s.status, RunStatus::ok);
    for (const auto& v : s.velocity) {
        EXPECT_EQ(v.u_max, 0.0);
        EXPECT_EQ(v.E_kin, 0.0);
        EXPECT_EQ(v.div_max, 0.0);
    }
    for (const auto& r : s.records) EXPECT_EQ(r.E_kin, 0.0);
}

TEST(Driver, OversizedStepFailsWithSuggestionOrIsRetried) {
    SimConfig c = small_coupled(16, 0.05, 4);
    c.velocity.kind = VelocityKind::vortex;
    const RunSummary s = simulate(c);
    EXPECT_EQ(s.status, RunStatus::numerical_failure);
    EXPECT_EQ(s.exit_code(), 3);
    EXPECT_NE(s.message.find("suggested dt"), std::string::npos);
    EXPECT_EQ(s.steps, 0);

    c.T = 0.05;
    c.retry_budget = 12;
    const RunSummary r = simulate(c);
    EXPECT_EQ(r.status, RunStatus::ok) << r.message;
    EXPECT_GT(r.rejected, 0);
}

TEST(Driver, StrictModeRejectsUncertifiedHypotheses) {
    SimConfig c = small_coupled(16, 1e-4, 1);
    c.kernel = KernelSpec::gaussian(0.1, 20.0);
    Simulation sim(c);
    EXPECT_FALSE(sim.assumptions().passed("A4"));
    EXPECT_NO_THROW((void)simulate(c));
    RunOptions opt;
    opt.strict = true;
    EXPECT_THROW((void)simulate(c, opt), ValidationError);
}

TEST(Experiments, EpsilonStudyOnConstantStateIsZero) {
    SimConfig c = small_coupled(16, 1e-3, 5);
    c.coupling = Coupling::ch_only;
    c.ic.value = 0.3;
    const EpsilonStudy st = experiment_epsilon(c, {0.1, 0.05});
    ASSERT_EQ(st.rows.size(), 2u);
    for (const auto& r : st.rows) EXPECT_LE(r.distance, 1e-13);
    EXPECT_THROW((void)experiment_epsilon(c, {0.05, 0.1}), ValidationError);
    EXPECT_THROW((void)experiment_epsilon(c, {0.5}), ValidationError);
}

TEST(Experiments, InteriorRunsMatchUpToTheSchemeGap) {
    // |phi| stays far below 1 - eps, so F_eps = F along the run and the distance
    // is only the difference between the two time discretizations.
    SimConfig c = small_coupled(16, 1e-4, 10);
    c.coupling = Coupling::ch_only;
    c.ic.kind = IcKind::cosine;
    c.ic.amplitude = 0.3;
    const EpsilonStudy st = experiment_epsilon(c, {0.1});
    EXPECT_LT(st.reference_max_abs_phi, 0.5);
    EXPECT_LT(st.rows[0].distance, 1e-3 * 0.3 * std::sqrt(c.T));
}

TEST(Experiments, ContractionZeroAndHalvedPerturbations) {
    SimConfig c = small_coupled(16, 1e-4, 10);
    c.coupling = Coupling::ch_only;
    c.velocity.kind = VelocityKind::vortex;
    c.ic.kind = IcKind::cosine;
    c.ic.amplitude = 0.4;
    const ContractionStudy z = experiment_contraction(c, 0.0, 10);
    EXPECT_TRUE(z.identically_zero);
    for (double d : z.dist2) EXPECT_EQ(d, 0.0);

    const ContractionStudy a = experiment_contraction(c, 2e-3, 10);
    const ContractionStudy b = experiment_contraction(c, 1e-3, 10);
    EXPECT_NEAR(std::sqrt(b.dist2[0]), 0.5 * std::sqrt(a.dist2[0]), 1e-12 * std::sqrt(a.dist2[0]));
    EXPECT_TRUE(std::isfinite(a.C5));
    EXPECT_TRUE(a.holds());
    EXPECT_DOUBLE_EQ(a.umax, 1.0);

    SimConfig coupled = c;
    coupled.coupling = Coupling::coupled;
    EXPECT_THROW((void)experiment_contraction(coupled, 1e-3, 10), ValidationError);
}

TEST(Experiments, ContractionWithoutFlowStaysUnderExponentialBound) {
    SimConfig c = small_coupled(16, 1e-4, 40);
    c.coupling = Coupling::ch_only;
    c.ic.kind = IcKind::cosine;
    c.ic.amplitude = 0.4;
    const ContractionStudy st = experiment_contraction(c, 1e-3, 40);
    ASSERT_TRUE(std::isfinite(st.C5));
    for (std::size_t n = 0; n < st.t.size(); ++n)
        EXPECT_LE(st.dist2[n], std::exp(st.C5 * st.t[n]) * st.dist2[0] * (1.0 + 1e-12));
}

TEST(Experiments, LocalLimitHomogeneityAndGuards) {
    const Grid2D g(64, 64);
    const auto base = KernelSpec::gaussian(0.1, 1.0);
    const LocalLimitStudy zero = experiment_local_limit(base, {2, 4}, ScalarField(g, 0.4), 0.25);
    for (const auto& r : zero.rows) {
        EXPECT_NEAR(r.nonlocal, 0.0, 1e-14);
        EXPECT_EQ(r.dirichlet, 0.0);
    }
    const ScalarField phi = bump(g, 0.25);
    const LocalLimitStudy a = experiment_local_limit(base, {2, 4}, phi, 0.25);
    const LocalLimitStudy b = experiment_local_limit(KernelSpec::gaussian(0.1, 2.0), {2, 4}, phi, 0.25);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_NEAR(b.rows[i].nonlocal, 2.0 * a.rows[i].nonlocal, 1e-13 * a.rows[i].nonlocal);
        EXPECT_NEAR(b.rows[i].dirichlet, 2.0 * a.rows[i].dirichlet, 1e-13 * a.rows[i].dirichlet);
        EXPECT_NEAR(b.rows[i].gap, a.rows[i].gap, 1e-10);
    }
    EXPECT_THROW((void)experiment_local_limit(base, {1, 4}, phi, 0.25), ValidationError);
    EXPECT_THROW((void)experiment_local_limit(base, {4, 2}, phi, 0.25), ValidationError);
}

TEST(Cli, CheckPrintsHypothesesAndExitCodes) {
    const std::string cfg = (fs::path(NLCHNS_SOURCE_DIR) / "configs" / "contraction_ch_only.json").string();
    const Cli ok = run_cli("check " + cfg);
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("(A4) PASS"), std::string::npos) << ok.out;

    const std::string weak = (fs::path(NLCHNS_SOURCE_DIR) / "configs" / "weak_kernel.json").string();
    EXPECT_NE(run_cli("check " + weak).out.find("(A4) FAIL"), std::string::npos);
    EXPECT_EQ(run_cli("--strict check " + weak).code, 2);
}

TEST(Cli, MalformedConfigExitsTwoWithKeyPointer) {
    const fs::path dir = fresh_dir("cli_bad");
    fs::create_directories(dir);
    auto j = minimal_json();
    j["grid"]["nx"] = -3;
    std::ofstream(dir / "bad.json") << j.dump();
    const Cli r = run_cli("run " + (dir / "bad.json").string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("/grid"), std::string::npos) << r.out;
    std::ofstream(dir / "broken.json") << "{ \"schema_version\": 1, ";
    EXPECT_EQ(run_cli("run " + (dir / "broken.json").string()).code, 2);
}

TEST(Cli, CflViolationExitsThreeAndSnapshotDumpRoundTrips) {
    const fs::path dir = fresh_dir("cli_run");
    fs::create_directories(dir);
    auto j = minimal_json();
    j["coupling"] = {{"type", "coupled"}, {"u0", {{"kind", "vortex"}, {"umax", 1.0}}}};
    j["dt"] = 0.05;
    j["T"] = 0.1;
    std::ofstream(dir / "cfl.json") << j.dump();
    const Cli bad = run_cli("run " + (dir / "cfl.json").string());
    EXPECT_EQ(bad.code, 3) << bad.out;
    EXPECT_NE(bad.out.find("suggested dt"), std::string::npos);

    j = minimal_json();
    j["ic"] = {{"kind", "spinodal"}, {"amplitude", 0.1}, {"seed", 5}};
    j["output"] = {{"directory", (dir / "out").string()}};
    std::ofstream(dir / "ok.json") << j.dump();
    ASSERT_EQ(run_cli("run " + (dir / "ok.json").string()).code, 0);
    const fs::path snap = dir / "out" / "phi_000010.bin";
    ASSERT_EQ(run_cli("snapshot-dump " + snap.string() + " -o " + (dir / "dump.csv").string()).code, 0);
    const ScalarField f = snapshot::read(snap.string());
    std::ifstream is(dir / "dump.csv");
    std::string line;
    std::getline(is, line);  // header
    std::size_t count = 0;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 5u);
        const int i = std::stoi(cells[0]), jj = std::stoi(cells[1]);
        EXPECT_EQ(std::stod(cells[4]), f(i, jj));
        ++count;
    }
    EXPECT_EQ(count, f.size());
}
