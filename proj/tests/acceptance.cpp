// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and budgets are pinned below.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "carflow/cli.hpp"
#include "carflow/experiments.hpp"
#include "carflow/macrosim.hpp"
#include "carflow/microsim.hpp"
#include "carflow/platoon.hpp"

using namespace carflow;

namespace {

constexpr double kAnalyticTol = 1e-12;
constexpr long kThroughputTol = 1;             // veh/min
constexpr double kConservationTol = 1e-9;  // relative
constexpr double kFixedPointTol = 1e-12;
constexpr double kPlateauTol = 1e-6;       // veh/m
constexpr double kShockTol = 10.0;         // m
constexpr std::size_t kSafetyRuns = 1000;
constexpr std::uint64_t kSafetySeed = 20240601;

constexpr double kAnalyticBudget = 0.001; // s
constexpr double kThroughputBudget = 10.0;
constexpr double kSweepBudget = 120.0;
constexpr double kMacroBudget = 1.0;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct ReferenceCell {
    double a_max;
    Experiment e;
    Model m;
    long value;
};

const std::vector<ReferenceCell>& reference_throughputs() {
    static const std::vector<ReferenceCell> t{
        {0.8, Experiment::FreeRoad, Model::Gipps, 23}, {0.8, Experiment::FreeRoad, Model::IIDM, 20},
        {0.8, Experiment::FreeRoad, Model::Helly, 20}, {0.8, Experiment::RedLight, Model::Gipps, 20},
        {0.8, Experiment::RedLight, Model::IIDM, 19},  {0.8, Experiment::RedLight, Model::Helly, 20},
        {1.5, Experiment::FreeRoad, Model::Gipps, 26}, {1.5, Experiment::FreeRoad, Model::IIDM, 23},
        {1.5, Experiment::FreeRoad, Model::Helly, 22}, {1.5, Experiment::RedLight, Model::Gipps, 22},
        {1.5, Experiment::RedLight, Model::IIDM, 21},  {1.5, Experiment::RedLight, Model::Helly, 21},
        {2.5, Experiment::FreeRoad, Model::Gipps, 27}, {2.5, Experiment::FreeRoad, Model::IIDM, 24},
        {2.5, Experiment::FreeRoad, Model::Helly, 23}, {2.5, Experiment::RedLight, Model::Gipps, 22},
        {2.5, Experiment::RedLight, Model::IIDM, 22},  {2.5, Experiment::RedLight, Model::Helly, 22},
    };
    return t;
}

std::map<std::tuple<double, Experiment, Model>, long> simulated_throughputs() {
    std::map<std::tuple<double, Experiment, Model>, long> out;
    for (const auto& c : acceleration_sweep()) out[{c.a_max, c.experiment, c.model}] = static_cast<long>(c.throughput);
    return out;
}

// --- criteria --------------------------------------------------------------

Verdict equilibrium_analytics() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    struct Row {
        VehicleClass c;
        double headway, flow;
    };
    for (const Row& r : {Row{VehicleClass::Ordinary, 2.5, 1440.0}, Row{VehicleClass::ACC, 1.5, 2400.0},
                         Row{VehicleClass::CACC, 1.2, 3000.0}}) {
        const double h = equilibrium_headway(preset_params(r.c));
        const double f = 3600.0 / h;
        v.detail << " " << to_string(r.c) << "=" << csv::number(h) << "s/" << csv::number(f) << "veh/h";
        v.require(std::abs(h - r.headway) <= kAnalyticTol, std::string(to_string(r.c)) + " headway");
        v.require(std::abs(f - r.flow) <= kAnalyticTol * r.flow, std::string(to_string(r.c)) + " flow");
    }
    const double elapsed = seconds_since(t0);
    v.detail << " (" << elapsed * 1e3 << " ms)";
    v.require(elapsed < kAnalyticBudget, "time budget");
    return v;
}

Verdict throughput_regression(const std::map<std::tuple<double, Experiment, Model>, long>& sim, double elapsed) {
    Verdict v;
    long worst = 0;
    for (const auto& cell : reference_throughputs()) {
        const long got = sim.at({cell.a_max, cell.e, cell.m});
        const long diff = std::abs(got - cell.value);
        worst = std::max(worst, diff);
        if (diff != 0)
            v.detail << " " << to_string(cell.m) << "/" << cell.a_max << "/" << to_string(cell.e) << "=" << got
                     << "(reference " << cell.value << ")";
        v.require(diff <= kThroughputTol, "cell outside tolerance");
    }
    v.detail << " max deviation " << worst << " veh/min (" << elapsed << " s)";
    v.require(elapsed < kThroughputBudget, "time budget");
    return v;
}

Verdict qualitative_claims(const std::map<std::tuple<double, Experiment, Model>, long>& sim) {
    Verdict v;
    const double bound = 60.0 / equilibrium_headway(preset_params(VehicleClass::Ordinary));
    for (double a : {1.5, 2.5}) {
        const long g = sim.at({a, Experiment::FreeRoad, Model::Gipps});
        v.detail << " gipps/" << a << "/free=" << g << ">" << bound;
        v.require(g > bound, "Gipps free-road above equilibrium bound");
    }
    int ordered = 0;
    for (double a : {0.8, 1.5, 2.5})
        for (Model m : {Model::Gipps, Model::IIDM, Model::Helly}) {
            const bool ok = sim.at({a, Experiment::RedLight, m}) <= sim.at({a, Experiment::FreeRoad, m});
            ordered += ok;
            v.require(ok, "red <= free for " + std::string(to_string(m)));
        }
    v.detail << "; red<=free in " << ordered << "/9 cells";
    const long g = sim.at({2.5, Experiment::RedLight, Model::Gipps});
    const long i = sim.at({2.5, Experiment::RedLight, Model::IIDM});
    const long h = sim.at({2.5, Experiment::RedLight, Model::Helly});
    v.detail << "; 2.5/red = " << g << "/" << i << "/" << h;
    v.require(g == 22 && i == 22 && h == 22, "three-way tie at 22");
    return v;
}

Verdict penetration_sweep(const std::map<std::tuple<double, Experiment, Model>, long>& sim) {
    Verdict v;
    const auto cases = default_sweep_cases();
    SweepOptions opt;
    const auto t0 = std::chrono::steady_clock::now();
    const auto first = run_sweep(cases, opt);
    const double elapsed = seconds_since(t0);

    std::size_t mixed = 0, runs = 0, failed = 0;
    for (const auto& r : first) {
        mixed += r.sweep_case.penetration > 0.0;
        runs += r.runs.size();
        failed += r.failures();
    }
    v.detail << " " << mixed << " mixed cases, " << runs << " runs (" << failed << " collided), " << elapsed << " s;";
    v.require(mixed == 72, "72 mixed cases");

    auto find = [&](Experiment e, Model m, VehicleClass t, double lam) -> const EnsembleResult& {
        for (const auto& r : first)
            if (r.sweep_case.experiment == e && r.sweep_case.model == m && r.sweep_case.tech == t &&
                r.sweep_case.penetration == lam)
                return r;
        throw Error("missing case");
    };
    for (Experiment e : {Experiment::FreeRoad, Experiment::RedLight})
        for (Model m : {Model::Gipps, Model::IIDM, Model::Helly})
            for (VehicleClass t : {VehicleClass::ACC, VehicleClass::CACC}) {
                const auto& r = find(e, m, t, 0.0);
                const long base = sim.at({opt.a_max, e, m});
                long expected = 0;
                for (const auto& c : reference_throughputs())
                    if (c.a_max == opt.a_max && c.e == e && c.m == m) expected = c.value;
                const bool ok = r.median && *r.median == static_cast<double>(base) &&
                                std::abs(*r.median - static_cast<double>(expected)) <= kThroughputTol;
                v.require(ok, "lambda=0 baseline " + std::string(to_string(m)) + "/" + std::string(to_string(e)));
            }
    for (Model m : {Model::Gipps, Model::IIDM, Model::Helly}) {
        const auto& acc = find(Experiment::FreeRoad, m, VehicleClass::ACC, 1.0);
        const auto& cacc = find(Experiment::FreeRoad, m, VehicleClass::CACC, 1.0);
        const bool ok = acc.median && cacc.median && *cacc.median > *acc.median;
        v.detail << " " << to_string(m) << " free lambda=1 cacc/acc=" << csv::number(cacc.median) << "/"
                 << csv::number(acc.median);
        v.require(ok, "lambda=1 CACC > ACC for " + std::string(to_string(m)));
    }

    SweepOptions serial = opt;
    serial.threads = 1;
    const auto second = run_sweep(cases, serial);
    const LinkCapacity link;
    const bool same = cli::sweep_medians_csv(first, link).text() == cli::sweep_medians_csv(second, link).text() &&
                      cli::sweep_runs_csv(first).text() == cli::sweep_runs_csv(second).text();
    v.detail << "; re-run byte-identical: " << (same ? "yes" : "no");
    v.require(same, "byte-identical re-run");
    v.require(elapsed < kSweepBudget, "time budget");
    return v;
}

/// Upstream-most position of the jam plateau ending at the blocked link, per row.
std::optional<double> jam_edge_row(const ContourGrid& g, std::size_t row, std::size_t blocked, double jam) {
    std::optional<double> edge;
    for (std::size_t i = blocked + 1; i-- > 0;) {
        if (std::abs(g.density[row][i] - jam) > kPlateauTol) break;
        edge = g.positions[i];
    }
    return edge;
}

Verdict macro_solver() {
    Verdict v;
    const MacroSpec spec;
    const std::size_t blocked = spec.blocked_links.front() - 1;
    const auto t0 = std::chrono::steady_clock::now();
    const MacroRun r = run_macro(init_red_light_scenario(defaults::a_max), Model::IIDM, defaults::dt, 60.0);
    const double elapsed = seconds_since(t0);
    const double jam = r.final_state.jam_density();

    const double cons = r.relative_conservation_error();
    v.detail << " conservation " << cons << ";";
    v.require(cons <= kConservationTol, "conservation");

    double residual = 0.0;
    for (Model m : {Model::Gipps, Model::IIDM, Model::Helly}) {
        MacroState s = init_macro(MacroSpec{240, 5.0, 0, 1, 0.0, {}, 0.0}, defaults::base);
        const double rho = 1.0 / (defaults::g_min + defaults::l + defaults::v_max * defaults::tau);
        std::fill(s.rho.begin(), s.rho.end(), rho);
        std::fill(s.V.begin(), s.V.end(), defaults::v_max);
        s.inflow = rho * defaults::v_max;
        const MacroState start = s;
        for (int k = 0; k < 100; ++k) macro_step(s, m, defaults::dt);
        for (std::size_t i = 0; i < s.size(); ++i)
            residual = std::max({residual, std::abs(s.rho[i] - start.rho[i]), std::abs(s.V[i] - start.V[i])});
    }
    v.detail << " fixed-point residual " << residual << ";";
    v.require(residual <= kFixedPointTol, "fixed point");

    double blocked_flow = 0.0, overshoot = 0.0;
    for (std::size_t row = 0; row < r.grid.times.size(); ++row) {
        blocked_flow = std::max(blocked_flow, std::abs(r.grid.flow[row][blocked]));
        for (double rho : r.grid.density[row]) overshoot = std::max(overshoot, rho - jam);
    }
    v.detail << " max f_110 " << blocked_flow << ";";
    v.require(blocked_flow == 0.0, "zero flow through the blocked link");

    const auto edge = jam_edge(r.final_state, blocked, kPlateauTol);
    double plateau_dev = 0.0;
    if (edge)
        for (std::size_t i = 0; i <= blocked; ++i)
            if (r.final_state.position(i) >= *edge) plateau_dev = std::max(plateau_dev, std::abs(r.final_state.rho[i] - jam));
    v.detail << " plateau [" << (edge ? csv::number(*edge) : "none") << ", "
             << csv::number(r.final_state.position(blocked + 1)) << "] m, max |rho-1/9| " << plateau_dev
             << ", max overshoot " << overshoot << ";";
    v.require(edge && *edge < r.final_state.position(blocked) && plateau_dev <= kPlateauTol && overshoot <= kPlateauTol,
              "jam plateau");

    const ScenarioConfig micro = experiment_scenario(Experiment::RedLight, Model::IIDM, defaults::a_max);
    const std::vector<VehicleClass> queue(micro.queue.size, VehicleClass::Ordinary);
    const RunResult mr = run(micro, queue, false);
    const auto tail = queue_tail(mr.final_state, kRedLightDistance);
    v.detail << " shock macro " << (edge ? csv::number(*edge) : "none") << " m vs micro "
             << (tail ? csv::number(*tail) : "none") << " m;";
    v.require(edge && tail && std::abs(*edge - *tail) <= kShockTol, "shock position within 10 m");

    std::optional<double> prev;
    bool monotone = true;
    std::size_t rows_with_jam = 0;
    for (std::size_t row = 0; row < r.grid.times.size(); ++row) {
        const auto e = jam_edge_row(r.grid, row, blocked, jam);
        if (prev && (!e || *e > *prev)) monotone = false;
        if (e) {
            prev = e;
            ++rows_with_jam;
        }
    }
    v.detail << " congestion grows monotonically upstream over " << rows_with_jam << " rows: "
             << (monotone ? "yes" : "no") << " (" << elapsed << " s)";
    v.require(monotone && rows_with_jam > 0, "monotone congestion growth");
    v.require(elapsed < kMacroBudget, "time budget");
    return v;
}

struct SafetyTally {
    std::size_t runs = 0, collisions = 0, reversals = 0;
};

/// Steps a run to the horizon, checking gaps (the step itself throws on
/// overlap) and that no vehicle moves backwards or gets a negative speed.
void checked_run(const ScenarioConfig& s, std::span<const VehicleClass> composition, SafetyTally& t) {
    ++t.runs;
    Corridor c = build_corridor(s, composition);
    CooperativeFollowing policy(class_params(s, VehicleClass::CACC));
    try {
        for (std::size_t k = 0; k < step_count(s.horizon, s.dt); ++k) {
            const auto before = c.vehicles;
            step(c, policy);
            for (std::size_t i = 0; i < c.vehicles.size(); ++i)
                if (c.vehicles[i].v < 0.0 || c.vehicles[i].x < before[i].x) {
                    ++t.reversals;
                    return;
                }
        }
    } catch (const CollisionError&) {
        ++t.collisions;
    }
}

Verdict safety_suite() {
    Verdict v;
    SafetyTally reference_suite;
    for (const auto& cell : reference_throughputs()) {
        const ScenarioConfig s = experiment_scenario(cell.e, cell.m, cell.a_max);
        const std::vector<VehicleClass> queue(s.queue.size, VehicleClass::Ordinary);
        checked_run(s, queue, reference_suite);
    }
    v.detail << " reference suite: " << reference_suite.collisions << " collisions, " << reference_suite.reversals
             << " reversals in " << reference_suite.runs << " runs;";
    v.require(reference_suite.collisions == 0 && reference_suite.reversals == 0, "reference suite");

    Rng master = make_rng(kSafetySeed);
    std::uniform_real_distribution<double> share(0.0, 1.0);
    std::map<std::string, SafetyTally> by_family;
    SafetyTally all;
    for (std::size_t i = 0; i < kSafetyRuns; ++i) {
        const auto m = static_cast<Model>(master() % 3);
        const auto e = static_cast<Experiment>(master() % 2);
        const VehicleClass tech = master() % 2 ? VehicleClass::ACC : VehicleClass::CACC;
        const double lam = share(master);
        Rng rng = make_rng(kSafetySeed, i);
        const ScenarioConfig s = experiment_scenario(e, m, defaults::a_max);
        const auto queue = compose_queue(s.queue.size, lam, tech, rng);
        SafetyTally& fam = by_family[std::string(to_string(m)) + "/" + std::string(to_string(e)) + "/" +
                                     std::string(to_string(tech))];
        const SafetyTally before = fam;
        checked_run(s, queue, fam);
        all.runs += 1;
        all.collisions += fam.collisions - before.collisions;
        all.reversals += fam.reversals - before.reversals;
    }
    v.detail << " randomized (seed " << kSafetySeed << "): " << all.collisions << " collisions, " << all.reversals
             << " reversals in " << all.runs << " runs";
    for (const auto& [name, t] : by_family)
        if (t.collisions || t.reversals) v.detail << "; " << name << " " << t.collisions << "/" << t.runs << " collided";
    v.require(all.collisions == 0 && all.reversals == 0, "randomized discharges");
    return v;
}

ScenarioConfig red_light_with(Model m, std::vector<VehicleClass> pattern, bool platooning) {
    ScenarioConfig s = experiment_scenario(Experiment::RedLight, m, defaults::a_max);
    s.queue.pattern = std::move(pattern);
    s.platooning.enabled = platooning;
    return s;
}

bool bitwise_equal(const DriverParams& a, const DriverParams& b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Verdict platoon_invariants() {
    Verdict v;

    // Invariant monitoring across runs that join, split at signals and leave.
    std::size_t steps_checked = 0, violations = 0, restorations = 0, bad_restorations = 0, splits = 0, max_size = 0;
    for (Model m : {Model::Gipps, Model::IIDM, Model::Helly})
        for (double lam : {0.5, 1.0}) {
            ScenarioConfig s = experiment_scenario(Experiment::RedLight, m, defaults::a_max);
            s.signals[1].schedule = {{0.0, SignalColor::Red}, {25.0, SignalColor::Green}, {35.0, SignalColor::Red}};
            s.queue.penetration = lam;
            s.queue.tech = VehicleClass::CACC;
            s.platooning.enabled = true;
            s.platooning.leave_events = {{10.0, 4}, {20.0, 12}, {30.0, 2}};
            Corridor c = build_corridor(s, scenario_composition(s));
            PlatoonManager pm(s.platooning, class_params(s, VehicleClass::CACC));
            std::size_t seen = 0;
            try {
                for (std::size_t k = 0; k < step_count(s.horizon, s.dt); ++k) {
                    step(c, pm);
                    ++steps_checked;
                    const auto& r = pm.registry();
                    violations += platoon_violations(c, r).size();
                    for (const auto& members : r.platoons()) {
                        max_size = std::max(max_size, members.size());
                        for (std::size_t i = 1; i < members.size(); ++i)
                            if (r.role(members[i]) != MemberRole::Follower || r.platoon_of(members[i] - 1) != members)
                                ++violations;
                        if (members.size() > 1 && r.role(members.front()) != MemberRole::Leader) ++violations;
                    }
                    for (; seen < pm.events().size(); ++seen) {
                        const PlatoonEvent& e = pm.events()[seen];
                        if (e.kind == PlatoonEventKind::Split) ++splits;
                        if (e.kind != PlatoonEventKind::Leave) continue;
                        ++restorations;
                        if (!bitwise_equal(c.vehicles[e.member].params, r.original(e.member))) ++bad_restorations;
                    }
                }
            } catch (const CollisionError& e) {
                v.require(false, "collision in platoon run: " + std::string(e.what()));
            }
        }
    v.detail << " " << steps_checked << " steps, " << violations << " contiguity/leader violations, " << splits
             << " splits, largest platoon " << max_size << ", " << restorations << " leaves with " << bad_restorations
             << " non-bitwise restorations;";
    v.require(violations == 0, "contiguity and single leader");
    v.require(restorations > 0 && bad_restorations == 0, "bitwise restoration on leave");
    v.require(splits > 0 && max_size > 1, "lifecycle exercised");

    // Interleaving null effect.
    bool null_effect = true;
    for (Model m : {Model::Gipps, Model::IIDM, Model::Helly}) {
        const ScenarioConfig mixed = red_light_with(m, {VehicleClass::Ordinary, VehicleClass::CACC}, true);
        const ScenarioConfig acc = red_light_with(m, {VehicleClass::Ordinary, VehicleClass::ACC}, false);
        const RunResult a = run(mixed, false);
        const RunResult b = run(acc, false);
        std::size_t joins = 0;
        for (const auto& e : a.platoon_events) joins += e.kind == PlatoonEventKind::Join;
        const auto ta = throughput(a.detectors.front().records, mixed.window);
        const auto tb = throughput(b.detectors.front().records, acc.window);
        v.detail << " " << to_string(m) << " interleaved " << ta << " vs acc " << tb << " (" << joins << " joins)";
        null_effect = null_effect && joins == 0 && ta == tb;
    }
    v.require(null_effect, "interleaving null effect");

    // Throughput ordering on the red-light corridor.
    bool ordering = true;
    std::size_t compared = 0;
    for (Model m : {Model::Gipps, Model::IIDM, Model::Helly}) {
        const RunResult p = run(red_light_with(m, {VehicleClass::CACC}, true), false);
        std::optional<std::size_t> acc;
        try {
            const RunResult a = run(red_light_with(m, {VehicleClass::ACC}, false), false);
            acc = throughput(a.detectors.front().records, 60.0);
        } catch (const CollisionError&) {
        }
        const auto tp = throughput(p.detectors.front().records, 60.0);
        v.detail << "; " << to_string(m) << " platooned cacc " << tp << " vs acc "
                 << (acc ? std::to_string(*acc) : std::string("collided"));
        if (acc) {
            ++compared;
            ordering = ordering && tp >= *acc;
        }
    }
    v.require(ordering && compared > 0, "platooned CACC >= ACC");
    return v;
}

} // namespace

int main() {
    std::cout.precision(6);
    int failed = 0;
    auto report = [&](const std::string& name, const Verdict& v) {
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ":" << v.detail.str() << std::endl;
        failed += !v.pass;
    };

    report("equilibrium-analytics", equilibrium_analytics());
    const auto t0 = std::chrono::steady_clock::now();
    const auto sim = simulated_throughputs();
    const double throughput_time = seconds_since(t0);
    report("throughput-regression", throughput_regression(sim, throughput_time));
    report("qualitative-claims", qualitative_claims(sim));
    report("penetration-sweep", penetration_sweep(sim));
    report("macro-solver", macro_solver());
    report("safety-suite", safety_suite());
    report("platoon-invariants", platoon_invariants());

    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
