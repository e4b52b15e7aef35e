#pragma once

// Experiment presets (free road, red light downstream), the penetration
// sweep with ensemble medians, and equilibrium-flow analytics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "carflow/composition.hpp"
#include "carflow/microsim.hpp"
#include "carflow/scenario.hpp"

namespace carflow {

// ---------------------------------------------------------------------------
// Equilibrium analytics
// ---------------------------------------------------------------------------

inline double equilibrium_headway(const DriverParams& p) {
    if (!(p.v_max > 0.0)) throw ConfigError("v_max must be positive");
    return p.tau + (p.g_min + p.l) / p.v_max;
}

/// Storage limit of the link between two intersections.
struct LinkCapacity {
    double length = 300.0; ///< m
    double lanes = 1.0;
};

/// Equilibrium flow in veh/min of a fleet with a `penetration` share of
/// `tech` vehicles, optionally capped by what the downstream link can hold.
inline double mixed_equilibrium_flow(double penetration, const DriverParams& tech, const DriverParams& ordinary,
                                     std::optional<LinkCapacity> link = std::nullopt) {
    if (!(penetration >= 0.0 && penetration <= 1.0)) throw ConfigError("penetration must lie in [0, 1]");
    const double lam = penetration;
    const double mean_gap = lam * tech.g_min + (1.0 - lam) * ordinary.g_min;
    const double headway = lam * tech.tau + (1.0 - lam) * ordinary.tau + (mean_gap + ordinary.l) / ordinary.v_max;
    double flow = 60.0 / headway;
    if (link) flow = std::min(flow, link->lanes * link->length / (mean_gap + ordinary.l));
    return flow;
}

// ---------------------------------------------------------------------------
// Experiment presets
// ---------------------------------------------------------------------------

enum class Experiment { FreeRoad, RedLight };

constexpr std::string_view to_string(Experiment e) { return e == Experiment::FreeRoad ? "free_road" : "red_light"; }

inline Experiment parse_experiment(std::string_view s) {
    if (s == "free_road") return Experiment::FreeRoad;
    if (s == "red_light") return Experiment::RedLight;
    throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

/// Queue long enough that no configuration empties it within a minute.
inline constexpr std::size_t kDefaultQueueSize = 100;

/// Distance from the first signal to the red signal downstream.
inline constexpr double kRedLightDistance = 300.0;

inline ScenarioConfig experiment_scenario(Experiment e, Model model, double a_max,
                                          std::size_t queue_size = kDefaultQueueSize) {
    ScenarioConfig s;
    s.model = model;
    s.a_max = a_max;
    s.queue.size = queue_size;
    s.signals = {SignalSpec{0.0, {SignalSwitch{0.0, SignalColor::Green}}}};
    if (e == Experiment::RedLight)
        s.signals.push_back(SignalSpec{kRedLightDistance, {SignalSwitch{0.0, SignalColor::Red}}});
    s.detectors = {0.0};
    return s;
}

inline std::size_t experiment_throughput(const ScenarioConfig& s, std::span<const VehicleClass> composition) {
    const RunResult r = run(s, composition, false);
    return throughput(r.detectors.front().records, s.window);
}

// ---------------------------------------------------------------------------
// Acceleration sweep
// ---------------------------------------------------------------------------

struct ThroughputCell {
    Model model;
    double a_max;
    Experiment experiment;
    std::size_t throughput;
};

inline std::vector<ThroughputCell> acceleration_sweep(std::span<const Model> models, std::span<const double> a_max_values) {
    std::vector<ThroughputCell> out;
    for (double a : a_max_values)
        for (Experiment e : {Experiment::FreeRoad, Experiment::RedLight})
            for (Model m : models) {
                const ScenarioConfig s = experiment_scenario(e, m, a);
                const std::vector<VehicleClass> queue(s.queue.size, VehicleClass::Ordinary);
                out.push_back({m, a, e, experiment_throughput(s, queue)});
            }
    return out;
}

inline std::vector<ThroughputCell> acceleration_sweep() {
    const Model models[] = {Model::Gipps, Model::IIDM, Model::Helly};
    const double accels[] = {0.8, 1.5, 2.5};
    return acceleration_sweep(models, accels);
}

// ---------------------------------------------------------------------------
// Penetration sweep
// ---------------------------------------------------------------------------

struct SweepCase {
    Experiment experiment = Experiment::FreeRoad;
    Model model = Model::Gipps;
    VehicleClass tech = VehicleClass::ACC;
    double penetration = 0.0;
};

struct RunOutcome {
    std::optional<std::size_t> throughput; ///< absent when the run collided
    std::string error;
};

struct EnsembleResult {
    SweepCase sweep_case;
    std::uint64_t seed = 0;
    std::vector<RunOutcome> runs;
    std::optional<double> median; ///< over completed runs

    std::size_t failures() const {
        return static_cast<std::size_t>(
            std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) { return !r.throughput; }));
    }
};

struct SweepOptions {
    std::size_t runs = 100;
    std::uint64_t seed = 1;
    std::size_t queue_size = kDefaultQueueSize;
    double a_max = defaults::a_max;
    std::size_t threads = 0; ///< 0: CARFLOW_THREADS or hardware concurrency
};

inline const std::vector<double>& sweep_penetrations() {
    static const std::vector<double> grid{0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
    return grid;
}

/// The 72 mixed cases plus the penetration-0 baselines, in a fixed order.
inline std::vector<SweepCase> default_sweep_cases() {
    std::vector<SweepCase> cases;
    for (Experiment e : {Experiment::FreeRoad, Experiment::RedLight})
        for (Model m : {Model::Gipps, Model::IIDM, Model::Helly})
            for (VehicleClass tech : {VehicleClass::ACC, VehicleClass::CACC})
                for (double lam : sweep_penetrations()) cases.push_back({e, m, tech, lam});
    return cases;
}

/// Median of an ensemble; even counts average the two middle values.
inline std::optional<double> median(std::vector<double> values) {
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline bool trivial_composition(double penetration) { return penetration == 0.0 || penetration == 1.0; }

inline std::size_t worker_count(std::size_t requested) {
    std::size_t n = requested;
    if (n == 0) {
        n = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("CARFLOW_THREADS")) {
            const long cap = std::strtol(env, nullptr, 10);
            if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
        }
    }
    return std::max<std::size_t>(1, n);
}

/// Runs `work(i)` for i in [0, count) on a pool of workers.
template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& work) {
    threads = std::min(threads, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) work(i);
    };
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline std::vector<EnsembleResult> run_sweep(const std::vector<SweepCase>& cases, const SweepOptions& opt) {
    struct Job {
        std::size_t case_index;
        std::size_t run;
    };
    std::vector<EnsembleResult> results(cases.size());
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const std::size_t runs = trivial_composition(cases[c].penetration) ? 1 : opt.runs;
        results[c].sweep_case = cases[c];
        results[c].seed = opt.seed;
        results[c].runs.resize(runs);
        for (std::size_t r = 0; r < runs; ++r) jobs.push_back({c, r});
    }

    parallel_for(jobs.size(), worker_count(opt.threads), [&](std::size_t j) {
        const Job job = jobs[j];
        const SweepCase& sc = cases[job.case_index];
        const ScenarioConfig s = experiment_scenario(sc.experiment, sc.model, opt.a_max, opt.queue_size);
        Rng rng = make_rng(opt.seed, job.case_index, job.run);
        const auto queue = compose_queue(opt.queue_size, sc.penetration, sc.tech, rng);
        RunOutcome& out = results[job.case_index].runs[job.run];
        try {
            out.throughput = experiment_throughput(s, queue);
        } catch (const Error& e) {
            out.error = e.what();
        }
    });

    for (auto& r : results) {
        std::vector<double> ok;
        for (const auto& run : r.runs)
            if (run.throughput) ok.push_back(static_cast<double>(*run.throughput));
        r.median = median(std::move(ok));
    }
    return results;
}

// ---------------------------------------------------------------------------
// Sweep configuration document
// ---------------------------------------------------------------------------

struct SweepConfig {
    SweepOptions options;
    std::vector<Experiment> experiments{Experiment::FreeRoad, Experiment::RedLight};
    std::vector<Model> models{Model::Gipps, Model::IIDM, Model::Helly};
    std::vector<VehicleClass> techs{VehicleClass::ACC, VehicleClass::CACC};
    std::vector<double> penetrations = sweep_penetrations();
    LinkCapacity link;

    std::vector<SweepCase> cases() const {
        std::vector<SweepCase> out;
        for (Experiment e : experiments)
            for (Model m : models)
                for (VehicleClass t : techs)
                    for (double lam : penetrations) out.push_back({e, m, t, lam});
        return out;
    }
};

inline SweepConfig parse_sweep_config(const nlohmann::json& doc) {
    using detail::check_keys;
    using detail::read;
    SweepConfig c;
    check_keys(doc, "",
               {"runs", "seed", "queue_size", "a_max", "experiments", "models", "techs", "penetrations", "link"});
    read(doc, "runs", "", c.options.runs);
    read(doc, "seed", "", c.options.seed);
    read(doc, "queue_size", "", c.options.queue_size);
    read(doc, "a_max", "", c.options.a_max);
    std::vector<std::string> names;
    if (doc.contains("experiments")) {
        read(doc, "experiments", "", names);
        c.experiments.clear();
        detail::wrap("experiments", [&] {
            for (const auto& n : names) c.experiments.push_back(parse_experiment(n));
        });
    }
    if (doc.contains("models")) {
        names.clear();
        read(doc, "models", "", names);
        c.models.clear();
        detail::wrap("models", [&] {
            for (const auto& n : names) c.models.push_back(parse_model(n));
        });
    }
    if (doc.contains("techs")) {
        names.clear();
        read(doc, "techs", "", names);
        c.techs.clear();
        detail::wrap("techs", [&] {
            for (const auto& n : names) {
                const VehicleClass cls = parse_vehicle_class(n);
                if (cls == VehicleClass::Ordinary) throw ConfigError("tech must be acc or cacc");
                c.techs.push_back(cls);
            }
        });
    }
    read(doc, "penetrations", "", c.penetrations);
    for (double lam : c.penetrations)
        if (!(lam >= 0.0 && lam <= 1.0)) throw ConfigError("'penetrations' entries must lie in [0, 1]");
    if (auto it = doc.find("link"); it != doc.end()) {
        check_keys(*it, "link", {"length", "lanes"});
        read(*it, "length", "link", c.link.length);
        read(*it, "lanes", "link", c.link.lanes);
    }
    if (c.options.runs == 0) throw ConfigError("'runs' must be positive");
    if (c.options.queue_size == 0) throw ConfigError("'queue_size' must be positive");
    if (!(c.options.a_max > 0.0)) throw ConfigError("'a_max' must be positive");
    return c;
}

} // namespace carflow
