#pragma once

// Command-line front end: micro | macro | sweep | platoon | equilibria.
//
// Exit codes: 0 ok, 2 input error, 3 numerical/stability error, 4 collision.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "carflow/csv.hpp"
#include "carflow/experiments.hpp"
#include "carflow/macrosim.hpp"
#include "carflow/microsim.hpp"
#include "carflow/scenario.hpp"

namespace carflow::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInputError = 2, kNumericError = 3, kCollision = 4 };

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

struct ManifestEntry {
    std::string name;
    std::size_t bytes = 0;
    std::string sha256;
};

struct RunManifest {
    std::string command;
    std::string scenario;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::vector<ManifestEntry> files;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Output directory that remembers what it wrote; the manifest goes last.
class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_))
            throw ConfigError("cannot create output directory '" + dir_.string() + "'");
    }

    const std::filesystem::path& path() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        put(name, content);
        files_.push_back({name, content.size(), sha256_hex(content)});
    }

    void write_manifest(RunManifest m) {
        m.out_dir = dir_.string();
        m.files = files_;
        nlohmann::json files = nlohmann::json::array();
        for (const auto& f : m.files) files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
        const nlohmann::json doc{{"command", m.command}, {"scenario", m.scenario}, {"seed", m.seed},
                                 {"out_dir", m.out_dir}, {"files", files}};
        put(kManifestName, doc.dump(2) + "\n");
    }

private:
    void put(const std::string& name, const std::string& content) const {
        const auto p = dir_ / name;
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        f << content;
        f.close();
        if (!f) throw Error("cannot write '" + p.string() + "'");
    }

    std::filesystem::path dir_;
    std::vector<ManifestEntry> files_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline nlohmann::json read_document(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed document '" + path + "': " + e.what());
    }
}

/// Command-line overrides applied on top of a scenario document.
struct Overrides {
    std::string scenario;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> stride;
    std::optional<double> window;
    std::optional<std::size_t> runs;
    std::optional<std::string> model;
    std::optional<double> amax;
    std::optional<double> penetration;
    std::optional<std::string> tech;
    std::optional<std::string> platooning;
};

inline VehicleClass parse_tech(const std::string& s) {
    const VehicleClass c = parse_vehicle_class(s);
    if (c == VehicleClass::Ordinary) throw ConfigError("tech must be acc or cacc");
    return c;
}

inline ScenarioConfig load_scenario(const Overrides& o) {
    ScenarioConfig s;
    if (!o.scenario.empty()) {
        const nlohmann::json doc = read_document(o.scenario);
        try {
            s = parse_scenario(doc);
        } catch (const ConfigError& e) {
            throw ConfigError(o.scenario + ": " + e.what());
        }
    }
    if (o.seed) s.seed = *o.seed;
    if (o.stride) s.stride = *o.stride;
    if (o.window) s.window = *o.window;
    if (o.model) s.model = parse_model(*o.model);
    if (o.amax) s.a_max = *o.amax;
    if (o.penetration) {
        s.queue.penetration = *o.penetration;
        s.queue.pattern.clear();
    }
    if (o.tech) s.queue.tech = parse_tech(*o.tech);
    if (o.platooning) s.platooning.enabled = *o.platooning == "on";
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

inline csv::Document trajectory_csv(const std::vector<TrajectorySample>& samples) {
    csv::Document doc({"t", "vehicle", "x", "v", "a"});
    for (const auto& s : samples)
        doc.row({csv::number(s.t), csv::number(std::uint64_t{s.id}), csv::number(s.x), csv::number(s.v),
                 csv::number(s.a)});
    return doc;
}

inline csv::Document detector_csv(const std::vector<Detector>& detectors) {
    csv::Document doc({"detector", "position", "vehicle", "t", "v", "a", "gap", "flow"});
    for (std::size_t d = 0; d < detectors.size(); ++d)
        for (const auto& r : detectors[d].records)
            doc.row({csv::number(std::uint64_t{d}), csv::number(detectors[d].position),
                     csv::number(std::uint64_t{r.vehicle}), csv::number(r.time), csv::number(r.v), csv::number(r.a),
                     csv::number(r.gap), csv::number(r.flow)});
    return doc;
}

inline csv::Document platoon_events_csv(const std::vector<PlatoonEvent>& events) {
    csv::Document doc({"t", "event", "leader", "member", "size"});
    for (const auto& e : events)
        doc.row({csv::number(e.time), std::string(to_string(e.kind)), csv::number(std::uint64_t{e.leader}),
                 csv::number(std::uint64_t{e.member}), csv::number(std::uint64_t{e.size})});
    return doc;
}

/// One row per sampled time; the first column is the time, the header holds
/// the upstream end of each link.
inline csv::Document contour_csv(const ContourGrid& g, const std::vector<std::vector<double>>& values) {
    std::vector<std::string> header{"t"};
    for (double x : g.positions) header.push_back(csv::number(x));
    csv::Document doc(header);
    for (std::size_t r = 0; r < g.times.size(); ++r) {
        std::vector<std::string> row{csv::number(g.times[r])};
        for (double v : values[r]) row.push_back(csv::number(v));
        doc.row(row);
    }
    return doc;
}

inline std::vector<double> curve_penetrations(const std::vector<double>& requested) {
    std::vector<double> out = requested;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline csv::Document equilibrium_csv(const std::vector<VehicleClass>& techs, const std::vector<double>& penetrations,
                                     const LinkCapacity& link, const DriverParams& ordinary = preset_params(VehicleClass::Ordinary)) {
    csv::Document doc({"tech", "penetration", "headway", "flow", "capped_flow"});
    for (VehicleClass tech : techs) {
        DriverParams t = ordinary;
        t.tau = preset_params(tech).tau;
        t.g_min = preset_params(tech).g_min;
        for (double lam : curve_penetrations(penetrations)) {
            const double flow = mixed_equilibrium_flow(lam, t, ordinary);
            doc.row({std::string(to_string(tech)), csv::number(lam), csv::number(60.0 / flow), csv::number(flow),
                     csv::number(mixed_equilibrium_flow(lam, t, ordinary, link))});
        }
    }
    return doc;
}

inline csv::Document sweep_runs_csv(const std::vector<EnsembleResult>& results) {
    csv::Document doc({"experiment", "model", "tech", "penetration", "run", "seed", "throughput", "error"});
    for (const auto& r : results)
        for (std::size_t i = 0; i < r.runs.size(); ++i) {
            const auto& run = r.runs[i];
            doc.row({std::string(to_string(r.sweep_case.experiment)), std::string(to_string(r.sweep_case.model)),
                     std::string(to_string(r.sweep_case.tech)), csv::number(r.sweep_case.penetration),
                     csv::number(std::uint64_t{i}), csv::number(r.seed),
                     run.throughput ? csv::number(std::uint64_t{*run.throughput}) : std::string(), run.error});
        }
    return doc;
}

inline csv::Document sweep_medians_csv(const std::vector<EnsembleResult>& results, const LinkCapacity& link) {
    csv::Document doc({"experiment", "model", "tech", "penetration", "runs", "failed", "seed", "median",
                       "equilibrium_flow", "capped_flow"});
    const DriverParams ordinary = preset_params(VehicleClass::Ordinary);
    for (const auto& r : results) {
        const auto& sc = r.sweep_case;
        const DriverParams tech = preset_params(sc.tech);
        doc.row({std::string(to_string(sc.experiment)), std::string(to_string(sc.model)), std::string(to_string(sc.tech)),
                 csv::number(sc.penetration), csv::number(std::uint64_t{r.runs.size()}),
                 csv::number(std::uint64_t{r.failures()}), csv::number(r.seed), csv::number(r.median),
                 csv::number(mixed_equilibrium_flow(sc.penetration, tech, ordinary)),
                 csv::number(mixed_equilibrium_flow(sc.penetration, tech, ordinary, link))});
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_micro(const Overrides& o, std::ostream& out, const std::string& command = "micro") {
    const ScenarioConfig s = load_scenario(o);
    const RunResult r = run(s);
    OutputDir dir(o.out);
    dir.write("trajectories.csv", trajectory_csv(r.trajectory).text());
    dir.write("detector.csv", detector_csv(r.detectors).text());
    const std::size_t count = r.detectors.empty() ? 0 : throughput(r.detectors.front().records, s.window);
    dir.write("throughput.txt", std::to_string(count) + "\n");
    if (s.platooning.enabled || command == "platoon")
        dir.write("platoon_events.csv", platoon_events_csv(r.platoon_events).text());
    dir.write_manifest({command, o.scenario, s.seed, {}, {}});
    out << "throughput " << count << " veh in " << csv::number(s.window) << " s\n";
    return kOk;
}

inline int cmd_platoon(Overrides o, std::ostream& out) {
    if (!o.platooning) o.platooning = "on";
    return cmd_micro(o, out, "platoon");
}

inline int cmd_macro(const Overrides& o, std::ostream& out) {
    const ScenarioConfig s = load_scenario(o);
    const MacroRun r = run_macro(init_macro(s.macro, class_params(s, VehicleClass::Ordinary)), s.model, s.dt,
                                 s.horizon, s.stride);
    OutputDir dir(o.out);
    dir.write("flow_contour.csv", contour_csv(r.grid, r.grid.flow).text());
    dir.write("speed_contour.csv", contour_csv(r.grid, r.grid.speed).text());
    dir.write("density_contour.csv", contour_csv(r.grid, r.grid.density).text());
    dir.write_manifest({"macro", o.scenario, s.seed, {}, {}});
    out << "conservation: relative error " << csv::number(r.relative_conservation_error()) << " (initial "
        << csv::number(r.initial_vehicles) << " veh, final " << csv::number(r.final_state.vehicles())
        << " veh, boundary balance " << csv::number(r.boundary_balance) << " veh)\n";
    out << "grid " << r.grid.times.size() << " x " << r.grid.positions.size() << "\n";
    return kOk;
}

inline SweepConfig load_sweep(const Overrides& o) {
    SweepConfig c;
    if (!o.scenario.empty()) {
        try {
            c = parse_sweep_config(read_document(o.scenario));
        } catch (const ConfigError& e) {
            throw ConfigError(o.scenario + ": " + e.what());
        }
    }
    if (o.seed) c.options.seed = *o.seed;
    if (o.runs) {
        if (*o.runs == 0) throw ConfigError("--runs must be positive");
        c.options.runs = *o.runs;
    }
    if (o.amax) {
        if (!(*o.amax > 0.0)) throw ConfigError("--amax must be positive");
        c.options.a_max = *o.amax;
    }
    if (o.model) c.models = {parse_model(*o.model)};
    if (o.tech) c.techs = {parse_tech(*o.tech)};
    if (o.penetration) {
        if (!(*o.penetration >= 0.0 && *o.penetration <= 1.0)) throw ConfigError("--penetration must lie in [0, 1]");
        c.penetrations = {*o.penetration};
    }
    return c;
}

inline int cmd_sweep(const Overrides& o, std::ostream& out, std::ostream& err) {
    const SweepConfig c = load_sweep(o);
    const auto results = run_sweep(c.cases(), c.options);
    OutputDir dir(o.out);
    dir.write("sweep_runs.csv", sweep_runs_csv(results).text());
    dir.write("sweep_medians.csv", sweep_medians_csv(results, c.link).text());
    dir.write("equilibrium_curves.csv", equilibrium_csv(c.techs, c.penetrations, c.link).text());
    dir.write_manifest({"sweep", o.scenario, c.options.seed, {}, {}});
    std::size_t failed = 0, total = 0;
    for (const auto& r : results) {
        failed += r.failures();
        total += r.runs.size();
    }
    out << results.size() << " cases, " << total << " runs\n";
    if (failed) err << "warning: " << failed << " of " << total << " runs failed (see sweep_runs.csv)\n";
    return kOk;
}

inline int cmd_equilibria(const Overrides& o, std::ostream& out) {
    const SweepConfig c = load_sweep(o);
    OutputDir dir(o.out);
    dir.write("equilibrium_curves.csv", equilibrium_csv(c.techs, c.penetrations, c.link).text());
    dir.write_manifest({"equilibria", o.scenario, c.options.seed, {}, {}});
    for (VehicleClass cls : {VehicleClass::Ordinary, VehicleClass::ACC, VehicleClass::CACC}) {
        const double h = equilibrium_headway(preset_params(cls));
        out << to_string(cls) << ": headway " << csv::number(h) << " s, flow " << csv::number(3600.0 / h)
            << " veh/h\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"carflow: car-following simulation and experiment harness"};
    app.require_subcommand(1);
    Overrides o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "scenario or sweep document (JSON)");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--seed", o.seed, "random seed");
    };
    auto micro_flags = [&](CLI::App* sub) {
        sub->add_option("--stride", o.stride, "trajectory / contour sample stride in steps");
        sub->add_option("--window", o.window, "throughput counting window in seconds");
        sub->add_option("--model", o.model, "car-following model")->check(CLI::IsMember({"gipps", "iidm", "helly"}));
        sub->add_option("--amax", o.amax, "maximal acceleration in m/s^2");
        sub->add_option("--penetration", o.penetration, "share of ACC/CACC vehicles in the queue");
        sub->add_option("--tech", o.tech, "vehicle technology mixed in")->check(CLI::IsMember({"acc", "cacc"}));
        sub->add_option("--platooning", o.platooning, "platoon formation")->check(CLI::IsMember({"on", "off"}));
    };

    auto* micro = app.add_subcommand("micro", "run a corridor simulation");
    common(micro);
    micro_flags(micro);
    auto* platoon = app.add_subcommand("platoon", "run a corridor simulation with platooning");
    common(platoon);
    micro_flags(platoon);
    auto* macro = app.add_subcommand("macro", "run the link-level model");
    common(macro);
    macro->add_option("--stride", o.stride, "contour sample stride in steps");
    macro->add_option("--model", o.model, "closure model")->check(CLI::IsMember({"gipps", "iidm", "helly"}));
    macro->add_option("--amax", o.amax, "maximal acceleration in m/s^2");
    auto* sweep = app.add_subcommand("sweep", "run the penetration sweep");
    common(sweep);
    sweep->add_option("--runs", o.runs, "runs per mixed case");
    sweep->add_option("--model", o.model, "restrict to one model")->check(CLI::IsMember({"gipps", "iidm", "helly"}));
    sweep->add_option("--amax", o.amax, "maximal acceleration in m/s^2");
    sweep->add_option("--penetration", o.penetration, "restrict to one penetration");
    sweep->add_option("--tech", o.tech, "restrict to one technology")->check(CLI::IsMember({"acc", "cacc"}));
    auto* equilibria = app.add_subcommand("equilibria", "write equilibrium flow curves");
    common(equilibria);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*micro) return cmd_micro(o, out);
        if (*platoon) return cmd_platoon(o, out);
        if (*macro) return cmd_macro(o, out);
        if (*sweep) return cmd_sweep(o, out, err);
        if (*equilibria) return cmd_equilibria(o, out);
    } catch (const CollisionError& e) {
        err << "error: " << e.what() << "\n" << e.state_dump;
        return kCollision;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const StabilityError& e) {
        err << "error: " << e.what() << "\n";
        return kNumericError;
    } catch (const InvalidStateError& e) {
        err << "error: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}

} // namespace carflow::cli
