#pragma once

// Scenario configuration and its JSON document form.
//
// Every section and key is optional; missing values take the defaults from
// core.hpp. Unknown keys are rejected so that typos never silently fall back
// to defaults.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "carflow/core.hpp"

namespace carflow {

enum class SignalColor { Red, Green };

struct SignalSwitch {
    double time = 0.0;
    SignalColor color = SignalColor::Green;
    bool operator==(const SignalSwitch&) const = default;
};

struct SignalSpec {
    double position = 0.0;
    std::vector<SignalSwitch> schedule; ///< red before the first switch
    bool operator==(const SignalSpec&) const = default;
};

struct QueueSpec {
    std::size_t size = 100;
    double penetration = 0.0;              ///< fraction of `tech` vehicles
    VehicleClass tech = VehicleClass::ACC; ///< class mixed in at `penetration`
    std::vector<VehicleClass> pattern;     ///< explicit composition, repeated to `size`
    double stop_bar = 0.0;
    bool operator==(const QueueSpec&) const = default;
};

struct Segment {
    double begin = 0.0;
    double end = 0.0;
    bool operator==(const Segment&) const = default;
};

struct LeaveEvent {
    double time = 0.0;
    std::size_t vehicle = 0; ///< queue ordinal, 0 = front vehicle
    bool operator==(const LeaveEvent&) const = default;
};

struct PlatoonSpec {
    bool enabled = false;
    std::vector<Segment> segments;  ///< empty: platooning allowed everywhere
    double join_range = 0.0;        ///< <= 0: 1.5 * (g_min + v_max * tau) of the CACC row
    double separation_factor = 3.0; ///< split when gap > factor * desired gap
    std::size_t max_size = 0;       ///< 0: unlimited
    bool broadcast = true;
    std::vector<LeaveEvent> leave_events;
    bool operator==(const PlatoonSpec&) const = default;
};

struct MacroSpec {
    std::size_t links = 240;
    double link_length = 5.0;
    std::size_t queue_links = 49;  ///< links 1..queue_links start at jam density
    std::size_t signal_link = 50;  ///< first link downstream of the first signal
    double release_time = 0.0;     ///< first signal turns green
    std::vector<std::size_t> blocked_links{110}; ///< links with zero outflow (1-based)
    double inflow = 0.0;           ///< veh/s entering link 1
    bool operator==(const MacroSpec&) const = default;
};

struct ScenarioConfig {
    Model model = Model::Gipps;
    double dt = defaults::dt;
    double horizon = 60.0;
    double window = 60.0;
    std::optional<double> a_max;
    DriverParams vehicle = defaults::base; ///< tau and g_min come from the class table
    std::vector<SignalSpec> signals{SignalSpec{0.0, {SignalSwitch{0.0, SignalColor::Green}}}};
    std::vector<double> detectors{0.0};
    QueueSpec queue;
    std::uint64_t seed = 1;
    std::size_t stride = 1;
    PlatoonSpec platooning;
    MacroSpec macro;
    bool operator==(const ScenarioConfig&) const = default;
};

/// Parameters of a class as configured by the scenario (class table values
/// for tau and g_min, everything else from the scenario).
inline DriverParams class_params(const ScenarioConfig& s, VehicleClass c) {
    DriverParams p = s.vehicle;
    const DriverParams row = preset_params(c);
    p.tau = row.tau;
    p.g_min = row.g_min;
    if (s.a_max) p.a_max = *s.a_max;
    return p;
}

inline DriverParams scenario_standalone_params(const ScenarioConfig& s, VehicleClass c) {
    return class_params(s, c == VehicleClass::CACC ? VehicleClass::ACC : c);
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items())
        if (!ok.count(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for key '" + (where.empty() ? std::string(key) : where + "." + key) +
                          "'");
    }
}

inline std::string color_name(SignalColor c) { return c == SignalColor::Red ? "red" : "green"; }

inline SignalColor parse_color(const std::string& s, const std::string& key) {
    if (s == "red") return SignalColor::Red;
    if (s == "green") return SignalColor::Green;
    throw ConfigError("invalid value for key '" + key + "': expected red|green");
}

template <class F>
auto wrap(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (in '" + key + "')");
    }
}

} // namespace detail

inline void validate(const ScenarioConfig& s) {
    if (!(s.dt > 0.0)) throw ConfigError("'dt' must be positive");
    if (!(s.horizon >= 0.0)) throw ConfigError("'horizon' must be non-negative");
    if (!(s.window > 0.0)) throw ConfigError("'window' must be positive");
    if (s.stride == 0) throw ConfigError("'stride' must be at least 1");
    if (!(s.queue.penetration >= 0.0 && s.queue.penetration <= 1.0))
        throw ConfigError("'queue.penetration' must lie in [0, 1]");
    if (s.queue.size == 0) throw ConfigError("'queue.size' must be positive");
    for (VehicleClass c : {VehicleClass::Ordinary, VehicleClass::ACC, VehicleClass::CACC})
        validate(class_params(s, c), s.dt);
    for (const auto& sig : s.signals)
        for (std::size_t i = 1; i < sig.schedule.size(); ++i)
            if (!(sig.schedule[i].time > sig.schedule[i - 1].time))
                throw ConfigError("'signals.schedule' times must be strictly increasing");
    for (const auto& seg : s.platooning.segments)
        if (!(seg.end > seg.begin)) throw ConfigError("'platooning.segments' entries need end > begin");
    if (!(s.platooning.separation_factor > 0.0))
        throw ConfigError("'platooning.separation_factor' must be positive");
    const auto& m = s.macro;
    if (m.links == 0) throw ConfigError("'macro.links' must be positive");
    if (!(m.link_length > 0.0)) throw ConfigError("'macro.link_length' must be positive");
    if (m.queue_links > m.links) throw ConfigError("'macro.queue_links' exceeds 'macro.links'");
    if (m.signal_link == 0 || m.signal_link > m.links) throw ConfigError("'macro.signal_link' out of range");
    for (std::size_t b : m.blocked_links)
        if (b == 0 || b > m.links) throw ConfigError("'macro.blocked_links' entry out of range");
    if (!(m.inflow >= 0.0)) throw ConfigError("'macro.inflow' must be non-negative");
}

inline ScenarioConfig parse_scenario(const nlohmann::json& doc) {
    using detail::check_keys;
    using detail::read;
    using nlohmann::json;

    ScenarioConfig s;
    check_keys(doc, "",
               {"model", "dt", "horizon", "window", "a_max", "seed", "stride", "vehicle", "signals", "detectors",
                "queue", "platooning", "macro"});

    if (auto it = doc.find("model"); it != doc.end()) {
        if (!it->is_string()) throw ConfigError("invalid value for key 'model'");
        detail::wrap("model", [&] { s.model = parse_model(it->get<std::string>()); });
    }
    read(doc, "dt", "", s.dt);
    read(doc, "horizon", "", s.horizon);
    read(doc, "window", "", s.window);
    read(doc, "seed", "", s.seed);
    read(doc, "stride", "", s.stride);
    if (auto it = doc.find("a_max"); it != doc.end()) {
        double a = 0.0;
        read(doc, "a_max", "", a);
        s.a_max = a;
    }

    if (auto it = doc.find("vehicle"); it != doc.end()) {
        const json& v = *it;
        check_keys(v, "vehicle", {"a_max", "b", "v_max", "l", "delta1", "delta2", "alpha1", "alpha2"});
        read(v, "a_max", "vehicle", s.vehicle.a_max);
        read(v, "b", "vehicle", s.vehicle.b);
        read(v, "v_max", "vehicle", s.vehicle.v_max);
        read(v, "l", "vehicle", s.vehicle.l);
        read(v, "delta1", "vehicle", s.vehicle.delta1);
        read(v, "delta2", "vehicle", s.vehicle.delta2);
        read(v, "alpha1", "vehicle", s.vehicle.alpha1);
        read(v, "alpha2", "vehicle", s.vehicle.alpha2);
    }

    if (auto it = doc.find("signals"); it != doc.end()) {
        if (!it->is_array()) throw ConfigError("invalid value for key 'signals'");
        s.signals.clear();
        for (const json& js : *it) {
            check_keys(js, "signals", {"position", "schedule"});
            SignalSpec sig;
            read(js, "position", "signals", sig.position);
            if (auto sch = js.find("schedule"); sch != js.end()) {
                if (!sch->is_array()) throw ConfigError("invalid value for key 'signals.schedule'");
                for (const json& sw : *sch) {
                    check_keys(sw, "signals.schedule", {"time", "color"});
                    SignalSwitch w;
                    read(sw, "time", "signals.schedule", w.time);
                    std::string color = "green";
                    read(sw, "color", "signals.schedule", color);
                    w.color = detail::parse_color(color, "signals.schedule.color");
                    sig.schedule.push_back(w);
                }
            }
            s.signals.push_back(std::move(sig));
        }
    }
    read(doc, "detectors", "", s.detectors);

    if (auto it = doc.find("queue"); it != doc.end()) {
        const json& q = *it;
        check_keys(q, "queue", {"size", "penetration", "tech", "pattern", "stop_bar"});
        read(q, "size", "queue", s.queue.size);
        read(q, "penetration", "queue", s.queue.penetration);
        read(q, "stop_bar", "queue", s.queue.stop_bar);
        std::string tech(to_string(s.queue.tech));
        read(q, "tech", "queue", tech);
        detail::wrap("queue.tech", [&] { s.queue.tech = parse_vehicle_class(tech); });
        std::vector<std::string> pattern;
        read(q, "pattern", "queue", pattern);
        detail::wrap("queue.pattern", [&] {
            for (const auto& name : pattern) s.queue.pattern.push_back(parse_vehicle_class(name));
        });
    }

    if (auto it = doc.find("platooning"); it != doc.end()) {
        const json& p = *it;
        check_keys(p, "platooning",
                   {"enabled", "segments", "join_range", "separation_factor", "max_size", "broadcast",
                    "leave_events"});
        auto& ps = s.platooning;
        read(p, "enabled", "platooning", ps.enabled);
        read(p, "join_range", "platooning", ps.join_range);
        read(p, "separation_factor", "platooning", ps.separation_factor);
        read(p, "max_size", "platooning", ps.max_size);
        read(p, "broadcast", "platooning", ps.broadcast);
        if (auto seg = p.find("segments"); seg != p.end()) {
            if (!seg->is_array()) throw ConfigError("invalid value for key 'platooning.segments'");
            for (const json& js : *seg) {
                check_keys(js, "platooning.segments", {"begin", "end"});
                Segment sg;
                read(js, "begin", "platooning.segments", sg.begin);
                read(js, "end", "platooning.segments", sg.end);
                ps.segments.push_back(sg);
            }
        }
        if (auto ev = p.find("leave_events"); ev != p.end()) {
            if (!ev->is_array()) throw ConfigError("invalid value for key 'platooning.leave_events'");
            for (const json& js : *ev) {
                check_keys(js, "platooning.leave_events", {"time", "vehicle"});
                LeaveEvent e;
                read(js, "time", "platooning.leave_events", e.time);
                read(js, "vehicle", "platooning.leave_events", e.vehicle);
                ps.leave_events.push_back(e);
            }
        }
    }

    if (auto it = doc.find("macro"); it != doc.end()) {
        const json& m = *it;
        check_keys(m, "macro",
                   {"links", "link_length", "queue_links", "signal_link", "release_time", "blocked_links",
                    "inflow"});
        read(m, "links", "macro", s.macro.links);
        read(m, "link_length", "macro", s.macro.link_length);
        read(m, "queue_links", "macro", s.macro.queue_links);
        read(m, "signal_link", "macro", s.macro.signal_link);
        read(m, "release_time", "macro", s.macro.release_time);
        read(m, "blocked_links", "macro", s.macro.blocked_links);
        read(m, "inflow", "macro", s.macro.inflow);
    }

    validate(s);
    return s;
}

inline ScenarioConfig parse_scenario(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed scenario document: ") + e.what());
    }
    return parse_scenario(doc);
}

inline nlohmann::json to_json(const ScenarioConfig& s) {
    using nlohmann::json;
    json doc;
    doc["model"] = std::string(to_string(s.model));
    doc["dt"] = s.dt;
    doc["horizon"] = s.horizon;
    doc["window"] = s.window;
    if (s.a_max) doc["a_max"] = *s.a_max;
    doc["seed"] = s.seed;
    doc["stride"] = s.stride;
    doc["vehicle"] = {{"a_max", s.vehicle.a_max},   {"b", s.vehicle.b},           {"v_max", s.vehicle.v_max},
                      {"l", s.vehicle.l},           {"delta1", s.vehicle.delta1}, {"delta2", s.vehicle.delta2},
                      {"alpha1", s.vehicle.alpha1}, {"alpha2", s.vehicle.alpha2}};
    json signals = json::array();
    for (const auto& sig : s.signals) {
        json sch = json::array();
        for (const auto& w : sig.schedule) sch.push_back({{"time", w.time}, {"color", detail::color_name(w.color)}});
        signals.push_back({{"position", sig.position}, {"schedule", sch}});
    }
    doc["signals"] = signals;
    doc["detectors"] = s.detectors;
    json pattern = json::array();
    for (VehicleClass c : s.queue.pattern) pattern.push_back(std::string(to_string(c)));
    doc["queue"] = {{"size", s.queue.size},
                    {"penetration", s.queue.penetration},
                    {"tech", std::string(to_string(s.queue.tech))},
                    {"pattern", pattern},
                    {"stop_bar", s.queue.stop_bar}};
    json segments = json::array();
    for (const auto& sg : s.platooning.segments) segments.push_back({{"begin", sg.begin}, {"end", sg.end}});
    json leaves = json::array();
    for (const auto& e : s.platooning.leave_events) leaves.push_back({{"time", e.time}, {"vehicle", e.vehicle}});
    doc["platooning"] = {{"enabled", s.platooning.enabled},
                         {"segments", segments},
                         {"join_range", s.platooning.join_range},
                         {"separation_factor", s.platooning.separation_factor},
                         {"max_size", s.platooning.max_size},
                         {"broadcast", s.platooning.broadcast},
                         {"leave_events", leaves}};
    doc["macro"] = {{"links", s.macro.links},
                    {"link_length", s.macro.link_length},
                    {"queue_links", s.macro.queue_links},
                    {"signal_link", s.macro.signal_link},
                    {"release_time", s.macro.release_time},
                    {"blocked_links", s.macro.blocked_links},
                    {"inflow", s.macro.inflow}};
    return doc;
}

inline std::string serialize_scenario(const ScenarioConfig& s) { return to_json(s).dump(2); }

} // namespace carflow
