#pragma once

// Scenario-level driver for the corridor engine.

#include <cmath>
#include <cstdint>
#include <vector>

#include "carflow/composition.hpp"
#include "carflow/corridor.hpp"
#include "carflow/platoon.hpp"
#include "carflow/scenario.hpp"

namespace carflow {

struct TrajectorySample {
    double t = 0.0;
    std::size_t id = 0;
    double x = 0.0;
    double v = 0.0;
    double a = 0.0;
};

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<VehicleClass> composition;
    std::vector<Detector> detectors;
    std::vector<TrajectorySample> trajectory;
    std::vector<PlatoonEvent> platoon_events;
    Corridor final_state;
};

inline std::size_t step_count(double horizon, double dt) {
    return static_cast<std::size_t>(std::llround(horizon / dt));
}

inline void sample(const Corridor& c, std::vector<TrajectorySample>& out) {
    for (const auto& v : c.vehicles) out.push_back({c.t, v.id, v.x, v.v, v.a});
}

/// Steps `c` for `horizon` seconds. A stride of 0 disables the trajectory log.
template <class Policy>
void advance(Corridor& c, Policy& policy, double horizon, std::size_t stride,
             std::vector<TrajectorySample>* trajectory = nullptr) {
    const std::size_t n = step_count(horizon, c.dt);
    for (std::size_t s = 0; s < n; ++s) {
        if (trajectory && stride > 0 && s % stride == 0) sample(c, *trajectory);
        step(c, policy);
    }
    if (trajectory && stride > 0 && n % stride == 0) sample(c, *trajectory);
}

inline std::vector<VehicleClass> scenario_composition(const ScenarioConfig& s) {
    if (!s.queue.pattern.empty()) return repeat_pattern(s.queue.pattern, s.queue.size);
    Rng rng = make_rng(s.seed);
    return compose_queue(s.queue.size, s.queue.penetration, s.queue.tech, rng);
}

inline Corridor build_corridor(const ScenarioConfig& s, std::span<const VehicleClass> composition) {
    Corridor c = init_queue(composition, s.queue.stop_bar,
                            [&](VehicleClass cls) { return scenario_standalone_params(s, cls); });
    c.model = s.model;
    c.dt = s.dt;
    for (const auto& sig : s.signals) c.signals.push_back({sig.position, sig.schedule});
    for (double d : s.detectors) c.detectors.push_back({d, {}});
    return c;
}

/// Runs a scenario with an explicit composition. Deterministic.
inline RunResult run(const ScenarioConfig& s, std::span<const VehicleClass> composition,
                     bool keep_trajectory = true) {
    RunResult out;
    out.seed = s.seed;
    out.composition.assign(composition.begin(), composition.end());
    Corridor c = build_corridor(s, composition);
    const std::size_t stride = keep_trajectory ? s.stride : 0;
    const DriverParams follower = class_params(s, VehicleClass::CACC);
    if (s.platooning.enabled) {
        PlatoonManager manager(s.platooning, follower);
        try {
            advance(c, manager, s.horizon, stride, &out.trajectory);
        } catch (...) {
            out.platoon_events = manager.events();
            throw;
        }
        out.platoon_events = manager.events();
    } else {
        CooperativeFollowing policy(follower);
        advance(c, policy, s.horizon, stride, &out.trajectory);
    }
    out.detectors = c.detectors;
    out.final_state = std::move(c);
    return out;
}

inline RunResult run(const ScenarioConfig& s, bool keep_trajectory = true) {
    const auto composition = scenario_composition(s);
    return run(s, composition, keep_trajectory);
}

} // namespace carflow
