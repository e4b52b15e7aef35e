#pragma once

// Single-lane corridor: vehicles, signals rendered as virtual blocking
// vehicles, stop-bar detectors and the synchronous time step.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "carflow/carfollow.hpp"
#include "carflow/core.hpp"
#include "carflow/scenario.hpp"

namespace carflow {

/// Two vehicles overlap after a step. Carries the offending ids and a dump
/// of the corridor state.
class CollisionError : public Error {
public:
    CollisionError(std::size_t leader, std::size_t follower, double time, double gap, std::string dump)
        : Error("collision between vehicles " + std::to_string(leader) + " and " + std::to_string(follower) +
                " at t=" + std::to_string(time) + " s (gap " + std::to_string(gap) + " m)"),
          leader_id(leader), follower_id(follower), time(time), state_dump(std::move(dump)) {}

    std::size_t leader_id;
    std::size_t follower_id;
    double time;
    std::string state_dump;
};

/// A red signal stops vehicles whose front has not passed it by more than
/// this distance.
inline constexpr double kStopLineTolerance = 0.5;

/// Below this a vehicle counts as standing.
inline constexpr double kStoppedSpeed = 0.1;

struct Signal {
    double position = 0.0;
    std::vector<SignalSwitch> schedule; ///< red before the first switch; empty means always red

    SignalColor color_at(double t) const {
        SignalColor c = SignalColor::Red;
        for (const auto& sw : schedule) {
            if (sw.time > t) break;
            c = sw.color;
        }
        return c;
    }
    bool red_at(double t) const { return color_at(t) == SignalColor::Red; }
};

/// Blocking vehicle representing a red signal for an approacher with
/// parameters `p`: tail at position + g_min, so the equilibrium stop puts the
/// approacher's front exactly on the signal.
inline std::optional<LeaderView> virtual_leader_for(const Signal& s, double t, const DriverParams& p) {
    if (!s.red_at(t)) return std::nullopt;
    return LeaderView::obstacle(s.position + p.g_min, p.l);
}

struct DetectorRecord {
    std::size_t vehicle = 0;
    double time = 0.0;
    double v = 0.0;
    double a = 0.0;
    std::optional<double> gap;  ///< absent for the front vehicle
    std::optional<double> flow; ///< veh/h, absent for the first crossing
};

struct Detector {
    double position = 0.0;
    std::vector<DetectorRecord> records;
};

enum class LeaderKind { FreeRoad, Vehicle, Signal };

struct EffectiveLeader {
    LeaderKind kind = LeaderKind::FreeRoad;
    LeaderView view;
    std::size_t index = 0; ///< vehicle index or signal index
};

struct Corridor {
    Model model = Model::Gipps;
    double dt = defaults::dt;
    double t = 0.0;
    std::size_t steps = 0;
    std::vector<VehicleState> vehicles; ///< front to back; vehicles[k].id == k
    std::vector<Signal> signals;
    std::vector<Detector> detectors;
};

inline std::string dump_state(const Corridor& c) {
    std::ostringstream os;
    os.precision(10);
    os << "t=" << c.t << '\n';
    for (const auto& v : c.vehicles)
        os << "  id=" << v.id << " class=" << to_string(v.cls) << " x=" << v.x << " v=" << v.v << " a=" << v.a
           << '\n';
    return os.str();
}

/// Vehicle k is placed behind vehicle k-1 at its own class's minimal gap;
/// the front vehicle's front bumper is on the stop bar.
template <class ParamsFn>
Corridor init_queue(std::span<const VehicleClass> composition, double stop_bar, ParamsFn&& params_for) {
    if (composition.empty()) throw ConfigError("queue composition must not be empty");
    Corridor c;
    c.vehicles.reserve(composition.size());
    double x = stop_bar;
    for (std::size_t k = 0; k < composition.size(); ++k) {
        VehicleState v;
        v.id = k;
        v.cls = composition[k];
        v.params = params_for(v.cls);
        if (k > 0) x -= c.vehicles[k - 1].params.l + v.params.g_min;
        v.x = x;
        c.vehicles.push_back(v);
    }
    return c;
}

inline Corridor init_queue(std::span<const VehicleClass> composition, double stop_bar = 0.0) {
    return init_queue(composition, stop_bar, [](VehicleClass c) { return standalone_params(c); });
}

/// Whichever of {real leader, nearest red signal ahead} leaves the smaller gap.
inline EffectiveLeader effective_leader(const Corridor& c, std::size_t k) {
    const VehicleState& self = c.vehicles[k];
    EffectiveLeader best;
    if (k == 0) {
        best.kind = LeaderKind::FreeRoad;
        best.view = LeaderView::free_road(self);
    } else {
        const VehicleState& lead = c.vehicles[k - 1];
        best.kind = LeaderKind::Vehicle;
        best.index = k - 1;
        best.view = {lead.x, lead.v, lead.a, lead.params.l, lead.cls == VehicleClass::CACC};
    }
    for (std::size_t s = 0; s < c.signals.size(); ++s) {
        const Signal& sig = c.signals[s];
        if (self.x > sig.position + kStopLineTolerance) continue;
        auto blocking = virtual_leader_for(sig, c.t, self.params);
        if (!blocking) continue;
        if (gap_to(self, *blocking) < gap_to(self, best.view)) {
            best.kind = LeaderKind::Signal;
            best.view = *blocking;
            best.index = s;
        }
    }
    return best;
}

/// Law and parameters a vehicle uses in one step, chosen by a policy.
struct Stance {
    Law law = Law::IIDM;
    DriverParams params = defaults::base;
    bool live_leader_accel = false;  ///< use the leader's acceleration of this step
    std::optional<double> accel_cap; ///< upper bound on the result
};

/// CACC law only when directly behind another CACC vehicle; otherwise the
/// base model with the vehicle's own parameters.
class CooperativeFollowing {
public:
    explicit CooperativeFollowing(DriverParams follower = preset_params(VehicleClass::CACC))
        : follower_(follower) {}

    void begin_step(Corridor&) {}

    Stance stance(const Corridor& c, std::size_t k, const EffectiveLeader& leader, std::span<const double>) {
        const VehicleState& self = c.vehicles[k];
        if (self.cls == VehicleClass::CACC && leader.kind == LeaderKind::Vehicle &&
            c.vehicles[leader.index].cls == VehicleClass::CACC)
            return {Law::CACC, follower_};
        return {law_for(c.model), self.params};
    }

    void end_step(Corridor&) {}

private:
    DriverParams follower_;
};

/// Synchronous update: all accelerations from the same snapshot, speeds
/// clamped at zero, trapezoidal positions, then detector crossings.
template <class Policy>
void step(Corridor& c, Policy& policy) {
    policy.begin_step(c);
    const std::size_t n = c.vehicles.size();
    const double dt = c.dt;

    std::vector<double> commanded(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const EffectiveLeader leader = effective_leader(c, k);
        const Stance st = policy.stance(c, k, leader, std::span<const double>(commanded.data(), k));
        VehicleState self = c.vehicles[k];
        self.params = st.params;
        LeaderView view = leader.view;
        if (st.live_leader_accel && leader.kind == LeaderKind::Vehicle) view.a = commanded[leader.index];
        double a = accel(st.law, self, view, dt);
        if (st.accel_cap) a = std::min(a, *st.accel_cap);
        commanded[k] = a;
    }

    struct Crossing {
        std::size_t detector;
        DetectorRecord record;
    };
    std::vector<Crossing> crossings;

    const std::vector<VehicleState> before = c.vehicles;
    for (std::size_t k = 0; k < n; ++k) {
        VehicleState& v = c.vehicles[k];
        const double v_new = std::max(0.0, v.v + commanded[k] * dt);
        const double x_new = v.x + 0.5 * (v.v + v_new) * dt;
        const double a_eff = (v_new - v.v) / dt;
        for (std::size_t d = 0; d < c.detectors.size(); ++d) {
            const double xd = c.detectors[d].position;
            if (v.x <= xd && xd < x_new) {
                const double frac = (xd - v.x) / (x_new - v.x);
                DetectorRecord r;
                r.vehicle = v.id;
                r.time = c.t + frac * dt;
                r.v = v.v + frac * (v_new - v.v);
                r.a = a_eff;
                crossings.push_back({d, r});
            }
        }
        v.x = x_new;
        v.v = v_new;
        v.a = a_eff;
    }

    for (std::size_t k = 1; k < n; ++k) {
        const double gap = c.vehicles[k - 1].x - c.vehicles[k - 1].params.l - c.vehicles[k].x;
        if (gap < -1e-9) {
            c.t += dt;
            throw CollisionError(c.vehicles[k - 1].id, c.vehicles[k].id, c.t, gap, dump_state(c));
        }
    }

    std::stable_sort(crossings.begin(), crossings.end(),
                     [](const Crossing& a, const Crossing& b) { return a.record.time < b.record.time; });
    for (auto& [d, r] : crossings) {
        const std::size_t k = r.vehicle;
        if (k > 0) r.gap = c.vehicles[k - 1].x - c.vehicles[k - 1].params.l - c.vehicles[k].x;
        auto& recs = c.detectors[d].records;
        if (!recs.empty()) {
            const double headway = r.time - recs.back().time;
            if (headway > 0.0) r.flow = 3600.0 / headway;
        }
        recs.push_back(r);
    }

    c.t += dt;
    ++c.steps;
    policy.end_step(c);
}

inline void step(Corridor& c) {
    CooperativeFollowing policy;
    step(c, policy);
}

/// Crossings with time in [0, window].
inline std::size_t throughput(std::span<const DetectorRecord> records, double window) {
    if (!(window > 0.0)) throw ConfigError("throughput window must be positive");
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const DetectorRecord& r) {
        return r.time >= 0.0 && r.time <= window;
    }));
}

/// Tail position of the last vehicle of the standing queue behind a signal,
/// or nullopt when nobody stands there.
inline std::optional<double> queue_tail(const Corridor& c, double signal_position) {
    std::optional<double> tail;
    for (const auto& v : c.vehicles) {
        if (v.x > signal_position + kStopLineTolerance) continue;
        if (v.v >= kStoppedSpeed) break;
        tail = v.x - v.params.l;
    }
    return tail;
}

} // namespace carflow
