#pragma once

// Platoon lifecycle over a corridor.
//
// Lifecycle, per simulation step:
//   1. every CACC vehicle is registered as the leader of a platoon of size 1;
//   2. a platoon leader within join range of a CACC vehicle directly ahead
//      merges its platoon into the front one and becomes a follower (CACC law,
//      follower parameters);
//   3. followers separated from their predecessor by a red signal, or by more
//      than the separation gap, split off; the rear part forms its own
//      platoon whose new leader gets its original parameters back;
//   4. scripted leave events remove a vehicle from its platoon for good.
// Leaders broadcast green-go and obstacle-brake events to their followers
// within the same step: followers then use the leader's acceleration of the
// current step instead of the previous one, and on obstacle-brake they also
// respect the leader's red signal as if it were directly ahead.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "carflow/corridor.hpp"

namespace carflow {

class PlatoonError : public Error {
public:
    using Error::Error;
};

enum class MemberRole { StandaloneLeader, Leader, Follower };

enum class PlatoonEventKind { Join, Split, Leave, GreenGo, ObstacleBrake };

constexpr std::string_view to_string(PlatoonEventKind k) {
    switch (k) {
    case PlatoonEventKind::Join: return "join";
    case PlatoonEventKind::Split: return "split";
    case PlatoonEventKind::Leave: return "leave";
    case PlatoonEventKind::GreenGo: return "green-go";
    case PlatoonEventKind::ObstacleBrake: return "obstacle-brake";
    }
    return "?";
}

struct PlatoonEvent {
    double time = 0.0;
    PlatoonEventKind kind = PlatoonEventKind::Join;
    std::size_t leader = 0; ///< leader of the platoon the event concerns (after the event)
    std::size_t member = 0; ///< vehicle that joined, split off, left, or broadcast
    std::size_t size = 0;   ///< size of that platoon after the event
};

class PlatoonRegistry {
public:
    using Members = std::vector<std::size_t>; ///< front to back; front() is the leader

    explicit PlatoonRegistry(std::vector<Segment> enabled_segments = {})
        : segments_(std::move(enabled_segments)) {}

    bool enabled_at(double x) const {
        if (segments_.empty()) return true;
        return std::any_of(segments_.begin(), segments_.end(),
                           [&](const Segment& s) { return x >= s.begin && x < s.end; });
    }

    bool contains(std::size_t id) const { return index_.count(id) != 0; }
    bool retired(std::size_t id) const { return retired_.count(id) != 0; }

    std::size_t platoon_index(std::size_t id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw PlatoonError("vehicle " + std::to_string(id) + " is not in any platoon");
        return it->second;
    }

    const Members& platoon_of(std::size_t id) const { return platoons_[platoon_index(id)]; }

    MemberRole role(std::size_t id) const {
        const Members& m = platoon_of(id);
        if (m.size() == 1) return MemberRole::StandaloneLeader;
        return m.front() == id ? MemberRole::Leader : MemberRole::Follower;
    }

    const std::vector<Members>& platoons() const { return platoons_; }

    const DriverParams& original(std::size_t id) const {
        auto it = saved_.find(id);
        if (it == saved_.end()) throw PlatoonError("no saved parameters for vehicle " + std::to_string(id));
        return it->second;
    }

    /// Registers `id` as a platoon of size 1 and saves its parameters.
    void add(std::size_t id, const DriverParams& original) {
        if (contains(id)) throw PlatoonError("vehicle " + std::to_string(id) + " already registered");
        saved_[id] = original;
        platoons_.push_back({id});
        reindex();
    }

    /// Appends the platoon led by `rear_leader` to the one containing `front_member`.
    void merge(std::size_t front_member, std::size_t rear_leader) {
        const std::size_t f = platoon_index(front_member);
        const std::size_t r = platoon_index(rear_leader);
        if (f == r || platoons_[r].front() != rear_leader)
            throw PlatoonError("invalid merge of " + std::to_string(rear_leader));
        Members& front = platoons_[f];
        front.insert(front.end(), platoons_[r].begin(), platoons_[r].end());
        platoons_.erase(platoons_.begin() + static_cast<std::ptrdiff_t>(r));
        reindex();
    }

    /// Cuts the platoon in front of `id`; `id` leads the rear part.
    void cut_before(std::size_t id) {
        const std::size_t p = platoon_index(id);
        Members& m = platoons_[p];
        auto pos = std::find(m.begin(), m.end(), id);
        if (pos == m.begin()) return;
        Members rear(pos, m.end());
        m.erase(pos, m.end());
        platoons_.insert(platoons_.begin() + static_cast<std::ptrdiff_t>(p) + 1, std::move(rear));
        reindex();
    }

    /// Drops a standalone member and never lets it platoon again.
    void retire(std::size_t id) {
        const std::size_t p = platoon_index(id);
        if (platoons_[p].size() != 1) throw PlatoonError("only standalone vehicles can be retired");
        platoons_.erase(platoons_.begin() + static_cast<std::ptrdiff_t>(p));
        retired_.insert(id);
        reindex();
    }

private:
    void reindex() {
        index_.clear();
        for (std::size_t p = 0; p < platoons_.size(); ++p)
            for (std::size_t id : platoons_[p]) index_[id] = p;
    }

    std::vector<Members> platoons_;
    std::map<std::size_t, DriverParams> saved_;
    std::map<std::size_t, std::size_t> index_;
    std::set<std::size_t> retired_;
    std::vector<Segment> segments_;
};

/// Range at which a platoon leader joins the CACC vehicle ahead.
inline double default_join_range(const DriverParams& follower) {
    return 1.5 * (follower.g_min + follower.v_max * follower.tau);
}

struct JoinOptions {
    double range = default_join_range(preset_params(VehicleClass::CACC));
    std::size_t max_size = 0; ///< 0: unlimited
};

inline void register_vehicles(const Corridor& c, PlatoonRegistry& r) {
    for (const auto& v : c.vehicles)
        if (v.cls == VehicleClass::CACC && !r.contains(v.id) && !r.retired(v.id)) r.add(v.id, v.params);
}

inline std::vector<PlatoonEvent> scan_and_join(Corridor& c, PlatoonRegistry& r, const JoinOptions& opt,
                                               const DriverParams& follower) {
    std::vector<PlatoonEvent> events;
    std::vector<std::size_t> leaders;
    for (const auto& m : r.platoons()) leaders.push_back(m.front());
    std::sort(leaders.begin(), leaders.end());

    for (std::size_t lead : leaders) {
        if (lead == 0 || r.platoon_of(lead).front() != lead) continue;
        const std::size_t ahead = lead - 1;
        if (!r.contains(ahead)) continue;
        VehicleState& self = c.vehicles[lead];
        if (!r.enabled_at(self.x)) continue;
        const EffectiveLeader eff = effective_leader(c, lead);
        if (eff.kind != LeaderKind::Vehicle) continue;
        if (gap_to(self, eff.view) > opt.range) continue;
        const std::size_t size = r.platoon_of(ahead).size() + r.platoon_of(lead).size();
        if (opt.max_size != 0 && size > opt.max_size) continue;
        r.merge(ahead, lead);
        self.params = follower;
        events.push_back({c.t, PlatoonEventKind::Join, r.platoon_of(lead).front(), lead, size});
    }
    return events;
}

/// Splits the platoon of `id` in front of it; splitting at a leader detaches
/// the leader from its followers. Whoever leads the rear part gets its
/// original parameters back.
inline std::vector<PlatoonEvent> split(Corridor& c, PlatoonRegistry& r, std::size_t id) {
    if (!r.contains(id)) throw PlatoonError("unknown platoon member " + std::to_string(id));
    const PlatoonRegistry::Members members = r.platoon_of(id);
    if (members.size() == 1) return {};
    const std::size_t cut = members.front() == id ? members[1] : id;
    r.cut_before(cut);
    c.vehicles[cut].params = r.original(cut);
    return {{c.t, PlatoonEventKind::Split, cut, cut, r.platoon_of(cut).size()}};
}

/// `id` leaves its platoon for good; both neighbours regroup around it.
inline std::vector<PlatoonEvent> leave(Corridor& c, PlatoonRegistry& r, std::size_t id) {
    if (!r.contains(id)) throw PlatoonError("unknown platoon member " + std::to_string(id));
    std::vector<PlatoonEvent> events = split(c, r, id);
    const PlatoonRegistry::Members& m = r.platoon_of(id);
    if (m.size() > 1) {
        auto more = split(c, r, m[1]);
        events.insert(events.end(), more.begin(), more.end());
    }
    c.vehicles[id].params = r.original(id);
    r.retire(id);
    events.push_back({c.t, PlatoonEventKind::Leave, id, id, 1});
    return events;
}

enum class BroadcastKind { GreenGo, ObstacleBrake };

struct FollowerIntent {
    std::size_t follower = 0;
    BroadcastKind kind = BroadcastKind::GreenGo;
};

/// Delivers a leader event to every follower of its platoon in the same step.
inline std::vector<FollowerIntent> broadcast(BroadcastKind kind, const PlatoonRegistry& r, std::size_t leader) {
    const auto& m = r.platoon_of(leader);
    if (m.front() != leader) throw PlatoonError("broadcast must originate at a platoon leader");
    std::vector<FollowerIntent> out;
    for (std::size_t i = 1; i < m.size(); ++i) out.push_back({m[i], kind});
    return out;
}

/// Violated registry invariants, empty when consistent.
inline std::vector<std::string> platoon_violations(const Corridor& c, const PlatoonRegistry& r) {
    std::vector<std::string> out;
    std::set<std::size_t> seen;
    for (const auto& m : r.platoons()) {
        if (m.empty()) {
            out.push_back("empty platoon");
            continue;
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!seen.insert(m[i]).second) out.push_back("vehicle " + std::to_string(m[i]) + " in two platoons");
            if (c.vehicles[m[i]].cls != VehicleClass::CACC)
                out.push_back("non-CACC vehicle " + std::to_string(m[i]) + " in a platoon");
            if (i > 0 && m[i] != m[i - 1] + 1)
                out.push_back("platoon led by " + std::to_string(m[0]) + " is not contiguous");
        }
    }
    return out;
}

/// Corridor policy that runs the platoon lifecycle.
class PlatoonManager {
public:
    PlatoonManager(PlatoonSpec spec, DriverParams follower)
        : spec_(std::move(spec)), follower_(follower), registry_(spec_.segments) {
        join_.range = spec_.join_range > 0.0 ? spec_.join_range : default_join_range(follower_);
        join_.max_size = spec_.max_size;
    }

    const PlatoonRegistry& registry() const { return registry_; }
    const std::vector<PlatoonEvent>& events() const { return events_; }

    void begin_step(Corridor& c) {
        if (!initialized_) {
            initialized_ = true;
            maintain(c);
        }
        for (const auto& e : spec_.leave_events) {
            if (e.time >= c.t && e.time < c.t + c.dt && e.vehicle < c.vehicles.size() &&
                registry_.contains(e.vehicle))
                append(leave(c, registry_, e.vehicle));
        }
        leaders_.assign(c.vehicles.size(), EffectiveLeader{});
        step_event_.clear();
    }

    Stance stance(const Corridor& c, std::size_t k, const EffectiveLeader& leader, std::span<const double> commanded) {
        leaders_[k] = leader;
        const VehicleState& self = c.vehicles[k];
        if (!registry_.contains(k) || registry_.role(k) != MemberRole::Follower || leader.kind != LeaderKind::Vehicle)
            return {law_for(c.model), self.params};

        Stance st{Law::CACC, self.params};
        if (!spec_.broadcast) return st;
        const std::size_t head = registry_.platoon_of(k).front();
        const auto event = leader_event(c, head, commanded);
        if (!event) return st;
        st.live_leader_accel = true;
        if (event == BroadcastKind::ObstacleBrake) {
            // The leader's red signal becomes one more leader candidate; the
            // more restrictive acceleration wins.
            const auto obstacle = virtual_leader_for(c.signals[leaders_[head].index], c.t, self.params);
            if (obstacle) st.accel_cap = accel(law_for(c.model), self, *obstacle, c.dt);
        }
        return st;
    }

    void end_step(Corridor& c) {
        for (const auto& m : registry_.platoons()) {
            const std::size_t head = m.front();
            auto it = step_event_.find(head);
            const std::optional<BroadcastKind> now =
                it == step_event_.end() ? std::nullopt : it->second;
            auto prev = active_.find(head);
            const bool was = prev != active_.end() && prev->second == now;
            if (now && !was) {
                const auto intents = broadcast(*now, registry_, head);
                events_.push_back({c.t - c.dt,
                                   *now == BroadcastKind::GreenGo ? PlatoonEventKind::GreenGo
                                                                  : PlatoonEventKind::ObstacleBrake,
                                   head, head, intents.size() + 1});
            }
        }
        active_ = step_event_;
        maintain(c);
    }

private:
    std::optional<BroadcastKind> leader_event(const Corridor& c, std::size_t head, std::span<const double> commanded) {
        if (auto it = step_event_.find(head); it != step_event_.end()) return it->second;
        std::optional<BroadcastKind> event;
        const double a = commanded[head];
        if (c.vehicles[head].v <= 1e-9 && a > 0.0) event = BroadcastKind::GreenGo;
        else if (leaders_[head].kind == LeaderKind::Signal && a < 0.0) event = BroadcastKind::ObstacleBrake;
        step_event_[head] = event;
        return event;
    }

    void maintain(Corridor& c) {
        register_vehicles(c, registry_);
        std::vector<std::size_t> cuts;
        for (const auto& m : registry_.platoons()) {
            for (std::size_t i = 1; i < m.size(); ++i) {
                const std::size_t id = m[i];
                const EffectiveLeader eff = effective_leader(c, id);
                if (eff.kind != LeaderKind::Vehicle) {
                    cuts.push_back(id);
                    continue;
                }
                const double gap = gap_to(c.vehicles[id], eff.view);
                const double desired = iidm_desired_gap(c.vehicles[id], eff.view);
                if (gap > std::max(spec_.separation_factor * desired, join_.range)) cuts.push_back(id);
            }
        }
        std::sort(cuts.rbegin(), cuts.rend());
        for (std::size_t id : cuts) append(split(c, registry_, id));
        append(scan_and_join(c, registry_, join_, follower_));
    }

    void append(const std::vector<PlatoonEvent>& ev) { events_.insert(events_.end(), ev.begin(), ev.end()); }

    PlatoonSpec spec_;
    DriverParams follower_;
    PlatoonRegistry registry_;
    JoinOptions join_;
    bool initialized_ = false;
    std::vector<PlatoonEvent> events_;
    std::vector<EffectiveLeader> leaders_;
    std::map<std::size_t, std::optional<BroadcastKind>> step_event_;
    std::map<std::size_t, std::optional<BroadcastKind>> active_;
};

} // namespace carflow
