#pragma once

// Acceleration laws. All functions are pure functions of the follower
// state, the leader view and the parameters.

#include <algorithm>
#include <cmath>
#include <string>

#include "carflow/core.hpp"

namespace carflow {

/// Gap substituted for an absent leader; large enough to saturate every
/// gap-dependent term.
inline constexpr double kFreeRoadGap = 1.0e7;

/// What a follower knows about the vehicle (or obstacle) ahead.
struct LeaderView {
    double x = 0.0; ///< front bumper position
    double v = 0.0;
    double a = 0.0; ///< acceleration of the last completed step
    double l = defaults::l;
    bool cooperative = false; ///< leader is a CACC vehicle that communicates

    /// Leader at effectively infinite distance travelling at v_max.
    static LeaderView free_road(const VehicleState& self) {
        return {self.x + self.params.l + kFreeRoadGap, self.params.v_max, 0.0, self.params.l, false};
    }

    /// Stopped obstacle whose tail is at `tail`.
    static LeaderView obstacle(double tail, double length) { return {tail + length, 0.0, 0.0, length, false}; }
};

inline double gap_to(const VehicleState& self, const LeaderView& leader) {
    return leader.x - self.x - leader.l;
}

// --- Gipps ---------------------------------------------------------------

inline double gipps_accel(const VehicleState& self, const LeaderView& leader, double dt) {
    const DriverParams& p = self.params;
    const double g = gap_to(self, leader);
    const double bt = p.b * p.tau;
    const double radicand = bt * bt + leader.v * leader.v + 2.0 * p.b * (g - p.g_min);
    if (radicand < 0.0)
        throw InvalidStateError("gipps: unavoidable collision (negative radicand, gap " + std::to_string(g) +
                                " m)");
    const double safe = (-self.v - bt + std::sqrt(radicand)) / dt;
    return std::min({p.a_max, (p.v_max - self.v) / dt, safe});
}

// --- IIDM ----------------------------------------------------------------

inline double iidm_desired_gap(const VehicleState& self, const LeaderView& leader) {
    const DriverParams& p = self.params;
    const double dynamic = self.v * p.tau + self.v * (self.v - leader.v) / (2.0 * std::sqrt(p.a_max * p.b));
    return p.g_min + std::max(0.0, dynamic);
}

inline double iidm_free_accel(double v, const DriverParams& p) {
    return p.a_max * (1.0 - std::pow(v / p.v_max, p.delta2));
}

/// a* below this is treated as zero in the interaction exponent.
inline constexpr double kFreeAccelFloor = 1e-12;

inline double iidm_accel(const VehicleState& self, const LeaderView& leader) {
    const DriverParams& p = self.params;
    const double g = gap_to(self, leader);
    if (!(g > 0.0)) throw InvalidStateError("iidm: non-positive gap " + std::to_string(g) + " m");
    const double ratio = iidm_desired_gap(self, leader) / g;
    if (ratio > 1.0) return p.a_max * (1.0 - std::pow(ratio, p.delta1));
    const double a_free = iidm_free_accel(self.v, p);
    if (a_free < kFreeAccelFloor) return a_free;
    return a_free * (1.0 - std::pow(ratio, p.delta1 * p.a_max / a_free));
}

// --- Helly ---------------------------------------------------------------

inline double helly_accel(const VehicleState& self, const LeaderView& leader, double dt) {
    const DriverParams& p = self.params;
    const double g = gap_to(self, leader);
    const double linear = p.alpha1 * (leader.v - self.v) + p.alpha2 * (g - p.g_min - self.v * p.tau);
    return std::min({p.a_max, (p.v_max - self.v) / dt, linear});
}

// --- CAH and CACC --------------------------------------------------------

/// Denominators of the first CAH branch below this use the limit formula.
inline constexpr double kCahSingular = 1e-9;

inline double cah_accel(const VehicleState& self, const LeaderView& leader) {
    const DriverParams& p = self.params;
    const double g = gap_to(self, leader);
    if (!(g > 0.0)) throw InvalidStateError("cah: non-positive gap " + std::to_string(g) + " m");
    const double a_l = std::min(leader.a, p.a_max);
    const double v = self.v;
    const double v_l = leader.v;
    if (v_l * (v - v_l) <= -2.0 * g * a_l) {
        const double denom = v_l * v_l - 2.0 * g * a_l;
        if (std::abs(denom) >= kCahSingular) return v * v * a_l / denom;
    }
    const double step = (v - v_l) >= 0.0 ? 1.0 : 0.0;
    return a_l - (v - v_l) * (v - v_l) * step / (2.0 * g);
}

inline double cacc_accel(const VehicleState& self, const LeaderView& leader) {
    const double a_iidm = iidm_accel(self, leader);
    const double a_cah = cah_accel(self, leader);
    if (a_cah <= a_iidm) return a_iidm;
    const double b = self.params.b;
    return a_cah + b * std::tanh((a_iidm - a_cah) / b);
}

/// Law used by a vehicle in a given step.
enum class Law { Gipps, IIDM, Helly, CACC };

constexpr Law law_for(Model m) {
    switch (m) {
    case Model::Gipps: return Law::Gipps;
    case Model::IIDM: return Law::IIDM;
    case Model::Helly: return Law::Helly;
    }
    return Law::IIDM;
}

inline double accel(Law law, const VehicleState& self, const LeaderView& leader, double dt) {
    switch (law) {
    case Law::Gipps: return gipps_accel(self, leader, dt);
    case Law::IIDM: return iidm_accel(self, leader);
    case Law::Helly: return helly_accel(self, leader, dt);
    case Law::CACC: return cacc_accel(self, leader);
    }
    return 0.0;
}

} // namespace carflow
