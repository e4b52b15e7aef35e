#pragma once

// Link-level density/speed model induced by the car-following laws.
//
// Density follows the discrete conservation law with flux f_i = rho_i V_i,
// speed follows the upwind advection equation driven by a per-link
// acceleration closure. Links are 1-based in comments, 0-based in code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "carflow/carfollow.hpp"
#include "carflow/core.hpp"
#include "carflow/scenario.hpp"

namespace carflow {

struct MacroState {
    std::vector<double> dx;  ///< link lengths, m
    std::vector<double> rho; ///< veh/m
    std::vector<double> V;   ///< m/s
    std::vector<double> blocked_until; ///< outflow of link i is zero while t < blocked_until[i]
    double inflow = 0.0; ///< veh/s into link 1
    double origin = 0.0; ///< position of the upstream end of link 1, m
    double t = 0.0;
    DriverParams params = defaults::base;

    std::size_t size() const { return rho.size(); }
    double jam_density() const { return 1.0 / (params.g_min + params.l); }
    bool blocked(std::size_t i) const { return t < blocked_until[i]; }

    double vehicles() const {
        double n = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) n += rho[i] * dx[i];
        return n;
    }

    /// Upstream end of link i.
    double position(std::size_t i) const {
        double x = origin;
        for (std::size_t j = 0; j < i; ++j) x += dx[j];
        return x;
    }
};

/// Boundary fluxes (veh/s) applied in one step.
struct MacroFlux {
    double in = 0.0;
    double out = 0.0;
};

inline void check_cfl(const MacroState& s, double dt) {
    const double min_dx = *std::min_element(s.dx.begin(), s.dx.end());
    if (dt * s.params.v_max > min_dx)
        throw StabilityError("CFL condition violated: dt * v_max = " + std::to_string(dt * s.params.v_max) +
                             " > min dx = " + std::to_string(min_dx));
}

namespace detail {

/// Bumper-to-bumper gap implied by a density; empty links read as free road.
inline double density_gap(double rho, double l) {
    if (!(rho > 0.0)) return kFreeRoadGap;
    return std::min(kFreeRoadGap, 1.0 / rho - l);
}

/// What link i sees downstream: the density and speed of link i+1, a wall
/// at jam density if its own outflow is blocked, free road past the last link.
struct Downstream {
    double gap;
    double V;
};

inline Downstream downstream_of(const MacroState& s, std::size_t i) {
    const DriverParams& p = s.params;
    if (s.blocked(i)) return {p.g_min, 0.0};
    if (i + 1 == s.size()) return {kFreeRoadGap, p.v_max};
    return {density_gap(s.rho[i + 1], p.l), s.V[i + 1]};
}

inline double macro_gipps(const MacroState& s, std::size_t i, double dt) {
    const DriverParams& p = s.params;
    const Downstream d = downstream_of(s, i);
    const double V = s.V[i];
    const double bt = p.b * p.tau;
    const double radicand = std::max(0.0, bt * bt + d.V * d.V + 2.0 * p.b * (d.gap - p.g_min));
    return std::min({p.a_max, (p.v_max - V) / dt, (-V - bt + std::sqrt(radicand)) / dt});
}

inline double macro_iidm(const MacroState& s, std::size_t i) {
    const DriverParams& p = s.params;
    const Downstream d = downstream_of(s, i);
    const double V = s.V[i];
    const double desired =
        p.g_min + std::max(0.0, V * p.tau + V * (V - d.V) / (2.0 * std::sqrt(p.a_max * p.b)));
    const double ratio = desired / d.gap;
    if (ratio >= 1.0) return p.a_max * (1.0 - ratio);
    const double a_free = iidm_free_accel(V, p);
    if (a_free < kFreeAccelFloor) return a_free;
    return a_free * (1.0 - std::pow(ratio, p.delta1 * p.a_max / a_free));
}

inline double macro_helly(const MacroState& s, std::size_t i, double dt) {
    const DriverParams& p = s.params;
    const Downstream d = downstream_of(s, i);
    const double V = s.V[i];
    const double linear = p.alpha1 * (d.V - V) + p.alpha2 * (d.gap - p.g_min - V * p.tau);
    return std::min({p.a_max, (p.v_max - V) / dt, linear});
}

} // namespace detail

inline double macro_accel(const MacroState& s, std::size_t i, Model model, double dt) {
    switch (model) {
    case Model::Gipps: return detail::macro_gipps(s, i, dt);
    case Model::IIDM: return detail::macro_iidm(s, i);
    case Model::Helly: return detail::macro_helly(s, i, dt);
    }
    return 0.0;
}

/// Link outflows for the current state. A link never sends more than the
/// receiving link can hold below jam density.
inline std::vector<double> link_flows(const MacroState& s, double dt) {
    const std::size_t n = s.size();
    const double jam = s.jam_density();
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (s.blocked(i)) {
            f[i] = 0.0;
            continue;
        }
        double flow = s.rho[i] * s.V[i];
        if (i + 1 < n) flow = std::min(flow, std::max(0.0, (jam - s.rho[i + 1]) * s.dx[i + 1] / dt));
        f[i] = flow;
    }
    return f;
}

inline MacroFlux macro_step(MacroState& s, Model model, double dt) {
    const std::size_t n = s.size();
    const double jam = s.jam_density();
    const std::vector<double> f = link_flows(s, dt);
    const double f0 = std::min(s.inflow, std::max(0.0, (jam - s.rho[0]) * s.dx[0] / dt));

    std::vector<double> rho(n), V(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double upstream_flow = i == 0 ? f0 : f[i - 1];
        rho[i] = s.rho[i] + dt / s.dx[i] * (upstream_flow - f[i]);

        const double upstream_speed = i == 0 ? s.V[0] : s.V[i - 1];
        const double a = macro_accel(s, i, model, dt);
        const double v = s.V[i] + (a - s.V[i] * (s.V[i] - upstream_speed) / s.dx[i]) * dt;
        V[i] = std::clamp(v, 0.0, s.params.v_max);
    }
    s.rho = std::move(rho);
    s.V = std::move(V);
    s.t += dt;
    return {f0, f[n - 1]};
}

/// Builds the state described by a macro section: jam density on links
/// 1..queue_links, empty road elsewhere, all speeds zero.
inline MacroState init_macro(const MacroSpec& spec, const DriverParams& params) {
    MacroState s;
    s.params = params;
    const std::size_t n = spec.links;
    s.dx.assign(n, spec.link_length);
    s.rho.assign(n, 0.0);
    s.V.assign(n, 0.0);
    s.blocked_until.assign(n, 0.0);
    const double jam = s.jam_density();
    for (std::size_t i = 0; i < spec.queue_links; ++i) s.rho[i] = jam;
    if (spec.signal_link >= 2) s.blocked_until[spec.signal_link - 2] = spec.release_time;
    for (std::size_t b : spec.blocked_links) s.blocked_until[b - 1] = std::numeric_limits<double>::infinity();
    s.inflow = spec.inflow;
    s.origin = -static_cast<double>(spec.signal_link - 1) * spec.link_length;
    return s;
}

inline MacroState init_red_light_scenario(double a_max) {
    return init_macro(MacroSpec{}, with_accel(defaults::base, a_max));
}

/// Time-by-space samples. Row r holds the state at times[r] and the flows
/// leaving each link during the step that starts there.
struct ContourGrid {
    std::vector<double> times;
    std::vector<double> positions; ///< upstream end of each link
    std::vector<std::vector<double>> flow;
    std::vector<std::vector<double>> speed;
    std::vector<std::vector<double>> density;
};

struct MacroRun {
    ContourGrid grid;
    MacroState final_state;
    double initial_vehicles = 0.0;
    double boundary_balance = 0.0; ///< integral of inflow minus outflow
    double max_conservation_error = 0.0;

    double conservation_error() const {
        return std::abs(final_state.vehicles() - initial_vehicles - boundary_balance);
    }
    double relative_conservation_error() const {
        const double scale = std::max(initial_vehicles, 1.0);
        return max_conservation_error / scale;
    }
};

inline MacroRun run_macro(MacroState s, Model model, double dt, double horizon, std::size_t stride = 1) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (stride == 0) throw ConfigError("stride must be at least 1");
    check_cfl(s, dt);

    MacroRun out;
    out.initial_vehicles = s.vehicles();
    for (std::size_t i = 0; i < s.size(); ++i) out.grid.positions.push_back(s.position(i));

    auto record = [&](const MacroState& st) {
        out.grid.times.push_back(st.t);
        out.grid.flow.push_back(link_flows(st, dt));
        out.grid.speed.push_back(st.V);
        out.grid.density.push_back(st.rho);
    };

    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    if (steps == 0) record(s);
    for (std::size_t k = 0; k < steps; ++k) {
        if (k % stride == 0) record(s);
        const MacroFlux flux = macro_step(s, model, dt);
        out.boundary_balance += (flux.in - flux.out) * dt;
        const double err = std::abs(s.vehicles() - out.initial_vehicles - out.boundary_balance);
        out.max_conservation_error = std::max(out.max_conservation_error, err);
    }
    out.final_state = std::move(s);
    return out;
}

/// Upstream end of the run of jam-density links that ends at `blocked_link`
/// (0-based), or nullopt when the blocked link itself is not jammed.
inline std::optional<double> jam_edge(const MacroState& s, std::size_t blocked_link, double tol = 1e-6) {
    const double jam = s.jam_density();
    std::optional<double> edge;
    for (std::size_t i = blocked_link + 1; i-- > 0;) {
        if (std::abs(s.rho[i] - jam) > tol) break;
        edge = s.position(i);
    }
    return edge;
}

} // namespace carflow
