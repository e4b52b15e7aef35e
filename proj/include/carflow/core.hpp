#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace carflow {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range configuration input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A car-following law was evaluated on a state it is not defined for
/// (non-positive gap, negative Gipps radicand).
class InvalidStateError : public Error {
public:
    using Error::Error;
};

/// Numerical stability condition violated (macro CFL condition).
class StabilityError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Vehicle classes and parameters
// ---------------------------------------------------------------------------

enum class VehicleClass { Ordinary, ACC, CACC };

enum class Model { Gipps, IIDM, Helly };

constexpr std::string_view to_string(VehicleClass c) {
    switch (c) {
    case VehicleClass::Ordinary: return "ordinary";
    case VehicleClass::ACC: return "acc";
    case VehicleClass::CACC: return "cacc";
    }
    return "?";
}

constexpr std::string_view to_string(Model m) {
    switch (m) {
    case Model::Gipps: return "gipps";
    case Model::IIDM: return "iidm";
    case Model::Helly: return "helly";
    }
    return "?";
}

inline VehicleClass parse_vehicle_class(std::string_view s) {
    if (s == "ordinary") return VehicleClass::Ordinary;
    if (s == "acc") return VehicleClass::ACC;
    if (s == "cacc") return VehicleClass::CACC;
    throw ConfigError("unknown vehicle class '" + std::string(s) + "'");
}

inline Model parse_model(std::string_view s) {
    if (s == "gipps") return Model::Gipps;
    if (s == "iidm") return Model::IIDM;
    if (s == "helly") return Model::Helly;
    throw ConfigError("unknown model '" + std::string(s) + "'");
}

/// Per-vehicle parameter bundle of the car-following laws.
struct DriverParams {
    double a_max;  ///< maximal acceleration, m/s^2
    double b;      ///< desired deceleration (positive), m/s^2
    double tau;    ///< reaction time, s
    double g_min;  ///< minimal gap, m
    double v_max;  ///< maximal speed, m/s
    double l;      ///< vehicle length, m
    double delta1; ///< IIDM interaction exponent
    double delta2; ///< IIDM free-flow exponent
    double alpha1; ///< Helly speed-difference gain, 1/s
    double alpha2; ///< Helly gap gain, 1/s^2

    bool operator==(const DriverParams&) const = default;
};

/// Central table of default values. Everything else reads numbers from here.
namespace defaults {
inline constexpr double dt = 0.05;
inline constexpr double l = 5.0;
inline constexpr double v_max = 20.0;
inline constexpr double a_max = 1.5;
inline constexpr double b = 2.0;
inline constexpr double g_min = 4.0;
inline constexpr double tau = 2.05;

inline constexpr double delta1 = 8.0;
inline constexpr double delta2 = 4.0;
inline constexpr double alpha1 = 0.5;
inline constexpr double alpha2 = 0.25;

inline constexpr double tau_acc = 1.1;
inline constexpr double g_min_acc = 3.0;
inline constexpr double tau_cacc = 0.8;
inline constexpr double g_min_cacc = 3.0;

inline constexpr DriverParams base{a_max, b, tau, g_min, v_max, l, delta1, delta2, alpha1, alpha2};
} // namespace defaults

/// Table defaults with (tau, g_min) overridden per vehicle class.
constexpr DriverParams preset_params(VehicleClass c) {
    DriverParams p = defaults::base;
    switch (c) {
    case VehicleClass::Ordinary: break;
    case VehicleClass::ACC:
        p.tau = defaults::tau_acc;
        p.g_min = defaults::g_min_acc;
        break;
    case VehicleClass::CACC:
        p.tau = defaults::tau_cacc;
        p.g_min = defaults::g_min_cacc;
        break;
    }
    return p;
}

/// Parameters a vehicle drives with when it is not following another CACC
/// vehicle. A CACC vehicle without a cooperative leader drives as ACC.
constexpr DriverParams standalone_params(VehicleClass c) {
    return preset_params(c == VehicleClass::CACC ? VehicleClass::ACC : c);
}

constexpr DriverParams with_accel(DriverParams p, double a_max) {
    p.a_max = a_max;
    return p;
}

inline void validate(const DriverParams& p, double dt) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError(std::string("parameter '") + name + "' must be strictly positive");
    };
    positive(p.a_max, "a_max");
    positive(p.b, "b");
    positive(p.tau, "tau");
    positive(p.g_min, "g_min");
    positive(p.v_max, "v_max");
    positive(p.l, "l");
    positive(p.delta1, "delta1");
    positive(p.delta2, "delta2");
    positive(p.alpha1, "alpha1");
    positive(p.alpha2, "alpha2");
    if (p.tau < dt) throw ConfigError("parameter 'tau' must not be smaller than dt");
}

/// Front-bumper kinematic state of one vehicle.
struct VehicleState {
    std::size_t id = 0;
    double x = 0.0;
    double v = 0.0;
    double a = 0.0;
    VehicleClass cls = VehicleClass::Ordinary;
    DriverParams params = defaults::base;
};

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// The one generator used for stochastic experiments.
using Rng = std::mt19937_64;

/// Independent stream for (seed, case, run); independent of scheduling order.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(substream),
                      static_cast<std::uint32_t>(substream >> 32)};
    return Rng(seq);
}

} // namespace carflow
